// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use vmslim::report::{
    combined_estimate, consistency_check, monitor_table, occupancy_table, read_estimate_csv, read_monitor_csv,
    read_occupancy_csv, transfer_estimate, EstimateInput, MonitorInput, OccupancyInput, ReportError,
};
use vmslim::units::{GIB, MIB};

const PP: f64 = 0.01;

fn occ(name: &str, used: f64, alloc: f64) -> OccupancyInput {
    OccupancyInput { os_name: name.into(), fs_used_gib: used, allocated_gib: alloc }
}

fn mon(name: &str, files: u64, kib: f64, gib: f64, printed: f64) -> MonitorInput {
    MonitorInput { os_name: name.into(), files, kib, fs_used_gib: gib, printed_pct: Some(printed) }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= PP + 1e-9
}

fn readahead_rows() -> Vec<MonitorInput> {
    vec![
        mon("Debian 5", 578, 36_817.0, 2.6, 1.35),
        mon("Ubuntu 10.04", 95, 9_161.0, 2.2, 1.47),
        mon("Fedora 10", 1_315, 158_441.0, 3.5, 4.32),
    ]
}

fn preload_rows() -> Vec<MonitorInput> {
    vec![
        mon("Debian 5", 781, 278_597.0, 2.6, 10.22),
        mon("Ubuntu 10.04", 1_674, 519_609.0, 2.2, 22.52),
        mon("OpenSuse 11.3", 2_518, 258_696.0, 3.3, 7.48),
        mon("Fedora 10", 1_127, 435_905.0, 3.5, 11.88),
    ]
}

#[test]
fn occupancy_reference_table() {
    let t = occupancy_table(&[
        occ("Debian 5", 2.6, 6.0),
        occ("Ubuntu 10.04", 2.2, 6.0),
        occ("OpenSuse 11.3", 3.3, 6.0),
        occ("Fedora 10", 3.5, 6.0),
    ])
    .unwrap();
    for (row, want) in t.rows.iter().zip([43.33, 36.67, 55.0, 58.33]) {
        assert!(close(row.pct, want), "{} {}", row.os_name, row.pct);
    }
    assert!(close(t.mean_pct, 48.33));
    assert!(close(t.mean_fs_gib, 2.9));
    assert_eq!(occupancy_table(&[occ("full", 4.0, 4.0)]).unwrap().rows[0].pct, 100.0);
}

#[test]
fn occupancy_rejects_bad_rows() {
    assert!(matches!(occupancy_table(&[occ("x", 1.0, 0.0)]), Err(ReportError::InvalidInput(_))));
    assert!(matches!(occupancy_table(&[occ("x", 7.0, 6.0)]), Err(ReportError::InvalidInput(_))));
}

#[test]
fn readahead_table_and_flag() {
    let t = monitor_table(&readahead_rows()).unwrap();
    assert!(close(t.rows[0].pct, 1.35));
    assert!(close(t.rows[2].pct, 4.32));
    assert!(close(t.rows[1].pct, 0.40));
    assert_eq!(t.flags.len(), 1);
    assert_eq!(t.flags[0].os_name, "Ubuntu 10.04");
    assert!(close(t.flags[0].recomputed_pct, 0.40));
    assert!(close(t.headline_mean(), 2.38));
    let text = t.to_text();
    assert!(text.contains("headline mean: 2.38% (2%)"), "{text}");
    assert!(text.contains("inconsistent: Ubuntu 10.04"));
}

#[test]
fn preload_table_matches_every_row() {
    let t = monitor_table(&preload_rows()).unwrap();
    for (row, want) in t.rows.iter().zip([10.22, 22.52, 7.48, 11.88]) {
        assert!(close(row.pct, want), "{} {}", row.os_name, row.pct);
    }
    assert!(t.flags.is_empty());
    assert_eq!(t.headline_mean(), 13.03);
    assert!(t.to_text().contains("headline mean: 13.03% (13%)"));
}

#[test]
fn consistency_edge_cases() {
    assert!(consistency_check(&[]).is_empty());
    assert!(consistency_check(&readahead_rows()[..1]).is_empty());
    let zero = monitor_table(&[MonitorInput {
        os_name: "none".into(),
        files: 0,
        kib: 0.0,
        fs_used_gib: 1.0,
        printed_pct: None,
    }])
    .unwrap();
    assert_eq!(zero.rows[0].pct, 0.0);
    assert_eq!(zero.mean_printed_pct, None);
}

#[test]
fn combined_estimate_reference_values() {
    let e = combined_estimate(2.38, 13.0, 2.9).unwrap();
    assert_eq!(e.combined_pct, 15.38);
    assert_eq!(e.estimated_mib, 457);
    let zero = combined_estimate(0.0, 0.0, 2.9).unwrap();
    assert_eq!((zero.combined_pct, zero.estimated_mib), (0.0, 0));
    assert!(combined_estimate(101.0, 0.0, 1.0).is_err());
    let text = e.to_text();
    assert!(text.contains("15.38%") && text.contains("457 MiB"), "{text}");
}

#[test]
fn dedup_percentage_cannot_exceed_additive() {
    let e = combined_estimate(2.38, 13.0, 2.9).unwrap();
    let d = e.clone().with_union_pct(14.0).unwrap();
    assert_eq!(d.dedup_pct, Some(14.0));
    assert_eq!(d.dedup_mib(), Some(416));
    assert!(e.with_union_pct(15.5).is_err());
}

#[test]
fn transfer_examples() {
    let same = transfer_estimate(1000, 1000, 10.0, 3).unwrap();
    assert_eq!(same.saving_pct, 0.0);
    let half = transfer_estimate(1000, 500, 7.0, 5).unwrap();
    assert_eq!(half.saving_pct, 50.0);
    assert!((half.after_s - half.before_s / 2.0).abs() < 1e-9);
    assert!((half.before_s - 1000.0 * 5.0 / 7.0).abs() < 1e-9);

    let image = (2.9 * GIB as f64).round() as u64;
    let t = transfer_estimate(image, 457 * MIB, 1e8, 10).unwrap();
    // 100 * (1 - 457 / 2969.6) = 84.6107...
    assert_eq!(t.saving_pct, 84.61);
    assert!(transfer_estimate(1, 1, 0.0, 1).is_err());
    assert!(transfer_estimate(1, 1, 1.0, 0).is_err());
}

#[test]
fn csv_round_trip_and_headers() {
    let occ_csv = "os_name,fs_used_gib,allocated_gib\nDebian 5, 2.6, 6\n";
    let rows = read_occupancy_csv(occ_csv.as_bytes()).unwrap();
    let out = occupancy_table(&rows).unwrap().to_csv().unwrap();
    assert_eq!(out, "os_name,fs_used_gib,allocated_gib,pct\nDebian 5,2.60,6.00,43.33\n");

    let mon_csv = "os_name,files,kib,fs_used_gib,printed_pct\nUbuntu,95,9161,2.2,1.47\nFedora,1315,158441,3.5,\n";
    let rows = read_monitor_csv(mon_csv.as_bytes()).unwrap();
    assert_eq!(rows[1].printed_pct, None);
    let out = monitor_table(&rows).unwrap().to_csv().unwrap();
    assert!(out.starts_with("os_name,files,kib,fs_used_gib,pct,printed_pct,flagged\n"));
    assert!(out.contains("Ubuntu,95,9161,2.20,0.40,1.47,yes\n"), "{out}");
    assert!(out.contains("Fedora,1315,158441,3.50,4.32,,no\n"), "{out}");

    let est = read_estimate_csv("boot_pct,app_pct,base_fs_gib\n2.38,13,2.9\n".as_bytes()).unwrap();
    let e = est[0].evaluate().unwrap();
    assert_eq!(e.to_csv().unwrap(), "boot_pct,app_pct,combined_pct,base_fs_gib,estimated_mib,dedup_pct,dedup_mib\n2.38,13.00,15.38,2.90,457,,\n");
    let with_union = EstimateInput { boot_pct: 2.38, app_pct: 13.0, base_fs_gib: 2.9, union_pct: Some(20.0) };
    assert!(with_union.evaluate().is_err());
}

/// Half-up rounding of `num / den` in integer arithmetic.
fn div_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

proptest! {
    #[test]
    fn occupancy_means_match_integer_oracle(rows in proptest::collection::vec((1u32..=1000, 1u32..=1000), 1..8)) {
        // Sizes in hundredths of a GiB.
        let inputs: Vec<OccupancyInput> = rows
            .iter()
            .map(|&(a, b)| {
                let (used, alloc) = (a.min(b), a.max(b));
                occ("r", used as f64 / 100.0, alloc as f64 / 100.0)
            })
            .collect();
        let t = occupancy_table(&inputs).unwrap();
        let mut sum = 0u128;
        for (row, &(a, b)) in t.rows.iter().zip(&rows) {
            let (used, alloc) = (a.min(b) as u128, a.max(b) as u128);
            let pct_c = div_half_up(10_000 * used, alloc);
            prop_assert_eq!((row.pct * 100.0).round() as u128, pct_c);
            prop_assert!((0.0..=100.0).contains(&row.pct));
            sum += pct_c;
        }
        let mean_c = div_half_up(sum, rows.len() as u128);
        prop_assert_eq!((t.mean_pct * 100.0).round() as u128, mean_c);
    }

    #[test]
    fn monitor_means_match_integer_oracle(rows in proptest::collection::vec((0u32..2_000_000, 10u32..2000), 1..8)) {
        let inputs: Vec<MonitorInput> = rows
            .iter()
            .map(|&(kib, gib_c)| MonitorInput {
                os_name: "r".into(),
                files: 1,
                kib: kib as f64,
                fs_used_gib: gib_c as f64 / 100.0,
                printed_pct: None,
            })
            .collect();
        let t = monitor_table(&inputs).unwrap();
        let mut sum = 0u128;
        for (row, &(kib, gib_c)) in t.rows.iter().zip(&rows) {
            // pct = 100 * kib * 1024 / (gib * 1024^3), in hundredths.
            let pct_c = div_half_up(10_000 * 100 * kib as u128, gib_c as u128 * 1_048_576);
            prop_assert_eq!((row.pct * 100.0).round() as u128, pct_c);
            sum += pct_c;
        }
        prop_assert_eq!((t.mean_pct * 100.0).round() as u128, div_half_up(sum, rows.len() as u128));
    }

    #[test]
    fn estimate_matches_integer_oracle(boot_c in 0u32..=5000, app_c in 0u32..=5000, base_c in 0u32..=10_000) {
        let e = combined_estimate(boot_c as f64 / 100.0, app_c as f64 / 100.0, base_c as f64 / 100.0).unwrap();
        let combined_c = (boot_c + app_c) as u128;
        prop_assert_eq!((e.combined_pct * 100.0).round() as u128, combined_c);
        // combined/100 * base * 1024, both operands in hundredths.
        prop_assert_eq!(e.estimated_mib as u128, div_half_up(combined_c * base_c as u128 * 1024, 1_000_000));
    }

    #[test]
    fn rendering_is_deterministic(rows in proptest::collection::vec((0u32..100_000, 10u32..500), 0..6)) {
        let inputs: Vec<MonitorInput> = rows
            .iter()
            .map(|&(kib, g)| mon("row", 3, kib as f64, g as f64 / 100.0, 1.0))
            .collect();
        let a = monitor_table(&inputs).unwrap();
        let b = monitor_table(&inputs).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }
}
