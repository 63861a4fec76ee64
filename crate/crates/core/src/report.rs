// SPDX-License-Identifier: Apache-2.0

//! Size reports: filesystem occupancy, monitoring percentages, the combined
//! boot + application reduction estimate and a simple transfer-time model.
//!
//! Percentages are rounded half-up to two decimals. Sizes use binary units
//! (1 KB = 1024 bytes, 1 GB = 1024^3 bytes).

use std::fmt::Write as _;
use std::io;

use serde::Deserialize;
use thiserror::Error;

use crate::units::{gib_to_bytes, percent_of_fs, round2, round_half_up};

/// Printed and recomputed percentages further apart than this are flagged.
pub const CONSISTENCY_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

fn invalid(msg: impl Into<String>) -> ReportError {
    ReportError::InvalidInput(msg.into())
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct OccupancyInput {
    pub os_name: String,
    pub fs_used_gib: f64,
    pub allocated_gib: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyRow {
    pub os_name: String,
    pub fs_used_gib: f64,
    pub allocated_gib: f64,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    pub rows: Vec<OccupancyRow>,
    /// Mean of the per-row percentages.
    pub mean_pct: f64,
    pub mean_fs_gib: f64,
}

pub fn occupancy_table(inputs: &[OccupancyInput]) -> Result<OccupancyTable, ReportError> {
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.allocated_gib.is_nan() || input.allocated_gib <= 0.0 {
            return Err(invalid(format!("{}: allocated size must be positive", input.os_name)));
        }
        if !(0.0..=input.allocated_gib).contains(&input.fs_used_gib) {
            return Err(invalid(format!(
                "{}: filesystem size {} outside 0..={}",
                input.os_name, input.fs_used_gib, input.allocated_gib
            )));
        }
        rows.push(OccupancyRow {
            os_name: input.os_name.clone(),
            fs_used_gib: input.fs_used_gib,
            allocated_gib: input.allocated_gib,
            pct: round2(100.0 * input.fs_used_gib / input.allocated_gib),
        });
    }
    let mean_pct = round2(mean(rows.iter().map(|r| r.pct)));
    let mean_fs_gib = round2(mean(rows.iter().map(|r| r.fs_used_gib)));
    Ok(OccupancyTable { rows, mean_pct, mean_fs_gib })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MonitorInput {
    pub os_name: String,
    pub files: u64,
    pub kib: f64,
    pub fs_used_gib: f64,
    /// Percentage as printed alongside the raw figures in the source data, if any.
    #[serde(default)]
    pub printed_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRow {
    pub os_name: String,
    pub files: u64,
    pub kib: f64,
    pub fs_used_gib: f64,
    /// Recomputed from `kib` and `fs_used_gib`.
    pub pct: f64,
    pub printed_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorTable {
    pub rows: Vec<MonitorRow>,
    /// Mean of the recomputed row percentages.
    pub mean_pct: f64,
    /// Mean of the printed percentages, when every row has one.
    pub mean_printed_pct: Option<f64>,
    pub flags: Vec<ConsistencyFlag>,
}

impl MonitorTable {
    /// The mean to quote: printed figures when available, recomputed otherwise.
    pub fn headline_mean(&self) -> f64 {
        self.mean_printed_pct.unwrap_or(self.mean_pct)
    }
}

fn monitor_pct(input: &MonitorInput) -> f64 {
    round2(percent_of_fs(input.kib, gib_to_bytes(input.fs_used_gib)))
}

pub fn monitor_table(inputs: &[MonitorInput]) -> Result<MonitorTable, ReportError> {
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.fs_used_gib.is_nan() || input.fs_used_gib <= 0.0 {
            return Err(invalid(format!("{}: filesystem size must be positive", input.os_name)));
        }
        if input.kib < 0.0 {
            return Err(invalid(format!("{}: negative size", input.os_name)));
        }
        rows.push(MonitorRow {
            os_name: input.os_name.clone(),
            files: input.files,
            kib: input.kib,
            fs_used_gib: input.fs_used_gib,
            pct: monitor_pct(input),
            printed_pct: input.printed_pct,
        });
    }
    let mean_pct = round2(mean(rows.iter().map(|r| r.pct)));
    let mean_printed_pct = if !rows.is_empty() && rows.iter().all(|r| r.printed_pct.is_some()) {
        Some(round2(mean(rows.iter().filter_map(|r| r.printed_pct))))
    } else {
        None
    };
    Ok(MonitorTable { rows, mean_pct, mean_printed_pct, flags: consistency_check(inputs) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyFlag {
    pub os_name: String,
    pub printed_pct: f64,
    pub recomputed_pct: f64,
}

/// Rows whose printed percentage disagrees with the one recomputed from their
/// own size figures by more than [`CONSISTENCY_TOLERANCE`].
pub fn consistency_check(rows: &[MonitorInput]) -> Vec<ConsistencyFlag> {
    rows.iter()
        .filter(|r| r.fs_used_gib > 0.0)
        .filter_map(|r| {
            let printed = r.printed_pct?;
            let recomputed = monitor_pct(r);
            ((recomputed - printed).abs() > CONSISTENCY_TOLERANCE + 1e-9).then(|| ConsistencyFlag {
                os_name: r.os_name.clone(),
                printed_pct: printed,
                recomputed_pct: recomputed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EstimateInput {
    pub boot_pct: f64,
    pub app_pct: f64,
    pub base_fs_gib: f64,
    #[serde(default)]
    pub union_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionEstimate {
    pub boot_pct: f64,
    pub app_pct: f64,
    /// `boot_pct + app_pct`: additive, overlap counted twice.
    pub combined_pct: f64,
    pub base_fs_gib: f64,
    pub estimated_mib: u64,
    /// Percentage of the deduplicated union of both catalogs, when known.
    pub dedup_pct: Option<f64>,
}

impl ReductionEstimate {
    /// Attaches the union-based percentage; it can never exceed the additive one.
    pub fn with_union_pct(mut self, union_pct: f64) -> Result<Self, ReportError> {
        if !(0.0..=100.0).contains(&union_pct) {
            return Err(invalid(format!("union percentage {union_pct} outside 0..=100")));
        }
        if round2(union_pct) > self.combined_pct {
            return Err(invalid(format!(
                "union percentage {union_pct} exceeds the additive {}",
                self.combined_pct
            )));
        }
        self.dedup_pct = Some(round2(union_pct));
        Ok(self)
    }

    pub fn dedup_mib(&self) -> Option<u64> {
        self.dedup_pct.map(|p| estimate_mib(p, self.base_fs_gib))
    }
}

fn estimate_mib(pct: f64, base_fs_gib: f64) -> u64 {
    round_half_up(pct / 100.0 * base_fs_gib * 1024.0, 0) as u64
}

pub fn combined_estimate(boot_pct: f64, app_pct: f64, base_fs_gib: f64) -> Result<ReductionEstimate, ReportError> {
    for (name, v) in [("boot", boot_pct), ("app", app_pct)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(invalid(format!("{name} percentage {v} outside 0..=100")));
        }
    }
    if base_fs_gib.is_nan() || base_fs_gib < 0.0 {
        return Err(invalid(format!("base filesystem size {base_fs_gib} is negative")));
    }
    let combined_pct = round2(boot_pct + app_pct);
    Ok(ReductionEstimate {
        boot_pct,
        app_pct,
        combined_pct,
        base_fs_gib,
        estimated_mib: estimate_mib(combined_pct, base_fs_gib),
        dedup_pct: None,
    })
}

impl EstimateInput {
    pub fn evaluate(&self) -> Result<ReductionEstimate, ReportError> {
        let est = combined_estimate(self.boot_pct, self.app_pct, self.base_fs_gib)?;
        match self.union_pct {
            Some(u) => est.with_union_pct(u),
            None => Ok(est),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferEstimate {
    pub before_s: f64,
    pub after_s: f64,
    pub saving_pct: f64,
}

/// Sequential fan-out: every node receives the whole image in turn, so the
/// time is `size * node_count / bandwidth`.
pub fn transfer_estimate(
    image_bytes: u64,
    reduced_bytes: u64,
    bandwidth_bytes_per_s: f64,
    node_count: u32,
) -> Result<TransferEstimate, ReportError> {
    if bandwidth_bytes_per_s.is_nan() || bandwidth_bytes_per_s <= 0.0 {
        return Err(invalid("bandwidth must be positive"));
    }
    if node_count == 0 {
        return Err(invalid("node count must be at least 1"));
    }
    if image_bytes == 0 {
        return Err(invalid("image size must be positive"));
    }
    let time = |bytes: u64| bytes as f64 * node_count as f64 / bandwidth_bytes_per_s;
    Ok(TransferEstimate {
        before_s: time(image_bytes),
        after_s: time(reduced_bytes),
        saving_pct: round2(100.0 * (1.0 - reduced_bytes as f64 / image_bytes as f64)),
    })
}

// Rendering.

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut text = String::new();
        for (i, cell) in cells.enumerate() {
            if i == 0 {
                let _ = write!(text, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(text, "  {cell:>w$}", w = widths[i]);
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

fn render_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields is UTF-8"))
}

fn f2(v: f64) -> String {
    format!("{v:.2}")
}

fn opt2(v: Option<f64>) -> String {
    v.map(f2).unwrap_or_default()
}

const OCCUPANCY_COLUMNS: [&str; 4] = ["os_name", "fs_used_gib", "allocated_gib", "pct"];
const MONITOR_COLUMNS: [&str; 7] = ["os_name", "files", "kib", "fs_used_gib", "pct", "printed_pct", "flagged"];
const ESTIMATE_COLUMNS: [&str; 7] =
    ["boot_pct", "app_pct", "combined_pct", "base_fs_gib", "estimated_mib", "dedup_pct", "dedup_mib"];

impl OccupancyTable {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| vec![r.os_name.clone(), f2(r.fs_used_gib), f2(r.allocated_gib), f2(r.pct)])
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut rows = self.cells();
        rows.push(vec!["mean".into(), f2(self.mean_fs_gib), String::new(), f2(self.mean_pct)]);
        render_table(&OCCUPANCY_COLUMNS, &rows)
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        render_csv(&OCCUPANCY_COLUMNS, &self.cells())
    }
}

impl MonitorTable {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let flagged = self.flags.iter().any(|f| f.os_name == r.os_name);
                vec![
                    r.os_name.clone(),
                    r.files.to_string(),
                    format!("{}", r.kib),
                    f2(r.fs_used_gib),
                    f2(r.pct),
                    opt2(r.printed_pct),
                    if flagged { "yes".into() } else { "no".into() },
                ]
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut rows = self.cells();
        rows.push(vec![
            "mean".into(),
            String::new(),
            String::new(),
            String::new(),
            f2(self.mean_pct),
            opt2(self.mean_printed_pct),
            String::new(),
        ]);
        let mut out = render_table(&MONITOR_COLUMNS, &rows);
        let headline = self.headline_mean();
        let _ = writeln!(out, "headline mean: {:.2}% ({}%)", headline, round_half_up(headline, 0));
        for f in &self.flags {
            let _ = writeln!(
                out,
                "inconsistent: {} printed {:.2}% but its figures give {:.2}%",
                f.os_name, f.printed_pct, f.recomputed_pct
            );
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        render_csv(&MONITOR_COLUMNS, &self.cells())
    }
}

impl ReductionEstimate {
    fn cells(&self) -> Vec<String> {
        vec![
            f2(self.boot_pct),
            f2(self.app_pct),
            f2(self.combined_pct),
            f2(self.base_fs_gib),
            self.estimated_mib.to_string(),
            opt2(self.dedup_pct),
            self.dedup_mib().map(|m| m.to_string()).unwrap_or_default(),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "boot {:.2}% + app {:.2}% = {:.2}% of {:.2} GiB = {} MiB\n",
            self.boot_pct, self.app_pct, self.combined_pct, self.base_fs_gib, self.estimated_mib
        );
        if let (Some(pct), Some(mib)) = (self.dedup_pct, self.dedup_mib()) {
            let _ = writeln!(out, "deduplicated union {pct:.2}% = {mib} MiB");
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        render_csv(&ESTIMATE_COLUMNS, &[self.cells()])
    }
}

pub fn render_estimates_csv(estimates: &[ReductionEstimate]) -> Result<String, ReportError> {
    let rows: Vec<_> = estimates.iter().map(ReductionEstimate::cells).collect();
    render_csv(&ESTIMATE_COLUMNS, &rows)
}

fn read_rows<T: serde::de::DeserializeOwned, R: io::Read>(reader: R) -> Result<Vec<T>, ReportError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(ReportError::from)
}

/// Columns: `os_name,fs_used_gib,allocated_gib`.
pub fn read_occupancy_csv<R: io::Read>(reader: R) -> Result<Vec<OccupancyInput>, ReportError> {
    read_rows(reader)
}

/// Columns: `os_name,files,kib,fs_used_gib[,printed_pct]`.
pub fn read_monitor_csv<R: io::Read>(reader: R) -> Result<Vec<MonitorInput>, ReportError> {
    read_rows(reader)
}

/// Columns: `boot_pct,app_pct,base_fs_gib[,union_pct]`.
pub fn read_estimate_csv<R: io::Read>(reader: R) -> Result<Vec<EstimateInput>, ReportError> {
    read_rows(reader)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(name: &str, used: f64, alloc: f64) -> OccupancyInput {
        OccupancyInput { os_name: name.into(), fs_used_gib: used, allocated_gib: alloc }
    }

    fn mon(name: &str, files: u64, kib: f64, gib: f64, printed: Option<f64>) -> MonitorInput {
        MonitorInput { os_name: name.into(), files, kib, fs_used_gib: gib, printed_pct: printed }
    }

    #[test]
    fn full_filesystem_is_one_hundred_percent() {
        let t = occupancy_table(&[occ("x", 3.0, 3.0)]).unwrap();
        assert_eq!(t.rows[0].pct, 100.0);
    }

    #[test]
    fn occupancy_rejects_bad_rows() {
        assert!(occupancy_table(&[occ("x", 1.0, 0.0)]).is_err());
        assert!(occupancy_table(&[occ("x", 7.0, 6.0)]).is_err());
        assert!(occupancy_table(&[occ("x", -1.0, 6.0)]).is_err());
    }

    #[test]
    fn zero_catalog_is_zero_percent() {
        let t = monitor_table(&[mon("x", 0, 0.0, 2.0, None)]).unwrap();
        assert_eq!(t.rows[0].pct, 0.0);
        assert_eq!(t.mean_printed_pct, None);
        assert!(monitor_table(&[mon("x", 0, 0.0, 0.0, None)]).is_err());
    }

    #[test]
    fn empty_inputs() {
        assert!(consistency_check(&[]).is_empty());
        let t = monitor_table(&[]).unwrap();
        assert_eq!(t.mean_pct, 0.0);
        assert_eq!(t.mean_printed_pct, None);
    }

    #[test]
    fn zero_estimate() {
        let e = combined_estimate(0.0, 0.0, 123.0).unwrap();
        assert_eq!((e.combined_pct, e.estimated_mib), (0.0, 0));
        assert!(combined_estimate(101.0, 0.0, 1.0).is_err());
        assert!(combined_estimate(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn union_cannot_exceed_additive() {
        let e = combined_estimate(2.0, 3.0, 1.0).unwrap();
        assert!(e.clone().with_union_pct(5.5).is_err());
        let d = e.with_union_pct(4.0).unwrap();
        assert_eq!(d.dedup_pct, Some(4.0));
        assert_eq!(d.dedup_mib(), Some(41));
    }

    #[test]
    fn transfer_model() {
        let t = transfer_estimate(1000, 1000, 10.0, 3).unwrap();
        assert_eq!(t.saving_pct, 0.0);
        assert_eq!(t.before_s, 300.0);
        let t = transfer_estimate(1000, 500, 7.0, 5).unwrap();
        assert_eq!(t.saving_pct, 50.0);
        assert_eq!(t.after_s * 2.0, t.before_s);
        assert!(transfer_estimate(1000, 500, 0.0, 1).is_err());
        assert!(transfer_estimate(1000, 500, 1.0, 0).is_err());
    }

    #[test]
    fn csv_inputs_parse_with_optional_columns() {
        let rows = read_monitor_csv("os_name,files,kib,fs_used_gib\nA,1,2,3\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![mon("A", 1, 2.0, 3.0, None)]);
        let rows =
            read_monitor_csv("os_name,files,kib,fs_used_gib,printed_pct\nA, 1, 2, 3, 4.5\n".as_bytes()).unwrap();
        assert_eq!(rows[0].printed_pct, Some(4.5));
        assert!(read_occupancy_csv("os_name,fs_used_gib\nA,1\n".as_bytes()).is_err());
    }

    #[test]
    fn text_tables_align() {
        let t = occupancy_table(&[occ("short", 1.0, 2.0), occ("a longer name", 1.5, 2.0)]).unwrap();
        let text = t.to_text();
        let widths: Vec<usize> = text.lines().map(str::len).collect();
        assert_eq!(widths[1], widths[2]);
        assert!(text.starts_with("os_name"));
        assert_eq!(t.to_csv().unwrap(), "os_name,fs_used_gib,allocated_gib,pct\nshort,1.00,2.00,50.00\na longer name,1.50,2.00,75.00\n");
    }
}
