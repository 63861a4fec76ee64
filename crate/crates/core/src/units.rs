// SPDX-License-Identifier: Apache-2.0

//! Binary size units and the rounding convention shared by every report.

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;
pub const GIB: u64 = 1024 * 1024 * 1024;

/// Rounds half away from zero at `decimals` places.
///
/// The value is first snapped to 6 places past the target precision so that
/// binary noise (`13.025` stored as `13.02499…`) does not flip a tie.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let snapped = (scaled * 1e6).round() / 1e6;
    let rounded = if snapped >= 0.0 { (snapped + 0.5).floor() } else { -((-snapped + 0.5).floor()) };
    rounded / scale
}

pub fn round2(x: f64) -> f64 {
    round_half_up(x, 2)
}

/// `100 * kib * 1024 / fs_used_bytes`, unrounded.
pub fn percent_of_fs(kib: f64, fs_used_bytes: f64) -> f64 {
    if fs_used_bytes <= 0.0 {
        return 0.0;
    }
    100.0 * kib * KIB as f64 / fs_used_bytes
}

pub fn gib_to_bytes(gib: f64) -> f64 {
    gib * GIB as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_round_up() {
        assert_eq!(round2(13.025), 13.03);
        assert_eq!(round2((10.22 + 22.52 + 7.48 + 11.88) / 4.0), 13.03);
        assert_eq!(round2(48.3325), 48.33);
        assert_eq!(round2(1.005), 1.01);
        assert_eq!(round2(-1.005), -1.01);
        assert_eq!(round_half_up(456.5, 0), 457.0);
        assert_eq!(round_half_up(456.72, 0), 457.0);
        assert_eq!(round2(0.0), 0.0);
    }

    #[test]
    fn percent_uses_binary_units() {
        let pct = percent_of_fs(36_817.0, gib_to_bytes(2.6));
        assert!((pct - 1.3504).abs() < 1e-4, "{pct}");
        assert_eq!(percent_of_fs(10.0, 0.0), 0.0);
    }
}
