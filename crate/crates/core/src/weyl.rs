//! Spectral staircase and its smoothed Weyl approximation for a semifluxon
//! billiard: `N(E) ~ A E / 4 pi - L sqrt(E) / 4 pi + 1/12`.
//!
//! A complete level list tracks the smooth curve with O(1) fluctuations; a
//! missing or spurious level shows up as a step offset of one.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::LevelList;

pub const GRID_POINTS: usize = 200;

pub fn smoothed_staircase(area: f64, perimeter: f64, energy: f64) -> Result<f64> {
    if !(energy >= 0.0) {
        return Err(Error::Argument(format!("energy must be non-negative, got {energy}")));
    }
    Ok(area * energy / (4.0 * PI) - perimeter * energy.sqrt() / (4.0 * PI) + 1.0 / 12.0)
}

/// Number of levels with `k^2 < energy`, degenerate levels counted with
/// their multiplicity.
pub fn counted(levels: &LevelList, energy: f64) -> usize {
    levels
        .levels
        .iter()
        .filter(|l| l.k * l.k < energy)
        .map(|l| l.multiplicity as usize)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseReport {
    pub energies: Vec<f64>,
    pub counted: Vec<usize>,
    pub smoothed: Vec<f64>,
    pub max_abs_residual: f64,
}

impl StaircaseReport {
    pub fn residuals(&self) -> Vec<f64> {
        self.counted.iter().zip(&self.smoothed).map(|(&n, s)| n as f64 - s).collect()
    }

    /// Mean residual over the upper half of the energy grid.
    pub fn upper_mean_residual(&self) -> f64 {
        let r = self.residuals();
        let upper = &r[r.len() / 2..];
        upper.iter().sum::<f64>() / upper.len() as f64
    }

    /// CSV rows `E,counted,smoothed,residual`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "E,counted,smoothed,residual")?;
        for ((e, n), s) in self.energies.iter().zip(&self.counted).zip(&self.smoothed) {
            writeln!(out, "{:.8e},{},{:.8e},{:.8e}", e, n, s, *n as f64 - s)?;
        }
        Ok(())
    }
}

/// Staircase against the smoothed curve on `GRID_POINTS` energies in `(0, e_max]`.
pub fn compare(levels: &LevelList, area: f64, perimeter: f64, e_max: f64) -> Result<StaircaseReport> {
    if !(e_max > 0.0) || !e_max.is_finite() {
        return Err(Error::Argument(format!("E_max must be positive, got {e_max}")));
    }
    let energies: Vec<f64> = (1..=GRID_POINTS).map(|i| e_max * i as f64 / GRID_POINTS as f64).collect();
    let counts: Vec<usize> = energies.iter().map(|&e| counted(levels, e)).collect();
    let smoothed = energies
        .iter()
        .map(|&e| smoothed_staircase(area, perimeter, e))
        .collect::<Result<Vec<_>>>()?;
    let max_abs_residual = counts
        .iter()
        .zip(&smoothed)
        .map(|(&n, s)| (n as f64 - s).abs())
        .fold(0.0, f64::max);
    Ok(StaircaseReport { energies, counted: counts, smoothed, max_abs_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::circle_center_levels;
    use crate::roots::Level;

    #[test]
    fn smoothed_examples() {
        let v = smoothed_staircase(PI, 2.0 * PI, 100.0).unwrap();
        assert!((v - (25.0 - 5.0 + 1.0 / 12.0)).abs() < 1e-12);
        assert_eq!(smoothed_staircase(3.0, 7.0, 0.0).unwrap(), 1.0 / 12.0);
        let e = 2.404826f64.powi(2);
        let want = e / 4.0 - e.sqrt() / 2.0 + 1.0 / 12.0;
        assert!((smoothed_staircase(PI, 2.0 * PI, e).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.3271).abs() < 1e-3);
        assert!(matches!(smoothed_staircase(PI, 2.0 * PI, -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn counting_uses_multiplicity_and_strict_inequality() {
        let l = LevelList {
            levels: vec![
                Level { k: 2.0, multiplicity: 2, sigma_min: 0.0 },
                Level { k: 3.0, multiplicity: 1, sigma_min: 0.0 },
            ],
        };
        assert_eq!(counted(&l, 4.0), 0);
        assert_eq!(counted(&l, 4.0 + 1e-12), 2);
        assert_eq!(counted(&l, 10.0), 3);
    }

    #[test]
    fn centred_circle_tracks_weyl() {
        let all = circle_center_levels(40).unwrap();
        let levels = LevelList { levels: all.levels.into_iter().filter(|l| l.k <= 8.0).collect() };
        let r = compare(&levels, PI, 2.0 * PI, 64.0).unwrap();
        assert_eq!(r.energies.len(), GRID_POINTS);
        assert!(r.counted.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.max_abs_residual <= 1.5, "{}", r.max_abs_residual);
    }

    #[test]
    fn deleted_level_offsets_residual() {
        let all = circle_center_levels(40).unwrap();
        let full = LevelList { levels: all.levels.into_iter().filter(|l| l.k <= 8.0).collect() };
        let mut cut = full.clone();
        cut.levels[3].multiplicity = 1;
        let a = compare(&full, PI, 2.0 * PI, 64.0).unwrap().upper_mean_residual();
        let b = compare(&cut, PI, 2.0 * PI, 64.0).unwrap().upper_mean_residual();
        assert!(((a - b) - 1.0).abs() < 0.3);
    }

    #[test]
    fn csv_layout() {
        let l = circle_center_levels(2).unwrap();
        let r = compare(&l, PI, 2.0 * PI, 20.0).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), GRID_POINTS + 1);
        assert!(text.starts_with("E,counted,smoothed,residual\n"));
        assert!(compare(&l, PI, 2.0 * PI, 0.0).is_err());
    }
}
