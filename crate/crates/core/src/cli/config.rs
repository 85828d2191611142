//! Run configuration: an optional TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::{parse_angle, FluxPosition, ShapeParams};
use crate::degeneracy::DegeneracyOptions;
use crate::error::{Error, Result};
use crate::spectral::SolverOptions;

/// Angle written either as radians or as text such as `"pi/3"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Radians(f64),
    Text(String),
}

impl Angle {
    pub fn radians(&self) -> Result<f64> {
        match self {
            Angle::Radians(v) => Ok(*v),
            Angle::Text(t) => parse_angle(t),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    pub preset: Option<String>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub sigma: Option<Angle>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSection {
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub truncation: Option<usize>,
    pub margin: Option<f64>,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub bisect_tol: Option<f64>,
    pub sigma_root: Option<f64>,
    pub sigma_double: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegeneracySection {
    pub grid_step: Option<f64>,
    pub gap_threshold: Option<f64>,
    pub simplex_size: Option<f64>,
    pub gap_tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub dedupe_distance: Option<f64>,
    pub scan_margin: Option<f64>,
    pub deflation_radius: Option<f64>,
    pub restarts: Option<usize>,
    pub subdivision: Option<usize>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub shape: ShapeSection,
    #[serde(default)]
    pub flux: FluxSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub degeneracy: DegeneracySection,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Argument(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Argument(format!("bad config: {e}")))
    }
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub shape: ShapeParams,
    pub flux: FluxPosition,
    pub k_range: Option<[f64; 2]>,
    pub solver: SolverOptions,
    pub degeneracy: DegeneracyOptions,
    /// Worker threads; 0 uses every core. Left out of output headers so
    /// files do not depend on it.
    #[serde(skip)]
    pub workers: usize,
    pub output: Option<PathBuf>,
}

/// Flag values that override the file; `None` keeps the file or default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub sigma: Option<String>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub truncation: Option<usize>,
    pub margin: Option<f64>,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub k_step: Option<f64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self> {
        let preset = flags.preset.as_ref().or(file.shape.preset.as_ref());
        let base = match preset {
            Some(name) => ShapeParams::preset(name).ok_or_else(|| Error::Argument(format!("unknown shape preset '{name}'")))?,
            None => ShapeParams::CIRCLE,
        };
        let sigma = match (&flags.sigma, &file.shape.sigma) {
            (Some(t), _) => parse_angle(t)?,
            (None, Some(a)) => a.radians()?,
            (None, None) => base.sigma,
        };
        let shape = ShapeParams::new(
            flags.a2.or(file.shape.a2).unwrap_or(base.a2),
            flags.a3.or(file.shape.a3).unwrap_or(base.a3),
            sigma,
        )?;
        let flux = FluxPosition::new(flags.x.or(file.flux.x).unwrap_or(0.0), flags.y.or(file.flux.y).unwrap_or(0.0));

        let s = &file.solver;
        let mut solver = SolverOptions::default();
        solver.truncation = flags.truncation.or(s.truncation).unwrap_or(solver.truncation);
        solver.margin = flags.margin.or(s.margin).unwrap_or(solver.margin);
        solver.scan.grid_step = flags.k_step.or(s.grid_step).unwrap_or(solver.scan.grid_step);
        solver.scan.bisect_tol = s.bisect_tol.unwrap_or(solver.scan.bisect_tol);
        solver.scan.sigma_root = s.sigma_root.unwrap_or(solver.scan.sigma_root);
        solver.scan.sigma_double = s.sigma_double.unwrap_or(solver.scan.sigma_double);
        solver.scan.validate()?;
        if !(solver.margin > 0.0) {
            return Err(Error::Argument(format!("margin must be positive, got {}", solver.margin)));
        }
        let k_range = match (flags.k_min.or(s.k_min), flags.k_max.or(s.k_max)) {
            (Some(lo), Some(hi)) => Some([lo, hi]),
            (None, None) => None,
            _ => return Err(Error::Argument("give both k_min and k_max".into())),
        };

        let d = &file.degeneracy;
        let mut degeneracy = DegeneracyOptions { solver, ..DegeneracyOptions::default() };
        degeneracy.grid_step = d.grid_step.unwrap_or(degeneracy.grid_step);
        degeneracy.gap_threshold = d.gap_threshold.unwrap_or(degeneracy.gap_threshold);
        degeneracy.simplex_size = d.simplex_size.unwrap_or(degeneracy.simplex_size);
        degeneracy.gap_tolerance = d.gap_tolerance.unwrap_or(degeneracy.gap_tolerance);
        degeneracy.max_iterations = d.max_iterations.unwrap_or(degeneracy.max_iterations);
        degeneracy.dedupe_distance = d.dedupe_distance.unwrap_or(degeneracy.dedupe_distance);
        degeneracy.scan_margin = d.scan_margin.unwrap_or(degeneracy.scan_margin);
        degeneracy.deflation_radius = d.deflation_radius.unwrap_or(degeneracy.deflation_radius);
        degeneracy.restarts = d.restarts.unwrap_or(degeneracy.restarts);
        degeneracy.subdivision = d.subdivision.unwrap_or(degeneracy.subdivision);
        degeneracy.validate()?;

        Ok(RunConfig {
            shape,
            flux,
            k_range,
            solver,
            degeneracy,
            workers: flags.workers.or(file.workers).unwrap_or(0),
            output: flags.output.clone().or_else(|| file.output.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flags_override_file() {
        let file = FileConfig::parse(
            r#"
            workers = 2
            [shape]
            preset = "table"
            sigma = "pi/6"
            [flux]
            x = 0.1
            [solver]
            truncation = 14
            k_min = 1.0
            k_max = 5.0
            "#,
        )
        .unwrap();
        let flags = Overrides { truncation: Some(12), y: Some(-0.2), ..Default::default() };
        let c = RunConfig::resolve(&file, &flags).unwrap();
        assert_eq!(c.shape.a2, 0.15);
        assert!((c.shape.sigma - PI / 6.0).abs() < 1e-15);
        assert_eq!(c.flux, FluxPosition::new(0.1, -0.2));
        assert_eq!(c.solver.truncation, 12);
        assert_eq!(c.degeneracy.solver.truncation, 12);
        assert_eq!(c.k_range, Some([1.0, 5.0]));
        assert_eq!(c.workers, 2);
    }

    #[test]
    fn numeric_sigma_and_defaults() {
        let file = FileConfig::parse("[shape]\na2 = 0.01\nsigma = 0.5\n").unwrap();
        let c = RunConfig::resolve(&file, &Overrides::default()).unwrap();
        assert_eq!((c.shape.a2, c.shape.a3, c.shape.sigma), (0.01, 0.0, 0.5));
        assert_eq!(c.flux, FluxPosition::ORIGIN);
        assert_eq!(c.k_range, None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(FileConfig::parse("[shape]\ncolour = 1\n").is_err());
        let half = Overrides { k_min: Some(1.0), ..Default::default() };
        assert!(RunConfig::resolve(&FileConfig::default(), &half).is_err());
        let preset = Overrides { preset: Some("square".into()), ..Default::default() };
        assert!(RunConfig::resolve(&FileConfig::default(), &preset).is_err());
    }
}
