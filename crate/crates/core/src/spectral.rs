//! Boundary collocation for the semifluxon billiard.
//!
//! Around the flux the real wavefunction is
//! `f = sum_n J_{n+1/2}(k rho) (c_n cos((n+1/2) mu) + s_n sin((n+1/2) mu))`,
//! which is antiperiodic in `mu`. Requiring `f = 0` at `2N` boundary points
//! `phi_m = m pi / N` gives a `2N x 2N` matrix whose determinant vanishes at
//! the levels. Rows use the flux-centred angle `mu(phi_m)`; the principal
//! branch only flips the sign of a row, which leaves the zero set alone.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::boundary::{check_admissible, collocation_angles, contains, flux_polar, FluxPolar, FluxPosition, ShapeParams};
use crate::error::{Error, Result};
use crate::roots::{scan_roots, DetIndicator, LevelList, ScanOptions, SpectralDeterminant};
use crate::specfun::half_integer_orders;

pub const MAX_TRUNCATION: usize = 25;

/// `sigma_min` above which a wavenumber is not accepted as a level by
/// [`mode_coefficients`].
pub const SINGULAR_THRESHOLD: f64 = 1e-5;

/// Scaled collocation matrix at one wavenumber.
#[derive(Debug, Clone)]
pub struct CollocationMatrix {
    pub k: f64,
    pub n: usize,
    /// Columns divided by `column_scales`; every entry has magnitude <= 1.
    pub entries: DMatrix<f64>,
    /// Per-column Bessel envelope `max_m sqrt(J_nu(k rho_m)^2 + J_{nu+1}(k rho_m)^2)`.
    pub column_scales: Vec<f64>,
}

impl CollocationMatrix {
    /// The matrix before column scaling.
    pub fn raw(&self) -> DMatrix<f64> {
        let mut m = self.entries.clone();
        for (j, s) in self.column_scales.iter().enumerate() {
            m.column_mut(j).scale_mut(*s);
        }
        m
    }
}

/// Geometry of one (shape, flux, N) problem, reusable across wavenumbers.
#[derive(Debug, Clone)]
pub struct Collocation {
    pub shape: ShapeParams,
    pub flux: FluxPosition,
    pub n: usize,
    points: Vec<FluxPolar>,
}

impl Collocation {
    /// Checks the flux against `margin` and precomputes the collocation points.
    pub fn new(shape: &ShapeParams, flux: FluxPosition, n: usize, margin: f64) -> Result<Self> {
        if !(1..=MAX_TRUNCATION).contains(&n) {
            return Err(Error::Argument(format!("truncation N must be in 1..={MAX_TRUNCATION}, got {n}")));
        }
        check_admissible(shape, flux, margin)?;
        let points = collocation_angles(n)
            .into_iter()
            .map(|phi| flux_polar(shape, phi, flux))
            .collect::<Result<Vec<_>>>()?;
        Ok(Collocation { shape: *shape, flux, n, points })
    }

    pub fn points(&self) -> &[FluxPolar] {
        &self.points
    }

    /// Columns are scaled by a smooth envelope of the Bessel factor rather
    /// than by their own max-norm: when every row shares a vanishing factor
    /// (centred circle, `J_{n+1/2}(k) = 0`) a max-norm scale would divide the
    /// zero out and hide the level.
    pub fn matrix(&self, k: f64) -> CollocationMatrix {
        let n = self.n;
        let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut envelope = vec![0.0f64; n];
        for (row, p) in self.points.iter().enumerate() {
            let bessel = half_integer_orders(k * p.rho, n + 1);
            for j in 0..n {
                let b = bessel[j];
                envelope[j] = envelope[j].max(b.hypot(bessel[j + 1]));
                let (s, c) = ((j as f64 + 0.5) * p.mu).sin_cos();
                m[(row, j)] = b * c;
                m[(row, n + j)] = b * s;
            }
        }
        let scales: Vec<f64> = envelope
            .iter()
            .chain(envelope.iter())
            .map(|&e| if e > 0.0 { e } else { 1.0 })
            .collect();
        for (j, s) in scales.iter().enumerate() {
            m.column_mut(j).scale_mut(1.0 / s);
        }
        CollocationMatrix { k, n, entries: m, column_scales: scales }
    }
}

impl SpectralDeterminant for Collocation {
    fn det(&self, k: f64) -> DetIndicator {
        det_indicator(&self.matrix(k).entries)
    }

    fn singulars(&self, k: f64) -> (f64, f64) {
        smallest_singulars(&self.matrix(k).entries)
    }
}

pub fn build_matrix(shape: &ShapeParams, flux: FluxPosition, k: f64, n: usize, margin: f64) -> Result<CollocationMatrix> {
    if !(k > 0.0) {
        return Err(Error::Argument(format!("wavenumber must be positive, got {k}")));
    }
    Ok(Collocation::new(shape, flux, n, margin)?.matrix(k))
}

/// Sign and `ln|det|` from partial-pivoting LU.
pub fn det_indicator(m: &DMatrix<f64>) -> DetIndicator {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign: f64 = lu.p().determinant();
    let mut log = 0.0;
    for i in 0..u.nrows().min(u.ncols()) {
        let d = u[(i, i)];
        if d == 0.0 {
            return DetIndicator { sign: 0, log_abs_det: f64::NEG_INFINITY };
        }
        sign *= d.signum();
        log += d.abs().ln();
    }
    DetIndicator { sign: if sign > 0.0 { 1 } else { -1 }, log_abs_det: log }
}

/// The two smallest singular values, `(sigma_min, sigma_next)`.
pub fn smallest_singulars(m: &DMatrix<f64>) -> (f64, f64) {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    match sv.len() {
        0 => (0.0, 0.0),
        1 => (sv[0], sv[0]),
        _ => (sv[0], sv[1]),
    }
}

/// Solver settings shared by every level computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Collocation truncation; `2N` boundary points and basis functions.
    pub truncation: usize,
    /// Minimum flux clearance from the boundary.
    pub margin: f64,
    pub scan: ScanOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { truncation: 10, margin: crate::boundary::DEFAULT_MARGIN, scan: ScanOptions::default() }
    }
}

/// All levels with `k` in `[k_lo, k_hi]`.
pub fn find_levels(shape: &ShapeParams, flux: FluxPosition, k_lo: f64, k_hi: f64, opts: &SolverOptions) -> Result<LevelList> {
    if !(k_lo > 0.0 && k_hi > k_lo) {
        return Err(Error::Argument(format!("empty or invalid k range [{k_lo}, {k_hi}]")));
    }
    let c = Collocation::new(shape, flux, opts.truncation, opts.margin)?;
    scan_roots(&c, k_lo, k_hi, &opts.scan)
}

/// Expansion coefficients of one eigenstate; unit norm over `(c, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub c: Vec<f64>,
    pub s: Vec<f64>,
}

impl ModeCoefficients {
    pub fn truncation(&self) -> usize {
        self.c.len()
    }

    /// Amplitude `e_n = sqrt(c_n^2 + s_n^2)`.
    pub fn amplitude(&self, n: usize) -> f64 {
        self.c[n].hypot(self.s[n])
    }

    /// Phase `chi_n` with `c_n = e_n cos chi_n`, `s_n = -e_n sin chi_n`.
    pub fn phase(&self, n: usize) -> f64 {
        (-self.s[n]).atan2(self.c[n])
    }

    pub fn norm(&self) -> f64 {
        self.c.iter().chain(&self.s).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Builds unit-norm coefficients from a column vector in `(c, s)` order.
    fn from_vector(v: &[f64]) -> Self {
        let n = v.len() / 2;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut c: Vec<f64> = v[..n].iter().map(|x| x / norm).collect();
        let mut s: Vec<f64> = v[n..].iter().map(|x| x / norm).collect();
        // sign convention: first significant entry of c positive, else of s
        let floor = 1e-8 * c.iter().chain(&s).fold(0.0f64, |a, x| a.max(x.abs()));
        let lead = c
            .iter()
            .chain(&s)
            .find(|x| x.abs() > floor)
            .copied()
            .unwrap_or(1.0);
        if lead < 0.0 {
            c.iter_mut().chain(s.iter_mut()).for_each(|x| *x = -*x);
        }
        ModeCoefficients { c, s }
    }
}

/// Null vector of the collocation matrix at a level.
pub fn mode_coefficients(shape: &ShapeParams, flux: FluxPosition, k_level: f64, opts: &SolverOptions) -> Result<ModeCoefficients> {
    let col = Collocation::new(shape, flux, opts.truncation, opts.margin)?;
    null_vector(&col, k_level)
}

pub fn null_vector(col: &Collocation, k: f64) -> Result<ModeCoefficients> {
    let m = col.matrix(k);
    let svd = SVD::new(m.entries.clone(), false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let (idx, sigma_min) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    if sigma_min > SINGULAR_THRESHOLD {
        return Err(Error::NotAnEigenvalue { k, sigma_min });
    }
    let v: Vec<f64> = (0..v_t.ncols())
        .map(|j| v_t[(idx, j)] / m.column_scales[j])
        .collect();
    Ok(ModeCoefficients::from_vector(&v))
}

/// `max |f|` over `4N` boundary points midway between collocation points,
/// relative to `max |f|` over interior points on the rays from the flux to
/// those boundary points.
pub fn boundary_residual(col: &Collocation, coeffs: &ModeCoefficients, k: f64) -> Result<f64> {
    let samples = 4 * col.n;
    let (mut edge, mut inner) = (0.0f64, 0.0f64);
    for j in 0..samples {
        let phi = (j as f64 + 0.5) * std::f64::consts::PI / (2 * col.n) as f64;
        let b = flux_polar(&col.shape, phi, col.flux)?;
        edge = edge.max(eval_f(coeffs, k, b).abs());
        for t in 1..10 {
            let p = FluxPolar { rho: b.rho * t as f64 / 10.0, mu: b.mu };
            if contains(&col.shape, p.to_point(col.flux)) {
                inner = inner.max(eval_f(coeffs, k, p).abs());
            }
        }
    }
    if inner == 0.0 {
        return Err(Error::NotAnEigenvalue { k, sigma_min: f64::NAN });
    }
    Ok(edge / inner)
}

/// Truncated expansion of `f` at a flux-centred point. `mu` may be any real
/// angle; crossing `mu -> mu + 2 pi` flips the sign.
pub fn eval_f(coeffs: &ModeCoefficients, k: f64, point: FluxPolar) -> f64 {
    let n = coeffs.truncation();
    let bessel = half_integer_orders(k * point.rho, n);
    bessel
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let (s, c) = ((j as f64 + 0.5) * point.mu).sin_cos();
            b * (coeffs.c[j] * c + coeffs.s[j] * s)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_j, BesselOrder};
    use std::f64::consts::PI;

    #[test]
    fn centred_circle_matrix_is_fourier_bessel() {
        let m = build_matrix(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 3.7, 4, 0.05).unwrap();
        let raw = m.raw();
        let phis = collocation_angles(4);
        for (row, phi) in phis.iter().enumerate() {
            // principal angle of phi
            let mu = (phi.sin()).atan2(phi.cos());
            let mu = if mu <= -PI { PI } else { mu };
            for j in 0..4 {
                let b = bessel_j(BesselOrder::Half(j as u32), 3.7).unwrap();
                let nu = j as f64 + 0.5;
                assert!((raw[(row, j)] - b * (nu * mu).cos()).abs() < 1e-14);
                assert!((raw[(row, 4 + j)] - b * (nu * mu).sin()).abs() < 1e-14);
            }
        }
        for j in 0..8 {
            let amax = m.entries.column(j).amax();
            assert!(amax <= 1.0 + 1e-15 && amax > 0.1, "column {j}: {amax}");
            assert!(m.column_scales[j] > 0.0);
        }
    }

    #[test]
    fn ground_level_singular_for_n1() {
        let m = build_matrix(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, PI, 1, 0.05).unwrap();
        let raw = m.raw();
        assert!(raw[(0, 0)].abs() < 1e-15 && raw[(1, 0)].abs() < 1e-15);
        let d = det_indicator(&m.entries);
        assert!(d.sign == 0 || d.log_abs_det < -30.0);
    }

    #[test]
    fn reference_shape_full_rank_off_level() {
        let m = build_matrix(&ShapeParams::reference(), FluxPosition::ORIGIN, 3.0, 10, 0.05).unwrap();
        let (smin, _) = smallest_singulars(&m.entries);
        assert!(smin > 1e-3, "sigma_min = {smin}");
    }

    #[test]
    fn det_indicator_examples() {
        let id = DMatrix::<f64>::identity(5, 5);
        let d = det_indicator(&id);
        assert_eq!(d.sign, 1);
        assert!(d.log_abs_det.abs() < 1e-15);
        let mut z = DMatrix::<f64>::identity(3, 3);
        z.column_mut(1).fill(0.0);
        let d = det_indicator(&z);
        assert_eq!(d.sign, 0);
        assert_eq!(d.log_abs_det, f64::NEG_INFINITY);
        let d = det_indicator(&(id * -1.0));
        assert_eq!(d.sign, -1);
    }

    #[test]
    fn smallest_singulars_examples() {
        let theta = 0.3f64;
        let q = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let (a, b) = smallest_singulars(&q);
        assert!((a - 1.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        let (a, b) = smallest_singulars(&r);
        assert!(a < 1e-14 && b > 0.1);
    }

    #[test]
    fn centred_circle_levels_are_double() {
        let opts = SolverOptions::default();
        let c = Collocation::new(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 10, 0.05).unwrap();
        let (a, b) = c.singulars(PI);
        assert!(a < 1e-10 && b < 1e-10, "{a} {b}");
        let l = find_levels(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 2.0, 7.5, &opts).unwrap();
        let ks = l.ks();
        let want = [PI, 4.493409457909064, 5.76345919689455, 2.0 * PI, 6.98793200050052];
        assert_eq!(ks.len(), 10, "{l:?}");
        for (i, w) in want.iter().enumerate() {
            assert!((ks[2 * i] - w).abs() < 1e-6 && (ks[2 * i + 1] - w).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_range_is_argument_error() {
        let opts = SolverOptions::default();
        let r = find_levels(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 3.0, 3.0, &opts);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn inadmissible_flux_is_geometry_error() {
        let r = build_matrix(&ShapeParams::CIRCLE, FluxPosition::new(0.99, 0.0), 3.0, 10, 0.05);
        assert!(matches!(r, Err(Error::Geometry(_))));
        let r = build_matrix(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 3.0, 30, 0.05);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn centred_ground_state_null_space() {
        let opts = SolverOptions::default();
        let m = mode_coefficients(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, PI, &opts).unwrap();
        assert!((m.norm() - 1.0).abs() < 1e-12);
        let rest: f64 = (1..10).map(|j| m.c[j].abs() + m.s[j].abs()).sum();
        assert!(rest < 1e-8, "{m:?}");
        assert!(m.amplitude(0) > 0.999);
    }

    #[test]
    fn off_level_rejected() {
        let opts = SolverOptions::default();
        let r = mode_coefficients(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 3.5, &opts);
        assert!(matches!(r, Err(Error::NotAnEigenvalue { .. })));
    }

    #[test]
    fn displaced_circle_states_have_definite_parity() {
        let opts = SolverOptions::default();
        let flux = FluxPosition::new(0.3, 0.0);
        let l = find_levels(&ShapeParams::CIRCLE, flux, 2.0, 6.0, &opts).unwrap();
        assert!(l.count() >= 4);
        for lev in &l.levels {
            let m = mode_coefficients(&ShapeParams::CIRCLE, flux, lev.k, &opts).unwrap();
            let even: f64 = m.c.iter().map(|x| x * x).sum();
            let odd: f64 = m.s.iter().map(|x| x * x).sum();
            assert!(even.min(odd) < 1e-10, "k={} even={even} odd={odd}", lev.k);
            assert!((m.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_f_examples() {
        let mut c = vec![0.0; 5];
        c[0] = 1.0;
        let m = ModeCoefficients { c, s: vec![0.0; 5] };
        let k = 2.0;
        let v = eval_f(&m, k, FluxPolar { rho: PI / k, mu: 0.7 });
        assert!(v.abs() < 1e-15);
        let v = eval_f(&m, k, FluxPolar { rho: 1e-4, mu: PI });
        assert!(v.abs() < 1e-15);
        for &mu in &[0.1, 1.3, -2.0, 3.0] {
            let p = FluxPolar { rho: 0.4, mu };
            let q = FluxPolar { rho: 0.4, mu: mu + 2.0 * PI };
            assert!((eval_f(&m, k, p) + eval_f(&m, k, q)).abs() < 1e-14);
        }
    }
}
