//! Nodal line of an eigenstate and the force on the semifluxon.
//!
//! Near the flux `f ~ e_0 J_{1/2}(k rho) cos(mu/2 + chi_0)`, so exactly one
//! nodal line leaves the flux, in the direction `mu = pi - 2 chi_0`. The
//! Hellmann-Feynman force `-grad E` is computed by central differences of
//! the level over the flux position and compared with that direction.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{clearance, contains, FluxPolar, FluxPosition, ShapeParams};
use crate::degeneracy::{lowest_levels, KWindow};
use crate::error::{Error, Result};
use crate::spectral::{eval_f, mode_coefficients, ModeCoefficients, SolverOptions};

/// Distance from the flux at which tracing starts.
pub const START_RADIUS: f64 = 1e-3;
pub const MARCH_STEP: f64 = 1e-2;
pub const MAX_STEPS: usize = 10_000;
pub const DEFAULT_FD_STEP: f64 = 1e-3;
/// Allowed relative disagreement between the gradients at `h` and `2h`.
pub const RICHARDSON_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalInfo {
    pub chi0: f64,
    /// Emergence direction in `[0, 2 pi)`.
    pub mu_nodal: f64,
    pub e0: f64,
    /// From the flux to the boundary.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceEstimate {
    pub nodal_direction: [f64; 2],
    /// `-grad_R k^2` at step `fd_step`.
    pub hf_gradient: [f64; 2],
    pub alignment_cos: f64,
    /// `|g(h) - g(2h)| / |g(h)|`.
    pub richardson: f64,
    pub level: usize,
    pub k: f64,
}

/// `(e_0, chi_0)` with `c_0 = e_0 cos chi_0`, `s_0 = -e_0 sin chi_0`.
pub fn chi0_from_coefficients(coeffs: &ModeCoefficients) -> Result<(f64, f64)> {
    let (c0, s0) = (coeffs.c[0], coeffs.s[0]);
    let e0 = c0.hypot(s0);
    if !(e0 > 1e-12 * coeffs.norm().max(f64::MIN_POSITIVE)) {
        return Err(Error::UndefinedDirection(format!("c_0 = {c0:e}, s_0 = {s0:e}")));
    }
    Ok((e0, (-s0).atan2(c0)))
}

/// `pi - 2 chi_0` reduced to `[0, 2 pi)`.
pub fn nodal_angle(chi0: f64) -> f64 {
    let m = (PI - 2.0 * chi0).rem_euclid(2.0 * PI);
    if m >= 2.0 * PI {
        0.0
    } else {
        m
    }
}

/// `f` at a Cartesian point, on the branch of `mu` nearest `mu_ref`.
fn f_near(coeffs: &ModeCoefficients, k: f64, flux: FluxPosition, p: [f64; 2], mu_ref: f64) -> (f64, f64) {
    let (dx, dy) = (p[0] - flux.x, p[1] - flux.y);
    let mu0 = dy.atan2(dx);
    let mu = mu0 + 2.0 * PI * ((mu_ref - mu0) / (2.0 * PI)).round();
    (eval_f(coeffs, k, FluxPolar { rho: dx.hypot(dy), mu }), mu)
}

fn bisect_zero(mut g: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 {
        return Some(lo);
    }
    if g_hi == 0.0 {
        return Some(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Some(mid);
        }
        if gm.signum() == g_lo.signum() {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Marches along `f = 0` from the flux until the boundary is crossed.
pub fn trace_nodal(coeffs: &ModeCoefficients, flux: FluxPosition, k: f64, shape: &ShapeParams) -> Result<NodalInfo> {
    let (e0, chi0) = chi0_from_coefficients(coeffs)?;
    let mu_nodal = nodal_angle(chi0);
    let origin = [flux.x, flux.y];

    // first vertex: the zero on the small circle around the flux
    let on_circle = |mu: f64| [flux.x + START_RADIUS * mu.cos(), flux.y + START_RADIUS * mu.sin()];
    let mu_start = bisect_zero(|mu| f_near(coeffs, k, flux, on_circle(mu), mu).0, mu_nodal - 0.5, mu_nodal + 0.5, 1e-13)
        .ok_or_else(|| Error::Tracing { steps: 0, partial: vec![origin] })?;
    let mut polyline = vec![origin, on_circle(mu_start)];
    let mut p = on_circle(mu_start);
    let mut dir = [mu_start.cos(), mu_start.sin()];
    let mut mu_ref = mu_start;

    // last vertex: where the segment from `p` towards `q` leaves the billiard
    let exit = |p: [f64; 2], q: [f64; 2]| {
        let edge = |s: f64| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if contains(shape, edge(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edge(lo)
    };

    for step in 0..MAX_STEPS {
        let q = [p[0] + MARCH_STEP * dir[0], p[1] + MARCH_STEP * dir[1]];
        if !contains(shape, q) {
            polyline.push(exit(p, q));
            return Ok(NodalInfo { chi0, mu_nodal, e0, polyline });
        }
        let normal = [-dir[1], dir[0]];
        let (_, mu_q) = f_near(coeffs, k, flux, q, mu_ref);
        let along = |t: f64| [q[0] + t * normal[0], q[1] + t * normal[1]];
        let mut next = None;
        for width in [0.5, 1.0, 2.0, 4.0] {
            let w = width * MARCH_STEP;
            if let Some(t) = bisect_zero(|t| f_near(coeffs, k, flux, along(t), mu_q).0, -w, w, 1e-13) {
                next = Some(along(t));
                break;
            }
        }
        let p_next = match next {
            Some(p_next) if contains(shape, p_next) => p_next,
            _ if clearance(shape, q) < 4.0 * MARCH_STEP => {
                let far = [p[0] + 8.0 * MARCH_STEP * dir[0], p[1] + 8.0 * MARCH_STEP * dir[1]];
                polyline.push(exit(p, far));
                return Ok(NodalInfo { chi0, mu_nodal, e0, polyline });
            }
            _ => return Err(Error::Tracing { steps: step, partial: polyline }),
        };
        let d = [p_next[0] - p[0], p_next[1] - p[1]];
        let len = d[0].hypot(d[1]);
        dir = [d[0] / len, d[1] / len];
        mu_ref = f_near(coeffs, k, flux, p_next, mu_q).1;
        p = p_next;
        polyline.push(p);
    }
    Err(Error::Tracing { steps: MAX_STEPS, partial: polyline })
}

/// Unit vector from the first to the last polyline vertex.
pub fn chord_direction(info: &NodalInfo) -> [f64; 2] {
    let (a, b) = (info.polyline[0], info.polyline[info.polyline.len() - 1]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = d[0].hypot(d[1]);
    [d[0] / len, d[1] / len]
}

fn level_k(shape: &ShapeParams, flux: FluxPosition, level: usize, window: KWindow, opts: &SolverOptions) -> Result<f64> {
    Ok(lowest_levels(shape, flux, level, window, opts)?[level - 1])
}

fn gradient(shape: &ShapeParams, flux: FluxPosition, level: usize, h: f64, window: KWindow, opts: &SolverOptions) -> Result<[f64; 2]> {
    let stencil = [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)];
    let energies: Vec<Result<f64>> = stencil
        .par_iter()
        .map(|&(dx, dy)| level_k(shape, FluxPosition::new(flux.x + dx, flux.y + dy), level, window, opts).map(|k| k * k))
        .collect();
    let e = energies.into_iter().collect::<Result<Vec<_>>>()?;
    Ok([-(e[0] - e[1]) / (2.0 * h), -(e[2] - e[3]) / (2.0 * h)])
}

/// Hellmann-Feynman force on the flux for level `level` (from 1), checked
/// against the nodal emergence direction.
pub fn force(shape: &ShapeParams, flux: FluxPosition, level: usize, fd_step: f64, opts: &SolverOptions) -> Result<ForceEstimate> {
    if level < 1 {
        return Err(Error::Argument("levels are numbered from 1".into()));
    }
    if !(fd_step > 0.0) {
        return Err(Error::Argument(format!("fd_step must be positive, got {fd_step}")));
    }
    let window = KWindow::for_levels(shape, level + 1)?;
    let ks = lowest_levels(shape, flux, level + 1, window, opts)?;
    let k = ks[level - 1];
    let below = if level >= 2 { k - ks[level - 2] } else { f64::INFINITY };
    let above = ks[level] - k;
    let separation = below.min(above);
    if separation < 10.0 * fd_step {
        return Err(Error::Stencil(format!(
            "level {level} at k = {k:.6} is within {separation:.2e} of a neighbour, need {:.2e}",
            10.0 * fd_step
        )));
    }
    let (g1, g2) = rayon::join(
        || gradient(shape, flux, level, fd_step, window, opts),
        || gradient(shape, flux, level, 2.0 * fd_step, window, opts),
    );
    let (g1, g2) = (g1?, g2?);
    let norm = g1[0].hypot(g1[1]);
    let richardson = (g1[0] - g2[0]).hypot(g1[1] - g2[1]) / norm;
    let coeffs = mode_coefficients(shape, flux, k, opts)?;
    let (_, chi0) = chi0_from_coefficients(&coeffs)?;
    let mu = nodal_angle(chi0);
    let nodal_direction = [mu.cos(), mu.sin()];
    let alignment_cos = if norm > 0.0 {
        ((g1[0] * nodal_direction[0] + g1[1] * nodal_direction[1]) / norm).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(ForceEstimate { nodal_direction, hf_gradient: g1, alignment_cos, richardson, level, k })
}
