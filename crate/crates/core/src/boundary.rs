//! Geometry of the conformal-cubic boundary family
//! `z(phi) = e^{i phi} + a2 e^{2 i phi} + a3 e^{3 i phi + i sigma}`.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples used for geometric checks (simplicity, clearance) and as the
/// starting resolution of the area/perimeter quadrature.
pub const GEOMETRY_SAMPLES: usize = 720;

/// Default clearance between an admissible flux position and the boundary.
pub const DEFAULT_MARGIN: f64 = 0.05;

type C64 = Complex<f64>;

/// Coefficients of the cubic conformal map of the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub a2: f64,
    pub a3: f64,
    /// Phase of the cubic term, radians.
    pub sigma: f64,
}

impl ShapeParams {
    pub const CIRCLE: ShapeParams = ShapeParams { a2: 0.0, a3: 0.0, sigma: 0.0 };

    /// Builds a shape and checks that its boundary is a simple closed curve.
    pub fn new(a2: f64, a3: f64, sigma: f64) -> Result<Self> {
        let s = ShapeParams { a2, a3, sigma };
        s.validate()?;
        Ok(s)
    }

    /// The nominal asymmetric billiard `a2 = 0.015, a3 = 0.05, sigma = pi/3`.
    pub fn reference() -> Self {
        ShapeParams { a2: 0.015, a3: 0.05, sigma: PI / 3.0 }
    }

    /// `a2 = 0.15, a3 = 0.08, sigma = pi/3`, area 3.343283. Six degeneracies
    /// among its lowest four levels.
    pub fn table_billiard() -> Self {
        ShapeParams { a2: 0.15, a3: 0.08, sigma: PI / 3.0 }
    }

    /// Strongly deformed `a2 = a3 = 0.2, sigma = pi/3` shape.
    pub fn africa() -> Self {
        ShapeParams { a2: 0.2, a3: 0.2, sigma: PI / 3.0 }
    }

    /// Looks up a named preset: `circle`, `reference`, `table`, `africa`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "circle" => Some(ShapeParams::CIRCLE),
            "reference" => Some(ShapeParams::reference()),
            "table" => Some(ShapeParams::table_billiard()),
            "africa" => Some(ShapeParams::africa()),
            _ => None,
        }
    }

    pub fn is_circle(&self) -> bool {
        self.a2 == 0.0 && self.a3 == 0.0
    }

    fn map(&self, w: C64) -> C64 {
        let c3 = C64::from_polar(self.a3, self.sigma);
        w + w * w * self.a2 + w * w * w * c3
    }

    fn map_derivative(&self, w: C64) -> C64 {
        let c3 = C64::from_polar(self.a3, self.sigma);
        C64::new(1.0, 0.0) + w * (2.0 * self.a2) + w * w * c3 * 3.0
    }

    pub fn point(&self, phi: f64) -> [f64; 2] {
        let z = self.map(C64::from_polar(1.0, phi));
        [z.re, z.im]
    }

    /// `dz/dphi` on the boundary.
    pub fn tangent(&self, phi: f64) -> [f64; 2] {
        let w = C64::from_polar(1.0, phi);
        let d = self.map_derivative(w) * C64::new(0.0, 1.0) * w;
        [d.re, d.im]
    }

    /// Rejects self-intersecting boundaries (sampled polygon of 720 vertices).
    pub fn validate(&self) -> Result<()> {
        if !(self.a2.is_finite() && self.a3.is_finite() && self.sigma.is_finite()) {
            return Err(Error::InvalidShape("non-finite shape coefficient".into()));
        }
        let poly = self.polygon(GEOMETRY_SAMPLES);
        if let Some((i, j)) = first_self_intersection(&poly) {
            return Err(Error::InvalidShape(format!(
                "boundary self-intersects (segments {i} and {j}) for a2={}, a3={}, sigma={}",
                self.a2, self.a3, self.sigma
            )));
        }
        Ok(())
    }

    pub fn polygon(&self, samples: usize) -> Vec<[f64; 2]> {
        (0..samples)
            .map(|i| self.point(2.0 * PI * i as f64 / samples as f64))
            .collect()
    }
}

/// Semifluxon position `R = (X, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPosition {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
}

impl FluxPosition {
    pub const ORIGIN: FluxPosition = FluxPosition { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        FluxPosition { x, y }
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Flux-centred polar coordinates of a point: `rho e^{i mu} = (x - X) + i (y - Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxPolar {
    pub rho: f64,
    /// Principal value in `(-pi, pi]`.
    pub mu: f64,
}

impl FluxPolar {
    pub fn of_point(p: [f64; 2], flux: FluxPosition) -> Self {
        let dx = p[0] - flux.x;
        let dy = p[1] - flux.y;
        let mut mu = dy.atan2(dx);
        if mu <= -PI {
            mu = PI;
        }
        FluxPolar { rho: dx.hypot(dy), mu }
    }

    pub fn to_point(self, flux: FluxPosition) -> [f64; 2] {
        let (s, c) = self.mu.sin_cos();
        [flux.x + self.rho * c, flux.y + self.rho * s]
    }
}

pub fn boundary_point(shape: &ShapeParams, phi: f64) -> [f64; 2] {
    shape.point(phi)
}

pub fn flux_polar(shape: &ShapeParams, phi: f64, flux: FluxPosition) -> Result<FluxPolar> {
    let p = shape.point(phi);
    let polar = FluxPolar::of_point(p, flux);
    if polar.rho <= 1e-14 {
        return Err(Error::Geometry(format!(
            "flux ({}, {}) coincides with the boundary point at phi = {phi}",
            flux.x, flux.y
        )));
    }
    Ok(polar)
}

/// `phi_m = m pi / N` for `m = 1..=2N`.
pub fn collocation_angles(n: usize) -> Vec<f64> {
    (1..=2 * n).map(|m| m as f64 * PI / n as f64).collect()
}

/// Area and perimeter.
///
/// Green's theorem and the arclength integral are evaluated with the periodic
/// trapezoid rule on the exact parametrisation, starting from 720 samples and
/// doubling until both change by less than 1e-6.
pub fn area_perimeter(shape: &ShapeParams) -> Result<(f64, f64)> {
    shape.validate()?;
    let quad = |n: usize| {
        let h = 2.0 * PI / n as f64;
        let mut area = 0.0;
        let mut len = 0.0;
        for i in 0..n {
            let phi = i as f64 * h;
            let [x, y] = shape.point(phi);
            let [dx, dy] = shape.tangent(phi);
            area += 0.5 * (x * dy - y * dx);
            len += dx.hypot(dy);
        }
        (area * h, len * h)
    };
    let mut n = GEOMETRY_SAMPLES;
    let mut prev = quad(n);
    loop {
        n *= 2;
        let next = quad(n);
        if (next.0 - prev.0).abs() < 1e-6 && (next.1 - prev.1).abs() < 1e-6 {
            return Ok(next);
        }
        if n > 1 << 20 {
            return Err(Error::NonConvergence("area/perimeter quadrature".into()));
        }
        prev = next;
    }
}

/// Whether `p` lies strictly inside the boundary.
///
/// The winding number of the boundary about `p` equals the number of
/// preimages of `p` in the open unit disk (argument principle applied to
/// `z(w) - p`), so it is evaluated exactly by counting roots of the cubic
/// rather than from a sampled polygon.
pub fn contains(shape: &ShapeParams, p: [f64; 2]) -> bool {
    winding_number(shape, p) == 1
}

pub fn winding_number(shape: &ShapeParams, p: [f64; 2]) -> usize {
    let c3 = C64::from_polar(shape.a3, shape.sigma);
    let target = C64::new(p[0], p[1]);
    // ascending coefficients of z(w) - p
    let mut coeffs = vec![-target, C64::new(1.0, 0.0), C64::new(shape.a2, 0.0), c3];
    while coeffs.len() > 2 && coeffs.last().is_some_and(|c| c.norm() == 0.0) {
        coeffs.pop();
    }
    polynomial_roots(&coeffs)
        .into_iter()
        .filter(|w| w.norm() < 1.0)
        .count()
}

/// Roots of `sum_j coeffs[j] w^j` (degree 1..=3) by Durand-Kerner iteration.
fn polynomial_roots(coeffs: &[C64]) -> Vec<C64> {
    let degree = coeffs.len() - 1;
    let lead = coeffs[degree];
    let monic: Vec<C64> = coeffs.iter().map(|c| c / lead).collect();
    if degree == 1 {
        return vec![-monic[0]];
    }
    if degree == 2 {
        let b = monic[1];
        let c = monic[0];
        let disc = (b * b - c * 4.0).sqrt();
        // avoid cancellation
        let q = if (b.conj() * disc).re >= 0.0 { -(b + disc) * 0.5 } else { -(b - disc) * 0.5 };
        let r1 = q;
        let r2 = if q.norm() > 0.0 { c / q } else { C64::new(0.0, 0.0) };
        return vec![r1, r2];
    }
    let eval = |w: C64| monic.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * w + c);
    // Cauchy bound for the initial circle
    let bound = 1.0 + monic[..degree].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let seed = C64::from_polar(1.0, 0.4);
    let mut roots: Vec<C64> = (0..degree)
        .map(|j| seed.powu(j as u32 + 1) * (0.5 * bound))
        .collect();
    for _ in 0..1000 {
        let mut delta = 0.0f64;
        for i in 0..degree {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm() / roots[i].norm().max(1.0));
        }
        if delta < 1e-15 {
            break;
        }
    }
    // polish
    let deriv: Vec<C64> = (1..=degree).map(|j| monic[j] * j as f64).collect();
    let eval_d = |w: C64| deriv.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * w + c);
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = eval_d(*r);
            if d.norm() == 0.0 {
                break;
            }
            *r -= eval(*r) / d;
        }
    }
    roots
}

/// Distance from `p` to the boundary curve.
pub fn clearance(shape: &ShapeParams, p: [f64; 2]) -> f64 {
    let n = GEOMETRY_SAMPLES;
    let h = 2.0 * PI / n as f64;
    let dist = |phi: f64| {
        let q = shape.point(phi);
        (q[0] - p[0]).hypot(q[1] - p[1])
    };
    let best = (0..n)
        .map(|i| i as f64 * h)
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .expect("nonempty");
    // golden-section refinement in the bracketing sample interval
    let (mut lo, mut hi) = (best - h, best + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (dist(c), dist(d));
    for _ in 0..60 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = dist(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = dist(d);
        }
    }
    fc.min(fd).min(dist(best))
}

/// Checks that `flux` is inside with at least `margin` clearance.
pub fn check_admissible(shape: &ShapeParams, flux: FluxPosition, margin: f64) -> Result<()> {
    let p = [flux.x, flux.y];
    if !(flux.x.is_finite() && flux.y.is_finite()) {
        return Err(Error::Geometry("non-finite flux position".into()));
    }
    if !contains(shape, p) {
        return Err(Error::Geometry(format!("flux ({}, {}) is outside the boundary", flux.x, flux.y)));
    }
    let c = clearance(shape, p);
    if c < margin {
        return Err(Error::Geometry(format!(
            "flux ({}, {}) is {c:.4} from the boundary, margin is {margin}",
            flux.x, flux.y
        )));
    }
    Ok(())
}

fn first_self_intersection(poly: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = poly.len();
    let seg = |i: usize| (poly[i], poly[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = seg(i);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = seg(j);
            if segments_cross(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// Parses an angle such as `1.047`, `pi/3`, `2pi/3`, `-pi/6` or `2*pi`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let t = text.trim().to_ascii_lowercase().replace(' ', "");
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let bad = || Error::Argument(format!("cannot parse angle '{text}'"));
    let idx = t.find("pi").ok_or_else(bad)?;
    let head = t[..idx].trim_end_matches('*');
    let coef = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let tail = &t[idx + 2..];
    let den = if tail.is_empty() {
        1.0
    } else {
        tail.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?
    };
    Ok(coef * PI / den)
}
