//! Bessel functions of the first kind for the three order families used by
//! the solvers: half-integer `n + 1/2`, negative half-integer `-(n + 1/2)`,
//! and integer `m`.
//!
//! Half-integer orders go through the spherical Bessel functions
//! `J_{n+1/2}(x) = sqrt(2x/pi) j_n(x)`. The `j_n` are produced by Miller's
//! downward recurrence, normalised against whichever of the closed forms
//! `j_0`, `j_1` is larger in magnitude, so that orders far above the argument
//! keep full relative precision. Negative half-integer orders are the
//! dominant solution `y_n` and use upward recurrence. Integer orders use the
//! power series at small argument and Miller's algorithm with the
//! Neumann sum rule `J_0 + 2 sum J_{2k} = 1` beyond it.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Argument at or below which integer orders are summed as a power series.
///
/// Cancellation in the alternating series grows like `e^x`; at 6 the series and
/// the recurrence branch agree to better than 1e-13 relative.
pub const INTEGER_SERIES_SWITCH: f64 = 6.0;

const RESCALE_ABOVE: f64 = 1e200;
const RESCALE_BY: f64 = 1e-200;

/// Grid step used when bracketing zeros.
const ZERO_BRACKET_STEP: f64 = 0.1;

/// Order of a Bessel function `J_nu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BesselOrder {
    /// `nu = n + 1/2`
    Half(u32),
    /// `nu = -(n + 1/2)`
    NegHalf(u32),
    /// `nu = m`
    Integer(i32),
}

impl BesselOrder {
    pub fn nu(self) -> f64 {
        match self {
            BesselOrder::Half(n) => n as f64 + 0.5,
            BesselOrder::NegHalf(n) => -(n as f64 + 0.5),
            BesselOrder::Integer(m) => m as f64,
        }
    }
}

/// `J_nu(x)` for `x >= 0`.
pub fn bessel_j(order: BesselOrder, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("Bessel argument must be >= 0, got {x}")));
    }
    match order {
        BesselOrder::Half(n) => Ok(half_integer_orders(x, n as usize + 1)[n as usize]),
        BesselOrder::NegHalf(n) => {
            if x == 0.0 {
                return Err(Error::Domain(format!(
                    "J_{{-{}/2}} has a pole at x = 0",
                    2 * n + 1
                )));
            }
            Ok(neg_half_integer_orders(x, n as usize + 1)[n as usize])
        }
        BesselOrder::Integer(m) => {
            let v = integer_orders(x, m.unsigned_abs() as usize + 1)[m.unsigned_abs() as usize];
            if m < 0 && m % 2 != 0 {
                Ok(-v)
            } else {
                Ok(v)
            }
        }
    }
}

/// `[J_{1/2}(x), J_{3/2}(x), ..., J_{count-1/2}(x)]`.
///
/// `x` must be non-negative; this is the hot path of matrix assembly and does
/// not re-validate.
pub fn half_integer_orders(x: f64, count: usize) -> Vec<f64> {
    let mut out = spherical_j(x, count);
    let pre = (2.0 * x / PI).sqrt();
    for v in &mut out {
        *v *= pre;
    }
    out
}

/// `[J_{-1/2}(x), J_{-3/2}(x), ..., J_{-(count-1/2)}(x)]` for `x > 0`.
pub fn neg_half_integer_orders(x: f64, count: usize) -> Vec<f64> {
    let mut y = spherical_y(x, count);
    let pre = (2.0 * x / PI).sqrt();
    for (n, v) in y.iter_mut().enumerate() {
        // J_{-n-1/2} = (-1)^{n+1} sqrt(2x/pi) y_n
        let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
        *v *= sign * pre;
    }
    y
}

/// `[J_0(x), J_1(x), ..., J_{count-1}(x)]` for `x >= 0`.
pub fn integer_orders(x: f64, count: usize) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    if x == 0.0 {
        let mut out = vec![0.0; count];
        out[0] = 1.0;
        return out;
    }
    if x <= INTEGER_SERIES_SWITCH {
        (0..count).map(|m| integer_series(m as u32, x)).collect()
    } else {
        integer_miller(x, count)
    }
}

/// Power series `sum_k (-1)^k (x/2)^{2k+m} / (k! (k+m)!)`.
pub(crate) fn integer_series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // (x/2)^m / m! built incrementally to stay finite for large m.
    let mut term = 1.0;
    for j in 1..=m {
        term *= half / j as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 500 {
            break;
        }
    }
    sum
}

fn integer_miller(x: f64, count: usize) -> Vec<f64> {
    let top = (count as f64).max(x).ceil() as usize + 60;
    let start = top + (top % 2);
    let mut out = vec![0.0; count];
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        if k % 2 == 0 {
            sum += 2.0 * cur;
        }
        if k < count {
            out[k] = cur;
        }
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > RESCALE_ABOVE {
            cur *= RESCALE_BY;
            next *= RESCALE_BY;
            sum *= RESCALE_BY;
            for v in out.iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    let norm = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= norm;
    }
    out
}

fn spherical_j0_j1(x: f64) -> (f64, f64) {
    if x < 0.1 {
        let x2 = x * x;
        let j0 = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)));
        let j1 = x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0 * (1.0 - x2 / 54.0)));
        (j0, j1)
    } else {
        let (s, c) = x.sin_cos();
        (s / x, s / (x * x) - c / x)
    }
}

fn spherical_j(x: f64, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    if count == 0 {
        return out;
    }
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let (j0, j1) = spherical_j0_j1(x);
    if count == 1 {
        out[0] = j0;
        return out;
    }
    let start = (count as f64).max(x).ceil() as usize + 60;
    let mut next = 0.0; // j_{n+1}
    let mut cur = 1e-30; // j_n
    for n in (1..=start).rev() {
        if n < count {
            out[n] = cur;
        }
        let prev = (2 * n + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > RESCALE_ABOVE {
            cur *= RESCALE_BY;
            next *= RESCALE_BY;
            for v in out.iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    out[0] = cur;
    let norm = if j0.abs() >= j1.abs() { j0 / out[0] } else { j1 / out[1] };
    for v in out.iter_mut() {
        *v *= norm;
    }
    out
}

fn spherical_y(x: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let (s, c) = x.sin_cos();
    let y0 = -c / x;
    out.push(y0);
    if count == 1 {
        return out;
    }
    let y1 = -c / (x * x) - s / x;
    out.push(y1);
    for n in 1..count - 1 {
        let v = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        out.push(v);
    }
    out
}

/// The `index`-th positive zero of `J_nu` (`index >= 1`), for `Half` and
/// non-negative `Integer` orders. Brackets sign changes on a 0.1 grid and
/// bisects to 1e-12.
pub fn bessel_zero(order: BesselOrder, index: usize) -> Result<f64> {
    if index < 1 {
        return Err(Error::Argument("zero index must be >= 1".into()));
    }
    match order {
        BesselOrder::NegHalf(_) => {
            return Err(Error::Argument("zeros are provided for J_{n+1/2} and J_m, m >= 0".into()))
        }
        BesselOrder::Integer(m) if m < 0 => {
            return Err(Error::Argument("zeros are provided for J_{n+1/2} and J_m, m >= 0".into()))
        }
        _ => {}
    }
    let f = |x: f64| bessel_j(order, x).expect("positive argument");
    let mut found = 0;
    let mut lo = ZERO_BRACKET_STEP;
    let mut f_lo = f(lo);
    loop {
        let hi = lo + ZERO_BRACKET_STEP;
        let f_hi = f(hi);
        if f_lo == 0.0 {
            found += 1;
            if found == index {
                return Ok(lo);
            }
        } else if f_lo * f_hi < 0.0 {
            found += 1;
            if found == index {
                return Ok(bisect(f, lo, hi, f_lo, 1e-12));
            }
        }
        lo = hi;
        f_lo = f_hi;
    }
}

/// Bisection on a sign-changing bracket until `hi - lo <= tol`.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Zeros of all `J_{n+1/2}`, `n = 0, 1, ...`, below `k_max`, merged and sorted.
pub fn half_integer_zeros_below(k_max: f64) -> Vec<f64> {
    let mut zeros = Vec::new();
    for n in 0u32.. {
        // the first zero of J_{n+1/2} exceeds n + 1/2
        if n as f64 + 0.5 >= k_max {
            break;
        }
        for i in 1.. {
            let z = bessel_zero(BesselOrder::Half(n), i).expect("valid order");
            if z >= k_max {
                break;
            }
            zeros.push(z);
        }
    }
    zeros.sort_by(f64::total_cmp);
    zeros
}
