//! Unit-circle billiard with the semifluxon displaced to `(R, 0)`.
//!
//! Graf's addition theorem re-expands each flux-centred basis function about
//! the centre; folding negative orders gives, on `r = 1`,
//!
//! `M(s, n) = J_{s+1/2}(k) J_{s-n}(kR) -/+ (-1)^{s+n} J_{-s-1/2}(k) J_{s+n+1}(kR)`
//!
//! with `-` for states even in `mu` and `+` for odd ones. Levels are the zeros
//! of the truncated determinant. This is independent of the collocation
//! solver and serves as its oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{scan_roots, DetIndicator, Level, LevelList, ScanOptions, SpectralDeterminant};
use crate::spectral::{det_indicator, smallest_singulars};
use crate::specfun::{half_integer_orders, half_integer_zeros_below, integer_orders, neg_half_integer_orders};

pub const DEFAULT_TRUNCATION: usize = 12;
/// Beyond this the negative-order Bessel values overflow the equilibration.
pub const MAX_TRUNCATION: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            other => Err(Error::Argument(format!("parity must be 'even' or 'odd', got '{other}'"))),
        }
    }
}

/// Levels of one parity class at one displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleSpectrumSlice {
    #[serde(rename = "R")]
    pub r: f64,
    pub parity: Parity,
    pub ks: LevelList,
}

/// The unscaled `S x S` matrix.
pub fn circle_matrix(parity: Parity, k: f64, r: f64, s: usize) -> Result<DMatrix<f64>> {
    check(k, r, s)?;
    Ok(CircleDeterminant { parity, r, s }.raw(k))
}

fn check(k: f64, r: f64, s: usize) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Argument(format!("displacement R must lie in [0, 1), got {r}")));
    }
    if !(k > 0.0) {
        return Err(Error::Argument(format!("wavenumber must be positive, got {k}")));
    }
    if !(1..=MAX_TRUNCATION).contains(&s) {
        return Err(Error::Argument(format!("truncation S must lie in 1..={MAX_TRUNCATION}, got {s}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct CircleDeterminant {
    parity: Parity,
    r: f64,
    s: usize,
}

impl CircleDeterminant {
    fn raw(&self, k: f64) -> DMatrix<f64> {
        self.build(k).0
    }

    /// Raw matrix and its equilibrated copy.
    ///
    /// Scales come from an envelope matrix in which `J_{s+1/2}(k)` is replaced
    /// by `hypot(J_{s+1/2}, J_{s+3/2})(k)` and every term by its magnitude:
    /// rows and then columns are divided by their envelope maxima. Because
    /// the envelope never vanishes, a zero shared by a whole row or column
    /// (centred flux) survives the scaling.
    fn build(&self, k: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let s_max = self.s;
        let jp = half_integer_orders(k, s_max + 1);
        let jm = neg_half_integer_orders(k, s_max);
        let ji = integer_orders(k * self.r, 2 * s_max + 1);
        let sign = match self.parity {
            Parity::Even => -1.0,
            Parity::Odd => 1.0,
        };
        let int_j = |m: i64| -> f64 {
            let v = ji[m.unsigned_abs() as usize];
            if m < 0 && m % 2 != 0 {
                -v
            } else {
                v
            }
        };
        let mut raw = DMatrix::<f64>::zeros(s_max, s_max);
        let mut env = DMatrix::<f64>::zeros(s_max, s_max);
        for s in 0..s_max {
            let jp_env = jp[s].hypot(jp[s + 1]);
            for n in 0..s_max {
                let parity_sign = if (s + n) % 2 == 0 { 1.0 } else { -1.0 };
                let first = int_j(s as i64 - n as i64);
                let second = jm[s] * int_j((s + n + 1) as i64);
                raw[(s, n)] = jp[s] * first + sign * parity_sign * second;
                env[(s, n)] = jp_env * first.abs() + second.abs();
            }
        }
        let mut scaled = raw.clone();
        for s in 0..s_max {
            let r = env.row(s).amax();
            if r > 0.0 {
                env.row_mut(s).scale_mut(1.0 / r);
                scaled.row_mut(s).scale_mut(1.0 / r);
            }
        }
        for n in 0..s_max {
            let c = env.column(n).amax();
            if c > 0.0 {
                scaled.column_mut(n).scale_mut(1.0 / c);
            }
        }
        (raw, scaled)
    }
}

impl SpectralDeterminant for CircleDeterminant {
    fn det(&self, k: f64) -> DetIndicator {
        det_indicator(&self.build(k).1)
    }

    fn singulars(&self, k: f64) -> (f64, f64) {
        smallest_singulars(&self.build(k).1)
    }
}

/// Levels of one parity in `[k_lo, k_hi]`.
pub fn circle_levels(parity: Parity, r: f64, k_lo: f64, k_hi: f64, s: usize, opts: &ScanOptions) -> Result<LevelList> {
    check(k_lo.max(f64::MIN_POSITIVE), r, s)?;
    scan_roots(&CircleDeterminant { parity, r, s }, k_lo, k_hi, opts)
}

/// Both parity slices at one displacement.
pub fn circle_spectrum(r: f64, k_lo: f64, k_hi: f64, s: usize, opts: &ScanOptions) -> Result<[CircleSpectrumSlice; 2]> {
    let even = circle_levels(Parity::Even, r, k_lo, k_hi, s, opts)?;
    let odd = circle_levels(Parity::Odd, r, k_lo, k_hi, s, opts)?;
    Ok([
        CircleSpectrumSlice { r, parity: Parity::Even, ks: even },
        CircleSpectrumSlice { r, parity: Parity::Odd, ks: odd },
    ])
}

/// The first `count` distinct levels with the flux at the centre: the merged
/// zeros of `J_{n+1/2}`, each doubly degenerate (one even, one odd state).
pub fn circle_center_levels(count: usize) -> Result<LevelList> {
    if count < 1 {
        return Err(Error::Argument("count must be >= 1".into()));
    }
    let mut k_max = 8.0;
    loop {
        let zeros = half_integer_zeros_below(k_max);
        if zeros.len() >= count {
            return Ok(LevelList {
                levels: zeros[..count]
                    .iter()
                    .map(|&k| Level { k, multiplicity: 2, sigma_min: 0.0 })
                    .collect(),
            });
        }
        k_max *= 2.0;
    }
}
