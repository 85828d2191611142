//! Root finding for real spectral determinants `D(k)`.
//!
//! Simple roots show up as sign changes of `D` on a k-grid and are bisected.
//! Pairs of roots closer than one grid cell leave no sign change; they are
//! caught at local minima of the smallest singular value, where `D` is
//! extremised inside the cell: a sign flip at the extremum splits the pair,
//! otherwise a singular value below threshold marks a touching root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign and magnitude of a determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetIndicator {
    /// `+1`, `-1`, or `0` when exactly singular.
    pub sign: i8,
    /// `ln |det|`; `-inf` when `sign == 0`.
    pub log_abs_det: f64,
}

/// Everything the scanner needs to know about `D` at one wavenumber.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub k: f64,
    pub det: DetIndicator,
    pub sigma_min: f64,
    pub sigma_next: f64,
}

/// A real matrix-valued function of `k` whose singular points are levels.
pub trait SpectralDeterminant: Sync {
    fn det(&self, k: f64) -> DetIndicator;
    /// The two smallest singular values.
    fn singulars(&self, k: f64) -> (f64, f64);

    fn sample(&self, k: f64) -> Sample {
        let (sigma_min, sigma_next) = self.singulars(k);
        Sample { k, det: self.det(k), sigma_min, sigma_next }
    }
}

/// One (possibly multiple) root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub k: f64,
    pub multiplicity: u8,
    /// Smallest singular value at `k`.
    pub sigma_min: f64,
}

/// Ascending levels. Degenerate levels carry `multiplicity > 1` and are
/// repeated by [`LevelList::ks`], so level `n` (1-based) is `ks()[n - 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelList {
    pub levels: Vec<Level>,
}

impl LevelList {
    pub fn ks(&self) -> Vec<f64> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.k, l.multiplicity as usize))
            .collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.ks().into_iter().map(|k| k * k).collect()
    }

    /// Number of levels counted with multiplicity.
    pub fn count(&self) -> usize {
        self.levels.iter().map(|l| l.multiplicity as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `n`, 1-based, counted with multiplicity.
    pub fn level(&self, n: usize) -> Option<f64> {
        if n == 0 {
            return None;
        }
        self.ks().get(n - 1).copied()
    }

    /// Expanded `(k, sigma_min)` rows in level order.
    pub fn rows(&self) -> Vec<(f64, f64)> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::repeat_n((l.k, l.sigma_min), l.multiplicity as usize))
            .collect()
    }
}

/// Tolerances for [`scan_roots`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub grid_step: f64,
    /// Bracket width at which bisection stops.
    pub bisect_tol: f64,
    /// `sigma_min` below which a minimum without sign change is a root.
    pub sigma_root: f64,
    /// `sigma_next` below which such a root is double.
    pub sigma_double: f64,
    /// A touching root must also dip below this fraction of the smaller
    /// `sigma_min` (for doubles, `sigma_next`) at the neighbouring grid
    /// samples, so an ill-conditioned but smooth background is not a root.
    pub sigma_contrast: f64,
    /// Roots closer than this are merged into one multiple root.
    pub merge_tol: f64,
    /// How many times a crowded window may be rescanned at half step.
    pub max_refinements: u32,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            grid_step: 0.01,
            bisect_tol: 1e-8,
            sigma_root: 1e-6,
            sigma_double: 1e-4,
            sigma_contrast: 1e-2,
            merge_tol: 1e-7,
            max_refinements: 3,
        }
    }
}

impl ScanOptions {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.grid_step,
            self.bisect_tol,
            self.sigma_root,
            self.sigma_double,
            self.sigma_contrast,
            self.merge_tol,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Argument("scan tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// All roots of `D` in `[lo, hi]`.
pub fn scan_roots<D: SpectralDeterminant + ?Sized>(
    det: &D,
    lo: f64,
    hi: f64,
    opts: &ScanOptions,
) -> Result<LevelList> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Argument(format!("empty or invalid k range [{lo}, {hi}]")));
    }
    opts.validate()?;
    let mut roots = scan_window(det, lo, hi, opts.grid_step, opts);
    refine_crowded(det, &mut roots, opts.grid_step, opts, opts.max_refinements);
    Ok(LevelList { levels: merge(roots, opts.merge_tol) })
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let h = (hi - lo) / cells as f64;
    (0..=cells).map(|i| if i == cells { hi } else { lo + i as f64 * h }).collect()
}

fn scan_window<D: SpectralDeterminant + ?Sized>(
    det: &D,
    lo: f64,
    hi: f64,
    step: f64,
    opts: &ScanOptions,
) -> Vec<Level> {
    let ks = grid(lo, hi, step);
    let samples: Vec<Sample> = ks.iter().map(|&k| det.sample(k)).collect();
    let mut roots = Vec::new();

    for (i, s) in samples.iter().enumerate() {
        if s.det.sign == 0 {
            roots.push(Level { k: s.k, multiplicity: 1, sigma_min: s.sigma_min });
        }
        if let Some(t) = samples.get(i + 1) {
            if s.det.sign * t.det.sign < 0 {
                roots.push(bisect_root(det, s.k, t.k, s.det.sign, opts));
            }
        }
    }

    for i in 1..samples.len().saturating_sub(1) {
        let (a, b, c) = (&samples[i - 1], &samples[i], &samples[i + 1]);
        let local_min = b.sigma_min <= a.sigma_min && b.sigma_min < c.sigma_min;
        let same_sign = a.det.sign == b.det.sign && b.det.sign == c.det.sign && b.det.sign != 0;
        if local_min && same_sign {
            roots.extend(hidden_roots(det, a, c, b.det.sign, opts));
        }
    }
    roots.sort_by(|x, y| x.k.total_cmp(&y.k));
    roots
}

fn bisect_root<D: SpectralDeterminant + ?Sized>(
    det: &D,
    mut lo: f64,
    mut hi: f64,
    sign_lo: i8,
    opts: &ScanOptions,
) -> Level {
    while hi - lo > opts.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = det.det(mid).sign;
        if s == 0 {
            lo = mid;
            hi = mid;
            break;
        }
        if s == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    Level { k, multiplicity: 1, sigma_min: det.singulars(k).0 }
}

/// Roots inside `[a, b]` where the grid saw no sign change.
fn hidden_roots<D: SpectralDeterminant + ?Sized>(
    det: &D,
    left: &Sample,
    right: &Sample,
    outer_sign: i8,
    opts: &ScanOptions,
) -> Vec<Level> {
    let (a, b) = (left.k, right.k);
    // Extremise outer_sign * D; reference magnitude keeps exp() finite.
    let reference = det.det(0.5 * (a + b)).log_abs_det;
    let mut flip: Option<f64> = None;
    golden_min(
        |k| {
            let d = det.det(k);
            if d.sign != outer_sign {
                flip = Some(k);
                return (0.0, true);
            }
            ((d.log_abs_det - reference).clamp(-700.0, 700.0).exp(), false)
        },
        a,
        b,
        opts.bisect_tol,
    );
    if let Some(inner) = flip {
        if det.det(inner).sign == 0 {
            return vec![Level { k: inner, multiplicity: 1, sigma_min: det.singulars(inner).0 }];
        }
        return vec![
            bisect_root(det, a, inner, outer_sign, opts),
            bisect_root(det, inner, b, -outer_sign, opts),
        ];
    }
    let (k, sigma_min) = golden_min(|k| (det.singulars(k).0, false), a, b, opts.bisect_tol * 1e-2);
    let background = left.sigma_min.min(right.sigma_min);
    if sigma_min < opts.sigma_root && sigma_min < opts.sigma_contrast * background {
        let sigma_next = det.singulars(k).1;
        let next_background = left.sigma_next.min(right.sigma_next);
        let double = sigma_next < opts.sigma_double && sigma_next < opts.sigma_contrast * next_background;
        let multiplicity = if double { 2 } else { 1 };
        return vec![Level { k, multiplicity, sigma_min }];
    }
    Vec::new()
}

/// Golden-section minimisation. `f` returns the value and whether to stop
/// immediately.
pub(crate) fn golden_min(
    mut f: impl FnMut(f64) -> (f64, bool),
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, stop) = f(c);
    if stop {
        return (c, fc);
    }
    let (mut fd, stop) = f(d);
    if stop {
        return (d, fd);
    }
    while hi - lo > tol {
        let (x, stop) = if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            let r = f(c);
            fc = r.0;
            (c, r.1)
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            let r = f(d);
            fd = r.0;
            (d, r.1)
        };
        if stop {
            return (x, if x == c { fc } else { fd });
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Rescans, at half the step, windows where roots sit closer than three grid
/// cells, keeping whichever scan finds more roots.
fn refine_crowded<D: SpectralDeterminant + ?Sized>(
    det: &D,
    roots: &mut Vec<Level>,
    step: f64,
    opts: &ScanOptions,
    depth: u32,
) {
    if depth == 0 || roots.len() < 2 {
        return;
    }
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i + 1 < roots.len() {
        if roots[i + 1].k - roots[i].k < 3.0 * step && roots[i + 1].k - roots[i].k > opts.merge_tol {
            let start = i;
            while i + 1 < roots.len() && roots[i + 1].k - roots[i].k < 3.0 * step {
                i += 1;
            }
            clusters.push((start, i));
        }
        i += 1;
    }
    if clusters.is_empty() {
        return;
    }
    let half = 0.5 * step;
    let mut rebuilt = Vec::with_capacity(roots.len());
    let mut cursor = 0;
    for (start, end) in clusters {
        rebuilt.extend_from_slice(&roots[cursor..start]);
        let lo = roots[start].k - step;
        let hi = roots[end].k + step;
        let mut local = scan_window(det, lo, hi, half, opts);
        local.retain(|l| l.k >= lo && l.k <= hi);
        refine_crowded(det, &mut local, half, opts, depth - 1);
        let old = &roots[start..=end];
        let count = |ls: &[Level]| ls.iter().map(|l| l.multiplicity as usize).sum::<usize>();
        if count(&local) >= count(old) {
            rebuilt.extend(local);
        } else {
            rebuilt.extend_from_slice(old);
        }
        cursor = end + 1;
    }
    rebuilt.extend_from_slice(&roots[cursor..]);
    rebuilt.sort_by(|x, y| x.k.total_cmp(&y.k));
    *roots = rebuilt;
}

fn merge(mut roots: Vec<Level>, tol: f64) -> Vec<Level> {
    roots.sort_by(|x, y| x.k.total_cmp(&y.k));
    let mut out: Vec<Level> = Vec::with_capacity(roots.len());
    for r in roots {
        match out.last_mut() {
            Some(last) if r.k - last.k < tol => {
                let total = (last.multiplicity + r.multiplicity) as f64;
                last.k = (last.k * last.multiplicity as f64 + r.k * r.multiplicity as f64) / total;
                last.multiplicity += r.multiplicity;
                last.sigma_min = last.sigma_min.min(r.sigma_min);
            }
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// diag(k - a, k - b): determinant (k-a)(k-b), singular values |k-a|, |k-b|.
    struct Diag2 {
        a: f64,
        b: f64,
    }

    impl SpectralDeterminant for Diag2 {
        fn det(&self, k: f64) -> DetIndicator {
            let v = (k - self.a) * (k - self.b);
            DetIndicator {
                sign: if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 },
                log_abs_det: v.abs().ln(),
            }
        }
        fn singulars(&self, k: f64) -> (f64, f64) {
            let (x, y) = ((k - self.a).abs(), (k - self.b).abs());
            (x.min(y), x.max(y))
        }
    }

    #[test]
    fn separated_roots_by_sign_change() {
        let d = Diag2 { a: 1.2345, b: 2.7 };
        let l = scan_roots(&d, 1.0, 3.0, &ScanOptions::default()).unwrap();
        let ks = l.ks();
        assert_eq!(ks.len(), 2);
        assert!((ks[0] - 1.2345).abs() < 1e-8 && (ks[1] - 2.7).abs() < 1e-8);
    }

    #[test]
    fn close_pair_inside_one_cell() {
        let d = Diag2 { a: 1.503, b: 1.5042 };
        let l = scan_roots(&d, 1.0, 2.0, &ScanOptions::default()).unwrap();
        let ks = l.ks();
        assert_eq!(ks.len(), 2, "{l:?}");
        assert!((ks[0] - 1.503).abs() < 1e-8 && (ks[1] - 1.5042).abs() < 1e-8);
    }

    #[test]
    fn exact_double_root() {
        let d = Diag2 { a: 1.777, b: 1.777 };
        let l = scan_roots(&d, 1.0, 2.0, &ScanOptions::default()).unwrap();
        assert_eq!(l.levels.len(), 1);
        assert_eq!(l.levels[0].multiplicity, 2);
        assert!((l.levels[0].k - 1.777).abs() < 1e-8);
        assert_eq!(l.count(), 2);
    }

    #[test]
    fn empty_range_rejected() {
        let d = Diag2 { a: 1.0, b: 2.0 };
        assert!(matches!(scan_roots(&d, 2.0, 2.0, &ScanOptions::default()), Err(Error::Argument(_))));
        assert!(scan_roots(&d, 3.0, 2.0, &ScanOptions::default()).is_err());
    }

    #[test]
    fn level_indexing_counts_multiplicity() {
        let l = LevelList {
            levels: vec![
                Level { k: 1.0, multiplicity: 2, sigma_min: 0.0 },
                Level { k: 2.0, multiplicity: 1, sigma_min: 0.0 },
            ],
        };
        assert_eq!(l.ks(), vec![1.0, 1.0, 2.0]);
        assert_eq!(l.level(2), Some(1.0));
        assert_eq!(l.level(3), Some(2.0));
        assert_eq!(l.level(0), None);
        assert_eq!(l.energies(), vec![1.0, 1.0, 4.0]);
    }
}
