//! Diabolical points in the flux-position plane.
//!
//! Levels are indexed from 1 with multiplicity. A degeneracy of levels
//! `(n, n+1)` is located in three stages: a coarse grid of level gaps,
//! clustering of the cells below a threshold, and simplex minimisation of the
//! gap from the local minima of each cluster.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{area_perimeter, check_admissible, FluxPosition, ShapeParams};
use crate::error::{Error, Result};
use crate::spectral::{find_levels, SolverOptions};

/// Gap below which two levels count as degenerate.
pub const GAP_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub pair: [usize; 2],
    #[serde(flatten)]
    pub flux: FluxPosition,
    pub k: f64,
    pub gap: f64,
}

/// Minimiser result that stalled above the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearMiss {
    pub pair: [usize; 2],
    #[serde(flatten)]
    pub flux: FluxPosition,
    pub k: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refined {
    Degeneracy(Degeneracy),
    NearMiss(NearMiss),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub parameter: String,
    pub critical_value: f64,
    pub pair: [usize; 2],
    pub count_below: usize,
    pub count_above: usize,
    /// Final bracket `[below, above]`.
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum CollisionOutcome {
    Event(CollisionEvent),
    /// Equal counts at both ends of the range.
    NoEvent { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyOptions {
    pub grid_step: f64,
    /// Gap below which a grid cell joins a candidate cluster.
    pub gap_threshold: f64,
    pub simplex_size: f64,
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    /// Refined points closer than this are the same degeneracy.
    pub dedupe_distance: f64,
    /// Minimum boundary clearance of grid points and accepted degeneracies.
    pub scan_margin: f64,
    /// Refinement seeds come from a lattice this many times finer than the
    /// grid inside each cluster; 1 seeds from the coarse minima only.
    pub subdivision: usize,
    /// Once a degeneracy is found, later searches in its cluster minimise
    /// the gap times `1 + deflation_radius / |R - R_found|`.
    pub deflation_radius: f64,
    /// Deflated searches started around each new degeneracy.
    pub restarts: usize,
    pub solver: SolverOptions,
}

impl Default for DegeneracyOptions {
    fn default() -> Self {
        DegeneracyOptions {
            grid_step: 0.05,
            gap_threshold: 0.2,
            simplex_size: 0.02,
            gap_tolerance: GAP_TOLERANCE,
            max_iterations: 400,
            dedupe_distance: 0.01,
            scan_margin: 0.2,
            subdivision: 4,
            deflation_radius: 0.01,
            restarts: 3,
            solver: SolverOptions::default(),
        }
    }
}

impl DegeneracyOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_step", self.grid_step),
            ("gap_threshold", self.gap_threshold),
            ("simplex_size", self.simplex_size),
            ("gap_tolerance", self.gap_tolerance),
            ("dedupe_distance", self.dedupe_distance),
            ("scan_margin", self.scan_margin),
            ("deflation_radius", self.deflation_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.subdivision == 0 {
            return Err(Error::Argument("subdivision must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be positive".into()));
        }
        self.solver.scan.validate()
    }
}

/// The `k` window guaranteed to hold the lowest `count` levels.
///
/// The lower end sits below the Faber-Krahn bound `j_{0,1} sqrt(pi / A)`; the
/// upper end inverts the smoothed staircase with two levels of headroom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KWindow {
    pub lo: f64,
    pub hi: f64,
}

impl KWindow {
    pub fn for_levels(shape: &ShapeParams, count: usize) -> Result<Self> {
        let (area, perimeter) = area_perimeter(shape)?;
        let lo = 0.9 * 2.404825557695773 * (PI / area).sqrt();
        let target = count as f64 + 2.0 - 1.0 / 12.0;
        let a = area / (4.0 * PI);
        let b = perimeter / (4.0 * PI);
        let root = (b + (b * b + 4.0 * a * target).sqrt()) / (2.0 * a);
        Ok(KWindow { lo, hi: root + 0.5 })
    }
}

/// The lowest `count` levels (with multiplicity) at one flux position.
pub fn lowest_levels(shape: &ShapeParams, flux: FluxPosition, count: usize, window: KWindow, opts: &SolverOptions) -> Result<Vec<f64>> {
    let ks = find_levels(shape, flux, window.lo, window.hi, opts)?.ks();
    if ks.len() < count {
        return Err(Error::Window(format!(
            "found {} levels in [{:.4}, {:.4}], need {count}",
            ks.len(),
            window.lo,
            window.hi
        )));
    }
    Ok(ks[..count].to_vec())
}

fn check_pair(n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::Argument("levels are numbered from 1".into()));
    }
    Ok(())
}

/// `k_{n+1} - k_n` and the mean of the two.
pub fn gap(shape: &ShapeParams, flux: FluxPosition, n: usize, window: KWindow, opts: &SolverOptions) -> Result<(f64, f64)> {
    check_pair(n)?;
    let ks = lowest_levels(shape, flux, n + 1, window, opts)?;
    Ok((ks[n] - ks[n - 1], 0.5 * (ks[n] + ks[n - 1])))
}

/// Levels on the admissible points of a square grid.
#[derive(Debug, Clone)]
pub struct GapGrid {
    pub step: f64,
    /// Integer grid coordinates `(i, j)` of each point, position `(i, j) * step`.
    pub cells: Vec<(i64, i64)>,
    pub levels: Vec<Vec<f64>>,
}

impl GapGrid {
    /// Solves for the lowest `count` levels at every admissible grid point.
    /// Points whose solve fails are dropped.
    pub fn compute(shape: &ShapeParams, count: usize, opts: &DegeneracyOptions) -> Result<Self> {
        opts.validate()?;
        let window = KWindow::for_levels(shape, count)?;
        let poly = shape.polygon(crate::boundary::GEOMETRY_SAMPLES);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &poly {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        let step = opts.grid_step;
        let mut cells = Vec::new();
        for i in (x0 / step).ceil() as i64..=(x1 / step).floor() as i64 {
            for j in (y0 / step).ceil() as i64..=(y1 / step).floor() as i64 {
                cells.push((i, j));
            }
        }
        Self::at_cells(shape, cells, step, count, window, opts)
    }

    /// Solves at the given lattice cells, skipping those closer to the
    /// boundary than the scan margin and those whose solve fails.
    pub fn at_cells(shape: &ShapeParams, cells: Vec<(i64, i64)>, step: f64, count: usize, window: KWindow, opts: &DegeneracyOptions) -> Result<Self> {
        let margin = opts.scan_margin.max(opts.solver.margin);
        let at = |(i, j): (i64, i64)| FluxPosition::new(i as f64 * step, j as f64 * step);
        let cells: Vec<(i64, i64)> = cells.into_iter().filter(|&c| check_admissible(shape, at(c), margin).is_ok()).collect();
        let solved: Vec<Option<Vec<f64>>> = cells
            .par_iter()
            .map(|&c| lowest_levels(shape, at(c), count, window, &opts.solver).ok())
            .collect();
        let (cells, levels) = cells.into_iter().zip(solved).filter_map(|(c, l)| l.map(|l| (c, l))).unzip();
        Ok(GapGrid { step, cells, levels })
    }

    pub fn position(&self, idx: usize) -> FluxPosition {
        let (i, j) = self.cells[idx];
        FluxPosition::new(i as f64 * self.step, j as f64 * self.step)
    }

    pub fn gap(&self, idx: usize, n: usize) -> f64 {
        let l = &self.levels[idx];
        if n < 1 || n >= l.len() {
            return f64::INFINITY;
        }
        l[n] - l[n - 1]
    }

    fn index(&self) -> HashMap<(i64, i64), usize> {
        self.cells.iter().enumerate().map(|(idx, &c)| (c, idx)).collect()
    }

    fn neighbours<'a>(index: &'a HashMap<(i64, i64), usize>, (i, j): (i64, i64)) -> impl Iterator<Item = usize> + 'a {
        (-1..=1)
            .flat_map(move |di| (-1..=1).map(move |dj| (di, dj)))
            .filter(|&d| d != (0, 0))
            .filter_map(move |(di, dj)| index.get(&(i + di, j + dj)).copied())
    }

    /// Points below `threshold` whose gap is not above any 8-neighbour's,
    /// smallest gap first.
    pub fn local_minima(&self, n: usize, threshold: f64) -> Vec<FluxPosition> {
        let index = self.index();
        let mut minima: Vec<usize> = (0..self.cells.len())
            .filter(|&idx| self.gap(idx, n) < threshold)
            .filter(|&idx| Self::neighbours(&index, self.cells[idx]).all(|nb| self.gap(nb, n) >= self.gap(idx, n)))
            .collect();
        minima.sort_by(|&a, &b| self.gap(a, n).total_cmp(&self.gap(b, n)).then(self.cells[a].cmp(&self.cells[b])));
        minima.into_iter().map(|idx| self.position(idx)).collect()
    }

    /// Clusters of 8-connected cells with gap below `threshold`.
    pub fn clusters(&self, n: usize, threshold: f64) -> Vec<Cluster> {
        let index = self.index();
        let below: Vec<bool> = (0..self.cells.len()).map(|idx| self.gap(idx, n) < threshold).collect();
        let mut seen = vec![false; self.cells.len()];
        let mut clusters = Vec::new();
        for start in 0..self.cells.len() {
            if !below[start] || seen[start] {
                continue;
            }
            let mut members = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(idx) = queue.pop_front() {
                members.push(idx);
                for nb in Self::neighbours(&index, self.cells[idx]) {
                    if below[nb] && !seen[nb] {
                        seen[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
            let mut minima: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&idx| Self::neighbours(&index, self.cells[idx]).all(|nb| self.gap(nb, n) >= self.gap(idx, n)))
                .collect();
            minima.sort_by(|&a, &b| self.gap(a, n).total_cmp(&self.gap(b, n)).then(self.cells[a].cmp(&self.cells[b])));
            members.sort_by_key(|&idx| self.cells[idx]);
            clusters.push(Cluster {
                cells: members.iter().map(|&idx| self.cells[idx]).collect(),
                minima: minima.into_iter().map(|idx| self.position(idx)).collect(),
            });
        }
        clusters
    }
}

/// Connected grid cells below the gap threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Lattice coordinates at the coarse step.
    pub cells: Vec<(i64, i64)>,
    /// Local gap minima of the cluster, smallest first.
    pub minima: Vec<FluxPosition>,
}

/// Candidate clusters for pair `(n, n+1)` on the coarse grid.
pub fn scan_candidates(shape: &ShapeParams, n: usize, opts: &DegeneracyOptions) -> Result<Vec<Cluster>> {
    check_pair(n)?;
    Ok(GapGrid::compute(shape, n + 1, opts)?.clusters(n, opts.gap_threshold))
}

/// Refinement seeds inside one cluster: local gap minima on a lattice
/// `subdivision` times finer covering the cluster cells.
pub fn cluster_seeds(shape: &ShapeParams, n: usize, cluster: &Cluster, step: f64, opts: &DegeneracyOptions) -> Result<Vec<FluxPosition>> {
    let f = opts.subdivision as i64;
    if f <= 1 {
        return Ok(cluster.minima.clone());
    }
    let half = f / 2;
    let mut fine: Vec<(i64, i64)> = cluster
        .cells
        .iter()
        .flat_map(|&(i, j)| (-half..=half).flat_map(move |a| (-half..=half).map(move |b| (f * i + a, f * j + b))))
        .collect();
    fine.sort_unstable();
    fine.dedup();
    let window = KWindow::for_levels(shape, n + 1)?;
    let grid = GapGrid::at_cells(shape, fine, step / f as f64, n + 1, window, opts)?;
    Ok(grid.local_minima(n, opts.gap_threshold))
}

/// Nelder-Mead minimisation of `f` from a right-angled simplex of side `size`.
/// Returns the best vertex and value.
pub fn nelder_mead<F: FnMut([f64; 2]) -> f64>(mut f: F, start: [f64; 2], size: f64, f_stop: f64, x_tol: f64, max_iter: usize) -> ([f64; 2], f64) {
    let mut simplex = [start, [start[0] + size, start[1]], [start[0], start[1] + size]];
    let mut values = simplex.map(&mut f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let extent = simplex[1..]
            .iter()
            .map(|p| (p[0] - simplex[0][0]).hypot(p[1] - simplex[0][1]))
            .fold(0.0, f64::max);
        if values[0] < f_stop || extent < x_tol {
            break;
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let (contracted, fc) = if fr < values[2] {
                let c = lerp(centroid, reflected, 0.5);
                (c, f(c))
            } else {
                let c = lerp(centroid, simplex[2], 0.5);
                (c, f(c))
            };
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best], values[best])
}

/// Minimises the `(n, n+1)` gap from `seed`.
///
/// A result below the tolerance must also pass a radial V-check: the gap a
/// short step either side along the radial direction exceeds the minimum.
pub fn refine(shape: &ShapeParams, n: usize, seed: FluxPosition, opts: &DegeneracyOptions) -> Result<Refined> {
    refine_deflated(shape, n, seed, opts.simplex_size, &[], opts)
}

/// [`refine`] with the known degeneracies `found` divided out of the gap,
/// so the minimiser can only settle on a new one.
pub fn refine_deflated(
    shape: &ShapeParams,
    n: usize,
    seed: FluxPosition,
    size: f64,
    found: &[FluxPosition],
    opts: &DegeneracyOptions,
) -> Result<Refined> {
    check_pair(n)?;
    opts.validate()?;
    let window = KWindow::for_levels(shape, n + 1)?;
    let eval = |p: [f64; 2]| -> Option<(f64, f64)> { gap(shape, FluxPosition::new(p[0], p[1]), n, window, &opts.solver).ok() };
    let deflation = |p: [f64; 2]| -> f64 {
        found
            .iter()
            .map(|d| 1.0 + opts.deflation_radius / (p[0] - d.x).hypot(p[1] - d.y))
            .product()
    };
    let (best, _) = nelder_mead(
        |p| eval(p).map_or(f64::INFINITY, |g| g.0 * deflation(p)),
        [seed.x, seed.y],
        size,
        0.1 * opts.gap_tolerance,
        1e-9,
        opts.max_iterations,
    );
    let (g, k) = eval(best).ok_or_else(|| Error::NonConvergence(format!("gap minimisation left the billiard from ({}, {})", seed.x, seed.y)))?;
    let flux = FluxPosition::new(best[0], best[1]);
    if g < opts.gap_tolerance && v_shaped(&eval, best, 10.0 * opts.gap_tolerance.max(1e-4), g) {
        Ok(Refined::Degeneracy(Degeneracy { pair: [n, n + 1], flux, k, gap: g }))
    } else {
        Ok(Refined::NearMiss(NearMiss { pair: [n, n + 1], flux, k, gap: g }))
    }
}

/// Refines one cluster: its seed points first, then deflated restarts
/// around every degeneracy found. Near misses are kept only for seeds.
pub fn refine_cluster(shape: &ShapeParams, n: usize, seeds: &[FluxPosition], seed_size: f64, opts: &DegeneracyOptions) -> Result<Catalog> {
    let mut out = Catalog::default();
    let mut queue: VecDeque<(FluxPosition, bool)> = seeds.iter().map(|&p| (p, true)).collect();
    while let Some((seed, from_grid)) = queue.pop_front() {
        let near_known = out
            .degeneracies
            .iter()
            .any(|d| (d.flux.x - seed.x).hypot(d.flux.y - seed.y) < opts.dedupe_distance);
        if near_known {
            continue;
        }
        let known: Vec<FluxPosition> = out.degeneracies.iter().map(|d| d.flux).collect();
        let size = if from_grid { seed_size } else { opts.simplex_size };
        match refine_deflated(shape, n, seed, size, &known, opts) {
            Ok(Refined::Degeneracy(d)) => {
                let fresh = known.iter().all(|p| (p.x - d.flux.x).hypot(p.y - d.flux.y) >= opts.dedupe_distance);
                if fresh && check_admissible(shape, d.flux, opts.scan_margin).is_ok() {
                    let r = 2.0 * opts.simplex_size;
                    for i in 0..opts.restarts {
                        let theta = PI / 4.0 + 2.0 * PI * i as f64 / opts.restarts as f64;
                        queue.push_back((FluxPosition::new(d.flux.x + r * theta.cos(), d.flux.y + r * theta.sin()), false));
                    }
                    out.degeneracies.push(d);
                }
            }
            Ok(Refined::NearMiss(m)) => {
                if from_grid {
                    out.near_misses.push(m);
                }
            }
            Err(Error::NonConvergence(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Distance within which two degeneracies of one pair are tested for
/// lying on the rim of one unresolved region.
pub const RIM_DISTANCE: f64 = 0.06;
/// A level further than this from the pair's `k` counts as lost.
pub const LOST_PAIR_JUMP: f64 = 0.1;

/// Whether the pair `(n, n+1)` near `k` is missing somewhere on the chord
/// from `a` to `b`.
fn pair_lost_between(shape: &ShapeParams, n: usize, a: FluxPosition, b: FluxPosition, k: f64, window: KWindow, opts: &SolverOptions) -> bool {
    (1..=5).any(|i| {
        let t = i as f64 / 6.0;
        let p = FluxPosition::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        match lowest_levels(shape, p, n + 1, window, opts) {
            Ok(l) => (l[n - 1] - k).abs() > LOST_PAIR_JUMP || (l[n] - k).abs() > LOST_PAIR_JUMP,
            Err(_) => true,
        }
    })
}

/// Where the discretisation error exceeds the level spacing the two levels
/// vanish together, and the boundary of that region is a closed curve of
/// numerical coincidences around the true degeneracy. Such groups are
/// replaced by their centroid.
pub fn merge_unresolved(shape: &ShapeParams, found: Vec<Degeneracy>, opts: &DegeneracyOptions) -> Result<Vec<Degeneracy>> {
    let m = found.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let candidates: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (a, b) = (&found[i], &found[j]);
            a.pair == b.pair && (a.flux.x - b.flux.x).hypot(a.flux.y - b.flux.y) < RIM_DISTANCE
        })
        .collect();
    let mut windows = HashMap::new();
    for &(i, _) in &candidates {
        let n = found[i].pair[0];
        if let std::collections::hash_map::Entry::Vacant(e) = windows.entry(n) {
            e.insert(KWindow::for_levels(shape, n + 1)?);
        }
    }
    let lost: Vec<bool> = candidates
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&found[i], &found[j]);
            let n = a.pair[0];
            pair_lost_between(shape, n, a.flux, b.flux, 0.5 * (a.k + b.k), windows[&n], &opts.solver)
        })
        .collect();
    for (&(i, j), &l) in candidates.iter().zip(&lost) {
        if l {
            let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
    for i in 0..m {
        let r = root(&mut parent, i);
        groups[r].push(i);
    }
    Ok(groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let w = g.len() as f64;
            let mean = |f: &dyn Fn(&Degeneracy) -> f64| g.iter().map(|&i| f(&found[i])).sum::<f64>() / w;
            Degeneracy {
                pair: found[g[0]].pair,
                flux: FluxPosition::new(mean(&|d| d.flux.x), mean(&|d| d.flux.y)),
                k: mean(&|d| d.k),
                gap: g.iter().map(|&i| found[i].gap).fold(f64::INFINITY, f64::min),
            }
        })
        .collect())
}

fn v_shaped(eval: &impl Fn([f64; 2]) -> Option<(f64, f64)>, p: [f64; 2], h: f64, g0: f64) -> bool {
    let r = p[0].hypot(p[1]);
    let dir = if r > 1e-6 { [p[0] / r, p[1] / r] } else { [1.0, 0.0] };
    [-1.0, 1.0].iter().all(|&s| {
        eval([p[0] + s * h * dir[0], p[1] + s * h * dir[1]]).is_some_and(|(g, _)| g > g0)
    })
}

/// Linear-fit quality of the gap along rays from a degeneracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub slopes: Vec<f64>,
    /// Smallest coefficient of determination over the rays.
    pub min_r2: f64,
}

/// Samples the gap at `samples` distances up to `length` along `rays`
/// equally spaced directions and fits each profile with a straight line.
pub fn cone_check(shape: &ShapeParams, deg: &Degeneracy, rays: usize, length: f64, samples: usize, opts: &SolverOptions) -> Result<ConeCheck> {
    if rays == 0 || samples < 3 || !(length > 0.0) {
        return Err(Error::Argument("cone check needs rays >= 1, samples >= 3, length > 0".into()));
    }
    let n = deg.pair[0];
    let window = KWindow::for_levels(shape, n + 1)?;
    let profiles: Vec<Result<(f64, f64)>> = (0..rays)
        .into_par_iter()
        .map(|r| {
            let theta = 2.0 * PI * r as f64 / rays as f64;
            let mut pts = Vec::with_capacity(samples);
            for i in 1..=samples {
                let t = length * i as f64 / samples as f64;
                let f = FluxPosition::new(deg.flux.x + t * theta.cos(), deg.flux.y + t * theta.sin());
                pts.push((t, gap(shape, f, n, window, opts)?.0));
            }
            Ok(linear_fit(&pts))
        })
        .collect();
    let mut slopes = Vec::with_capacity(rays);
    let mut min_r2 = f64::INFINITY;
    for p in profiles {
        let (slope, r2) = p?;
        slopes.push(slope);
        min_r2 = min_r2.min(r2);
    }
    Ok(ConeCheck { slopes, min_r2 })
}

/// Least-squares slope and coefficient of determination.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Result of a full catalogue run, including minimiser stalls.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    pub degeneracies: Vec<Degeneracy>,
    pub near_misses: Vec<NearMiss>,
}

impl Catalog {
    pub fn count(&self, n: usize) -> usize {
        self.degeneracies.iter().filter(|d| d.pair[0] == n).count()
    }

    /// Degeneracies involving level `n` from either side.
    pub fn touching(&self, n: usize) -> usize {
        self.degeneracies.iter().filter(|d| d.pair[0] == n || d.pair[1] == n).count()
    }
}

/// Scan and refine the pairs `(n, n+1)` for every `n` in `pairs`.
pub fn catalog_pairs(shape: &ShapeParams, pairs: &[usize], opts: &DegeneracyOptions) -> Result<Catalog> {
    for &n in pairs {
        check_pair(n)?;
    }
    let top = pairs.iter().copied().max().ok_or_else(|| Error::Argument("no level pairs requested".into()))?;
    let grid = GapGrid::compute(shape, top + 1, opts)?;
    let clusters: Vec<(usize, Cluster)> = pairs
        .iter()
        .flat_map(|&n| grid.clusters(n, opts.gap_threshold).into_iter().map(move |c| (n, c)))
        .collect();
    let seed_size = opts.simplex_size.min(grid.step / opts.subdivision as f64);
    let refined: Vec<Result<Catalog>> = clusters
        .par_iter()
        .map(|(n, c)| refine_cluster(shape, *n, &cluster_seeds(shape, *n, c, grid.step, opts)?, seed_size, opts))
        .collect();
    let mut out = Catalog::default();
    for r in refined {
        let c = r?;
        out.degeneracies.extend(c.degeneracies);
        out.near_misses.extend(c.near_misses);
    }
    out.degeneracies = merge_unresolved(shape, dedupe(out.degeneracies, opts.dedupe_distance), opts)?;
    out.degeneracies.sort_by(|a, b| {
        a.pair.cmp(&b.pair).then(a.flux.x.total_cmp(&b.flux.x)).then(a.flux.y.total_cmp(&b.flux.y))
    });
    out.near_misses.sort_by(|a, b| {
        a.pair.cmp(&b.pair).then(a.flux.x.total_cmp(&b.flux.x)).then(a.flux.y.total_cmp(&b.flux.y))
    });
    Ok(out)
}

/// All degeneracies of pairs `(n, n+1)` with `n < n_max`.
pub fn catalog(shape: &ShapeParams, n_max: usize, opts: &DegeneracyOptions) -> Result<Catalog> {
    if n_max < 2 {
        return Err(Error::Argument(format!("n_max must be >= 2, got {n_max}")));
    }
    catalog_pairs(shape, &(1..n_max).collect::<Vec<_>>(), opts)
}

fn dedupe(mut found: Vec<Degeneracy>, distance: f64) -> Vec<Degeneracy> {
    found.sort_by(|a, b| a.gap.total_cmp(&b.gap));
    let mut kept: Vec<Degeneracy> = Vec::new();
    for d in found {
        let dup = kept
            .iter()
            .any(|e| e.pair == d.pair && (e.flux.x - d.flux.x).hypot(e.flux.y - d.flux.y) < distance);
        if !dup {
            kept.push(d);
        }
    }
    kept
}

/// Integer-valued degeneracy count as a function of one control parameter.
pub trait DegeneracyCounter: Sync {
    fn count(&self, parameter: f64) -> Result<usize>;
}

/// Count bisection to bracket width `width`.
pub fn track_collision<C: DegeneracyCounter + ?Sized>(
    counter: &C,
    parameter: &str,
    pair: [usize; 2],
    range: (f64, f64),
    width: f64,
) -> Result<CollisionOutcome> {
    let (mut lo, mut hi) = range;
    if !(lo < hi) || !(width > 0.0) {
        return Err(Error::Argument(format!("need lo < hi and width > 0, got [{lo}, {hi}], width {width}")));
    }
    let (c_lo, c_hi) = rayon::join(|| counter.count(lo), || counter.count(hi));
    let (c_lo, c_hi) = (c_lo?, c_hi?);
    if c_lo == c_hi {
        return Ok(CollisionOutcome::NoEvent { count: c_lo });
    }
    let mut c_above = c_hi;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let c = counter.count(mid)?;
        if c == c_lo {
            lo = mid;
        } else {
            hi = mid;
            c_above = c;
        }
    }
    Ok(CollisionOutcome::Event(CollisionEvent {
        parameter: parameter.to_string(),
        critical_value: 0.5 * (lo + hi),
        pair,
        count_below: c_lo,
        count_above: c_above,
        bracket: [lo, hi],
    }))
}

/// Degeneracies of one level pair in the shape family `(a2, a3, sigma)`
/// with `a3` and `sigma` fixed, as a function of `a2`.
#[derive(Debug, Clone, Copy)]
pub struct ShapeFamily {
    pub a3: f64,
    pub sigma: f64,
    pub n: usize,
    pub opts: DegeneracyOptions,
}

impl DegeneracyCounter for ShapeFamily {
    fn count(&self, a2: f64) -> Result<usize> {
        let shape = ShapeParams::new(a2, self.a3, self.sigma)?;
        Ok(catalog_pairs(&shape, &[self.n], &self.opts)?.count(self.n))
    }
}

/// The two-level model `M = [[Z - X^2, Y], [Y, -Z + X^2]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    #[serde(rename = "Z")]
    pub z: f64,
}

/// Eigenvalues `(lambda_-, lambda_+)` of the toy model at `(x, y)`.
pub fn toy_eigen(model: ToyModel, x: f64, y: f64) -> (f64, f64) {
    let r = (model.z - x * x).hypot(y);
    (-r, r)
}

/// Toy-model degeneracies counted with multiplicity: the real roots of
/// `X^2 = Z` on `Y = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyCounter;

impl DegeneracyCounter for ToyCounter {
    fn count(&self, z: f64) -> Result<usize> {
        if !z.is_finite() {
            return Err(Error::Argument(format!("Z must be finite, got {z}")));
        }
        Ok(if z >= 0.0 { 2 } else { 0 })
    }
}

/// Codimension of an `n_levels`-fold degeneracy of a real symmetric
/// operator, and the number of semifluxons whose positions can supply it.
pub fn codimension(n_levels: u64) -> Result<(u64, u64)> {
    if n_levels < 2 {
        return Err(Error::Argument(format!("need at least two levels, got {n_levels}")));
    }
    let codim = (n_levels + 2) * (n_levels - 1) / 2;
    Ok((codim, n_levels * (n_levels + 1) / 4))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codimension_examples() {
        assert_eq!(codimension(2).unwrap(), (2, 1));
        assert_eq!(codimension(3).unwrap(), (5, 3));
        assert_eq!(codimension(4).unwrap(), (9, 5));
        assert!(codimension(1).is_err());
    }

    #[test]
    fn toy_eigen_examples() {
        for x in [0.2, -0.2] {
            let (a, b) = toy_eigen(ToyModel { z: 0.04 }, x, 0.0);
            assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
        }
        for x in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            let (lm, lp) = toy_eigen(ToyModel { z: -1.0 }, x, 0.0);
            assert!(lp - lm >= 2.0);
        }
    }

    #[test]
    fn toy_collision_at_zero() {
        let out = track_collision(&ToyCounter, "Z", [1, 2], (-1.0, 1.0), 1e-7).unwrap();
        let CollisionOutcome::Event(e) = out else { panic!("no event") };
        assert!(e.critical_value.abs() <= 1e-6);
        assert_eq!((e.count_below, e.count_above), (0, 2));
        assert!(e.bracket[1] - e.bracket[0] <= 1e-7);
    }

    #[test]
    fn constant_count_is_no_event() {
        let out = track_collision(&ToyCounter, "Z", [1, 2], (0.5, 1.0), 1e-4).unwrap();
        assert_eq!(out, CollisionOutcome::NoEvent { count: 2 });
        assert!(track_collision(&ToyCounter, "Z", [1, 2], (1.0, 0.5), 1e-4).is_err());
    }

    #[test]
    fn nelder_mead_finds_cone_tip() {
        let (p, v) = nelder_mead(|p| (p[0] - 0.3).hypot(2.0 * (p[1] + 0.1)), [0.0, 0.0], 0.02, 1e-9, 1e-12, 500);
        assert!(v < 1e-8);
        assert!((p[0] - 0.3).abs() < 1e-8 && (p[1] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn linear_fit_exact_line() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let (s, r2) = linear_fit(&pts);
        assert!((s - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_brackets_low_levels() {
        let w = KWindow::for_levels(&ShapeParams::CIRCLE, 4).unwrap();
        assert!(w.lo < PI && w.hi > 5.7634592);
    }

    #[test]
    fn centred_circle_gap() {
        let opts = SolverOptions::default();
        let w = KWindow::for_levels(&ShapeParams::CIRCLE, 2).unwrap();
        let (g, k) = gap(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 1, w, &opts).unwrap();
        assert!(g.abs() < 1e-8);
        assert!((k - PI).abs() < 1e-6);
        let (g, _) = gap(&ShapeParams::CIRCLE, FluxPosition::new(0.3, 0.0), 1, w, &opts).unwrap();
        assert!(g > 1e-2);
        assert!(matches!(gap(&ShapeParams::CIRCLE, FluxPosition::ORIGIN, 0, w, &opts), Err(Error::Argument(_))));
    }

    #[test]
    fn circle_refines_to_centre() {
        let opts = DegeneracyOptions::default();
        let r = refine(&ShapeParams::CIRCLE, 1, FluxPosition::new(0.01, 0.01), &opts).unwrap();
        let Refined::Degeneracy(d) = r else { panic!("{r:?}") };
        assert!(d.flux.radius() < 1e-3, "{d:?}");
        assert!((d.k - PI).abs() < 1e-6);
    }

    #[test]
    fn table_pair_one_two() {
        let shape = ShapeParams::table_billiard();
        let opts = SolverOptions::default();
        let w = KWindow::for_levels(&shape, 2).unwrap();
        let (g, k) = gap(&shape, FluxPosition::new(0.16, -0.03), 1, w, &opts).unwrap();
        assert!(g < 1e-2 && (k - 3.05).abs() < 0.02, "{g} {k}");
    }
}
