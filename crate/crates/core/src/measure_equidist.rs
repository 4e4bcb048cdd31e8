//! Discrete bifurcation measures on parameter grids, atomic measures on
//! solution sets and dyadic-box discrepancy between the two.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green_arch::{growth_constants, Axis, G_grid, GridField, GridSpec, Part};
use crate::multiplier_curves::{per_star_solve, PerStarSet};
use crate::pcf_solver::{solve_with, PcfSolutionSet, SolveOptions};

/// Cap on the padded 4-real grid behind [`mu_bif_d3`].
pub const MAX_D3_CELLS: usize = 40_000_000;

/// Runs whose clipped (negative) mass exceeds this fraction are unreliable.
pub const CLIP_BUDGET: f64 = 0.05;

/// Cell masses of a discrete `(dd^c G)^{d-1}`, normalized to total 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub spec: GridSpec,
    pub masses: Vec<f64>,
    /// Signed stencil mass before clipping.
    pub signed_total: f64,
    /// Mass after clipping negative cells, before normalization.
    pub raw_total: f64,
    pub clipped_mass: f64,
    pub clipped_fraction: f64,
    /// Clipping exceeded [`CLIP_BUDGET`].
    pub unreliable: bool,
    /// A 2-real slice of a higher-dimensional parameter space, not the
    /// measure itself.
    pub slice: bool,
    pub smoothing: f64,
    pub failed_cells: usize,
}

impl GridMeasure {
    fn from_signed(spec: GridSpec, signed: Vec<f64>, slice: bool, smoothing: f64, failed_cells: usize) -> Self {
        let signed_total: f64 = signed.iter().sum();
        let clipped_mass: f64 = signed.iter().filter(|m| **m < 0.0).map(|m| -m).sum();
        let mut masses: Vec<f64> = signed.into_iter().map(|m| m.max(0.0)).collect();
        let raw_total: f64 = masses.iter().sum();
        if raw_total > 0.0 {
            for m in masses.iter_mut() {
                *m /= raw_total;
            }
        }
        let clipped_fraction = if raw_total > 0.0 { clipped_mass / raw_total } else { 0.0 };
        GridMeasure {
            spec,
            masses,
            signed_total,
            raw_total,
            clipped_mass,
            clipped_fraction,
            unreliable: clipped_fraction > CLIP_BUDGET,
            slice,
            smoothing,
            failed_cells,
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass of the cells whose centers satisfy `inside`.
    pub fn mass_where(&self, inside: impl Fn(&[Complex64]) -> bool) -> f64 {
        (0..self.masses.len())
            .filter(|&i| inside(&self.spec.cell_coords(&self.spec.unravel(i))))
            .map(|i| self.masses[i])
            .sum()
    }

    /// Mass inside the box `max |coord| ≤ R` outside of which `G > 0`.
    pub fn mass_in_escape_box(&self) -> Result<f64> {
        let r = growth_constants(self.spec.d)?.radius;
        Ok(self.mass_where(|x| x.iter().all(|z| z.re.abs() <= r && z.im.abs() <= r)))
    }
}

fn axis_of(spec: &GridSpec, coord: usize, part: Part) -> Option<usize> {
    spec.axes.iter().position(|a| a.coord == coord && a.part == part)
}

/// Indices of the two axes spanning one complex coordinate, if both vary.
fn complex_axes(spec: &GridSpec, coord: usize) -> Option<(usize, usize)> {
    Some((axis_of(spec, coord, Part::Re)?, axis_of(spec, coord, Part::Im)?))
}

fn is_interior(spec: &GridSpec, ix: &[usize]) -> bool {
    ix.iter().zip(&spec.axes).all(|(&i, a)| i >= 1 && i + 1 < a.res)
}

fn shifted(ix: &[usize], moves: &[(usize, isize)]) -> Vec<usize> {
    let mut out = ix.to_vec();
    for &(ax, dlt) in moves {
        out[ax] = (out[ax] as isize + dlt) as usize;
    }
    out
}

/// Second difference `∂²u/∂x_p∂x_q` at an interior cell.
fn second(field: &GridField, vals: &[f64], ix: &[usize], p: usize, q: usize) -> f64 {
    let spec = &field.spec;
    let at = |m: &[(usize, isize)]| vals[spec.ravel(&shifted(ix, m))];
    let hp = spec.axes[p].step();
    if p == q {
        (at(&[(p, 1)]) - 2.0 * at(&[]) + at(&[(p, -1)])) / (hp * hp)
    } else {
        let hq = spec.axes[q].step();
        (at(&[(p, 1), (q, 1)]) - at(&[(p, 1), (q, -1)]) - at(&[(p, -1), (q, 1)]) + at(&[(p, -1), (q, -1)])) / (4.0 * hp * hq)
    }
}

fn laplacian_masses(field: &GridField, vals: &[f64], re: usize, im: usize) -> Vec<f64> {
    let spec = &field.spec;
    let vol = spec.axes[re].step() * spec.axes[im].step();
    (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let ix = spec.unravel(idx);
            if !is_interior(spec, &ix) {
                return 0.0;
            }
            let lap = second(field, vals, &ix, re, re) + second(field, vals, &ix, im, im);
            if lap.is_finite() {
                lap * vol / (2.0 * PI)
            } else {
                0.0
            }
        })
        .collect()
}

fn check_plane(spec: &GridSpec) -> Result<(usize, usize)> {
    if spec.axes.len() != 2 {
        return Err(Error::invalid("a planar measure needs exactly two grid axes"));
    }
    let coord = spec.axes[0].coord;
    complex_axes(spec, coord).ok_or_else(|| Error::invalid("the two axes must span one complex coordinate"))
}

/// `dd^c G` on the `a`-plane for `d = 2`: the 5-point Laplacian of `G`
/// divided by `2π`, clipped at zero and normalized.
pub fn mu_bif_d2(spec: &GridSpec, tol: f64) -> Result<GridMeasure> {
    if spec.d != 2 {
        return Err(Error::invalid("mu_bif_d2 needs d = 2"));
    }
    let (re, im) = check_plane(spec)?;
    let field = G_grid(spec, tol)?;
    let signed = laplacian_masses(&field, &field.values, re, im);
    Ok(GridMeasure::from_signed(spec.clone(), signed, false, 0.0, field.failed_cells))
}

/// Kernel half-width in cells for smoothing `sigma` along `ax`.
fn kernel_radius(ax: &Axis, sigma: f64) -> usize {
    let s = sigma / ax.step();
    if s < 1e-3 {
        0
    } else {
        (3.0 * s).ceil() as usize
    }
}

/// Separable Gaussian mollification with standard deviation `sigma` in
/// parameter units. Cells within a kernel radius of the edge use the
/// truncated kernel and are meant to be cropped.
fn mollify(spec: &GridSpec, vals: &[f64], sigma: f64) -> Vec<f64> {
    let mut cur = vals.to_vec();
    for (k, ax) in spec.axes.iter().enumerate() {
        let r = kernel_radius(ax, sigma) as isize;
        if r == 0 {
            continue;
        }
        let s = sigma / ax.step();
        let kernel: Vec<f64> = (-r..=r).map(|j| (-(j * j) as f64 / (2.0 * s * s)).exp()).collect();
        let next: Vec<f64> = (0..spec.len())
            .into_par_iter()
            .map(|idx| {
                let ix = spec.unravel(idx);
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (t, w) in (-r..=r).zip(&kernel) {
                    let j = ix[k] as isize + t;
                    if j < 0 || j >= ax.res as isize {
                        continue;
                    }
                    let v = cur[spec.ravel(&shifted(&ix, &[(k, t)]))];
                    if v.is_finite() {
                        acc += w * v;
                        wsum += w;
                    }
                }
                if wsum > 0.0 {
                    acc / wsum
                } else {
                    f64::NAN
                }
            })
            .collect();
        cur = next;
    }
    cur
}

/// `spec` widened by `pad[k]` cells on both sides of axis `k`.
fn padded(spec: &GridSpec, pad: &[usize]) -> GridSpec {
    let mut out = spec.clone();
    for (ax, &p) in out.axes.iter_mut().zip(pad) {
        let h = ax.step();
        ax.min -= p as f64 * h;
        ax.max += p as f64 * h;
        ax.res += 2 * p;
    }
    out
}

/// Cell masses `(8/π²) det(u_{j k̄}) vol` of the complex Monge–Ampère
/// operator on a 4-real grid, by central differences.
fn monge_ampere_masses(field: &GridField, vals: &[f64]) -> Result<Vec<f64>> {
    let spec = &field.spec;
    let (x1, y1) = complex_axes(spec, 0).ok_or_else(|| Error::invalid("c axes missing"))?;
    let (x2, y2) = complex_axes(spec, 1).ok_or_else(|| Error::invalid("a axes missing"))?;
    let vol = spec.cell_volume();
    Ok((0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let ix = spec.unravel(idx);
            if !is_interior(spec, &ix) {
                return 0.0;
            }
            let d = |p, q| second(field, vals, &ix, p, q);
            let h11 = (d(x1, x1) + d(y1, y1)) / 4.0;
            let h22 = (d(x2, x2) + d(y2, y2)) / 4.0;
            let h12 = Complex64::new(d(x1, x2) + d(y1, y2), d(x1, y2) - d(y1, x2)) / 4.0;
            let det = h11 * h22 - h12.norm_sqr();
            if det.is_finite() {
                8.0 / (PI * PI) * det * vol
            } else {
                0.0
            }
        })
        .collect())
}

/// `(dd^c G)^2` for `d = 3`: `(8/π²) det(∂²G/∂z_j∂z̄_k)` of a mollified `G`
/// on a full 4-real grid, or the Laplacian on a 2-real slice (flagged).
pub fn mu_bif_d3(spec: &GridSpec, smoothing: f64, tol: f64) -> Result<GridMeasure> {
    if spec.d != 3 {
        return Err(Error::invalid("mu_bif_d3 needs d = 3"));
    }
    if spec.axes.len() != 2 && spec.axes.len() != 4 {
        return Err(Error::invalid("mu_bif_d3 needs a 4-axis grid or a 2-axis slice"));
    }
    // G is evaluated on a margin wide enough for the full kernel and the
    // difference stencil, so every returned cell sees an untruncated
    // mollifier.
    let pad: Vec<usize> = spec.axes.iter().map(|ax| kernel_radius(ax, smoothing) + 1).collect();
    let big = padded(spec, &pad);
    if big.len() > MAX_D3_CELLS {
        return Err(Error::budget(format!("{} padded grid cells", big.len()), MAX_D3_CELLS as u64));
    }
    let field = G_grid(&big, tol)?;
    let vals = mollify(&big, &field.values, smoothing);
    let signed_big = if spec.axes.len() == 2 {
        let (re, im) = check_plane(spec)?;
        laplacian_masses(&field, &vals, re, im)
    } else {
        monge_ampere_masses(&field, &vals)?
    };
    let signed: Vec<f64> = (0..spec.len())
        .map(|idx| {
            let ix: Vec<usize> = spec.unravel(idx).iter().zip(&pad).map(|(i, p)| i + p).collect();
            signed_big[big.ravel(&ix)]
        })
        .collect();
    Ok(GridMeasure::from_signed(spec.clone(), signed, spec.axes.len() == 2, smoothing, field.failed_cells))
}

// ---------------------------------------------------------------------------
// Atomic measures

/// Weighted points `(c_1, …, c_{d-2}, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub points: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
}

impl AtomicMeasure {
    pub fn uniform(points: Vec<Vec<Complex64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("atomic measure on an empty set"));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(AtomicMeasure { points, weights })
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Which solutions carry atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomFilter {
    All,
    /// Exact preperiod `n_i` and period `m_i - n_i` for every critical point.
    ExactType,
}

pub fn atomic_from(sols: &PcfSolutionSet, filter: AtomFilter) -> Result<AtomicMeasure> {
    let pts: Vec<Vec<Complex64>> = match filter {
        AtomFilter::All => sols.points.iter().map(|p| p.coords.clone()).collect(),
        AtomFilter::ExactType => sols.exact_points().into_iter().map(|p| p.coords.clone()).collect(),
    };
    AtomicMeasure::uniform(pts)
}

pub fn atomic_from_per_star(set: &PerStarSet) -> Result<AtomicMeasure> {
    AtomicMeasure::uniform(set.points.iter().map(|p| p.coords.clone()).collect())
}

/// Fractional position of a point along each grid axis, `None` outside.
fn unit_position(spec: &GridSpec, x: &[Complex64]) -> Option<Vec<f64>> {
    spec.axes
        .iter()
        .map(|ax| {
            let z = x.get(ax.coord)?;
            let v = match ax.part {
                Part::Re => z.re,
                Part::Im => z.im,
            };
            let u = (v - ax.min) / (ax.max - ax.min);
            (0.0..1.0).contains(&u).then_some(u)
        })
        .collect()
}

/// Cell index of a point, `None` outside the grid.
pub fn cell_of(spec: &GridSpec, x: &[Complex64]) -> Option<Vec<usize>> {
    let u = unit_position(spec, x)?;
    Some(
        u.iter()
            .zip(&spec.axes)
            .map(|(u, ax)| ((u * ax.res as f64) as usize).min(ax.res - 1))
            .collect(),
    )
}

/// The atomic measure binned onto a grid (atoms outside are dropped).
pub fn bin_atomic(mu: &AtomicMeasure, spec: &GridSpec) -> GridMeasure {
    let mut masses = vec![0.0; spec.len()];
    for (x, w) in mu.points.iter().zip(&mu.weights) {
        if let Some(ix) = cell_of(spec, x) {
            masses[spec.ravel(&ix)] += w;
        }
    }
    let total: f64 = masses.iter().sum();
    GridMeasure {
        spec: spec.clone(),
        masses,
        signed_total: total,
        raw_total: total,
        clipped_mass: 0.0,
        clipped_fraction: 0.0,
        unreliable: false,
        slice: false,
        smoothing: 0.0,
        failed_cells: 0,
    }
}

fn box_index(level: u32, u: &[f64]) -> usize {
    let n = 1usize << level;
    u.iter().rev().fold(0, |acc, &x| acc * n + ((x * n as f64) as usize).min(n - 1))
}

/// `max |μ₁(B) - μ₂(B)|` over the dyadic sub-boxes `B` of the grid region
/// at levels `0..=depth`. Grid cells belong to the box containing their
/// center.
pub fn discrepancy(mu1: &AtomicMeasure, mu2: &GridMeasure, depth: u32) -> Result<f64> {
    let spec = &mu2.spec;
    let dim = spec.axes.len();
    if depth as usize * dim > 28 {
        return Err(Error::budget(format!("{} dyadic boxes", 1u64 << (depth as usize * dim)), 1 << 28));
    }
    let atoms: Vec<(Vec<f64>, f64)> = mu1
        .points
        .iter()
        .zip(&mu1.weights)
        .filter_map(|(x, w)| Some((unit_position(spec, x)?, *w)))
        .collect();
    let cell_u = |ix: &[usize]| -> Vec<f64> {
        ix.iter()
            .zip(&spec.axes)
            .map(|(&i, ax)| (i as f64 + 0.5) / ax.res as f64)
            .collect()
    };
    let mut worst: f64 = 0.0;
    for level in 0..=depth {
        let nbox = 1usize << (level as usize * dim);
        let mut diff = vec![0.0; nbox];
        for (u, w) in &atoms {
            diff[box_index(level, u)] += w;
        }
        for (idx, m) in mu2.masses.iter().enumerate() {
            if *m != 0.0 {
                diff[box_index(level, &cell_u(&spec.unravel(idx)))] -= m;
            }
        }
        worst = diff.iter().fold(worst, |acc, x| acc.max(x.abs()));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Experiments

/// One parameter set of an equidistribution schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScheduleEntry {
    /// Exact-type points of `PCF(m̄, n̄)`.
    Pcf { m: Vec<usize>, n: Vec<usize> },
    /// `Per*(m̄, w̄)`.
    PerStar { m: Vec<usize>, w: Vec<Complex64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistRow {
    pub k: usize,
    pub entry: ScheduleEntry,
    pub atoms: usize,
    pub discrepancy: Option<f64>,
    pub error: Option<String>,
}

/// Whether a sequence trends down: the last value is below `ratio_bound`
/// times the first, and at most one step increases, by at most
/// `violation_bound` relative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub first: f64,
    pub last: f64,
    pub ratio: f64,
    pub violations: usize,
    pub max_violation: f64,
    pub passed: bool,
}

pub const TREND_RATIO: f64 = 0.5;
pub const TREND_VIOLATION: f64 = 0.10;

pub fn trend(seq: &[f64]) -> TrendCheck {
    let first = seq.first().copied().unwrap_or(f64::NAN);
    let last = seq.last().copied().unwrap_or(f64::NAN);
    let mut violations = 0;
    let mut max_violation: f64 = 0.0;
    for w in seq.windows(2) {
        if w[1] > w[0] {
            violations += 1;
            max_violation = max_violation.max((w[1] - w[0]) / w[0]);
        }
    }
    let ratio = last / first;
    TrendCheck {
        first,
        last,
        ratio,
        violations,
        max_violation,
        passed: seq.len() >= 2 && ratio < TREND_RATIO && violations <= 1 && max_violation <= TREND_VIOLATION,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistReport {
    pub d: usize,
    pub depth: u32,
    pub grid_raw_total: f64,
    pub grid_clipped_fraction: f64,
    pub rows: Vec<EquidistRow>,
    pub trend: TrendCheck,
}

/// Atoms for one schedule entry.
pub fn schedule_atoms(d: usize, entry: &ScheduleEntry, opts: &SolveOptions) -> Result<AtomicMeasure> {
    match entry {
        ScheduleEntry::Pcf { m, n } => atomic_from(&solve_with(d, m, n, opts)?, AtomFilter::ExactType),
        ScheduleEntry::PerStar { m, w } => {
            let set = per_star_solve(d, m, w)?;
            if !set.failures.is_empty() {
                return Err(Error::Numerical(format!("{} continuation paths failed", set.failures.len())));
            }
            atomic_from_per_star(&set)
        }
    }
}

/// Discrepancy of each schedule entry against `grid`; failures are recorded
/// per entry and the run continues.
pub fn equidist_experiment(d: usize, schedule: &[ScheduleEntry], grid: &GridMeasure, depth: u32, opts: &SolveOptions) -> Result<EquidistReport> {
    equidist_experiment_observed(d, schedule, grid, depth, opts, &mut |_, _| {})
}

/// [`equidist_experiment`], handing each entry's atoms to `observe` in
/// schedule order.
pub fn equidist_experiment_observed(
    d: usize,
    schedule: &[ScheduleEntry],
    grid: &GridMeasure,
    depth: u32,
    opts: &SolveOptions,
    observe: &mut dyn FnMut(usize, &AtomicMeasure),
) -> Result<EquidistReport> {
    if schedule.is_empty() {
        return Err(Error::invalid("empty schedule"));
    }
    if grid.spec.d != d {
        return Err(Error::invalid("grid degree does not match the schedule"));
    }
    let runs: Vec<Result<(AtomicMeasure, f64)>> = schedule
        .par_iter()
        .map(|entry| {
            let mu = schedule_atoms(d, entry, opts)?;
            let disc = discrepancy(&mu, grid, depth)?;
            Ok((mu, disc))
        })
        .collect();
    let mut rows = Vec::with_capacity(schedule.len());
    for (k, (entry, run)) in schedule.iter().zip(runs).enumerate() {
        rows.push(match run {
            Ok((mu, disc)) => {
                observe(k, &mu);
                EquidistRow {
                    k,
                    entry: entry.clone(),
                    atoms: mu.points.len(),
                    discrepancy: Some(disc),
                    error: None,
                }
            }
            Err(e) => EquidistRow {
                k,
                entry: entry.clone(),
                atoms: 0,
                discrepancy: None,
                error: Some(e.to_string()),
            },
        });
    }
    let seq: Vec<f64> = rows.iter().filter_map(|r| r.discrepancy).collect();
    Ok(EquidistReport {
        d,
        depth,
        grid_raw_total: grid.raw_total,
        grid_clipped_fraction: grid.clipped_fraction,
        trend: trend(&seq),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcf_solver::solve;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn plane(res: usize) -> GridSpec {
        GridSpec::a_plane(2, vec![], 2.56, res)
    }

    #[test]
    fn d2_measure_mass_support_and_symmetry() {
        let spec = plane(256);
        let mu = mu_bif_d2(&spec, 1e-10).unwrap();
        assert!((mu.raw_total - 1.0).abs() < 0.1, "raw mass {}", mu.raw_total);
        assert!(!mu.unreliable);
        assert!(mu.masses.iter().all(|m| *m >= 0.0));
        assert!((mu.total() - 1.0).abs() < 1e-12);
        assert!(mu.mass_in_escape_box().unwrap() > 0.99);
        // The connectedness locus in a lies in |a| ≤ 2 (c = a²/2, |c| ≤ 2).
        assert!(mu.mass_where(|x| x[0].norm() <= 2.05) > 0.99);
        let n = 256;
        for i in 0..n {
            for j in 0..n {
                let m1 = mu.masses[spec.ravel(&[i, j])];
                let m2 = mu.masses[spec.ravel(&[n - 1 - i, n - 1 - j])];
                assert!((m1 - m2).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn atomic_examples() {
        let one = AtomicMeasure::uniform(vec![vec![c(0.3, 0.1)]]).unwrap();
        assert_eq!(one.weights, vec![1.0]);
        assert!(AtomicMeasure::uniform(vec![]).is_err());
        let sols = solve(2, &[3], &[0]).unwrap();
        let mu = atomic_from(&sols, AtomFilter::ExactType).unwrap();
        assert_eq!(mu.points.len(), 6);
        assert!((mu.total() - 1.0).abs() < 1e-12);
        for x in &mu.points {
            assert!(mu.points.iter().any(|y| (y[0] + x[0]).norm() < 1e-9));
        }
        // Exact-type atoms are exactly the points classify() puts in PCF*.
        let all = atomic_from(&sols, AtomFilter::All).unwrap();
        let exact_by_classify = sols
            .points
            .iter()
            .filter(|p| p.classification.critical().is_some_and(|cl| cl[0].preperiod == 0 && cl[0].period == 3))
            .count();
        assert_eq!(exact_by_classify, mu.points.len());
        assert!(all.points.len() > mu.points.len());
    }

    #[test]
    fn discrepancy_examples() {
        let spec = plane(64);
        let grid = mu_bif_d2(&spec, 1e-10).unwrap();
        // A point mass against the grid at depth 0 sees only the total.
        let far = AtomicMeasure::uniform(vec![vec![c(100.0, 0.0)]]).unwrap();
        let d0 = discrepancy(&far, &grid, 0).unwrap();
        assert!((d0 - grid.total()).abs() < 1e-12);
        let inside = AtomicMeasure::uniform(vec![vec![c(0.1, 0.2)]]).unwrap();
        assert!(discrepancy(&inside, &grid, 0).unwrap() < 1e-12);
        assert!((discrepancy(&inside, &grid, 0).unwrap() - (1.0 - grid.total()).abs()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn binning_is_consistent(xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..40), depth in 0u32..5) {
            let spec = plane(32);
            let mu = AtomicMeasure::uniform(xs.iter().map(|(a, b)| vec![c(*a, *b)]).collect()).unwrap();
            let binned = bin_atomic(&mu, &spec);
            let disc = discrepancy(&mu, &binned, depth).unwrap();
            // Only atoms sitting on cell boundaries can be assigned differently.
            let touching = mu.points.iter().filter(|x| {
                spec.axes.iter().any(|ax| {
                    let v = if ax.part == Part::Re { x[0].re } else { x[0].im };
                    let u = (v - ax.min) / ax.step();
                    (u - u.round()).abs() < 1e-9
                })
            }).count();
            prop_assert!(disc <= 2.0 * touching as f64 / mu.points.len() as f64 + 1e-12);
            prop_assert!(binned.masses.iter().all(|m| *m >= 0.0));
        }
    }

    #[test]
    fn trend_rule() {
        assert!(trend(&[1.0, 0.8, 0.82, 0.4]).passed);
        assert!(!trend(&[1.0, 0.8, 0.95, 0.4]).passed);
        assert!(!trend(&[1.0, 0.9, 0.8]).passed);
        assert!(!trend(&[1.0, 0.3, 0.31, 0.2, 0.21]).passed);
    }

    #[test]
    fn equidist_runs_and_records_failures() {
        let grid = mu_bif_d2(&plane(64), 1e-10).unwrap();
        assert!(equidist_experiment(2, &[], &grid, 3, &SolveOptions::default()).is_err());
        let schedule = vec![
            ScheduleEntry::Pcf { m: vec![3], n: vec![0] },
            ScheduleEntry::Pcf { m: vec![20], n: vec![0] },
            ScheduleEntry::PerStar { m: vec![3], w: vec![c(0.5, 0.0)] },
        ];
        let rep = equidist_experiment(2, &schedule, &grid, 3, &SolveOptions::default()).unwrap();
        assert!(rep.rows[0].discrepancy.is_some());
        assert!(rep.rows[1].error.is_some());
        assert!(rep.rows[2].discrepancy.is_some());
    }

    /// The connectedness locus sits in |c| ≤ 3.4, |a| ≤ 1.5.
    fn d3_spec(res: usize) -> GridSpec {
        let mut spec = GridSpec::full_d3(4.0, res);
        for ax in spec.axes.iter_mut().filter(|ax| ax.coord == 1) {
            ax.min = -2.0;
            ax.max = 2.0;
        }
        spec
    }

    fn dyadic_masses(mu: &GridMeasure, level: u32) -> Vec<f64> {
        let dim = mu.spec.axes.len();
        let mut out = vec![0.0; 1 << (level as usize * dim)];
        for (idx, m) in mu.masses.iter().enumerate() {
            let ix = mu.spec.unravel(idx);
            let u: Vec<f64> = ix.iter().zip(&mu.spec.axes).map(|(&i, ax)| (i as f64 + 0.5) / ax.res as f64).collect();
            out[box_index(level, &u)] += m;
        }
        out
    }

    fn field_of(spec: &GridSpec, u: impl Fn(&[Complex64]) -> f64) -> GridField {
        let values = (0..spec.len()).map(|i| u(&spec.cell_coords(&spec.unravel(i)))).collect();
        GridField { spec: spec.clone(), values, failed_cells: 0 }
    }

    #[test]
    fn monge_ampere_matches_fubini_study() {
        // (dd^c ½log(1+|z|²))² = 2 / (π² (1+|z|²)³) dV, of total mass 1.
        let spec = GridSpec::full_d3(2.0, 20);
        let f = field_of(&spec, |x| 0.5 * (1.0 + x[0].norm_sqr() + x[1].norm_sqr()).ln());
        let m = monge_ampere_masses(&f, &f.values).unwrap();
        let vol = spec.cell_volume();
        let mut worst: f64 = 0.0;
        for idx in 0..spec.len() {
            let ix = spec.unravel(idx);
            if !is_interior(&spec, &ix) {
                continue;
            }
            let x = spec.cell_coords(&ix);
            let r2 = x[0].norm_sqr() + x[1].norm_sqr();
            let exact = 2.0 / (PI * PI * (1.0 + r2).powi(3)) * vol;
            worst = worst.max((m[idx] - exact).abs() / exact);
        }
        assert!(worst < 0.05, "relative error {worst}");
    }

    #[test]
    fn d3_measure_properties() {
        let spec = d3_spec(20);
        let a = mu_bif_d3(&spec, 0.3, 1e-8).unwrap();
        let b = mu_bif_d3(&spec, 0.4, 1e-8).unwrap();
        assert!(a.masses.iter().all(|m| *m >= 0.0));
        assert!(!a.slice);
        assert!(!a.unreliable && !b.unreliable);
        assert!(a.raw_total > 0.7 && a.raw_total < 1.05, "raw mass {}", a.raw_total);
        // Coarse boxes barely notice the smoothing radius.
        let (ma, mb) = (dyadic_masses(&a, 1), dyadic_masses(&b, 1));
        for (x, y) in ma.iter().zip(&mb) {
            if x.max(*y) > 0.02 {
                assert!((x - y).abs() / x.max(*y) < 0.1, "{x} vs {y}");
            }
        }
        // (c, a) ↦ (c, ζa): mass in the three sectors of arg a agrees.
        let sector = |k: usize| {
            a.mass_where(|x| {
                let t = x[1].arg().rem_euclid(std::f64::consts::TAU);
                let lo = std::f64::consts::TAU * k as f64 / 3.0 + 0.1;
                t >= lo && t < lo + std::f64::consts::TAU / 3.0
            })
        };
        let s: Vec<f64> = (0..3).map(sector).collect();
        for k in 0..3 {
            assert!((s[k] - s[(k + 1) % 3]).abs() < 0.1 * s[k].max(1e-12), "{s:?}");
        }
    }

    #[test]
    fn d3_measure_vanishes_deep_in_components() {
        // G vanishes on a neighbourhood of each center, so the unsmoothed
        // Monge-Ampère density is zero on a small grid around it.
        let mut tested = 0;
        for m in [[1, 1], [1, 2], [2, 1], [2, 2]] {
            for p in solve(3, &m, &[0, 0]).unwrap().exact_points() {
                if tested == 10 {
                    break;
                }
                let hw = 0.01;
                let axes = (0..4)
                    .map(|k| {
                        let z = p.coords[k / 2];
                        let (coord, part, mid) = if k % 2 == 0 { (k / 2, Part::Re, z.re) } else { (k / 2, Part::Im, z.im) };
                        Axis { coord, part, min: mid - hw, max: mid + hw, res: 5 }
                    })
                    .collect();
                let spec = GridSpec { d: 3, base: p.coords.clone(), axes };
                let mu = mu_bif_d3(&spec, 0.0, 1e-10).unwrap();
                let ix = cell_of(&spec, &p.coords).unwrap();
                let density = mu.masses[spec.ravel(&ix)] * mu.raw_total / spec.cell_volume();
                assert!(density < 1e-6, "density {density} at {:?}", p.coords);
                tested += 1;
            }
        }
        assert_eq!(tested, 10);
    }

    #[test]
    fn d3_slice_is_flagged() {
        let spec = GridSpec {
            d: 3,
            base: vec![c(0.0, 0.0), c(0.0, 0.0)],
            axes: vec![
                Axis { coord: 1, part: Part::Re, min: -2.0, max: 2.0, res: 32 },
                Axis { coord: 1, part: Part::Im, min: -2.0, max: 2.0, res: 32 },
            ],
        };
        let mu = mu_bif_d3(&spec, 0.0, 1e-8).unwrap();
        assert!(mu.slice);
        assert!(mu_bif_d2(&spec, 1e-8).is_err());
    }
}
