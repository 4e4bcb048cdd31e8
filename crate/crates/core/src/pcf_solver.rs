//! Postcritically finite parameters: the systems `P^{m_i}(c_i) = P^{n_i}(c_i)`,
//! their complete solution sets with multiplicity, and per-point
//! classification (exact preperiod and period, transversality, critical
//! orbit relations).
//!
//! The equations see `a` only through `s = a^d`, so solving happens in the
//! chart `t = a^2` (d = 2) or `(c, s = a^3)` (d = 3) and solutions are lifted
//! to all `d` values of `a` afterwards. Each equation is split along
//! `P(z) - P(w) = (z - w) Q(z, w)`:
//!
//! `P^m(c_i) - P^n(c_i) = (x_p - c_i) · Π_{j<n} Q(x_{j+p}, x_j)`, `p = m - n`,
//!
//! and the `j = 0` factor splits once more as `(x_p - c_i) R_i(x_p)`. Every
//! factor has simple roots generically, which keeps the numerics well
//! conditioned; multiplicities are bookkept exactly.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle_dynamics::{build_portraits, divisors, mobius};
use crate::error::{Error, Result};
use crate::exact::{rat, GaussRat, Rational, Scalar};
use crate::numeric::{aberth, aberth_with_state, determinant, min_separation, solve_linear, Jet};
use crate::poly_family::{symbolic_iterate_with_budget, ExactPoint, FloatPoint, DEFAULT_DEGREE_BUDGET};
use crate::symbolic::SymbolicPoly;

/// Default cap on the Bezout number `d^{|m|}`.
pub const DEFAULT_BEZOUT_CAP: u64 = 5000;
/// Bumped whenever solver output could change; part of cache keys.
pub const SOLVER_VERSION: &str = "pcf-solver-1";
/// Largest denominator tried when snapping to Gaussian rationals.
pub const SNAP_MAX_DEN: i64 = 64;
/// Default tolerance for orbit collisions in [`classify`].
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-7;
/// A collision is accepted only if every other orbit distance is this many
/// times larger.
pub const CLASSIFY_MARGIN: f64 = 10.0;
/// Endpoints closer than this (relative) merge when both are singular.
pub const CLUSTER_RADIUS: f64 = 1e-6;

const AROOT_RADIUS_D2: f64 = 4.5;
const EXACT_CHECK_BITS: u64 = 400_000;

type J = Jet<2>;

fn cx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Checks `d ∈ {2, 3}`, `d-1` indices and `m_i > n_i ≥ 0`.
pub fn validate_indices(d: usize, m: &[usize], n: &[usize]) -> Result<()> {
    if d != 2 && d != 3 {
        return Err(Error::invalid(format!("solver supports d = 2 or 3, got {d}")));
    }
    if m.len() != d - 1 || n.len() != d - 1 {
        return Err(Error::invalid(format!("need {} pairs (m_i, n_i)", d - 1)));
    }
    for (mi, ni) in m.iter().zip(n) {
        if mi <= ni {
            return Err(Error::invalid(format!("need m_i > n_i, got ({mi}, {ni})")));
        }
    }
    Ok(())
}

/// `d^{|m|}`, saturating.
pub fn bezout_number(d: usize, m: &[usize]) -> u64 {
    let total: usize = m.iter().sum();
    (d as u64).checked_pow(total as u32).unwrap_or(u64::MAX)
}

/// The exact equations `P^{m_i}(c_i) - P^{n_i}(c_i)` in `(c_1, …, a)`.
pub fn build_system(d: usize, m: &[usize], n: &[usize]) -> Result<Vec<SymbolicPoly>> {
    build_system_with_budget(d, m, n, DEFAULT_DEGREE_BUDGET)
}

pub fn build_system_with_budget(d: usize, m: &[usize], n: &[usize], budget: u64) -> Result<Vec<SymbolicPoly>> {
    validate_indices(d, m, n)?;
    (0..d - 1)
        .map(|i| {
            let hi = symbolic_iterate_with_budget(d, i, m[i] as u32, budget)?;
            let lo = symbolic_iterate_with_budget(d, i, n[i] as u32, budget)?;
            Ok(hi.sub(&lo))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Chart arithmetic

/// Jets of the solve variables: `[t]` for d = 2, `[c, s]` for d = 3.
fn chart_vars(d: usize, u: [Complex64; 2]) -> (J, J) {
    if d == 2 {
        (J::constant(cx(0.0)), J::var(u[0], 0))
    } else {
        (J::var(u[0], 0), J::var(u[1], 1))
    }
}

fn step(d: usize, c: &J, s: &J, z: &J) -> J {
    if d == 2 {
        z.mul(z).scale(cx(0.5)).add(s)
    } else {
        let lin = z.scale(cx(1.0 / 3.0)).sub(&c.scale(cx(0.5)));
        z.mul(z).mul(&lin).add(s)
    }
}

/// `(P(z) - P(w)) / (z - w)`.
fn q_pair(d: usize, c: &J, z: &J, w: &J) -> J {
    if d == 2 {
        z.add(w).scale(cx(0.5))
    } else {
        let quad = z.mul(z).add(&z.mul(w)).add(&w.mul(w)).scale(cx(1.0 / 3.0));
        quad.sub(&c.mul(&z.add(w)).scale(cx(0.5)))
    }
}

fn critical_jet(crit: usize, c: &J) -> J {
    if crit == 0 {
        J::constant(cx(0.0))
    } else {
        *c
    }
}

fn orbit_jets(d: usize, c: &J, s: &J, crit: usize, len: usize) -> Vec<J> {
    let mut out = Vec::with_capacity(len + 1);
    out.push(critical_jet(crit, c));
    for k in 0..len {
        let next = step(d, c, s, &out[k]);
        out.push(next);
    }
    out
}

/// Total degree of `P^k(c_i)` in the chart variables.
fn orbit_degree(d: usize, crit: usize, k: usize) -> u64 {
    let d = d as u64;
    match (crit, k) {
        (0, 0) => 0,
        (0, k) => d.pow(k as u32 - 1),
        (_, k) => d.pow(k as u32),
    }
}

/// `P^{m}(c_i) - P^{n}(c_i)` as a jet in the chart variables.
fn equation_jet(d: usize, u: [Complex64; 2], crit: usize, m: usize, n: usize) -> J {
    let (c, s) = chart_vars(d, u);
    let orb = orbit_jets(d, &c, &s, crit, m);
    orb[m].sub(&orb[n])
}

/// One irreducible-in-spirit piece of `P^m(c_i) - P^n(c_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    /// `P^p(c_i) - c_i`.
    Center { crit: usize, p: usize },
    /// `R_i(P^p(c_i))` with `P(z) - P(c_i) = (z - c_i)^2 R_i(z)` (d = 3 only).
    Cocritical { crit: usize, p: usize },
    /// `Q(P^{j+p}(c_i), P^j(c_i))`, `j ≥ 1`.
    Collide { crit: usize, j: usize, p: usize },
}

impl Factor {
    /// Total degree in the chart variables.
    pub fn degree(&self, d: usize) -> u64 {
        match *self {
            Factor::Center { crit, p } | Factor::Cocritical { crit, p } => orbit_degree(d, crit, p),
            Factor::Collide { crit, j, p } => (d as u64 - 1) * orbit_degree(d, crit, j + p),
        }
    }

    fn eval(&self, d: usize, u: [Complex64; 2]) -> J {
        let (c, s) = chart_vars(d, u);
        match *self {
            Factor::Center { crit, p } => {
                let orb = orbit_jets(d, &c, &s, crit, p);
                orb[p].sub(&orb[0])
            }
            Factor::Cocritical { crit, p } => {
                let orb = orbit_jets(d, &c, &s, crit, p);
                let k = if crit == 0 { -0.5 } else { 1.0 / 6.0 };
                orb[p].scale(cx(1.0 / 3.0)).add(&c.scale(cx(k)))
            }
            Factor::Collide { crit, j, p } => {
                let orb = orbit_jets(d, &c, &s, crit, j + p);
                q_pair(d, &c, &orb[j + p], &orb[j])
            }
        }
    }
}

/// The factors of `P^m(c_i) - P^n(c_i)` with multiplicities. Up to the
/// constant `1/2` when `d = 2` and `n ≥ 1`, the product (with multiplicity)
/// is the equation itself.
pub fn factorization(d: usize, crit: usize, m: usize, n: usize) -> Vec<(Factor, usize)> {
    let p = m - n;
    let center = Factor::Center { crit, p };
    if n == 0 {
        return vec![(center, 1)];
    }
    let mut out = vec![(center, 2)];
    if d == 3 {
        out.push((Factor::Cocritical { crit, p }, 1));
    }
    out.extend((1..n).map(|j| (Factor::Collide { crit, j, p }, 1)));
    out
}

// ---------------------------------------------------------------------------
// Raw roots in the chart

#[derive(Clone, Debug)]
struct RawRoot {
    u: [Complex64; 2],
    mult: usize,
    singular: bool,
}

fn newton_ratio_1d(f: &Factor, t: Complex64) -> Complex64 {
    let (v, g) = f.eval(2, [t, cx(0.0)]).mantissa();
    v / g[0]
}

/// All roots of a single d = 2 factor in the `t = a^2` chart.
fn roots_d2(f: &Factor) -> Vec<(Complex64, bool)> {
    let deg = f.degree(2) as usize;
    if deg == 0 {
        return Vec::new();
    }
    let res = aberth(|t| newton_ratio_1d(f, t), deg, AROOT_RADIUS_D2, 3000);
    res.roots
        .into_par_iter()
        .map(|mut t| {
            let mut last = f64::INFINITY;
            for _ in 0..4 {
                let dt = newton_ratio_1d(f, t);
                if !(dt.re.is_finite() && dt.im.is_finite()) {
                    break;
                }
                t -= dt;
                last = dt.norm();
            }
            (t, !res.converged || !(last <= 1e-12 * (1.0 + t.norm())))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// d = 3: elimination of a^3 through an implicit resultant
//
// For a factor pair (A, B) both have constant leading coefficient in s = a^3,
// so with s_k(c) the roots of A(c, ·),
//     Res_s(A, B)(c) = const · Π_k B(c, s_k(c)),
// whose logarithmic derivative only needs Newton ratios along the branches.
// Aberth on this univariate function in c gives every solution; s follows by
// back-substitution and a Newton polish on the pair.

/// Roots in `c` of the eliminated system lie well inside this circle.
const CROOT_RADIUS_D3: f64 = 3.0;

/// Degree in `s = a^3` of a d = 3 factor.
fn s_degree(f: &Factor) -> usize {
    let orbit = |k: usize| if k == 0 { 0 } else { 3usize.pow(k as u32 - 1) };
    match *f {
        Factor::Center { p, .. } | Factor::Cocritical { p, .. } => orbit(p),
        Factor::Collide { j, p, .. } => 2 * orbit(j + p),
    }
}

fn newton_in_s(f: &Factor, c: Complex64, s: Complex64) -> Complex64 {
    let (v, g) = f.eval(3, [c, s]).mantissa();
    v / g[1]
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// The roots `s_k(c)` of `f(c, ·)`, warm-started from `warm` when possible.
fn branches(f: &Factor, c: Complex64, warm: &[Complex64]) -> Option<Vec<Complex64>> {
    let deg = s_degree(f);
    if warm.len() == deg {
        let mut ok = true;
        let mut out = warm.to_vec();
        for s in out.iter_mut() {
            let mut conv = false;
            for _ in 0..8 {
                let ds = newton_in_s(f, c, *s);
                if !finite(ds) {
                    break;
                }
                *s -= ds;
                if ds.norm() <= 1e-13 * (1.0 + s.norm()) {
                    conv = true;
                    break;
                }
            }
            ok &= conv;
        }
        let scale = 1.0 + out.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if ok && (deg < 2 || min_separation(&out) > 1e-6 * scale) {
            return Some(out);
        }
    }
    let res = aberth_with_state(vec![(); deg], |_, s| newton_in_s(f, c, s), 2.0 + 2.0 * c.norm(), 1000);
    res.roots.iter().all(|z| finite(*z)).then_some(res.roots)
}

/// `f / f'` for `c ↦ Π_k B(c, s_k(c))`, refreshing the branches in `state`.
fn resultant_newton(a: &Factor, b: &Factor, c: Complex64, state: &mut Vec<Complex64>) -> Complex64 {
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let Some(br) = branches(a, c, state) else {
        return nan;
    };
    let mut sum = cx(0.0);
    for &s in &br {
        let (_, ga) = a.eval(3, [c, s]).mantissa();
        let (vb, gb) = b.eval(3, [c, s]).mantissa();
        if vb.norm() == 0.0 {
            *state = br;
            return cx(0.0);
        }
        let ds = -ga[0] / ga[1];
        sum += (gb[0] + gb[1] * ds) / vb;
    }
    *state = br;
    sum.inv()
}

/// Relative size of `|f|` at `u`.
fn rel_value(f: &Factor, u: [Complex64; 2]) -> f64 {
    let (v, g) = f.eval(3, u).mantissa();
    let gn = g.iter().fold(0.0f64, |m, x| m.max(x.norm()));
    v.norm() / gn.max(f64::MIN_POSITIVE) / (1.0 + norm2(&u))
}

fn norm2(u: &[Complex64; 2]) -> f64 {
    u[0].norm().max(u[1].norm())
}

/// Newton on the pair `(A, B)`; `singular` unless it settles quickly.
fn polish_pair(a: &Factor, b: &Factor, mut u: [Complex64; 2]) -> RawRoot {
    let mut quick = false;
    for it in 0..40 {
        let rows: Vec<(Complex64, [Complex64; 2])> = [a, b].iter().map(|f| f.eval(3, u).mantissa()).collect();
        let m = rows.iter().map(|(_, g)| g.to_vec()).collect();
        let rhs = rows.iter().map(|(v, _)| -*v).collect();
        let Some(du) = solve_linear(m, rhs) else { break };
        if !du.iter().all(|z| finite(*z)) {
            break;
        }
        u = [u[0] + du[0], u[1] + du[1]];
        let nd = du[0].norm().max(du[1].norm());
        if nd <= 1e-11 * (1.0 + norm2(&u)) && it < 6 {
            quick = true;
        }
        if nd <= 1e-15 * (1.0 + norm2(&u)) {
            break;
        }
    }
    RawRoot {
        u,
        mult: 1,
        singular: !quick,
    }
}

fn same_root(x: &RawRoot, y: &RawRoot) -> bool {
    norm2(&[x.u[0] - y.u[0], x.u[1] - y.u[1]]) <= 1e-9 * (1.0 + norm2(&x.u))
}

/// All solutions of the pair, eliminating `s` through whichever factor has
/// the smaller degree in it.
fn roots_d3_pair(a: Factor, b: Factor) -> Vec<RawRoot> {
    let (a, b) = if s_degree(&a) <= s_degree(&b) { (a, b) } else { (b, a) };
    let total = (a.degree(3) * b.degree(3)) as usize;
    if total == 0 {
        return Vec::new();
    }
    let res = aberth_with_state(
        vec![Vec::new(); total],
        |st, c| resultant_newton(&a, &b, c, st),
        CROOT_RADIUS_D3,
        3000,
    );
    // Group c-roots that coincide; within a group, successive members take
    // successively worse branches unless the better one is a multiple root.
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    for c in res.roots {
        match groups
            .iter_mut()
            .find(|g| (g[0] - c).norm() <= 1e-7 * (1.0 + c.norm()))
        {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    groups
        .into_par_iter()
        .flat_map_iter(|g| {
            let c0 = g[0];
            let mut cand: Vec<(f64, Complex64)> = branches(&a, c0, &[])
                .unwrap_or_default()
                .into_iter()
                .map(|s| (rel_value(&b, [c0, s]), s))
                .collect();
            cand.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut out: Vec<RawRoot> = Vec::new();
            for &c in &g {
                let mut pick = None;
                for &(_, s) in &cand {
                    let r = polish_pair(&a, &b, [c, s]);
                    let taken = out.iter().any(|o| !r.singular && same_root(o, &r));
                    if !taken {
                        pick = Some(r);
                        break;
                    }
                }
                let mut r = pick.unwrap_or_else(|| polish_pair(&a, &b, [c, cand.first().map_or(cx(0.0), |x| x.1)]));
                r.singular |= !res.converged;
                out.push(r);
            }
            out
        })
        .collect()
}

/// Merges raw roots: regular roots within `1e-10` (relative), singular ones
/// within [`CLUSTER_RADIUS`]; singular clusters are represented by their
/// centroid.
fn merge(raw: Vec<RawRoot>) -> Vec<RawRoot> {
    let mut clusters: Vec<(Vec<RawRoot>, usize)> = Vec::new();
    for r in raw {
        let scale = 1.0 + norm2(&r.u);
        let hit = clusters.iter().position(|(members, _)| {
            members.iter().any(|m| {
                let dist = norm2(&[m.u[0] - r.u[0], m.u[1] - r.u[1]]);
                let rad = if m.singular && r.singular { CLUSTER_RADIUS } else { 1e-10 };
                dist <= rad * scale
            })
        });
        match hit {
            Some(k) => {
                clusters[k].1 += r.mult;
                clusters[k].0.push(r);
            }
            None => {
                let mult = r.mult;
                clusters.push((vec![r], mult));
            }
        }
    }
    clusters
        .into_iter()
        .map(|(members, mult)| {
            let regular = members.iter().find(|m| !m.singular);
            let u = match regular {
                Some(m) => m.u,
                None => {
                    let k = members.len() as f64;
                    let mut acc = [cx(0.0); 2];
                    for m in &members {
                        acc[0] += m.u[0] / k;
                        acc[1] += m.u[1] / k;
                    }
                    acc
                }
            };
            RawRoot {
                u,
                mult,
                singular: regular.is_none() || members.len() > 1 && mult > 1 && members.iter().all(|m| m.singular),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Snapping and exact verification

fn snap_real(x: f64, tol: f64) -> Option<Rational> {
    if !x.is_finite() || x.abs() > 1e12 {
        return None;
    }
    (1..=SNAP_MAX_DEN).find_map(|q| {
        let p = (x * q as f64).round();
        ((x - p / q as f64).abs() <= tol).then(|| rat(p as i64, q))
    })
}

/// Nearest Gaussian rational with both denominators at most [`SNAP_MAX_DEN`],
/// when one lies within `tol` in each part.
pub fn snap_complex(z: Complex64, tol: f64) -> Option<GaussRat> {
    Some(GaussRat::new(snap_real(z.re, tol)?, snap_real(z.im, tol)?))
}

fn exact_iterates_equal(p: &ExactPoint, z0: &GaussRat, m: usize, n: usize) -> bool {
    let mut cur = z0.clone();
    let mut at_n = None;
    for k in 0..=m {
        if k == n {
            at_n = Some(cur.clone());
        }
        if k == m {
            break;
        }
        if cur.bit_size() > EXACT_CHECK_BITS {
            return false;
        }
        cur = p.eval(&cur);
    }
    at_n.as_ref() == Some(&cur)
}

/// True when `p` satisfies every equation of the system exactly.
pub fn verify_exact(p: &ExactPoint, m: &[usize], n: &[usize]) -> bool {
    let crit = p.critical_points();
    crit.iter()
        .enumerate()
        .all(|(i, ci)| exact_iterates_equal(p, ci, m[i], n[i]))
}

// ---------------------------------------------------------------------------
// Classification

/// Exact preperiod and period of one critical orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalClass {
    pub preperiod: usize,
    pub period: usize,
    /// Distance at the accepted collision.
    pub collision: f64,
    /// Smallest other orbit distance divided by `collision` (`f64::MAX` for
    /// an exact hit).
    pub margin: f64,
}

fn close(x: Complex64, y: Complex64, tol: f64) -> bool {
    (x - y).norm() <= tol * (1.0 + x.norm())
}

/// Minimal `(n_i, q_i)` with `P^{n_i}(c_i) ≈ P^{n_i+q_i}(c_i)` for every
/// critical point, scanning orbits up to `budget` iterates.
pub fn classify(p: &FloatPoint, tol: f64, budget: usize) -> Result<Vec<CriticalClass>> {
    p.critical_points()
        .iter()
        .enumerate()
        .map(|(i, ci)| {
            let orb = p.orbit(ci, budget).points;
            for k in 1..orb.len() {
                if let Some(j) = (0..k).find(|&j| close(orb[j], orb[k], tol)) {
                    let collision = (orb[j] - orb[k]).norm();
                    let mut runner_up = f64::INFINITY;
                    for b in 1..=k {
                        for a in 0..b {
                            if (a, b) != (j, k) {
                                runner_up = runner_up.min((orb[a] - orb[b]).norm());
                            }
                        }
                    }
                    let margin = if collision == 0.0 {
                        f64::MAX
                    } else {
                        (runner_up / collision).min(f64::MAX)
                    };
                    if margin < CLASSIFY_MARGIN {
                        return Err(Error::NotPcf(format!(
                            "critical point {i}: ambiguous collision at ({j}, {k}), margin {margin:.3}"
                        )));
                    }
                    return Ok(CriticalClass {
                        preperiod: j,
                        period: k - j,
                        collision,
                        margin,
                    });
                }
            }
            Err(Error::NotPcf(format!(
                "critical point {i}: no collision within {budget} iterates"
            )))
        })
        .collect()
}

/// A coincidence `P^l(c_i) = P^{l'}(c_j)` between distinct critical orbits;
/// `(l, l') = (0, 0)` is a degenerate critical point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalRelation {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub lp: usize,
}

/// All relations with `l, l' ≤ depth` at tolerance `tol`.
pub fn critical_relations(p: &FloatPoint, depth: usize, tol: f64) -> Vec<CriticalRelation> {
    let orbits: Vec<Vec<Complex64>> = p
        .critical_points()
        .iter()
        .map(|ci| p.orbit(ci, depth).points)
        .collect();
    let mut out = Vec::new();
    for i in 0..orbits.len() {
        for j in i + 1..orbits.len() {
            for (l, x) in orbits[i].iter().enumerate() {
                for (lp, y) in orbits[j].iter().enumerate() {
                    if close(*x, *y, tol) {
                        out.push(CriticalRelation { i, j, l, lp });
                    }
                }
            }
        }
    }
    out
}

/// Jacobian determinants of the system at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    /// `|det ∂F/∂(c, a)|`.
    pub det: f64,
    /// `|det ∂F/∂(c, a^d)|`; differs from `det` by `d |a|^{d-1}` and stays
    /// meaningful at `a = 0`, where the `a`-chart is ramified.
    pub chart_det: f64,
}

fn chart_point(p: &FloatPoint) -> [Complex64; 2] {
    let s = p.a().powu(p.d() as u32);
    if p.d() == 2 {
        [s, cx(0.0)]
    } else {
        [p.c()[0], s]
    }
}

/// Jacobian of `(P^{m_i}(c_i) - P^{n_i}(c_i))_i` at `p`.
pub fn transversality(p: &FloatPoint, m: &[usize], n: &[usize]) -> Result<Transversality> {
    let d = p.d();
    validate_indices(d, m, n)?;
    let u = chart_point(p);
    let rows: Vec<Vec<Complex64>> = (0..d - 1)
        .map(|i| equation_jet(d, u, i, m[i], n[i]).grad()[..d - 1].to_vec())
        .collect();
    let chart = determinant(rows).norm();
    let ramification = d as f64 * p.a().norm().powi(d as i32 - 1);
    Ok(Transversality {
        det: chart * ramification,
        chart_det: chart,
    })
}

/// Normalized residual `max_i |F_i| / max(1, |∇F_i| · max(1, |u|))` in the
/// solve chart; a backward-error proxy that stays meaningful for equations
/// of very high degree.
pub fn residual(p: &FloatPoint, m: &[usize], n: &[usize]) -> f64 {
    let d = p.d();
    let u = chart_point(p);
    let scale = norm2(&u).max(1.0);
    (0..d - 1)
        .map(|i| {
            let f = equation_jet(d, u, i, m[i], n[i]);
            let g = f.grad();
            let gn = g[..d - 1].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            f.value().norm() / (gn * scale).max(1.0)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Solution sets

/// Classification status of a solution point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Classification {
    Resolved { critical: Vec<CriticalClass> },
    Unresolved { reason: String },
}

impl Classification {
    pub fn critical(&self) -> Option<&[CriticalClass]> {
        match self {
            Classification::Resolved { critical } => Some(critical),
            Classification::Unresolved { .. } => None,
        }
    }

    /// True when critical point `i` has exact preperiod `n_i` and period `m_i - n_i`.
    pub fn is_exact(&self, m: &[usize], n: &[usize]) -> bool {
        self.critical().is_some_and(|cls| {
            cls.iter()
                .enumerate()
                .all(|(i, c)| c.preperiod == n[i] && c.period == m[i] - n[i])
        })
    }
}

/// One distinct solution together with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint {
    /// `(c_1, …, c_{d-2}, a)`.
    pub coords: Vec<Complex64>,
    /// Verified exact coordinates when the point snapped to a Gaussian rational.
    #[serde(with = "opt_gauss_vec")]
    pub exact: Option<Vec<GaussRat>>,
    pub multiplicity: usize,
    pub residual: f64,
    pub classification: Classification,
    pub jacobian_det: f64,
    pub chart_det: f64,
    pub critical_relations: Vec<CriticalRelation>,
    /// Part of a root cluster or slow to converge.
    pub ill_conditioned: bool,
}

impl SolutionPoint {
    pub fn to_point(&self, d: usize) -> FloatPoint {
        let (a, c) = self.coords.split_last().expect("nonempty");
        FloatPoint::new(d, c.to_vec(), *a).expect("shape checked at construction")
    }

    pub fn exact_point(&self, d: usize) -> Option<ExactPoint> {
        let ex = self.exact.as_ref()?;
        let (a, c) = ex.split_last()?;
        ExactPoint::new(d, c.to_vec(), a.clone()).ok()
    }
}

mod opt_gauss_vec {
    use super::GaussRat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Vec<GaussRat>>, s: S) -> Result<S::Ok, S::Error> {
        x.as_ref()
            .map(|v| v.iter().map(|g| g.to_string()).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<GaussRat>>, D::Error> {
        let o: Option<Vec<String>> = Option::deserialize(d)?;
        o.map(|v| {
            v.iter()
                .map(|s| GaussRat::parse(s).map_err(serde::de::Error::custom))
                .collect()
        })
        .transpose()
    }
}

/// All solutions of `PCF(m̄, n̄)` with multiplicity, plus solver metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcfSolutionSet {
    pub d: usize,
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub points: Vec<SolutionPoint>,
    pub method: String,
    pub bezout: u64,
    pub max_residual: f64,
    pub classify_tol: f64,
    pub version: String,
}

impl PcfSolutionSet {
    pub fn total_multiplicity(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity).sum()
    }

    /// Points of `PCF*(m̄, n̄)`: exact preperiods `n_i` and periods `m_i - n_i`.
    pub fn exact_points(&self) -> Vec<&SolutionPoint> {
        self.points
            .iter()
            .filter(|p| p.classification.is_exact(&self.m, &self.n))
            .collect()
    }

    /// `re,im` columns per coordinate plus multiplicity.
    pub fn to_csv(&self) -> String {
        let mut names: Vec<String> = (1..self.d - 1).map(|i| format!("c{i}")).collect();
        names.push("a".into());
        let mut out = String::new();
        for nm in &names {
            out.push_str(&format!("{nm}_re,{nm}_im,"));
        }
        out.push_str("multiplicity\n");
        for p in &self.points {
            for z in &p.coords {
                out.push_str(&format!("{:.17e},{:.17e},", z.re, z.im));
            }
            out.push_str(&format!("{}\n", p.multiplicity));
        }
        out
    }
}

/// Knobs for [`solve_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub bezout_cap: u64,
    pub classify_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            bezout_cap: DEFAULT_BEZOUT_CAP,
            classify_tol: DEFAULT_CLASSIFY_TOL,
        }
    }
}

pub fn solve(d: usize, m: &[usize], n: &[usize]) -> Result<PcfSolutionSet> {
    solve_with(d, m, n, &SolveOptions::default())
}

/// Every complex solution of `P^{m_i}(c_i) = P^{n_i}(c_i)`, `0 ≤ i ≤ d-2`.
pub fn solve_with(d: usize, m: &[usize], n: &[usize], opts: &SolveOptions) -> Result<PcfSolutionSet> {
    validate_indices(d, m, n)?;
    let bezout = bezout_number(d, m);
    if bezout > opts.bezout_cap {
        return Err(Error::budget(format!("Bezout number {d}^{} = {bezout}", m.iter().sum::<usize>()), opts.bezout_cap));
    }
    let (raw, method) = if d == 2 {
        let mut raw = Vec::new();
        for (f, mult) in factorization(2, 0, m[0], n[0]) {
            raw.extend(roots_d2(&f).into_iter().map(|(t, singular)| RawRoot {
                u: [t, cx(0.0)],
                mult,
                singular,
            }));
        }
        (raw, "factored Aberth in the a^2 chart".to_string())
    } else {
        let fa = factorization(3, 0, m[0], n[0]);
        let fb = factorization(3, 1, m[1], n[1]);
        let mut raw = Vec::new();
        for (a, ma) in &fa {
            for (b, mb) in &fb {
                raw.extend(roots_d3_pair(*a, *b).into_iter().map(|mut r| {
                    r.mult = ma * mb;
                    r
                }));
            }
        }
        (raw, "factored elimination of a^3 by implicit resultant, Aberth in c".to_string())
    };
    let merged = merge(raw);
    let lifted: Vec<(Vec<Complex64>, Option<Vec<GaussRat>>, usize, bool)> = merged
        .par_iter()
        .flat_map_iter(|r| lift(d, m, n, r))
        .collect();
    let depth = m.iter().copied().max().unwrap_or(1) + 1;
    let mut points: Vec<SolutionPoint> = lifted
        .into_par_iter()
        .map(|(coords, exact, multiplicity, singular)| {
            let (a, c) = coords.split_last().expect("nonempty");
            let fp = FloatPoint::new(d, c.to_vec(), *a).expect("shape");
            let classification = match classify(&fp, opts.classify_tol, depth) {
                Ok(critical) => Classification::Resolved { critical },
                Err(e) => Classification::Unresolved { reason: e.to_string() },
            };
            let tr = transversality(&fp, m, n).expect("validated");
            SolutionPoint {
                residual: if exact.is_some() { 0.0 } else { residual(&fp, m, n) },
                critical_relations: critical_relations(&fp, depth, opts.classify_tol),
                coords,
                exact,
                multiplicity,
                classification,
                jacobian_det: tr.det,
                chart_det: tr.chart_det,
                ill_conditioned: singular,
            }
        })
        .collect();
    points.sort_by(|x, y| canonical_cmp(&x.coords, &y.coords));
    let max_residual = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok(PcfSolutionSet {
        d,
        m: m.to_vec(),
        n: n.to_vec(),
        points,
        method,
        bezout,
        max_residual,
        classify_tol: opts.classify_tol,
        version: SOLVER_VERSION.to_string(),
    })
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round()
}

/// Lexicographic order on coordinates rounded to `1e-9`.
pub fn canonical_cmp(x: &[Complex64], y: &[Complex64]) -> std::cmp::Ordering {
    let key = |v: &[Complex64]| v.iter().flat_map(|z| [round9(z.re), round9(z.im)]).collect::<Vec<f64>>();
    let (kx, ky) = (key(x), key(y));
    kx.iter()
        .zip(&ky)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// From a chart root to the `d` parameters `(c, ζ^k a)`; exact when the
/// coordinates snap and verify.
fn lift(d: usize, m: &[usize], n: &[usize], r: &RawRoot) -> Vec<(Vec<Complex64>, Option<Vec<GaussRat>>, usize, bool)> {
    let snap_tol = if r.singular { 1e-6 } else { 1e-9 };
    let s = if d == 2 { r.u[0] } else { r.u[1] };
    let c: Vec<Complex64> = if d == 2 { vec![] } else { vec![r.u[0]] };
    let zero_s = snap_complex(s, snap_tol).is_some_and(|x| x.is_zero());
    let exact_c: Option<Vec<GaussRat>> = c.iter().map(|z| snap_complex(*z, snap_tol)).collect();
    let try_exact = |a: Complex64| -> Option<Vec<GaussRat>> {
        let ea = if zero_s { GaussRat::zero() } else { snap_complex(a, snap_tol)? };
        let mut coords = exact_c.clone()?;
        coords.push(ea);
        let (ea, ec) = coords.split_last()?;
        let p = ExactPoint::new(d, ec.to_vec(), ea.clone()).ok()?;
        verify_exact(&p, m, n).then_some(coords)
    };
    let finish = |a: Complex64, mult: usize| {
        let exact = try_exact(a);
        let coords = match &exact {
            Some(ex) => ex.iter().map(|g| g.to_complex()).collect(),
            None => {
                let mut v = c.clone();
                v.push(a);
                v
            }
        };
        let singular = r.singular && exact.is_none();
        (coords, exact, mult, singular)
    };
    // a = 0 is the branch point of the lift: one point carrying all d sheets.
    if zero_s {
        return vec![finish(cx(0.0), d * r.mult)];
    }
    let root = s.powf(1.0 / d as f64);
    (0..d)
        .map(|k| {
            let a = if d == 2 && k == 1 {
                -root
            } else {
                root * Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / d as f64)
            };
            finish(a, r.mult)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Count audit

/// Counts of a solution set against the available bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountAudit {
    pub bezout: u64,
    pub total_multiplicity: usize,
    pub distinct: usize,
    /// Points with exact preperiods `n_i` and periods `m_i - n_i`.
    pub exact: usize,
    /// `Σ_{l|q} μ(q/l) d^l` for `d = 2` centers (`n = 0`), the count of
    /// exact-period-`q` parameters with multiplicity in the `a`-chart.
    pub mobius_expected: Option<u64>,
    /// Number of admissible critical portraits, when enumeration fit the budget.
    pub portrait_count: Option<usize>,
    /// Solutions on `{V = 0}` and their share of all distinct solutions.
    pub on_subvariety: Option<usize>,
    pub subvariety_ratio: Option<f64>,
}

/// Compares a solution set with Bezout, Möbius and portrait counts and,
/// when `v` is given, counts solutions on `{v = 0}` at tolerance `tol`.
pub fn count_audit(sols: &PcfSolutionSet, v: Option<&SymbolicPoly>, tol: f64) -> Result<CountAudit> {
    let exact: usize = sols.exact_points().iter().map(|p| p.multiplicity).sum();
    let mobius_expected = (sols.d == 2 && sols.n[0] == 0).then(|| {
        let q = sols.m[0] as u64;
        divisors(q)
            .into_iter()
            .map(|l| mobius(q / l) * 2i64.pow(l as u32))
            .sum::<i64>() as u64
    });
    let ms: Vec<u32> = sols.m.iter().map(|&x| x as u32).collect();
    let ns: Vec<u32> = sols.n.iter().map(|&x| x as u32).collect();
    let portrait_count = build_portraits(sols.d as u64, &ms, &ns, 1_000_000)
        .ok()
        .filter(|ps| !ps.truncated)
        .map(|ps| ps.portraits.len());
    let (on_subvariety, subvariety_ratio) = match v {
        None => (None, None),
        Some(v) => {
            let vars = crate::poly_family::family_vars(sols.d);
            if v.vars() != vars.as_slice() {
                return Err(Error::VariableMismatch(format!("expected variables {vars:?}")));
            }
            let k = sols
                .points
                .iter()
                .filter(|p| v.eval(&p.coords).norm() <= tol)
                .count();
            (Some(k), Some(k as f64 / sols.points.len().max(1) as f64))
        }
    };
    Ok(CountAudit {
        bezout: sols.bezout,
        total_multiplicity: sols.total_multiplicity(),
        distinct: sols.points.len(),
        exact,
        mobius_expected,
        portrait_count,
        on_subvariety,
        subvariety_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly_family::jacobian_of_system;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn build_system_examples() {
        let sys = build_system(2, &[1], &[0]).unwrap();
        assert_eq!(sys[0].to_canonical_string(), SymbolicPoly::var(&["a".into()], 0).pow(2).to_canonical_string());
        let sys = build_system(2, &[2], &[1]).unwrap();
        let a4 = SymbolicPoly::var(&["a".into()], 0).pow(4).scale(&rat(1, 2));
        assert_eq!(sys[0], a4);
        for (d, mmax) in [(2usize, 5usize), (3, 3)] {
            for mm in 1..=mmax {
                for nn in 0..mm {
                    let sys = build_system(d, &vec![mm; d - 1], &vec![nn; d - 1]).unwrap();
                    for eq in sys {
                        assert_eq!(eq.total_degree(), Some((d as u32).pow(mm as u32)));
                    }
                }
            }
        }
        assert!(build_system(2, &[1], &[1]).is_err());
        assert!(build_system(4, &[1, 1, 1], &[0, 0, 0]).is_err());
        assert!(matches!(
            build_system_with_budget(2, &[5], &[0], 16),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn factor_degrees_add_up() {
        for d in [2usize, 3] {
            for crit in 0..d - 1 {
                for m in 1..=6 {
                    for n in 0..m {
                        let total: u64 = factorization(d, crit, m, n)
                            .iter()
                            .map(|(f, k)| f.degree(d) * *k as u64)
                            .sum();
                        assert_eq!(total, orbit_degree(d, crit, m), "d={d} crit={crit} ({m},{n})");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn factorization_reproduces_the_equation(
            ur in -1.5f64..1.5, ui in -1.5f64..1.5, vr in -1.5f64..1.5, vi in -1.5f64..1.5,
            m in 1usize..5, n in 0usize..4, d in 2usize..4, crit in 0usize..2
        ) {
            prop_assume!(n < m && crit < d - 1);
            let u = [c(ur, ui), c(vr, vi)];
            let f = equation_jet(d, u, crit, m, n).value();
            let mut prod = c(if d == 2 && n >= 1 { 0.5 } else { 1.0 }, 0.0);
            for (fac, k) in factorization(d, crit, m, n) {
                prod *= fac.eval(d, u).value().powu(k as u32);
            }
            prop_assert!((f - prod).norm() <= 1e-9 * (1.0 + f.norm()), "{} vs {}", f, prod);
        }

        #[test]
        fn jacobian_matches_symbolic_route(ar in -1.2f64..1.2, ai in -1.2f64..1.2, cr in -1.2f64..1.2, ci in -1.2f64..1.2) {
            // The jet Jacobian in (c, a^3) times the chart factor against exact
            // symbolic differentiation in (c, a).
            let ea = GaussRat::from_complex(c(ar, ai));
            let ec = GaussRat::from_complex(c(cr, ci));
            let ep = ExactPoint::new(3, vec![ec], ea).unwrap();
            let sys = build_system(3, &[2, 2], &[1, 0]).unwrap();
            let j = jacobian_of_system(&ep, &sys).unwrap();
            let exact_det = crate::poly_family::determinant(&j).to_complex().norm();
            let tr = transversality(&ep.to_float(), &[2, 2], &[1, 0]).unwrap();
            prop_assert!((tr.det - exact_det).abs() <= 1e-9 * (1.0 + exact_det));
        }
    }

    #[test]
    fn solve_d2_examples() {
        let s = solve(2, &[1], &[0]).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].multiplicity, 2);
        assert_eq!(s.points[0].exact, Some(vec![GaussRat::zero()]));

        let s = solve(2, &[3], &[2]).unwrap();
        assert_eq!(s.total_multiplicity(), 8);
        let two_i = GaussRat::from_ints(0, 2);
        let minus_two_i = GaussRat::from_ints(0, -2);
        let exact: Vec<Vec<GaussRat>> = s.points.iter().filter_map(|p| p.exact.clone()).collect();
        assert!(exact.contains(&vec![two_i]) && exact.contains(&vec![minus_two_i]));
        let origin = s.points.iter().find(|p| p.coords[0].norm() < 1e-12).unwrap();
        assert_eq!(origin.multiplicity, 6);

        let s = solve(2, &[3], &[0]).unwrap();
        assert_eq!(s.total_multiplicity(), 8);
        let period3: usize = s.exact_points().iter().map(|p| p.multiplicity).sum();
        assert_eq!(period3, 6);
        // Brute force: every root of the a-polynomial, classified directly.
        let poly = build_system(2, &[3], &[0]).unwrap()[0].to_univariate(0).unwrap();
        let up = crate::upoly::UPoly::new(poly);
        let deriv = up.derivative();
        let coeffs = up.to_complex_coeffs();
        let newton = |z: Complex64| {
            let f = coeffs.iter().rev().fold(c(0.0, 0.0), |acc, k| acc * z + k);
            let dcs = deriv.to_complex_coeffs();
            let fp = dcs.iter().rev().fold(c(0.0, 0.0), |acc, k| acc * z + k);
            f / fp
        };
        let brute = aberth(newton, 8, 3.0, 4000);
        let brute_p3 = brute
            .roots
            .iter()
            .filter(|r| {
                let p = FloatPoint::new(2, vec![], **r).unwrap();
                classify(&p, 1e-6, 6).map(|cl| cl[0].period == 3 && cl[0].preperiod == 0).unwrap_or(false)
            })
            .count();
        assert_eq!(brute_p3, 6);
    }

    #[test]
    fn d2_invariants() {
        for (m, n) in [(4usize, 0usize), (5, 0), (4, 2), (5, 3), (6, 2)] {
            let s = solve(2, &[m], &[n]).unwrap();
            assert_eq!(s.total_multiplicity(), 1 << m, "({m},{n})");
            assert!(s.max_residual < 1e-10, "({m},{n}) residual {}", s.max_residual);
            for p in &s.points {
                // a ↦ -a closure, exactly.
                let neg: Vec<Complex64> = p.coords.iter().map(|z| -z).collect();
                assert!(s.points.iter().any(|q| q.coords == neg || (q.coords[0] - neg[0]).norm() == 0.0));
                let cl = p.classification.critical().expect("classified");
                assert!(cl[0].preperiod <= n && (m - n) % cl[0].period == 0);
            }
        }
    }

    #[test]
    fn exact_period_counts_follow_mobius() {
        for q in 1..=7usize {
            let s = solve(2, &[q], &[0]).unwrap();
            let audit = count_audit(&s, None, 1e-9).unwrap();
            assert_eq!(audit.exact as u64, audit.mobius_expected.unwrap(), "q = {q}");
            assert!(audit.total_multiplicity as u64 <= audit.bezout);
        }
    }

    #[test]
    fn genericity_ratio_on_a_line_shrinks() {
        let v = SymbolicPoly::var(&["a".into()], 0);
        let r: Vec<f64> = (2..=6)
            .map(|q| {
                let s = solve(2, &[q], &[0]).unwrap();
                count_audit(&s, Some(&v), 1e-9).unwrap().subvariety_ratio.unwrap()
            })
            .collect();
        assert!(r.windows(2).all(|w| w[1] <= w[0]) && r[4] < 0.05, "{r:?}");
    }

    #[test]
    fn classify_examples() {
        let p = FloatPoint::new(2, vec![], c(0.0, 0.0)).unwrap();
        let cl = classify(&p, 1e-9, 8).unwrap();
        assert_eq!((cl[0].preperiod, cl[0].period), (0, 1));
        let p = FloatPoint::new(2, vec![], c(0.0, 2.0)).unwrap();
        let cl = classify(&p, 1e-9, 8).unwrap();
        assert_eq!((cl[0].preperiod, cl[0].period), (2, 1));
        let p = FloatPoint::new(2, vec![], c(1.3, 0.4)).unwrap();
        assert!(matches!(classify(&p, 1e-9, 20), Err(Error::NotPcf(_))));
    }

    #[test]
    fn transversality_examples() {
        let p = FloatPoint::new(2, vec![], c(0.0, 2.0)).unwrap();
        let t = transversality(&p, &[3], &[2]).unwrap();
        // F(a) = z_3 - z_2 with exact derivative evaluated through the
        // symbolic route.
        let sys = build_system(2, &[3], &[2]).unwrap();
        let ep = ExactPoint::new(2, vec![], GaussRat::from_ints(0, 2)).unwrap();
        let j = jacobian_of_system(&ep, &sys).unwrap();
        assert!((t.det - j[0][0].to_complex().norm()).abs() < 1e-9 * t.det);
        assert!(t.det > 1.0);
        let p = FloatPoint::new(2, vec![], c(0.0, 0.0)).unwrap();
        let t = transversality(&p, &[1], &[0]).unwrap();
        assert_eq!(t.det, 0.0);
        assert!(t.chart_det > 0.5);
    }

    #[test]
    fn critical_relation_examples() {
        let p = FloatPoint::new(2, vec![], c(0.3, 0.1)).unwrap();
        assert!(critical_relations(&p, 10, 1e-8).is_empty());
        let p = FloatPoint::new(3, vec![c(0.0, 0.0)], c(0.4, 0.2)).unwrap();
        let rel = critical_relations(&p, 4, 1e-8);
        assert!(rel.contains(&CriticalRelation { i: 0, j: 1, l: 0, lp: 0 }));
    }

    #[test]
    fn solve_d3_small_and_symmetric() {
        for (m, n) in [([1usize, 1usize], [0usize, 0usize]), ([2, 1], [0, 0]), ([2, 2], [1, 0]), ([3, 2], [1, 1])] {
            let s = solve(3, &m, &n).unwrap();
            assert_eq!(s.total_multiplicity() as u64, bezout_number(3, &m), "{m:?} {n:?}");
            let zeta = Complex64::from_polar(1.0, std::f64::consts::TAU / 3.0);
            for p in &s.points {
                if !p.ill_conditioned {
                    assert!(p.residual < 1e-10, "{m:?} {n:?} residual {}", p.residual);
                }
                let rot = vec![p.coords[0], p.coords[1] * zeta];
                assert!(
                    s.points.iter().any(|q| (q.coords[0] - rot[0]).norm() < 1e-7 && (q.coords[1] - rot[1]).norm() < 1e-7),
                    "ζ-closure"
                );
            }
        }
    }

    #[test]
    fn d3_misiurewicz_points_are_transverse() {
        let m = [3usize, 2usize];
        let n = [1usize, 1usize];
        let s = solve(3, &m, &n).unwrap();
        let good: Vec<&SolutionPoint> = s
            .exact_points()
            .into_iter()
            .filter(|p| p.critical_relations.is_empty())
            .collect();
        assert!(!good.is_empty());
        for p in good {
            assert!(p.jacobian_det > 1e-8, "{:?}", p.coords);
        }
    }

    #[test]
    fn d3_unbalanced_degrees_swap_consistently() {
        // Swapping the roles of the two critical points exchanges the period
        // pair; counts must match and every regular root must be accurate.
        let x = solve(3, &[2, 4], &[0, 0]).unwrap();
        let y = solve(3, &[4, 2], &[0, 0]).unwrap();
        for s in [&x, &y] {
            assert_eq!(s.total_multiplicity() as u64, s.bezout);
            assert!(s.points.iter().all(|p| p.ill_conditioned || p.residual < 1e-10));
        }
        // A point on a = 0 stands for all three sheets of the a-chart, and
        // the swap does not preserve a = 0, so compare lifted counts.
        let lifted = |s: &PcfSolutionSet| -> usize { s.points.iter().map(|p| if p.coords[1] == c(0.0, 0.0) { 3 } else { 1 }).sum() };
        assert_eq!(lifted(&x), lifted(&y));
        assert_eq!(lifted(&x) as u64, x.bezout);
        assert_eq!(x.exact_points().len(), y.exact_points().len());
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_complex(c(0.5 + 1e-12, -2.0), 1e-9), Some(GaussRat::new(rat(1, 2), rat(-2, 1))));
        assert_eq!(snap_complex(c(std::f64::consts::PI, 0.0), 1e-9), None);
        let p = ExactPoint::new(2, vec![], GaussRat::from_ints(0, 2)).unwrap();
        assert!(verify_exact(&p, &[3], &[2]));
        assert!(!verify_exact(&p, &[2], &[0]));
    }

    #[test]
    fn cap_and_serialization() {
        assert!(matches!(solve(3, &[4, 4], &[0, 0]), Err(Error::Budget { .. })));
        let s = solve(2, &[3], &[2]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"2i\"") || json.contains("2i"));
        let back: PcfSolutionSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back.points.len(), s.points.len());
        assert!(s.to_csv().starts_with("a_re,a_im,multiplicity\n"));
    }
}
