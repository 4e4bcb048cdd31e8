//! Dynatomic polynomials, the multiplier polynomials `r_n`, attracting
//! cycles, the multiplier map on hyperbolic components and continuation of
//! centers to prescribed multipliers.

use num_complex::Complex64;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle_dynamics::{divisors, mobius};
use crate::error::{Error, Result};
use crate::exact::Rational;
use crate::green_arch::escape_bound;
use crate::numeric::{aberth, solve_linear, Jet};
use crate::pcf_solver::{canonical_cmp, solve_with, SolveOptions};
use crate::poly_family::{apply_symbolic, family_vars, symbolic_coefficients, ExactPoint, FloatPoint};
use crate::symbolic::SymbolicPoly;
use crate::upoly::UPoly;

/// Largest `d^n` for which `Φ*_n` is computed as a polynomial in all of
/// `(params, z)`.
pub const DYNATOMIC_SYMBOLIC_BUDGET: u64 = 256;
/// Largest `d^n` for specializations at a rational parameter.
pub const DYNATOMIC_BUDGET: u64 = 4096;
/// Symbolic `r_n` is offered for `d = 2` up to this period.
pub const SYMBOLIC_MULTIPLIER_MAX_N: usize = 4;
/// Corrector tolerance along continuation paths.
pub const CONTINUATION_TOL: f64 = 1e-12;
/// Consecutive step halvings allowed before a path is given up.
pub const MAX_HALVINGS: u32 = 20;
/// Iteration budget used when locating attracting cycles.
pub const DEFAULT_CYCLE_BUDGET: usize = 20_000;

fn cx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// `ν_d(n) = Σ_{l|n} μ(n/l) d^l`, the number of points of exact period `n`.
pub fn nu(d: usize, n: usize) -> u64 {
    let total: i128 = divisors(n as u64)
        .into_iter()
        .map(|l| mobius(n as u64 / l) as i128 * (d as i128).pow(l as u32))
        .sum();
    total as u64
}

// ---------------------------------------------------------------------------
// Dynatomic polynomials

/// `Φ_n = P^n(z) - z` and `Φ*_n = Π_{l|n} Φ_l^{μ(n/l)}` over
/// `(c_1, …, c_{d-2}, a, z)`.
#[derive(Clone, Debug)]
pub struct DynatomicData {
    pub d: usize,
    pub n: usize,
    pub phi_n: SymbolicPoly,
    /// `Π_{μ(n/l) = +1} Φ_l`.
    pub numerator: SymbolicPoly,
    /// `Π_{μ(n/l) = -1} Φ_l`.
    pub denominator: SymbolicPoly,
    pub phi_star: SymbolicPoly,
    /// The division left no remainder and `Φ*_n · denominator = numerator`.
    pub verified: bool,
}

fn dynatomic_vars(d: usize) -> Vec<String> {
    let mut v = family_vars(d);
    v.push("z".into());
    v
}

fn from_coefficients_in(vars: &[String], coeffs: &[SymbolicPoly], idx: usize) -> SymbolicPoly {
    SymbolicPoly::from_terms(
        vars,
        coeffs.iter().enumerate().flat_map(|(k, c)| {
            c.terms().map(move |(e, r)| {
                let mut e = e.clone();
                e[idx] += k as u32;
                (e, r.clone())
            })
        }),
    )
}

/// Division with remainder in the variable `idx` by a divisor whose leading
/// coefficient in that variable is a nonzero constant.
fn div_rem_in(num: &SymbolicPoly, den: &SymbolicPoly, idx: usize) -> Result<(SymbolicPoly, SymbolicPoly)> {
    let dc = den.coefficients_in(idx);
    let lead = dc.last().ok_or_else(|| Error::invalid("division by zero"))?;
    if lead.total_degree() != Some(0) {
        return Err(Error::invalid("divisor is not monic up to a constant"));
    }
    let inv = Rational::one() / lead.coeff(&vec![0; num.vars().len()]);
    let dd = dc.len() - 1;
    let mut rem = num.coefficients_in(idx);
    let mut quot = vec![SymbolicPoly::zero(num.vars()); rem.len().saturating_sub(dd)];
    for k in (dd..rem.len()).rev() {
        let q = rem[k].scale(&inv);
        if q.is_zero() {
            continue;
        }
        for (j, c) in dc.iter().enumerate() {
            rem[k - dd + j] = rem[k - dd + j].sub(&q.mul(c));
        }
        quot[k - dd] = q;
    }
    Ok((
        from_coefficients_in(num.vars(), &quot, idx),
        from_coefficients_in(num.vars(), &rem, idx),
    ))
}

/// Exact `Φ*_n` with its division certificate.
pub fn dynatomic(d: usize, n: usize) -> Result<DynatomicData> {
    if d < 2 || n == 0 {
        return Err(Error::invalid(format!("need d ≥ 2 and n ≥ 1, got d={d}, n={n}")));
    }
    let size = (d as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if size > DYNATOMIC_SYMBOLIC_BUDGET {
        return Err(Error::budget(format!("symbolic dynatomic polynomial of z-degree {d}^{n}"), DYNATOMIC_SYMBOLIC_BUDGET));
    }
    let vars = dynatomic_vars(d);
    let zi = vars.len() - 1;
    let coeffs: Vec<SymbolicPoly> = symbolic_coefficients(d)
        .iter()
        .map(|c| c.extend_vars(&vars))
        .collect::<Result<_>>()?;
    let z = SymbolicPoly::var(&vars, zi);
    let one = SymbolicPoly::constant(&vars, Rational::one());
    let (mut numerator, mut denominator) = (one.clone(), one);
    let mut x = z.clone();
    let mut phi_n = z.clone();
    for k in 1..=n {
        x = apply_symbolic(&coeffs, &x);
        if n % k != 0 {
            continue;
        }
        let phi = x.sub(&z);
        match mobius((n / k) as u64) {
            1 => numerator = numerator.mul(&phi),
            -1 => denominator = denominator.mul(&phi),
            _ => {}
        }
        if k == n {
            phi_n = phi;
        }
    }
    let (phi_star, rem) = div_rem_in(&numerator, &denominator, zi)?;
    let verified = rem.is_zero() && phi_star.mul(&denominator) == numerator;
    Ok(DynatomicData {
        d,
        n,
        phi_n,
        numerator,
        denominator,
        phi_star,
        verified,
    })
}

impl DynatomicData {
    pub fn z_degree(&self) -> u32 {
        self.phi_star.degree_in(self.phi_star.vars().len() - 1).unwrap_or(0)
    }

    /// `a ↦ Φ*_n(P_a, 0)` for `d = 2`: its roots are the parameters where the
    /// critical point has exact period `n`.
    pub fn center_polynomial(&self) -> Result<UPoly> {
        if self.d != 2 {
            return Err(Error::invalid("center polynomial is univariate only for d = 2"));
        }
        let at0 = self.phi_star.substitute(&[(1, Rational::zero())]);
        Ok(UPoly::new(at0.to_univariate(0)?))
    }
}

/// `Φ*_n(P, ·)` at a real rational parameter, as a polynomial in `z`.
#[derive(Clone, Debug)]
pub struct DynatomicSpecialization {
    pub n: usize,
    pub numerator: UPoly,
    pub denominator: UPoly,
    pub phi_star: UPoly,
    pub verified: bool,
}

fn real_coefficients(p: &ExactPoint) -> Result<Vec<Rational>> {
    p.coefficients()
        .iter()
        .map(|g| {
            if g.is_real() {
                Ok(g.re.clone())
            } else {
                Err(Error::invalid("specialization needs real rational parameters"))
            }
        })
        .collect()
}

pub fn dynatomic_at(p: &ExactPoint, n: usize) -> Result<DynatomicSpecialization> {
    let d = p.d();
    if n == 0 {
        return Err(Error::invalid("period must be positive"));
    }
    let size = (d as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if size > DYNATOMIC_BUDGET {
        return Err(Error::budget(format!("dynatomic polynomial of degree {d}^{n}"), DYNATOMIC_BUDGET));
    }
    let poly = UPoly::new(real_coefficients(p)?);
    let (mut numerator, mut denominator) = (UPoly::one(), UPoly::one());
    let mut x = UPoly::x();
    for k in 1..=n {
        x = poly.compose(&x);
        if n % k != 0 {
            continue;
        }
        let phi = x.sub(&UPoly::x());
        match mobius((n / k) as u64) {
            1 => numerator = numerator.mul(&phi),
            -1 => denominator = denominator.mul(&phi),
            _ => {}
        }
    }
    let (phi_star, rem) = numerator.div_rem(&denominator);
    let verified = rem.is_zero() && phi_star.mul(&denominator) == numerator;
    Ok(DynatomicSpecialization {
        n,
        numerator,
        denominator,
        phi_star,
        verified,
    })
}

// ---------------------------------------------------------------------------
// Periodic points and multiplier polynomials

type J1 = Jet<1>;

fn step_jet(coeffs: &[Complex64], z: &J1) -> J1 {
    let d = coeffs.len() - 1;
    let mut acc = J1::constant(coeffs[d]);
    for k in (0..d).rev() {
        acc = acc.mul(z).add_const(coeffs[k]);
    }
    acc
}

/// Newton quotient of `Φ*_n(P, ·)` via `Σ_{l|n} μ(n/l) Φ_l'/Φ_l`.
fn phi_star_newton(p: &FloatPoint, n: usize, z: Complex64) -> Complex64 {
    let coeffs = p.coefficients();
    let z0 = J1::var(z, 0);
    let mut x = z0;
    let mut sum = cx(0.0);
    for k in 1..=n {
        x = step_jet(coeffs, &x);
        if n % k != 0 {
            continue;
        }
        let mu = mobius((n / k) as u64);
        if mu != 0 {
            let (v, g) = x.sub(&z0).mantissa();
            if v.norm() == 0.0 {
                return cx(0.0);
            }
            sum += cx(mu as f64) * g[0] / v;
        }
    }
    sum.inv()
}

/// All roots of `Φ*_n(P, ·)` with multiplicity (points of exact period `n`
/// for generic parameters).
pub fn periodic_points(p: &FloatPoint, n: usize) -> Result<Vec<Complex64>> {
    let deg = nu(p.d(), n);
    if (p.d() as u64).checked_pow(n as u32).unwrap_or(u64::MAX) > DYNATOMIC_BUDGET {
        return Err(Error::budget(format!("periodic points of period {n}"), DYNATOMIC_BUDGET));
    }
    let res = aberth(|z| phi_star_newton(p, n, z), deg as usize, 1.1 * escape_bound(p), 3000);
    if !res.converged || !res.roots.iter().all(|z| finite(*z)) {
        return Err(Error::Numerical(format!("periodic points of period {n} did not converge")));
    }
    Ok(res.roots)
}

/// `(P^n)'(z)` along the orbit of `z`.
pub fn cycle_multiplier(p: &FloatPoint, z: Complex64, n: usize) -> Complex64 {
    let mut x = z;
    let mut lam = cx(1.0);
    for _ in 0..n {
        lam *= p.derivative(&x);
        x = p.eval(&x);
    }
    lam
}

/// `w ↦ r_n(P, w)` at a numeric parameter, normalized to be monic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NumericMultiplierPoly {
    pub n: usize,
    /// Coefficients in `w`, lowest degree first.
    pub coeffs: Vec<Complex64>,
    /// Distinct roots with their multiplicity in `r_n`.
    pub roots: Vec<(Complex64, usize)>,
    /// Zeros of `q_n` (`r_n = q_n^n`): the cycle multipliers.
    pub p_zeros: Vec<(Complex64, usize)>,
}

/// Relative radius within which multipliers are identified.
const MULTIPLIER_CLUSTER: f64 = 1e-6;

pub fn multiplier_poly_numeric(p: &FloatPoint, n: usize) -> Result<NumericMultiplierPoly> {
    let pts = periodic_points(p, n)?;
    let lams: Vec<Complex64> = pts.iter().map(|z| cycle_multiplier(p, *z, n)).collect();
    let mut roots: Vec<(Complex64, usize)> = Vec::new();
    for l in &lams {
        match roots
            .iter_mut()
            .find(|(r, _)| (*r - l).norm() <= MULTIPLIER_CLUSTER * (1.0 + l.norm()))
        {
            Some(r) => r.1 += 1,
            None => roots.push((*l, 1)),
        }
    }
    if let Some((r, k)) = roots.iter().find(|(_, k)| k % n != 0) {
        return Err(Error::Numerical(format!(
            "r_{n} is not an {n}-th power: root {r} has multiplicity {k}"
        )));
    }
    let mut coeffs = vec![cx(1.0)];
    for l in &lams {
        let mut next = vec![cx(0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * l;
        }
        coeffs = next;
    }
    let p_zeros = roots.iter().map(|(r, k)| (*r, k / n)).collect();
    Ok(NumericMultiplierPoly {
        n,
        coeffs,
        roots,
        p_zeros,
    })
}

fn upoly_mod(x: &[UPoly], monic: &[UPoly]) -> Vec<UPoly> {
    let dd = monic.len() - 1;
    let mut rem = x.to_vec();
    for k in (dd..rem.len()).rev() {
        let q = rem[k].clone();
        if q.is_zero() {
            continue;
        }
        for (j, c) in monic.iter().enumerate() {
            rem[k - dd + j] = rem[k - dd + j].sub(&q.mul(c));
        }
    }
    rem.truncate(dd);
    rem.resize(dd, UPoly::zero());
    rem
}

fn upoly_mul_z(x: &[UPoly], y: &[UPoly]) -> Vec<UPoly> {
    let mut out = vec![UPoly::zero(); x.len() + y.len() - 1];
    for (i, a) in x.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        for (j, b) in y.iter().enumerate() {
            out[i + j] = out[i + j].add(&a.mul(b));
        }
    }
    out
}

/// Exact `r_n(a, w)` for `d = 2` over the variables `(a, w)`, monic in `w`:
/// `Res_z(Φ*_n, w - (P^n)'(z))` up to its constant.
pub fn multiplier_poly_symbolic(n: usize) -> Result<SymbolicPoly> {
    if n == 0 || n > SYMBOLIC_MULTIPLIER_MAX_N {
        return Err(Error::budget(format!("symbolic multiplier polynomial of period {n}"), SYMBOLIC_MULTIPLIER_MAX_N as u64));
    }
    let dy = dynatomic(2, n)?;
    let to_z_list = |p: &SymbolicPoly| -> Result<Vec<UPoly>> {
        p.coefficients_in(1)
            .iter()
            .map(|c| Ok(UPoly::new(c.to_univariate(0)?)))
            .collect()
    };
    let mut phi = to_z_list(&dy.phi_star)?;
    let lead = phi.last().expect("nonempty").coeff(0);
    phi = phi.iter().map(|c| c.scale(&(Rational::one() / &lead))).collect();
    let nu = phi.len() - 1;
    // (P^n)'(z) = ∂Φ_n/∂z + 1.
    let lam_sym = dy.phi_n.derivative(1).add(&SymbolicPoly::constant(dy.phi_n.vars(), Rational::one()));
    let lam = upoly_mod(&to_z_list(&lam_sym)?, &phi);
    // Power sums of the z-roots by Newton's identities.
    let mut s = vec![UPoly::constant(Rational::from_integer(nu.into()))];
    for k in 1..nu {
        let mut acc = phi[nu - k].scale(&Rational::from_integer((k as i64).into()));
        for i in 1..k {
            acc = acc.add(&phi[nu - i].mul(&s[k - i]));
        }
        s.push(acc.scale(&Rational::from_integer((-1).into())));
    }
    let trace = |f: &[UPoly]| f.iter().zip(&s).fold(UPoly::zero(), |acc, (a, b)| acc.add(&a.mul(b)));
    // Power sums of the multipliers, then elementary symmetric functions.
    let mut power = vec![UPoly::one()];
    let mut psum = vec![UPoly::zero()];
    for _ in 0..nu {
        power = upoly_mod(&upoly_mul_z(&power, &lam), &phi);
        psum.push(trace(&power));
    }
    let mut e = vec![UPoly::one()];
    for k in 1..=nu {
        let mut acc = UPoly::zero();
        for i in 1..=k {
            let term = e[k - i].mul(&psum[i]);
            acc = if i % 2 == 1 { acc.add(&term) } else { acc.sub(&term) };
        }
        e.push(acc.scale(&(Rational::one() / Rational::from_integer((k as i64).into()))));
    }
    let vars = vec!["a".to_string(), "w".to_string()];
    let mut terms = Vec::new();
    for (k, ek) in e.iter().enumerate() {
        let sign = if k % 2 == 0 { Rational::one() } else { -Rational::one() };
        for (j, c) in ek.coeffs().iter().enumerate() {
            if !c.is_zero() {
                terms.push((vec![j as u32, (nu - k) as u32], c * &sign));
            }
        }
    }
    Ok(SymbolicPoly::from_terms(&vars, terms))
}

/// `deg_a p_n(a, 0)` from a symbolic `r_n = q_n^n`; `None` when the degree
/// of `r_n(a, 0)` is not divisible by `n`.
pub fn p_degree_at_zero(r: &SymbolicPoly, n: usize) -> Option<u32> {
    let at0 = r.substitute(&[(1, Rational::zero())]);
    let deg = at0.degree_in(0)?;
    (deg as usize % n == 0).then_some(deg / n as u32)
}

/// Lower bound `d^{-1}(d-1)^2 d^n` for the degree of `p_n(·, 0)`.
pub fn p_degree_lower_bound(d: usize, n: usize) -> u64 {
    (d as u64 - 1).pow(2) * (d as u64).pow(n as u32 - 1)
}

/// `r_n` in one of its two flavors.
#[derive(Clone, Debug)]
pub enum MultiplierPoly {
    Symbolic(SymbolicPoly),
    Numeric(NumericMultiplierPoly),
}

#[derive(Clone, Debug)]
pub enum MultiplierMode {
    Symbolic,
    NumericAt(FloatPoint),
}

pub fn multiplier_poly(d: usize, n: usize, mode: &MultiplierMode) -> Result<MultiplierPoly> {
    match mode {
        MultiplierMode::Symbolic if d == 2 => multiplier_poly_symbolic(n).map(MultiplierPoly::Symbolic),
        MultiplierMode::Symbolic => Err(Error::invalid("symbolic r_n is offered for d = 2 only")),
        MultiplierMode::NumericAt(p) if p.d() == d => multiplier_poly_numeric(p, n).map(MultiplierPoly::Numeric),
        MultiplierMode::NumericAt(p) => Err(Error::invalid(format!("parameter has degree {}, expected {d}", p.d()))),
    }
}

// ---------------------------------------------------------------------------
// Attracting cycles and the multiplier map

/// An attracting cycle together with the critical points it attracts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub point: Complex64,
    pub period: usize,
    pub multiplier: Complex64,
    pub basin: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleSearch {
    pub cycles: Vec<CycleRecord>,
    /// Critical indices whose orbit did not settle on an attracting cycle.
    pub unresolved: Vec<usize>,
}

fn refine_cycle(p: &FloatPoint, mut z: Complex64, q: usize) -> Option<Complex64> {
    for _ in 0..60 {
        let mut x = z;
        let mut dx = cx(1.0);
        for _ in 0..q {
            dx *= p.derivative(&x);
            x = p.eval(&x);
        }
        let dz = (x - z) / (dx - cx(1.0));
        if !finite(dz) {
            return None;
        }
        z -= dz;
        if dz.norm() <= 1e-15 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    let back = p.iterate(&z, q);
    ((back - z).norm() <= 1e-12 * (1.0 + z.norm())).then_some(z)
}

fn minimal_period(p: &FloatPoint, z: Complex64, q: usize) -> usize {
    divisors(q as u64)
        .into_iter()
        .map(|l| l as usize)
        .find(|&l| (p.iterate(&z, l) - z).norm() <= 1e-9 * (1.0 + z.norm()))
        .unwrap_or(q)
}

fn find_cycle(p: &FloatPoint, start: Complex64, budget: usize) -> Option<(Complex64, usize, Complex64)> {
    let radius = escape_bound(p);
    let mut x = start;
    let mut done = 0usize;
    let mut anchor_at = 32usize;
    while done < budget {
        while done < anchor_at.min(budget) {
            x = p.eval(&x);
            done += 1;
            if x.norm() > radius || !finite(x) {
                return None;
            }
        }
        let anchor = x;
        let mut y = x;
        for q in 1..=anchor_at.min(budget.saturating_sub(done)) {
            y = p.eval(&y);
            if (y - anchor).norm() <= 1e-8 * (1.0 + anchor.norm()) {
                if let Some(z) = refine_cycle(p, anchor, q) {
                    let period = minimal_period(p, z, q);
                    let lam = cycle_multiplier(p, z, period);
                    if lam.norm() < 1.0 {
                        return Some((z, period, lam));
                    }
                }
                break;
            }
        }
        anchor_at *= 2;
    }
    None
}

fn on_cycle(p: &FloatPoint, rec: &CycleRecord, z: Complex64) -> bool {
    let mut x = rec.point;
    (0..rec.period).any(|_| {
        let hit = (x - z).norm() <= 1e-8 * (1.0 + z.norm());
        x = p.eval(&x);
        hit
    })
}

/// Attracting cycles reached by the critical orbits.
pub fn attracting_cycles(p: &FloatPoint, budget: usize) -> CycleSearch {
    let found: Vec<Option<(Complex64, usize, Complex64)>> = p
        .critical_points()
        .into_iter()
        .map(|c| find_cycle(p, c, budget))
        .collect();
    let mut cycles: Vec<CycleRecord> = Vec::new();
    let mut unresolved = Vec::new();
    for (i, f) in found.into_iter().enumerate() {
        match f {
            None => unresolved.push(i),
            Some((z, period, multiplier)) => match cycles.iter_mut().find(|r| r.period == period && on_cycle(p, r, z)) {
                Some(r) => r.basin.push(i),
                None => cycles.push(CycleRecord {
                    point: z,
                    period,
                    multiplier,
                    basin: vec![i],
                }),
            },
        }
    }
    CycleSearch { cycles, unresolved }
}

/// `W = (w_0, …, w_{d-2})`: the multipliers of the `d-1` attracting cycles,
/// the `i`-th having period `periods[i]`.
pub fn multiplier_map_w(p: &FloatPoint, periods: &[usize], budget: usize) -> Result<Vec<Complex64>> {
    let d = p.d();
    check_periods(d, periods)?;
    let found = attracting_cycles(p, budget);
    if !found.unresolved.is_empty() || found.cycles.len() != d - 1 {
        return Err(Error::invalid(format!(
            "not in a hyperbolic component with {} distinct attracting cycles (found {}, unresolved critical points {:?})",
            d - 1,
            found.cycles.len(),
            found.unresolved
        )));
    }
    periods
        .iter()
        .map(|&m| {
            found
                .cycles
                .iter()
                .find(|r| r.period == m)
                .map(|r| r.multiplier)
                .ok_or_else(|| Error::invalid(format!("no attracting cycle of period {m}")))
        })
        .collect()
}

fn check_periods(d: usize, m: &[usize]) -> Result<()> {
    if m.len() != d - 1 || m.iter().any(|&x| x == 0) {
        return Err(Error::invalid(format!("need {} positive periods, got {m:?}", d - 1)));
    }
    for i in 0..m.len() {
        for j in 0..i {
            if m[i] == m[j] {
                return Err(Error::invalid(format!("periods must be pairwise distinct, got {m:?}")));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Continuation

const MAXV: usize = 8;

/// Value and gradient in at most [`MAXV`] variables.
#[derive(Clone, Copy, Debug)]
struct Dual {
    v: Complex64,
    g: [Complex64; MAXV],
}

impl Dual {
    fn constant(v: Complex64) -> Self {
        Dual { v, g: [cx(0.0); MAXV] }
    }

    fn var(v: Complex64, k: usize) -> Self {
        let mut g = [cx(0.0); MAXV];
        g[k] = cx(1.0);
        Dual { v, g }
    }

    fn add(&self, o: &Self) -> Self {
        let mut g = self.g;
        for (x, y) in g.iter_mut().zip(&o.g) {
            *x += y;
        }
        Dual { v: self.v + o.v, g }
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(cx(-1.0)))
    }

    fn scale(&self, k: Complex64) -> Self {
        let mut g = self.g;
        for x in g.iter_mut() {
            *x *= k;
        }
        Dual { v: self.v * k, g }
    }

    fn mul(&self, o: &Self) -> Self {
        let mut g = [cx(0.0); MAXV];
        for (k, x) in g.iter_mut().enumerate() {
            *x = self.v * o.g[k] + o.v * self.g[k];
        }
        Dual { v: self.v * o.v, g }
    }
}

/// Unknowns `(c_1, …, c_{d-2}, s = a^d, z_0, …, z_{d-2})`; equations
/// `P^{m_i}(z_i) - z_i` followed by `(P^{m_i})'(z_i) - target_i`.
fn cycle_system(d: usize, m: &[usize], x: &[Complex64], target: &[Complex64]) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
    let nv = 2 * (d - 1);
    let vars: Vec<Dual> = x.iter().enumerate().map(|(k, v)| Dual::var(*v, k)).collect();
    let crit = &vars[..d - 2];
    let s = vars[d - 2];
    // Coefficients of P: z^d/d + Σ (-1)^{d-j} σ_{d-j}(c) z^j / j + s.
    let mut sigma = vec![Dual::constant(cx(0.0)); d - 1];
    sigma[0] = Dual::constant(cx(1.0));
    for ci in crit {
        for k in (1..d - 1).rev() {
            sigma[k] = sigma[k].add(&sigma[k - 1].mul(ci));
        }
    }
    let mut coeffs = vec![Dual::constant(cx(0.0)); d + 1];
    coeffs[d] = Dual::constant(cx(1.0 / d as f64));
    for (j, cj) in coeffs.iter_mut().enumerate().take(d).skip(2) {
        let sign = if (d - j) % 2 == 0 { 1.0 } else { -1.0 };
        *cj = sigma[d - j].scale(cx(sign / j as f64));
    }
    coeffs[0] = s;
    let eval = |z: &Dual| {
        let mut acc = coeffs[d];
        for k in (0..d).rev() {
            acc = acc.mul(z).add(&coeffs[k]);
        }
        acc
    };
    let deriv = |z: &Dual| crit.iter().fold(*z, |acc, ci| acc.mul(&z.sub(ci)));
    let mut rows: Vec<Dual> = Vec::with_capacity(nv);
    let mut mults: Vec<Dual> = Vec::with_capacity(d - 1);
    for i in 0..d - 1 {
        let z0 = vars[d - 1 + i];
        let mut cur = z0;
        let mut lam = Dual::constant(cx(1.0));
        for _ in 0..m[i] {
            lam = lam.mul(&deriv(&cur));
            cur = eval(&cur);
        }
        rows.push(cur.sub(&z0));
        mults.push(lam.sub(&Dual::constant(target[i])));
    }
    rows.extend(mults);
    let values = rows.iter().map(|r| r.v).collect();
    let jac = rows.iter().map(|r| r.g[..nv].to_vec()).collect();
    (values, jac)
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Newton on the cycle system; `None` unless it converges to `tol`.
fn correct(d: usize, m: &[usize], mut x: Vec<Complex64>, target: &[Complex64], tol: f64, max_it: usize) -> Option<Vec<Complex64>> {
    for _ in 0..max_it {
        let (f, jac) = cycle_system(d, m, &x, target);
        let dx = solve_linear(jac, f.iter().map(|v| -v).collect())?;
        if !dx.iter().all(|z| finite(*z)) {
            return None;
        }
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        if vec_norm(&dx) <= tol * (1.0 + vec_norm(&x)) {
            return Some(x);
        }
    }
    None
}

fn tangent(d: usize, m: &[usize], x: &[Complex64], target: &[Complex64], j: usize, wj: Complex64) -> Option<Vec<Complex64>> {
    let (_, jac) = cycle_system(d, m, x, target);
    // ∂H/∂t = -w_j on the multiplier row of cycle j.
    let mut rhs = vec![cx(0.0); 2 * (d - 1)];
    rhs[d - 1 + j] = wj;
    solve_linear(jac, rhs)
}

/// Polyline of a continuation path in parameter space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    /// Homotopy coordinate being moved at each node.
    pub coordinate: Vec<usize>,
    pub t: Vec<f64>,
    pub params: Vec<Vec<Complex64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    /// `(c_1, …, c_{d-2}, a)` at the end of the path.
    pub coords: Vec<Complex64>,
    pub cycle_points: Vec<Complex64>,
    pub multipliers: Vec<Complex64>,
    pub residual: f64,
    pub steps: usize,
    pub max_halvings: u32,
    pub path_length: f64,
    /// Distance between the end point and the center.
    pub displacement: f64,
    pub trace: PathTrace,
}

/// Moves a center of `Per*(m̄)` to the parameter whose cycles have
/// multipliers `w̄`, one coordinate at a time (`t w_j` with `t: 0 → 1`).
pub fn path_continue(center: &FloatPoint, m: &[usize], w: &[Complex64], steps: usize) -> Result<ContinuationResult> {
    let d = center.d();
    if d - 1 > MAXV / 2 {
        return Err(Error::invalid(format!("continuation supports d ≤ {}", MAXV / 2 + 1)));
    }
    check_periods(d, m)?;
    if w.len() != d - 1 || w.iter().any(|x| !(x.norm() < 1.0)) {
        return Err(Error::invalid("need d-1 multipliers of modulus < 1"));
    }
    let crit = center.critical_points();
    for (i, ci) in crit.iter().enumerate() {
        if (center.iterate(ci, m[i]) - ci).norm() > 1e-8 * (1.0 + ci.norm()) {
            return Err(Error::invalid(format!("critical point {i} is not periodic of period {}", m[i])));
        }
    }
    // P depends on a only through s = a^d; the a-chart is singular at a = 0.
    let mut x: Vec<Complex64> = center.coords();
    let mut a_cur = *center.a();
    x[d - 2] = a_cur.powu(d as u32);
    x.extend(crit.iter().copied());
    let mut target = vec![cx(0.0); d - 1];
    x = correct(d, m, x, &target, CONTINUATION_TOL, 20)
        .ok_or_else(|| Error::Numerical("center does not satisfy the cycle system".into()))?;
    let h_max = 1.0 / steps.max(1) as f64;
    let mut trace = PathTrace::default();
    let np = d - 1;
    let params = |x: &[Complex64], a: Complex64| {
        let mut v = x[..np].to_vec();
        v[np - 1] = a;
        v
    };
    let push = |trace: &mut PathTrace, j: usize, t: f64, p: Vec<Complex64>| {
        trace.coordinate.push(j);
        trace.t.push(t);
        trace.params.push(p);
    };
    push(&mut trace, 0, 0.0, params(&x, a_cur));
    let mut total_steps = 0usize;
    let mut max_halvings = 0u32;
    let mut path_length = 0.0;
    for j in 0..d - 1 {
        if w[j] == cx(0.0) {
            continue;
        }
        let mut t = 0.0f64;
        let mut h = h_max;
        let mut halvings = 0u32;
        while t < 1.0 {
            let hh = h.min(1.0 - t);
            let t1 = if hh >= 1.0 - t { 1.0 } else { t + hh };
            let ok = tangent(d, m, &x, &target, j, w[j]).and_then(|dx| {
                let pred: Vec<Complex64> = x.iter().zip(&dx).map(|(xi, di)| xi + di * hh).collect();
                let mut tg = target.clone();
                tg[j] = w[j] * t1;
                let next = correct(d, m, pred.clone(), &tg, CONTINUATION_TOL, 8)?;
                // Reject corrections that land far from the prediction.
                let jump = next.iter().zip(&pred).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                (jump <= 0.1 * (1.0 + vec_norm(&pred))).then_some((next, tg))
            });
            match ok {
                Some((next, tg)) => {
                    let a_next = nearest_root(next[d - 2], d, a_cur);
                    let (p0, p1) = (params(&x, a_cur), params(&next, a_next));
                    path_length += p1.iter().zip(&p0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                    x = next;
                    a_cur = a_next;
                    target = tg;
                    t = t1;
                    total_steps += 1;
                    push(&mut trace, j, t, params(&x, a_cur));
                    halvings = 0;
                    h = (h * 1.5).min(h_max);
                }
                None => {
                    halvings += 1;
                    max_halvings = max_halvings.max(halvings);
                    if halvings > MAX_HALVINGS {
                        return Err(Error::Numerical(format!(
                            "step-size underflow at t = {t} on coordinate {j}"
                        )));
                    }
                    h /= 2.0;
                }
            }
        }
    }
    let x = correct(d, m, x.clone(), w, 1e-15, 6).unwrap_or(x);
    let (f, _) = cycle_system(d, m, &x, w);
    let coords = params(&x, nearest_root(x[d - 2], d, a_cur));
    let displacement = coords
        .iter()
        .zip(center.coords())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let end = FloatPoint::from_coords(d, &coords)?;
    let cycle_points = x[np..].to_vec();
    let multipliers = cycle_points
        .iter()
        .zip(m)
        .map(|(z, &mi)| cycle_multiplier(&end, *z, mi))
        .collect();
    Ok(ContinuationResult {
        coords,
        cycle_points,
        multipliers,
        residual: vec_norm(&f),
        steps: total_steps,
        max_halvings,
        path_length,
        displacement,
        trace,
    })
}

/// The `d`-th root of `s` closest to `prev`.
fn nearest_root(s: Complex64, d: usize, prev: Complex64) -> Complex64 {
    let r = s.powf(1.0 / d as f64);
    (0..d)
        .map(|k| r * Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / d as f64))
        .min_by(|x, y| (x - prev).norm().total_cmp(&(y - prev).norm()))
        .expect("d ≥ 2")
}

// ---------------------------------------------------------------------------
// Per*(m̄, w̄)

/// One point of `Per*(m̄, w̄)` with the center it was continued from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerStarPoint {
    pub coords: Vec<Complex64>,
    pub center: Vec<Complex64>,
    pub cycle_points: Vec<Complex64>,
    pub multipliers: Vec<Complex64>,
    pub residual: f64,
    pub path_length: f64,
    pub displacement: f64,
    pub trace: PathTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerStarSet {
    pub d: usize,
    pub m: Vec<usize>,
    pub w: Vec<Complex64>,
    /// Centers of `Per*(m̄)` counted with multiplicity in the `a`-chart.
    pub centers: usize,
    pub points: Vec<PerStarPoint>,
    /// Centers whose path failed even with small steps, with the reason.
    pub failures: Vec<(Vec<Complex64>, String)>,
    pub method: String,
}

/// Initial number of steps per coordinate; failed paths are retried with
/// eight times as many.
pub const DEFAULT_PATH_STEPS: usize = 16;

impl PerStarSet {
    /// Columns `w_re,w_im` then `re,im` per coordinate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w_re,w_im");
        let names = family_vars(self.d);
        for name in &names {
            out.push_str(&format!(",{name}_re,{name}_im"));
        }
        out.push('\n');
        let w0 = self.w.first().copied().unwrap_or_default();
        for p in &self.points {
            out.push_str(&format!("{:.17e},{:.17e}", w0.re, w0.im));
            for z in &p.coords {
                out.push_str(&format!(",{:.17e},{:.17e}", z.re, z.im));
            }
            out.push('\n');
        }
        out
    }
}

/// `Per*(m̄, w̄)` by continuation from every center of `Per*(m̄)`.
pub fn per_star_solve(d: usize, m: &[usize], w: &[Complex64]) -> Result<PerStarSet> {
    check_periods(d, m)?;
    if w.len() != d - 1 || w.iter().any(|x| !(x.norm() < 1.0)) {
        return Err(Error::invalid("need d-1 multipliers of modulus < 1"));
    }
    let zeros = vec![0usize; d - 1];
    let sols = solve_with(d, m, &zeros, &SolveOptions::default())?;
    let exact = sols.exact_points();
    let centers: Vec<Vec<Complex64>> = exact.iter().map(|p| p.coords.clone()).collect();
    let center_count: usize = exact.iter().map(|p| p.multiplicity).sum();
    let runs: Vec<(Vec<Complex64>, Result<ContinuationResult>)> = centers
        .par_iter()
        .map(|c| {
            let p = FloatPoint::from_coords(d, c).expect("shape");
            let r = path_continue(&p, m, w, DEFAULT_PATH_STEPS).or_else(|_| path_continue(&p, m, w, 8 * DEFAULT_PATH_STEPS));
            (c.clone(), r)
        })
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (c, r) in runs {
        match r {
            Ok(r) => {
                // A center on a = 0 carries all d sheets of the a-chart; its
                // end point spreads over the d roots of a^d.
                let sheets = if c[d - 2] == cx(0.0) { d } else { 1 };
                for k in 0..sheets {
                    let mut coords = r.coords.clone();
                    coords[d - 2] *= Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / d as f64);
                    points.push(PerStarPoint {
                        coords,
                        center: c.clone(),
                        cycle_points: r.cycle_points.clone(),
                        multipliers: r.multipliers.clone(),
                        residual: r.residual,
                        path_length: r.path_length,
                        displacement: r.displacement,
                        trace: r.trace.clone(),
                    });
                }
            }
            Err(e) => failures.push((c, e.to_string())),
        }
    }
    let mut method = "continuation from centers".to_string();
    if !failures.is_empty() && d == 2 && m[0] <= SYMBOLIC_MULTIPLIER_MAX_N {
        points = algebraic_per_star(m[0], w[0])?;
        failures.clear();
        method = "roots of p_n(a, w) (algebraic fallback)".to_string();
    }
    points.sort_by(|x, y| canonical_cmp(&x.coords, &y.coords));
    Ok(PerStarSet {
        d,
        m: m.to_vec(),
        w: w.to_vec(),
        centers: center_count,
        points,
        failures,
        method,
    })
}

/// `d = 2`: the zeros of `a ↦ r_n(a, w)`, each of multiplicity `n`.
fn algebraic_per_star(n: usize, w: Complex64) -> Result<Vec<PerStarPoint>> {
    let r = multiplier_poly_symbolic(n)?;
    let deg = r.degree_in(0).unwrap_or(0) as usize;
    let mut coeffs = vec![cx(0.0); deg + 1];
    for (e, c) in r.terms() {
        coeffs[e[0] as usize] += cx(crate::exact::rational_to_f64(c)) * w.powu(e[1]);
    }
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.norm() == 0.0) {
        coeffs.pop();
    }
    let deg = coeffs.len() - 1;
    let horner = |a: Complex64| {
        let (mut f, mut df) = (cx(0.0), cx(0.0));
        for c in coeffs.iter().rev() {
            df = df * a + f;
            f = f * a + c;
        }
        f / df
    };
    let res = aberth(horner, deg, 3.0, 5000);
    let mut distinct: Vec<Complex64> = Vec::new();
    for a in res.roots {
        if !distinct.iter().any(|b| (a - b).norm() <= 1e-5) {
            distinct.push(a);
        }
    }
    let periods = [n];
    let polished: Vec<PerStarPoint> = distinct
        .into_iter()
        .filter_map(|a| {
            let p = FloatPoint::from_coords(2, &[a]).ok()?;
            let cyc = attracting_cycles(&p, DEFAULT_CYCLE_BUDGET);
            let rec = cyc.cycles.into_iter().find(|r| r.period == n)?;
            let x = correct(2, &periods, vec![a * a, rec.point], &[w], 1e-15, 20)?;
            let (f, _) = cycle_system(2, &periods, &x, &[w]);
            let a = nearest_root(x[0], 2, a);
            let end = FloatPoint::from_coords(2, &[a]).ok()?;
            Some(PerStarPoint {
                coords: vec![a],
                center: Vec::new(),
                cycle_points: vec![x[1]],
                multipliers: vec![cycle_multiplier(&end, x[1], n)],
                residual: vec_norm(&f),
                path_length: 0.0,
                displacement: 0.0,
                trace: PathTrace::default(),
            })
        })
        .collect();
    let mut out: Vec<PerStarPoint> = Vec::new();
    for p in polished {
        if !out.iter().any(|q| (q.coords[0] - p.coords[0]).norm() <= 1e-8 * (1.0 + p.coords[0].norm())) {
            out.push(p);
        }
    }
    Ok(out)
}
