//! p-adic local Green functions for rational parameters.
//!
//! Absolute values are carried as exact valuations; a quantity `log|x|_p` is
//! stored as the rational `-val_p(x)` in units of `log p`. The three exact
//! outcomes of an orbit are: a closed form once the orbit enters the region
//! `|z| ≥ C̃_v` with a strictly dominant leading term, `g = 0` via an
//! invariant ball or an exact repeat, and otherwise a tolerance-certified
//! upper bound.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{format_rational, ln_abs_rational, rat_int, GaussRat, Rational};
use crate::green_arch::CertifiedValue;
use crate::poly_family::{elementary_symmetric, family_vars, symbolic_iterate, ExactPoint};
use crate::symbolic::SymbolicPoly;

/// Orbit budget for the iterative p-adic computation.
pub const PADIC_MAX_STEPS: usize = 200;

/// A place of `Q`, normalized so that the product formula has weights 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Place {
    Infinity,
    Prime(u64),
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Infinity => write!(f, "inf"),
            Place::Prime(p) => write!(f, "{p}"),
        }
    }
}

pub fn valuation_int(n: &BigInt, p: u64) -> Option<i64> {
    if n.is_zero() {
        return None;
    }
    let pb = BigInt::from(p);
    let mut v = 0;
    let mut m = n.clone();
    loop {
        let (q, r) = m.div_rem(&pb);
        if !r.is_zero() {
            return Some(v);
        }
        m = q;
        v += 1;
    }
}

/// Exact `val_p(x)`; `None` for `x = 0`.
pub fn valuation(x: &Rational, p: u64) -> Option<i64> {
    Some(valuation_int(x.numer(), p)? - valuation_int(x.denom(), p)?)
}

/// `|x|_p = p^{-val_p(x)}`, with `|0|_p = 0`.
pub fn abs_v(x: &Rational, p: u64) -> f64 {
    match valuation(x, p) {
        None => 0.0,
        Some(v) => (p as f64).powi(-(v as i32)),
    }
}

/// `log|x|_p / log p`; `None` stands for `-∞`.
pub fn log_abs_units(x: &Rational, p: u64) -> Option<Rational> {
    valuation(x, p).map(|v| rat_int(-v))
}

/// `log|x|_v` as a real number.
pub fn log_abs_place(x: &Rational, place: Place) -> f64 {
    match place {
        Place::Infinity => ln_abs_rational(x),
        Place::Prime(p) => match valuation(x, p) {
            None => f64::NEG_INFINITY,
            Some(v) => -(v as f64) * (p as f64).ln(),
        },
    }
}

/// Distinct prime factors of a nonzero integer.
pub fn prime_factors(n: &BigInt) -> Result<Vec<u64>> {
    let n: BigUint = n.abs().to_biguint().expect("absolute value");
    if n.is_zero() {
        return Err(Error::invalid("cannot factor zero"));
    }
    let small = n
        .to_u128()
        .ok_or_else(|| Error::budget("factorization of integers above 2^128", 128))?;
    Ok(num_prime::nt_funcs::factorize128(small).into_keys().map(|p| p as u64).collect())
}

pub fn is_prime(p: u64) -> bool {
    num_prime::nt_funcs::is_prime64(p)
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    (2..=n).filter(|&k| is_prime(k)).collect()
}

fn sym_rational(c: &[Rational], j: usize) -> Result<Rational> {
    let g: Vec<GaussRat> = c.iter().map(|x| GaussRat::real(x.clone())).collect();
    Ok(elementary_symmetric(&g, j)?.re)
}

fn max_units(xs: impl IntoIterator<Item = Option<Rational>>) -> Option<Rational> {
    xs.into_iter().flatten().max()
}

/// A rational parameter together with a prime, and the derived constants.
#[derive(Clone, Debug)]
pub struct PadicContext {
    p: u64,
    d: usize,
    c: Vec<Rational>,
    a: Rational,
    /// `z^k` coefficients of `P`, lowest first.
    coeffs: Vec<Rational>,
}

/// Constants of the context in units of `log p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PadicConstants {
    /// `log α_v`.
    pub log_alpha: Rational,
    /// `log C_v(c,a)`.
    pub log_c_v: Rational,
    /// `log C̃_v(c,a)`.
    pub log_c_tilde: Rational,
    /// Largest `log r` of a ball `{|z| ≤ r}` certified invariant by the
    /// one-step estimate (the lower end is `log|a|^d`).
    pub log_ball_max: Rational,
}

impl PadicConstants {
    pub fn alpha(&self, p: u64) -> f64 {
        units_to_real(&self.log_alpha, p).exp()
    }
    pub fn c_v(&self, p: u64) -> f64 {
        units_to_real(&self.log_c_v, p).exp()
    }
    pub fn c_tilde(&self, p: u64) -> f64 {
        units_to_real(&self.log_c_tilde, p).exp()
    }
}

pub fn units_to_real(u: &Rational, p: u64) -> f64 {
    crate::exact::rational_to_f64(u) * (p as f64).ln()
}

impl PadicContext {
    pub fn new(p: u64, d: usize, c: Vec<Rational>, a: Rational) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::invalid(format!("{p} is not prime")));
        }
        if d < 2 || c.len() != d - 2 {
            return Err(Error::invalid(format!("degree {d} needs {} critical coordinates", d.saturating_sub(2))));
        }
        let mut coeffs = vec![Rational::zero(); d + 1];
        coeffs[0] = num_traits::pow(a.clone(), d);
        coeffs[d] = Rational::new(BigInt::one(), BigInt::from(d));
        for (j, slot) in coeffs.iter_mut().enumerate().take(d).skip(2) {
            let s = sym_rational(&c, d - j)?;
            let sign = if (d - j) % 2 == 0 { rat_int(1) } else { rat_int(-1) };
            *slot = sign * s / rat_int(j as i64);
        }
        Ok(PadicContext { p, d, c, a, coeffs })
    }

    pub fn from_point(p: u64, point: &ExactPoint) -> Result<Self> {
        if !point.is_rational() {
            return Err(Error::invalid("p-adic computations need rational parameters"));
        }
        let c = point.c().iter().map(|x| x.re.clone()).collect();
        Self::new(p, point.d(), c, point.a().re.clone())
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> &[Rational] {
        &self.c
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn eval(&self, z: &Rational) -> Rational {
        let mut acc = self.coeffs[self.d].clone();
        for k in (0..self.d).rev() {
            acc = acc * z + &self.coeffs[k];
        }
        acc
    }

    pub fn critical_points(&self) -> Vec<Rational> {
        let mut v = vec![Rational::zero()];
        v.extend(self.c.iter().cloned());
        v
    }

    fn lu(&self, x: &Rational) -> Option<Rational> {
        log_abs_units(x, self.p)
    }

    /// `log max(|c|, |a|)` in units; `None` when all coordinates vanish.
    pub fn log_max_param(&self) -> Option<Rational> {
        max_units(self.c.iter().chain(std::iter::once(&self.a)).map(|x| self.lu(x)))
    }

    pub fn constants(&self) -> PadicConstants {
        let d = self.d as i64;
        let ld = self.lu(&rat_int(d)).expect("d ≠ 0");
        let log_alpha = (1..=d)
            .map(|j| -self.lu(&rat_int(j)).expect("j ≠ 0"))
            .max()
            .expect("d ≥ 1");
        let mut cands = vec![Some(&ld / rat_int(d - 1))];
        cands.push(self.lu(&self.a).map(|la| &ld / rat_int(d) + la));
        for j in 2..self.d {
            let s = sym_rational(&self.c, self.d - j).expect("index in range");
            let ratio = rat_int(d) / rat_int(j as i64);
            cands.push(self.lu(&s).map(|ls| (ls + self.lu(&ratio).expect("nonzero")) / rat_int(d - j as i64)));
        }
        let log_c_v = max_units(cands).expect("finite candidate");
        let log_c_tilde = max_units(
            self.c
                .iter()
                .chain(std::iter::once(&self.a))
                .map(|x| self.lu(x))
                .chain(std::iter::once(Some(log_c_v.clone()))),
        )
        .expect("finite");
        let mut log_ball_max = &ld / rat_int(d - 1);
        for j in 2..self.d {
            if let Some(lb) = self.lu(&self.coeffs[j]) {
                let bound = -lb / rat_int(j as i64 - 1);
                if bound < log_ball_max {
                    log_ball_max = bound;
                }
            }
        }
        PadicConstants {
            log_alpha,
            log_c_v,
            log_c_tilde,
            log_ball_max,
        }
    }

    /// True when `|d|^{-1}|z|^d` strictly exceeds every other term of `P(z)`.
    fn leading_term_dominates(&self, lz: &Rational) -> bool {
        let d = self.d as i64;
        let lead = -self.lu(&rat_int(d)).expect("d ≠ 0") + lz * rat_int(d);
        (0..self.d).all(|j| match self.lu(&self.coeffs[j]) {
            None => true,
            Some(lc) => lc + lz * rat_int(j as i64) < lead,
        })
    }
}

/// How a p-adic Green value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenMethod {
    /// Orbit reached the escape region; value in closed form.
    ClosedForm,
    /// Orbit point lies in an invariant ball.
    InvariantBall,
    /// Orbit repeats exactly.
    Preperiodic,
    /// Good-reduction shortcut `log⁺ max(|c|, |a|)`.
    Shortcut,
    /// Upper bound after the step budget; not exact.
    Bound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PadicGreen {
    pub value: CertifiedValue,
    /// Exact value as a multiple of `log p`, when known.
    #[serde(with = "opt_rational")]
    pub exact_units: Option<Rational>,
    pub method: GreenMethod,
    pub steps: usize,
}

impl PadicGreen {
    fn exact(units: Rational, p: u64, method: GreenMethod, steps: usize) -> Self {
        PadicGreen {
            value: CertifiedValue::exact(units_to_real(&units, p)),
            exact_units: Some(units),
            method,
            steps,
        }
    }
}

mod opt_rational {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match x {
            None => s.serialize_none(),
            Some(r) => s.serialize_some(&format_rational(r)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Rational>, D::Error> {
        let o: Option<String> = Option::deserialize(d)?;
        o.map(|s| crate::exact::parse_rational(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Certified `g_{c,a,v}(z)`.
pub fn green_padic_point(ctx: &PadicContext, z: &Rational, tol: f64) -> Result<PadicGreen> {
    let g = green_padic_best_effort(ctx, z, tol)?;
    if g.value.error > tol {
        return Err(Error::budget("p-adic orbit iterations", PADIC_MAX_STEPS as u64));
    }
    Ok(g)
}

/// Like [`green_padic_point`], but when the budget runs out the last upper
/// bound is returned with its (larger than requested) error.
///
/// The orbit is followed in exact rationals (which allows repeat detection)
/// until the iterates grow past [`EXACT_PHASE_BITS`]; after that it continues
/// in fixed relative precision p-adic arithmetic, which is all the valuation
/// tests need.
pub fn green_padic_best_effort(ctx: &PadicContext, z: &Rational, tol: f64) -> Result<PadicGreen> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let k = ctx.constants();
    let d = ctx.d as i64;
    let ld = ctx.lu(&rat_int(d)).expect("d ≠ 0");
    let la = ctx.lu(&ctx.a).map(|x| x * rat_int(d));
    let mut seen: Vec<Rational> = Vec::new();
    let mut cur = OrbitPoint::Exact(z.clone());
    let mut qp: Option<QpField> = None;
    let mut scale = Rational::one();
    for n in 0..=PADIC_MAX_STEPS {
        let (exact_log, upper_log) = match &cur {
            OrbitPoint::Exact(x) => (Some(ctx.lu(x)), ctx.lu(x)),
            OrbitPoint::Approx(x) => (x.known_log(), x.log_upper()),
        };
        if let Some(Some(lz)) = &exact_log {
            if *lz >= k.log_c_tilde && ctx.leading_term_dominates(lz) {
                let units = scale * (lz - &ld / rat_int(d - 1));
                return Ok(PadicGreen::exact(units, ctx.p, GreenMethod::ClosedForm, n));
            }
        }
        let radius = max_units([upper_log.clone(), la.clone()]);
        if radius.map_or(true, |r| r <= k.log_ball_max) {
            return Ok(PadicGreen::exact(Rational::zero(), ctx.p, GreenMethod::InvariantBall, n));
        }
        if let OrbitPoint::Exact(x) = &cur {
            if seen.contains(x) {
                return Ok(PadicGreen::exact(Rational::zero(), ctx.p, GreenMethod::Preperiodic, n));
            }
        }
        // g(z) = d^{-n} g(z_n) ≤ d^{-n} (log max(C̃, |z_n|) + log α/(d-1)).
        let h = max_units([upper_log, Some(k.log_c_tilde.clone())]).expect("finite");
        let bound = &scale * (h + &k.log_alpha / rat_int(d - 1));
        let ub = units_to_real(&bound, ctx.p).max(0.0);
        if ub <= tol || n == PADIC_MAX_STEPS {
            return Ok(PadicGreen {
                value: CertifiedValue {
                    value: 0.5 * ub,
                    error: 0.5 * ub,
                },
                exact_units: None,
                method: GreenMethod::Bound,
                steps: n,
            });
        }
        cur = match cur {
            OrbitPoint::Exact(x) => {
                let next = ctx.eval(&x);
                seen.push(x);
                if next.numer().bits() + next.denom().bits() > EXACT_PHASE_BITS {
                    let field = qp.get_or_insert_with(|| QpField::new(ctx));
                    OrbitPoint::Approx(field.from_rational(&next))
                } else {
                    OrbitPoint::Exact(next)
                }
            }
            OrbitPoint::Approx(x) => OrbitPoint::Approx(qp.as_ref().expect("initialized").eval(&x)),
        };
        scale /= rat_int(d);
    }
    unreachable!("loop returns at the step cap")
}

/// Exact iterates above this size continue in p-adic arithmetic.
pub const EXACT_PHASE_BITS: u64 = 8192;
/// Bits of relative precision kept in the p-adic phase.
const QP_BITS: f64 = 4096.0;

enum OrbitPoint {
    Exact(Rational),
    Approx(Qp),
}

/// An element of `Q_p` known to finite precision.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Qp {
    /// `p^v · u` with `u` a unit, known modulo `p^{v+k}`.
    Num { v: i64, u: BigInt, k: i64 },
    /// Known only to satisfy `|x| ≤ p^{-abs}`.
    Zero { abs: i64 },
}

const EXACT_ZERO: i64 = i64::MAX / 4;

impl Qp {
    fn abs_prec(&self) -> i64 {
        match self {
            Qp::Num { v, k, .. } => v + k,
            Qp::Zero { abs } => *abs,
        }
    }

    /// `Some(None)` for an exact zero, `Some(Some(log|x|))` when the valuation
    /// is known, `None` otherwise.
    fn known_log(&self) -> Option<Option<Rational>> {
        match self {
            Qp::Num { v, .. } => Some(Some(rat_int(-v))),
            Qp::Zero { abs } if *abs >= EXACT_ZERO => Some(None),
            Qp::Zero { .. } => None,
        }
    }

    fn log_upper(&self) -> Option<Rational> {
        match self {
            Qp::Num { v, .. } => Some(rat_int(-v)),
            Qp::Zero { abs } if *abs >= EXACT_ZERO => None,
            Qp::Zero { abs } => Some(rat_int(-abs)),
        }
    }
}

/// Arithmetic in `Q_p` with a fixed working precision, plus the polynomial.
struct QpField {
    p: u64,
    pb: BigInt,
    digits: i64,
    coeffs: Vec<Qp>,
}

impl QpField {
    fn new(ctx: &PadicContext) -> Self {
        let digits = (QP_BITS / (ctx.p as f64).log2()).ceil() as i64;
        let mut f = QpField {
            p: ctx.p,
            pb: BigInt::from(ctx.p),
            digits,
            coeffs: Vec::new(),
        };
        f.coeffs = ctx.coeffs.iter().map(|c| f.from_rational(c)).collect();
        f
    }

    fn pow(&self, e: i64) -> BigInt {
        num_traits::pow(self.pb.clone(), e as usize)
    }

    fn from_rational(&self, r: &Rational) -> Qp {
        let Some(v) = valuation(r, self.p) else {
            return Qp::Zero { abs: EXACT_ZERO };
        };
        let strip = |n: &BigInt| {
            let e = valuation_int(n, self.p).expect("nonzero");
            n / self.pow(e)
        };
        let modulus = self.pow(self.digits);
        let num = strip(r.numer());
        let den = strip(r.denom());
        let inv = den.extended_gcd(&modulus).x;
        let u = (num * inv).mod_floor(&modulus);
        Qp::Num { v, u, k: self.digits }
    }

    fn mul(&self, a: &Qp, b: &Qp) -> Qp {
        match (a, b) {
            (Qp::Num { v: v1, u: u1, k: k1 }, Qp::Num { v: v2, u: u2, k: k2 }) => {
                let k = (*k1).min(*k2);
                Qp::Num {
                    v: v1 + v2,
                    u: (u1 * u2).mod_floor(&self.pow(k)),
                    k,
                }
            }
            (Qp::Zero { abs }, Qp::Num { v, .. }) | (Qp::Num { v, .. }, Qp::Zero { abs }) => Qp::Zero {
                abs: abs.saturating_add(*v).min(EXACT_ZERO),
            },
            (Qp::Zero { abs: a1 }, Qp::Zero { abs: a2 }) => Qp::Zero {
                abs: a1.saturating_add(*a2).min(EXACT_ZERO),
            },
        }
    }

    fn add(&self, a: &Qp, b: &Qp) -> Qp {
        let abs = a.abs_prec().min(b.abs_prec());
        let terms: Vec<(i64, &BigInt)> = [a, b]
            .into_iter()
            .filter_map(|x| match x {
                Qp::Num { v, u, .. } if *v < abs => Some((*v, u)),
                _ => None,
            })
            .collect();
        let Some(e) = terms.iter().map(|(v, _)| *v).min() else {
            return Qp::Zero { abs };
        };
        let modulus = self.pow(abs - e);
        let m = terms
            .iter()
            .fold(BigInt::zero(), |acc, (v, u)| acc + *u * self.pow(v - e))
            .mod_floor(&modulus);
        if m.is_zero() {
            return Qp::Zero { abs };
        }
        let w = valuation_int(&m, self.p).expect("nonzero");
        let v = e + w;
        let k = abs - v;
        Qp::Num {
            v,
            u: (m / self.pow(w)).mod_floor(&self.pow(k)),
            k,
        }
    }

    fn eval(&self, z: &Qp) -> Qp {
        let d = self.coeffs.len() - 1;
        let mut acc = self.coeffs[d].clone();
        for k in (0..d).rev() {
            acc = self.add(&self.mul(&acc, z), &self.coeffs[k]);
        }
        acc
    }
}

/// `G_v = max_i g_v(c_i)`, using the good-reduction shortcut for `p > d+1`.
#[allow(non_snake_case)]
pub fn G_v(ctx: &PadicContext, tol: f64) -> Result<PadicGreen> {
    if ctx.p > ctx.d as u64 + 1 {
        let units = ctx.log_max_param().map_or(Rational::zero(), |m| m.max(Rational::zero()));
        return Ok(PadicGreen::exact(units, ctx.p, GreenMethod::Shortcut, 0));
    }
    G_v_iterative(ctx, tol)
}

/// `G_v` from the orbits of all critical points, never using the shortcut.
#[allow(non_snake_case)]
pub fn G_v_iterative(ctx: &PadicContext, tol: f64) -> Result<PadicGreen> {
    combine_critical(ctx, tol, green_padic_point)
}

/// `G_v` that never fails on budget; see [`green_padic_best_effort`].
#[allow(non_snake_case)]
pub fn G_v_best_effort(ctx: &PadicContext, tol: f64) -> Result<PadicGreen> {
    if ctx.p > ctx.d as u64 + 1 {
        return G_v(ctx, tol);
    }
    combine_critical(ctx, tol, green_padic_best_effort)
}

fn combine_critical(
    ctx: &PadicContext,
    tol: f64,
    green: fn(&PadicContext, &Rational, f64) -> Result<PadicGreen>,
) -> Result<PadicGreen> {
    let mut best: Option<PadicGreen> = None;
    for ci in ctx.critical_points() {
        let g = green(ctx, &ci, tol)?;
        best = Some(match best {
            None => g,
            Some(prev) => {
                let (hi, lo) = if g.value.value >= prev.value.value { (g, prev) } else { (prev, g) };
                if hi.exact_units.is_some() && (lo.exact_units.is_some() || lo.value.upper() <= hi.value.value) {
                    hi
                } else {
                    let (prev, g) = (hi, lo);
                    PadicGreen {
                        value: prev.value.max(g.value),
                        exact_units: None,
                        method: GreenMethod::Bound,
                        steps: prev.steps.max(g.steps),
                    }
                }
            }
        });
    }
    Ok(best.expect("at least one critical point"))
}

/// Identities `t^m = Σ_j Q_{t,j} · P(c_j)` for every coordinate `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct NullCertificate {
    pub d: usize,
    pub m: u32,
    /// `rows[t][j] = Q_{t,j}`, with `t` running over `(c_1, …, c_{d-2}, a)`.
    pub rows: Vec<Vec<SymbolicPoly>>,
}

impl NullCertificate {
    /// Critical values `P(c_j)` as polynomials in the parameters.
    pub fn critical_values(d: usize) -> Result<Vec<SymbolicPoly>> {
        (0..d - 1).map(|j| symbolic_iterate(d, j, 1)).collect()
    }

    /// Exact check of every identity.
    pub fn verify(&self) -> Result<bool> {
        let f = Self::critical_values(self.d)?;
        let vars = family_vars(self.d);
        for (t, row) in self.rows.iter().enumerate() {
            let target = SymbolicPoly::var(&vars, t).pow(self.m);
            let sum = row
                .iter()
                .zip(&f)
                .fold(SymbolicPoly::zero(&vars), |acc, (q, fj)| acc.add(&q.mul(fj)));
            if sum != target {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `β_v` with `max_j |P(c_j)|_v ≥ β_v · max(|c|_v, |a|_v)^d`.
    pub fn beta(&self, place: Place) -> f64 {
        self.rows
            .iter()
            .map(|row| {
                let norm: f64 = match place {
                    Place::Infinity => row
                        .iter()
                        .map(|q| q.terms().map(|(_, c)| crate::exact::rational_to_f64(c).abs()).sum::<f64>())
                        .sum(),
                    Place::Prime(p) => row
                        .iter()
                        .flat_map(|q| q.terms().map(|(_, c)| abs_v(c, p)).collect::<Vec<_>>())
                        .fold(0.0, f64::max),
                };
                1.0 / norm
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Searches `m = d, …, max_m` for a certificate by exact linear algebra over
/// homogeneous monomials of degree `m - d`.
pub fn beta_v_witness(d: usize, max_m: u32) -> Result<NullCertificate> {
    if !(2..=3).contains(&d) {
        return Err(Error::invalid("certificates are searched for d ∈ {2,3}"));
    }
    let f = NullCertificate::critical_values(d)?;
    let vars = family_vars(d);
    let nv = vars.len();
    for m in d as u32..=max_m {
        let qmons = homogeneous_monomials(nv, m - d as u32);
        let tmons = homogeneous_monomials(nv, m);
        let mut rows = Vec::new();
        for t in 0..nv {
            // Unknowns: coefficient of each Q_j on each monomial.
            let mut cols: Vec<SymbolicPoly> = Vec::new();
            for fj in &f {
                for mon in &qmons {
                    cols.push(SymbolicPoly::monomial(&vars, mon, Rational::one()).mul(fj));
                }
            }
            let matrix: Vec<Vec<Rational>> = tmons
                .iter()
                .map(|mon| cols.iter().map(|c| c.coeff(mon)).collect())
                .collect();
            let mut texp = vec![0u32; nv];
            texp[t] = m;
            let rhs: Vec<Rational> = tmons
                .iter()
                .map(|mon| if *mon == texp { Rational::one() } else { Rational::zero() })
                .collect();
            match solve_exact(&matrix, &rhs) {
                Some(x) => {
                    let row = (0..f.len())
                        .map(|j| {
                            SymbolicPoly::from_terms(
                                &vars,
                                qmons
                                    .iter()
                                    .enumerate()
                                    .map(|(k, mon)| (mon.clone(), x[j * qmons.len() + k].clone())),
                            )
                        })
                        .collect();
                    rows.push(row);
                }
                None => break,
            }
        }
        if rows.len() == nv {
            return Ok(NullCertificate { d, m, rows });
        }
    }
    Err(Error::Numerical(format!("no certificate found for d={d} with m ≤ {max_m}")))
}

fn homogeneous_monomials(nv: usize, deg: u32) -> Vec<Vec<u32>> {
    if nv == 1 {
        return vec![vec![deg]];
    }
    let mut out = Vec::new();
    for first in (0..=deg).rev() {
        for mut rest in homogeneous_monomials(nv - 1, deg - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// A solution of the (possibly rectangular) system `A x = b` over `Q`, with
/// free variables set to zero; `None` when inconsistent.
pub fn solve_exact(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut r = r.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        let Some(pr) = (row..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, pr);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x *= &inv;
        }
        for r in 0..rows {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for k in col..=cols {
                    let delta = &f * &m[row][k];
                    m[r][k] -= delta;
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == rows {
            break;
        }
    }
    if m[row..].iter().any(|r| !r[cols].is_zero()) {
        return None;
    }
    let mut x = vec![Rational::zero(); cols];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = m[r][cols].clone();
    }
    Some(x)
}
