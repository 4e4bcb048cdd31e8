//! Exact dynamics of the circle map `α ↦ dα` on `Q/Z`: preperiods and
//! periods, Möbius counts of periodic angles, the sets `P(m, n)` of angles
//! with exact preperiod `n` and period `m - n`, and unlinked critical
//! portraits built from them.

use std::cmp::Ordering;
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `d^m` for angle enumeration.
pub const DEFAULT_ANGLE_BUDGET: u64 = 50_000_000;

/// A reduced fraction `num/den ∈ [0, 1)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Angle {
    num: u64,
    den: u64,
}

impl Angle {
    /// Reduces `num/den` modulo 1.
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::invalid("angle with zero denominator"));
        }
        let num = num % den;
        let g = num.gcd(&den);
        Ok(Angle { num: num / g, den: den / g })
    }

    pub fn zero() -> Self {
        Angle { num: 0, den: 1 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self + p/q mod 1`.
    pub fn add_fraction(&self, p: u64, q: u64) -> Self {
        let l = self.den.lcm(&q);
        let n = self.num as u128 * (l / self.den) as u128 + p as u128 * (l / q) as u128;
        Angle::new((n % l as u128) as u64, l).expect("nonzero denominator")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (p, q) = s
            .trim()
            .split_once('/')
            .map(|(p, q)| (p.trim(), q.trim()))
            .unwrap_or((s.trim(), "1"));
        let p: u64 = p.parse().map_err(|_| Error::Parse(format!("bad angle {s:?}")))?;
        let q: u64 = q.parse().map_err(|_| Error::Parse(format!("bad angle {s:?}")))?;
        if q == 0 || p >= q && !(p == 0 && q == 1) {
            return Err(Error::Parse(format!("angle {s:?} not in [0,1)")));
        }
        Angle::new(p, q)
    }
}

impl Ord for Angle {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.num as u128 * o.den as u128).cmp(&(o.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Angle {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Angle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Angle::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `Φ_d(α) = dα mod 1`.
pub fn phi_d(a: Angle, d: u64) -> Angle {
    Angle::new(((a.num as u128 * d as u128) % a.den as u128) as u64, a.den).expect("nonzero denominator")
}

/// Exact minimal preperiod `n` and period `q` of `α` under `Φ_d`.
pub fn preperiod_period(a: Angle, d: u64) -> (u32, u32) {
    // d^n α is periodic iff its reduced denominator is coprime to d.
    let mut den = a.den;
    let mut n = 0;
    loop {
        let g = den.gcd(&d);
        if g == 1 {
            break;
        }
        den /= g;
        n += 1;
    }
    // Period = multiplicative order of d modulo the periodic denominator.
    if den == 1 {
        return (n, 1);
    }
    let mut q = 1;
    let mut x = d % den;
    while x != 1 {
        x = ((x as u128 * d as u128) % den as u128) as u64;
        q += 1;
    }
    (n, q)
}

/// Möbius function.
pub fn mobius(mut n: u64) -> i64 {
    if n == 1 {
        return 1;
    }
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

pub fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|k| n % k == 0).collect()
}

/// Number of angles of exact period `q`: `Σ_{l|q} μ(q/l)(d^l - 1)`.
pub fn count_exact_periodic(d: u64, q: u32) -> u64 {
    let total: i128 = divisors(q as u64)
        .into_iter()
        .map(|l| mobius(q as u64 / l) as i128 * ((d as i128).pow(l as u32) - 1))
        .sum();
    total as u64
}

fn check_budget(d: u64, m: u32, budget: u64) -> Result<()> {
    match d.checked_pow(m) {
        Some(v) if v <= budget => Ok(()),
        _ => Err(Error::budget(format!("angle enumeration with {d}^{m} candidates"), budget)),
    }
}

/// Angles of exact period `q`, generated as `k/(d^q - 1)`.
pub fn exact_periodic_angles(d: u64, q: u32) -> Vec<Angle> {
    let den = d.pow(q) - 1;
    (0..den)
        .map(|k| Angle::new(k, den).expect("nonzero"))
        .filter(|a| preperiod_period(*a, d) == (0, q))
        .collect()
}

/// The `d` preimages of `β` under `Φ_d`.
pub fn preimages(b: Angle, d: u64) -> Vec<Angle> {
    let den = b.den * d;
    (0..d).map(|j| Angle::new(b.num + j * b.den, den).expect("nonzero")).collect()
}

/// `P(m, n)`: angles with exact preperiod `n` and exact period `m - n`,
/// built as iterated preimages of exact-period angles. Sorted.
pub fn enumerate_p(d: u64, m: u32, n: u32) -> Result<Vec<Angle>> {
    enumerate_p_with_budget(d, m, n, DEFAULT_ANGLE_BUDGET)
}

pub fn enumerate_p_with_budget(d: u64, m: u32, n: u32, budget: u64) -> Result<Vec<Angle>> {
    if d < 2 {
        return Err(Error::invalid("degree must be at least 2"));
    }
    if !(m > n && n >= 1) {
        return Err(Error::invalid(format!("need m > n >= 1, got m={m}, n={n}")));
    }
    check_budget(d, m, budget)?;
    let q = m - n;
    let periodic = exact_periodic_angles(d, q);
    // First preimage step drops the periodic preimage.
    let mut layer: Vec<Angle> = Vec::new();
    for b in &periodic {
        for a in preimages(*b, d) {
            if preperiod_period(a, d).0 != 0 {
                layer.push(a);
            }
        }
    }
    for _ in 1..n {
        layer = layer.iter().flat_map(|b| preimages(*b, d)).collect();
    }
    layer.sort();
    Ok(layer)
}

/// `|P(m, n)| = Per*(m - n) · (d - 1) · d^{n-1}`.
pub fn p_cardinality(d: u64, m: u32, n: u32) -> u64 {
    count_exact_periodic(d, m - n) * (d - 1) * d.pow(n - 1)
}

/// A rational `p/q ∈ [0, 1]` (width 1 means the full circle).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Width {
    pub num: u64,
    pub den: u64,
}

/// Exact count of `angles` (sorted or not) in the half-open arc `[x, x + w)`.
pub fn count_in_arc(angles: &[Angle], x: Angle, w: Width) -> Result<usize> {
    if w.den == 0 || w.num > w.den {
        return Err(Error::invalid("width must be a fraction in [0, 1]"));
    }
    if w.num == 0 {
        return Ok(0);
    }
    if w.num == w.den {
        return Ok(angles.len());
    }
    // Work with lifts: α is inside iff (α - x) mod 1 < w.
    Ok(angles
        .iter()
        .filter(|a| {
            let l = a.den.lcm(&x.den) as u128;
            let diff = (a.num as u128 * (l / a.den as u128) + l - x.num as u128 * (l / x.den as u128)) % l;
            // diff/l < w.num/w.den
            diff * w.den as u128 <= u128::MAX / 2 && diff * (w.den as u128) < (w.num as u128) * l
        })
        .count())
}

pub fn interval_count(d: u64, m: u32, n: u32, x: Angle, w: Width) -> Result<usize> {
    let set = enumerate_p(d, m, n)?;
    count_in_arc(&set, x, w)
}

/// Smallest number of points of `P(m, n)` in any arc of length `1/d²`,
/// divided by `d^m`; the empirical lower-bound constant.
pub fn empirical_arc_constant(d: u64, m: u32, n: u32) -> Result<f64> {
    let set = enumerate_p(d, m, n)?;
    let w = Width { num: 1, den: d * d };
    // The count is piecewise constant in x and changes only at points of the
    // set shifted by 0 or -w, so the minimum is attained just after one of
    // those breakpoints.
    let mut candidates: Vec<Angle> = Vec::with_capacity(2 * set.len());
    for a in &set {
        candidates.push(a.add_fraction(1, 2 * a.den.max(1) * d * d * 4096));
        let shifted = a.add_fraction(d * d - 1, d * d);
        candidates.push(shifted.add_fraction(1, 2 * shifted.den.max(1) * d * d * 4096));
    }
    let mut best = usize::MAX;
    for x in candidates {
        best = best.min(count_in_arc(&set, x, w)?);
    }
    Ok(best as f64 / (d as f64).powi(m as i32))
}

/// An unordered pair of angles with `dα = dα'`.
pub type AnglePair = (Angle, Angle);

fn strictly_between(lo: Angle, hi: Angle, x: Angle) -> bool {
    lo < x && x < hi
}

/// True when `t2` lies in a single component of the circle minus `t1`.
pub fn is_unlinked(t1: AnglePair, t2: AnglePair) -> Result<bool> {
    let (a, b) = if t1.0 <= t1.1 { t1 } else { (t1.1, t1.0) };
    if [t2.0, t2.1].iter().any(|x| *x == a || *x == b) {
        return Err(Error::invalid("angle pairs must be disjoint"));
    }
    let in1 = strictly_between(a, b, t2.0);
    let in2 = strictly_between(a, b, t2.1);
    Ok(in1 == in2)
}

/// A critical portrait: `d - 1` pairs, pairwise disjoint and unlinked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Portrait {
    pub pairs: Vec<AnglePair>,
}

impl Portrait {
    /// Checks membership in `S^{d-1}` and the disjoint/unlinked conditions.
    pub fn is_admissible(&self, d: u64) -> bool {
        if self.pairs.len() as u64 != d - 1 {
            return false;
        }
        for (x, y) in &self.pairs {
            if x == y || phi_d(*x, d) != phi_d(*y, d) {
                return false;
            }
        }
        for i in 0..self.pairs.len() {
            for j in i + 1..self.pairs.len() {
                match is_unlinked(self.pairs[i], self.pairs[j]) {
                    Ok(true) => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PortraitSet {
    pub portraits: Vec<Portrait>,
    /// True when the budget cut the enumeration short.
    pub truncated: bool,
}

/// Portraits `θ_i = {α_i, α_i + 1/d}` with `α_i ∈ P(m_i, n_i)` and
/// consecutive lifts satisfying `α_i + 1/d < α_{i+1} < α_i + 1/(d-1)`.
/// Enumerated lexicographically in `(α_1, …, α_{d-1})`.
pub fn build_portraits(d: u64, ms: &[u32], ns: &[u32], budget: usize) -> Result<PortraitSet> {
    if ms.len() as u64 != d - 1 || ns.len() != ms.len() {
        return Err(Error::invalid(format!("need {} (m_i, n_i) pairs", d - 1)));
    }
    let sets: Vec<Vec<Angle>> = ms
        .iter()
        .zip(ns)
        .map(|(&m, &n)| enumerate_p(d, m, n))
        .collect::<Result<_>>()?;
    let mut out = PortraitSet {
        portraits: Vec::new(),
        truncated: false,
    };
    let mut chosen: Vec<(Angle, u64)> = Vec::new(); // (angle, number of wraps of the lift)
    extend_portraits(d, &sets, &mut chosen, &mut out, budget);
    Ok(out)
}

fn extend_portraits(d: u64, sets: &[Vec<Angle>], chosen: &mut Vec<(Angle, u64)>, out: &mut PortraitSet, budget: usize) {
    if out.truncated {
        return;
    }
    let j = chosen.len();
    if j == sets.len() {
        if out.portraits.len() >= budget {
            out.truncated = true;
            return;
        }
        let pairs = chosen
            .iter()
            .map(|(a, _)| (*a, a.add_fraction(1, d)))
            .collect();
        out.portraits.push(Portrait { pairs });
        return;
    }
    if j == 0 {
        for &a in &sets[0] {
            chosen.push((a, 0));
            extend_portraits(d, sets, chosen, out, budget);
            chosen.pop();
        }
        return;
    }
    let (prev, wraps) = chosen[j - 1];
    // Lifted value of prev is prev + wraps; candidate lift a + w' must be in
    // (prev + wraps + 1/d, prev + wraps + 1/(d-1)).
    for wrap in [wraps, wraps + 1] {
        for &a in &sets[j] {
            if lift_in_window(prev, wraps, a, wrap, d) {
                chosen.push((a, wrap));
                extend_portraits(d, sets, chosen, out, budget);
                chosen.pop();
            }
        }
    }
}

fn lift_in_window(prev: Angle, pw: u64, a: Angle, aw: u64, d: u64) -> bool {
    // Compare a + aw - (prev + pw) against 1/d and 1/(d-1) exactly.
    let l = (prev.den as u128).lcm(&(a.den as u128)) * d as u128 * (d as u128 - 1);
    let lift = |x: Angle, w: u64| (x.num as u128 * (l / x.den as u128)) as i128 + w as i128 * l as i128;
    let diff = lift(a, aw) - lift(prev, pw);
    diff > (l / d as u128) as i128 && diff < (l / (d as u128 - 1)) as i128
}

/// Exhaustive count of the same portrait set, used as an independent check.
pub fn count_portraits_bruteforce(d: u64, ms: &[u32], ns: &[u32]) -> Result<usize> {
    let sets: Vec<Vec<Angle>> = ms
        .iter()
        .zip(ns)
        .map(|(&m, &n)| enumerate_p(d, m, n))
        .collect::<Result<_>>()?;
    let r = |a: &Angle| a.num as f64 / a.den as f64;
    let mut count = 0usize;
    match sets.len() {
        1 => count = sets[0].len(),
        2 => {
            let lo = 1.0 / d as f64;
            let hi = 1.0 / (d as f64 - 1.0);
            for a in &sets[0] {
                for b in &sets[1] {
                    let mut diff = r(b) - r(a);
                    if diff < 0.0 {
                        diff += 1.0;
                    }
                    if diff > lo + 1e-12 && diff < hi - 1e-12 {
                        count += 1;
                    }
                }
            }
        }
        _ => return Err(Error::invalid("brute force supports d <= 3")),
    }
    Ok(count)
}

pub fn angles_to_csv(angles: &[Angle]) -> String {
    let mut s = String::from("angle\n");
    for a in angles {
        s.push_str(&a.to_string());
        s.push('\n');
    }
    s
}
