//! Naive, dynamical, Ingram and bifurcation heights of rational parameters,
//! summed place by place, and an exact PCF detector.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{factorial, format_rational, GaussRat, Rational};
use crate::green_arch::{escape_bound, green_point_exact, CertifiedValue, G_point_exact};
use crate::green_padic::{
    green_padic_best_effort, log_abs_place, log_abs_units, prime_factors, primes_up_to, GreenMethod, PadicContext,
    Place, G_v_best_effort,
};
use crate::poly_family::ExactPoint;

/// Exact orbit cap for PCF detection.
pub const PCF_MAX_STEPS: usize = 10_000;
/// Size cap (numerator plus denominator bits) for PCF detection.
pub const PCF_MAX_BITS: u64 = 1_000;

/// `(place, contribution)` pairs.
pub type Breakdown = Vec<(Place, CertifiedValue)>;

/// Naive height `Σ_v log⁺ max_i |x_i|_v` with its per-place terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveHeight {
    pub value: f64,
    pub breakdown: Vec<(Place, f64)>,
}

fn denominator_primes(xs: &[Rational]) -> Result<BTreeSet<u64>> {
    let mut out = BTreeSet::new();
    for x in xs {
        if !x.denom().is_one() {
            out.extend(prime_factors(x.denom())?);
        }
    }
    Ok(out)
}

pub fn h_nv(xs: &[Rational]) -> Result<NaiveHeight> {
    let mut places = vec![Place::Infinity];
    places.extend(denominator_primes(xs)?.into_iter().map(Place::Prime));
    let breakdown: Vec<(Place, f64)> = places
        .into_iter()
        .map(|v| {
            let m = xs.iter().map(|x| log_abs_place(x, v)).fold(0.0, f64::max);
            (v, m)
        })
        .collect();
    Ok(NaiveHeight {
        value: breakdown.iter().map(|(_, x)| x).sum(),
        breakdown,
    })
}

/// Places that can contribute: `∞`, primes `≤ d+1` (which include those of
/// `d!`), and primes dividing a numerator or denominator of the inputs.
pub fn relevant_places(d: usize, xs: &[Rational]) -> Result<Vec<Place>> {
    let mut primes: BTreeSet<u64> = primes_up_to(d as u64 + 1).into_iter().collect();
    primes.extend(prime_factors(&factorial(d as u64))?);
    for x in xs {
        if !x.is_zero() {
            primes.extend(prime_factors(x.numer())?);
            primes.extend(prime_factors(x.denom())?);
        }
    }
    let mut out = vec![Place::Infinity];
    out.extend(primes.into_iter().map(Place::Prime));
    Ok(out)
}

fn rational_coords(p: &ExactPoint) -> Result<Vec<Rational>> {
    if !p.is_rational() {
        return Err(Error::invalid(
            "heights are computed for rational parameters only; got a non-real coordinate",
        ));
    }
    Ok(p.coords().into_iter().map(|x| x.re).collect())
}

/// Dynamical height `h_{P}(x) = Σ_v g_{c,a,v}(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynHeight {
    pub value: CertifiedValue,
    pub breakdown: Breakdown,
    /// True when the orbit of `x` was found to be finite.
    pub preperiodic: bool,
}

pub fn h_dyn(p: &ExactPoint, x: &Rational, tol: f64) -> Result<DynHeight> {
    let mut xs = rational_coords(p)?;
    xs.push(x.clone());
    let places = relevant_places(p.d(), &xs)?;
    if exact_orbit(p, &GaussRat::real(x.clone()), PCF_MAX_STEPS, PCF_MAX_BITS).0 == OrbitFate::Finite {
        return Ok(DynHeight {
            value: CertifiedValue::exact(0.0),
            breakdown: places.into_iter().map(|v| (v, CertifiedValue::exact(0.0))).collect(),
            preperiodic: true,
        });
    }
    let local_tol = tol / places.len() as f64;
    let mut breakdown = Vec::with_capacity(places.len());
    for v in places {
        let g = match v {
            Place::Infinity => green_point_exact(p, &GaussRat::real(x.clone()), local_tol)?,
            Place::Prime(q) => green_padic_best_effort(&PadicContext::from_point(q, p)?, x, local_tol)?.value,
        };
        breakdown.push((v, g));
    }
    Ok(DynHeight {
        value: sum(&breakdown),
        breakdown,
        preperiodic: false,
    })
}

fn sum(b: &Breakdown) -> CertifiedValue {
    b.iter().fold(CertifiedValue::exact(0.0), |acc, (_, g)| acc.add(*g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcfFlag {
    Pcf,
    NotPcf,
    Undecided,
}

/// Bifurcation height with the Ingram height and naive height of the same point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightReport {
    pub d: usize,
    pub coords: Vec<String>,
    pub h_nv: f64,
    pub h_bif: CertifiedValue,
    pub h_ingram: CertifiedValue,
    /// Per-place `G_v`.
    pub breakdown: Breakdown,
    pub pcf_flag: PcfFlag,
    /// `h_bif ≤ h_ingram ≤ (d-1) h_bif` within the summed errors.
    pub sandwich_holds: bool,
}

#[allow(non_snake_case)]
pub fn h_bif(p: &ExactPoint, tol: f64) -> Result<HeightReport> {
    let coords = rational_coords(p)?;
    let places = relevant_places(p.d(), &coords)?;
    let local_tol = tol / places.len() as f64;
    let mut breakdown = Vec::with_capacity(places.len());
    for &v in &places {
        let g = match v {
            Place::Infinity => G_point_exact(p, local_tol)?,
            Place::Prime(q) => G_v_best_effort(&PadicContext::from_point(q, p)?, local_tol)?.value,
        };
        breakdown.push((v, g));
    }
    let hb = sum(&breakdown);
    let mut hi = CertifiedValue::exact(0.0);
    for ci in p.critical_points() {
        hi = hi.add(h_dyn(p, &ci.re, tol)?.value);
    }
    let dm1 = (p.d() - 1) as f64;
    let slack = hb.error * dm1 + hi.error + 1e-12;
    let sandwich_holds = hb.value <= hi.value + hb.error + hi.error + 1e-12 && hi.value <= dm1 * hb.value + slack;
    let pcf_flag = match detect_pcf_exact(p)? {
        PcfDecision::Pcf { .. } => PcfFlag::Pcf,
        PcfDecision::NotPcf { .. } => PcfFlag::NotPcf,
        PcfDecision::Undecided { .. } => PcfFlag::Undecided,
    };
    Ok(HeightReport {
        d: p.d(),
        coords: coords.iter().map(format_rational).collect(),
        h_nv: h_nv(&coords)?.value,
        h_bif: hb,
        h_ingram: hi,
        breakdown,
        pcf_flag,
        sandwich_holds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OrbitFate {
    Finite,
    Escapes(Place, usize),
    Unknown,
}

/// Exact orbit of `z`: finite (with the orbit), escaping (with the place
/// and step of the certificate), or unknown within the caps.
fn exact_orbit(p: &ExactPoint, z: &GaussRat, steps: usize, bits: u64) -> (OrbitFate, Vec<GaussRat>) {
    let pf = p.to_float();
    let radius = escape_bound(&pf) * (1.0 + 1e-9);
    let padic: Vec<PadicContext> = if p.is_rational() {
        let coords: Vec<Rational> = p.coords().into_iter().map(|x| x.re).collect();
        relevant_places(p.d(), &coords)
            .unwrap_or_default()
            .into_iter()
            .filter_map(|v| match v {
                Place::Prime(q) => PadicContext::from_point(q, p).ok(),
                Place::Infinity => None,
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut orbit = vec![z.clone()];
    let mut cur = z.clone();
    for n in 0..steps {
        if cur.to_complex().norm() >= radius {
            return (OrbitFate::Escapes(Place::Infinity, n), orbit);
        }
        if cur.is_real() && !cur.re.is_zero() {
            for ctx in &padic {
                if escapes_padically(ctx, &cur.re) {
                    return (OrbitFate::Escapes(Place::Prime(ctx.p()), n), orbit);
                }
            }
        }
        if cur.bit_size() > bits {
            return (OrbitFate::Unknown, orbit);
        }
        cur = p.eval(&cur);
        if orbit.contains(&cur) {
            orbit.push(cur);
            return (OrbitFate::Finite, orbit);
        }
        orbit.push(cur.clone());
    }
    (OrbitFate::Unknown, orbit)
}

/// True when the closed-form branch applies at `z` with a positive value.
fn escapes_padically(ctx: &PadicContext, z: &Rational) -> bool {
    let k = ctx.constants();
    match log_abs_units(z, ctx.p()) {
        Some(lz) if lz >= k.log_c_tilde => {
            let g = green_padic_best_effort(ctx, z, 1.0).expect("positive tolerance");
            g.method == GreenMethod::ClosedForm && g.exact_units.is_some_and(|u| u.is_positive())
        }
        _ => false,
    }
}

/// Result of [`detect_pcf_exact`].
#[derive(Clone, Debug, PartialEq)]
pub enum PcfDecision {
    /// Every critical orbit is finite; the orbits are the certificate.
    Pcf { orbits: Vec<Vec<GaussRat>> },
    /// Critical point `critical` escapes at `place` after `step` iterations.
    NotPcf { critical: usize, place: Place, step: usize },
    /// No certificate within the caps.
    Undecided { critical: usize, steps: usize },
}

pub fn detect_pcf_exact(p: &ExactPoint) -> Result<PcfDecision> {
    detect_pcf_with_budget(p, PCF_MAX_STEPS, PCF_MAX_BITS)
}

pub fn detect_pcf_with_budget(p: &ExactPoint, steps: usize, bits: u64) -> Result<PcfDecision> {
    let mut orbits = Vec::new();
    let mut undecided = None;
    for (i, ci) in p.critical_points().iter().enumerate() {
        let (fate, orbit) = exact_orbit(p, ci, steps, bits);
        match fate {
            OrbitFate::Finite => orbits.push(orbit),
            OrbitFate::Escapes(place, step) => return Ok(PcfDecision::NotPcf { critical: i, place, step }),
            OrbitFate::Unknown => {
                undecided.get_or_insert(PcfDecision::Undecided {
                    critical: i,
                    steps: orbit.len() - 1,
                });
            }
        }
    }
    Ok(undecided.unwrap_or(PcfDecision::Pcf { orbits }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_int};
    use num_bigint::BigInt;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(d: usize, coords: &[Rational]) -> ExactPoint {
        let g: Vec<GaussRat> = coords.iter().map(|x| GaussRat::real(x.clone())).collect();
        ExactPoint::from_coords(d, &g).unwrap()
    }

    fn random_rational(rng: &mut ChaCha8Rng, bound: i64) -> Rational {
        Rational::new(BigInt::from(rng.gen_range(-bound..=bound)), BigInt::from(rng.gen_range(1..=bound)))
    }

    /// Cleared-denominator oracle: `log max(D, |D x_i|)` with `D` the lcm.
    fn naive_oracle(xs: &[Rational]) -> f64 {
        use num_integer::Integer;
        let den = xs.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        let mut best = crate::exact::ln_abs_bigint(&den);
        for x in xs {
            let n = x * Rational::from_integer(den.clone());
            if !n.is_zero() {
                best = best.max(crate::exact::ln_abs_bigint(n.numer()));
            }
        }
        best
    }

    #[test]
    fn naive_examples() {
        assert_eq!(h_nv(&[rat_int(0), rat_int(0)]).unwrap().value, 0.0);
        let h = h_nv(&[rat(3, 2)]).unwrap();
        assert!((h.value - 3f64.ln()).abs() < 1e-14);
        assert_eq!(h.breakdown.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let xs: Vec<Rational> = (0..2).map(|_| random_rational(&mut rng, 10_000)).collect();
            let h = h_nv(&xs).unwrap().value;
            assert!(h >= 0.0);
            assert!((h - naive_oracle(&xs)).abs() < 1e-9);
        }
    }

    #[test]
    fn dynamical_examples() {
        let o = ExactPoint::origin(2).unwrap();
        let h = h_dyn(&o, &rat_int(0), 1e-9).unwrap();
        assert_eq!(h.value, CertifiedValue::exact(0.0));
        let i2 = ExactPoint::new(2, vec![], GaussRat::from_ints(0, 2)).unwrap();
        assert!(h_dyn(&i2, &rat_int(0), 1e-9).is_err());
        let p = point(2, &[rat_int(2)]);
        let h = h_dyn(&p, &rat_int(0), 1e-9).unwrap();
        assert!(h.value.lower() > 0.0);
        let arch = crate::green_arch::green_point(&p.to_float(), num_complex::Complex64::new(0.0, 0.0), 1e-10).unwrap();
        for (v, g) in &h.breakdown {
            if *v != Place::Infinity {
                assert!(g.upper() <= 1e-9, "{v}: {g:?}");
            }
        }
        assert!((h.value.value - arch.value).abs() < 2e-9);
    }

    #[test]
    fn bifurcation_examples() {
        for d in [2usize, 3] {
            let r = h_bif(&ExactPoint::origin(d).unwrap(), 1e-9).unwrap();
            assert_eq!(r.h_bif, CertifiedValue::exact(0.0));
            assert_eq!(r.pcf_flag, PcfFlag::Pcf);
        }
        let r = h_bif(&point(2, &[rat_int(2)]), 1e-9).unwrap();
        assert!(r.h_bif.lower() > 0.0);
        assert_eq!(r.pcf_flag, PcfFlag::NotPcf);
        assert!(r.sandwich_holds);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"coords\":[\"2\"]"));
    }

    #[test]
    fn pcf_detection_examples() {
        match detect_pcf_exact(&ExactPoint::origin(2).unwrap()).unwrap() {
            PcfDecision::Pcf { orbits } => assert_eq!(orbits, vec![vec![GaussRat::from_ints(0, 0); 2]]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            detect_pcf_exact(&point(2, &[rat_int(1)])).unwrap(),
            PcfDecision::NotPcf { critical: 0, .. }
        ));
        // a = 2i: 0 → -4 → 4 → 4.
        let i2 = ExactPoint::new(2, vec![], GaussRat::from_ints(0, 2)).unwrap();
        assert!(matches!(detect_pcf_exact(&i2).unwrap(), PcfDecision::Pcf { .. }));
        // a = 1/2 is bounded at ∞ but escapes 2-adically.
        match detect_pcf_exact(&point(2, &[rat(1, 2)])).unwrap() {
            PcfDecision::NotPcf { place, .. } => assert_eq!(place, Place::Prime(2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sandwich_on_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let coords = vec![random_rational(&mut rng, 20), random_rational(&mut rng, 20)];
            let r = h_bif(&point(3, &coords), 1e-8).unwrap();
            assert!(r.sandwich_holds, "{r:?}");
            assert!(r.h_bif.upper() >= 0.0);
        }
    }

    #[test]
    fn bifurcation_height_stays_close_to_naive_height() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let d = 2 + k % 2;
            let coords: Vec<Rational> = (0..d - 1).map(|_| random_rational(&mut rng, 1_000_000)).collect();
            let r = h_bif(&point(d, &coords), 1e-6).unwrap();
            worst = worst.max((r.h_bif.value - r.h_nv).abs());
        }
        assert!(worst < 6.0, "worst deviation {worst}");
    }
}
