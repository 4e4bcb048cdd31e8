//! Dense univariate polynomials over the rationals.
//!
//! Used wherever a computation specializes all parameters to rational values:
//! exact division of dynatomic factors, square-free decomposition, exact
//! Newton polishing and characteristic polynomials.

use std::fmt;

use num_complex::Complex64;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::exact::{f64_to_rational, format_rational, GaussRat, Rational, Scalar};

/// Coefficients lowest degree first; no trailing zeros.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct UPoly {
    coeffs: Vec<Rational>,
}

impl UPoly {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        UPoly { coeffs }
    }

    pub fn zero() -> Self {
        UPoly { coeffs: vec![] }
    }

    pub fn constant(c: Rational) -> Self {
        UPoly::new(vec![c])
    }

    pub fn one() -> Self {
        UPoly::constant(Rational::one())
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        UPoly::new(vec![Rational::zero(), Rational::one()])
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Rational {
        self.coeffs.last().cloned().unwrap_or_else(Rational::zero)
    }

    pub fn coeff(&self, k: usize) -> Rational {
        self.coeffs.get(k).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        UPoly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        UPoly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }

    pub fn scale(&self, s: &Rational) -> Self {
        UPoly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return UPoly::zero();
        }
        let mut out = vec![Rational::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    out[i + j] += a * b;
                }
            }
        }
        UPoly::new(out)
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = UPoly::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// `self(inner(x))`.
    pub fn compose(&self, inner: &Self) -> Self {
        let mut acc = UPoly::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(inner).add(&UPoly::constant(c.clone()));
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        UPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * Rational::from_integer((k as i64).into()))
                .collect(),
        )
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead_inv = divisor.leading().recip();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (UPoly::zero(), self.clone());
        }
        let mut quot = vec![Rational::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] * &lead_inv;
            if c.is_zero() {
                continue;
            }
            for (j, dc) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= &c * dc;
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (UPoly::new(quot), UPoly::new(rem))
    }

    /// Exact quotient when `divisor` divides `self`, `None` otherwise.
    pub fn exact_div(&self, divisor: &Self) -> Option<Self> {
        let (q, r) = self.div_rem(divisor);
        r.is_zero().then_some(q)
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(&self.leading().recip())
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, o: &Self) -> Self {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            // Keep coefficient growth in check.
            a = b;
            b = r.monic();
        }
        a.monic()
    }

    /// Square-free decomposition (Yun): returns `(f_k, k)` with
    /// `self = lc · Π f_k^k` and each `f_k` monic, square-free, pairwise coprime.
    pub fn square_free_decomposition(&self) -> Vec<(UPoly, u32)> {
        let mut out = Vec::new();
        if self.degree().unwrap_or(0) == 0 {
            return out;
        }
        let f = self.monic();
        let fp = f.derivative();
        let a0 = f.gcd(&fp);
        let mut b = f.exact_div(&a0).expect("gcd divides");
        let mut c = fp.exact_div(&a0).expect("gcd divides");
        let mut d = c.sub(&b.derivative());
        let mut k = 1;
        while b.degree().unwrap_or(0) > 0 {
            let a = b.gcd(&d);
            if a.degree().unwrap_or(0) > 0 {
                out.push((a.clone(), k));
            }
            b = b.exact_div(&a).expect("gcd divides");
            c = d.exact_div(&a).expect("gcd divides");
            d = c.sub(&b.derivative());
            k += 1;
        }
        out
    }

    pub fn eval_exact<S: Scalar>(&self, x: &S) -> S {
        let mut acc = S::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + S::from_rational(c);
        }
        acc
    }

    pub fn to_complex_coeffs(&self) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .map(|c| Complex64::new(crate::exact::rational_to_f64(c), 0.0))
            .collect()
    }

    /// One exact Newton step at a double-precision point: the update is
    /// computed exactly and rounded once.
    pub fn exact_newton_step(&self, deriv: &Self, x: Complex64) -> Option<Complex64> {
        if !x.re.is_finite() || !x.im.is_finite() {
            return None;
        }
        let (re, im) = (f64_to_rational(x.re), f64_to_rational(x.im));
        // Both parts are dyadic; write x = (X + iY) / 2^s.
        let s = re.denom().bits().max(im.denom().bits()) - 1;
        let scale = |r: &Rational| (r.numer() << (s - (r.denom().bits() - 1))) as BigInt;
        let (xr, xi) = (scale(&re), scale(&im));
        let (f, lf) = self.homogeneous_eval(&xr, &xi, s);
        let (fp, lfp) = deriv.homogeneous_eval(&xr, &xi, s);
        // p(x) = P / (L_p 2^{s deg p}) for both polynomials.
        let den = &fp.0 * &fp.0 + &fp.1 * &fp.1;
        if den.is_zero() {
            return None;
        }
        let num_re = &f.0 * &fp.0 + &f.1 * &fp.1;
        let num_im = &f.1 * &fp.0 - &f.0 * &fp.1;
        let (df, dfp) = (self.coeffs.len().saturating_sub(1) as u64, deriv.coeffs.len().saturating_sub(1) as u64);
        let factor = if dfp >= df {
            Rational::new(lfp << (s * (dfp - df)), lf)
        } else {
            Rational::new(lfp, lf << (s * (df - dfp)))
        };
        let step = GaussRat::new(
            Rational::new(num_re, den.clone()) * &factor,
            Rational::new(num_im, den) * &factor,
        );
        Some(x - step.to_complex())
    }

    /// `L · 2^{s deg} · p((X + iY) / 2^s)` as a Gaussian integer, with `L`
    /// the common denominator of the coefficients.
    fn homogeneous_eval(&self, xr: &BigInt, xi: &BigInt, s: u64) -> ((BigInt, BigInt), BigInt) {
        let l = self.coeffs.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let (mut ar, mut ai) = (BigInt::zero(), BigInt::zero());
        let deg = self.coeffs.len().saturating_sub(1);
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            let n = (c.numer() * (&l / c.denom())) << (s * (deg - k) as u64);
            let nr = &ar * xr - &ai * xi + n;
            ai = &ar * xi + &ai * xr;
            ar = nr;
        }
        ((ar, ai), l)
    }
}

impl fmt::Display for UPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| match k {
                0 => format_rational(c),
                1 => format!("{}*x", format_rational(c)),
                _ => format!("{}*x^{}", format_rational(c), k),
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_int};

    fn p(cs: &[i64]) -> UPoly {
        UPoly::new(cs.iter().map(|&c| rat_int(c)).collect())
    }

    #[test]
    fn division_and_gcd() {
        // (x-1)(x+2) / (x-1)
        let f = p(&[-2, 1, 1]);
        let g = p(&[-1, 1]);
        let (q, r) = f.div_rem(&g);
        assert_eq!(q, p(&[2, 1]));
        assert!(r.is_zero());
        assert_eq!(f.gcd(&p(&[-1, 0, 1])), g);
    }

    #[test]
    fn yun_recovers_multiplicities() {
        // (x-1)^3 (x+1) (x^2+1)^2
        let f = p(&[-1, 1]).pow(3).mul(&p(&[1, 1])).mul(&p(&[1, 0, 1]).pow(2));
        let sf = f.square_free_decomposition();
        let mults: Vec<(usize, u32)> = sf.iter().map(|(g, k)| (g.degree().unwrap(), *k)).collect();
        assert_eq!(mults, vec![(1, 1), (2, 2), (1, 3)]);
        let rebuilt = sf
            .iter()
            .fold(UPoly::one(), |acc, (g, k)| acc.mul(&g.pow(*k)));
        assert_eq!(rebuilt, f.monic());
    }

    #[test]
    fn exact_newton_polishes_a_root() {
        let f = UPoly::new(vec![rat_int(-2), rat_int(0), rat_int(1)]);
        let fp = f.derivative();
        let mut x = Complex64::new(1.4, 0.0);
        for _ in 0..6 {
            x = f.exact_newton_step(&fp, x).unwrap();
        }
        assert!((x.re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.compose(&p(&[0, 1])), f);
        assert_eq!(UPoly::new(vec![rat(1, 2)]).to_string(), "1/2");
    }

    #[test]
    fn newton_step_matches_gaussian_rational_route() {
        let f = UPoly::new(vec![rat(-7, 3), rat(1, 2), rat(0, 1), rat(5, 4), rat(-1, 9)]);
        let fp = f.derivative();
        for x in [Complex64::new(0.3, -1.7), Complex64::new(-2.0, 0.0), Complex64::new(0.0, 0.125)] {
            let gx = GaussRat::from_complex(x);
            let want = x - f.eval_exact(&gx).checked_div(&fp.eval_exact(&gx)).unwrap().to_complex();
            assert_eq!(f.exact_newton_step(&fp, x), Some(want));
            // A divisor of the wrong degree only rescales consistently.
            let g = UPoly::new(vec![rat(2, 5), rat(1, 1)]);
            let want = x - f.eval_exact(&gx).checked_div(&g.eval_exact(&gx)).unwrap().to_complex();
            assert_eq!(f.exact_newton_step(&g, x), Some(want));
        }
        assert_eq!(f.exact_newton_step(&UPoly::zero(), Complex64::new(1.0, 0.0)), None);
    }
}
