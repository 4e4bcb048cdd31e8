//! Exact scalars: big rationals and Gaussian rationals, plus the [`Scalar`]
//! trait that lets the polynomial family run over either exact or
//! double-precision complex values.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"-0.25"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
        let q: BigInt = q
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !frac.chars().all(|ch| ch.is_ascii_digit())
            || !int_digits.chars().all(|ch| ch.is_ascii_digit())
        {
            return Err(Error::Parse(format!("bad decimal {s:?}")));
        }
        let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
        let num: BigInt = digits
            .parse()
            .map_err(|_| Error::Parse(format!("bad decimal {s:?}")))?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rational::new(num, den);
        return Ok(if neg { -r } else { r });
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer {s:?}")))?;
    Ok(Rational::from_integer(n))
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Converts a rational to the nearest double, also for numerators and
/// denominators far outside the `f64` range.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    // Scale to ~64 significant bits on each side before dividing.
    let shift_n = (nb - 64).max(0);
    let shift_d = (db - 64).max(0);
    let n = (r.numer().abs() >> shift_n as usize).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift_d as usize).to_f64().unwrap_or(1.0);
    let mag = (n / d) * 2f64.powi((shift_n - shift_d) as i32);
    if r.numer().sign() == Sign::Minus {
        -mag
    } else {
        mag
    }
}

/// Exact conversion of a finite double to a rational.
pub fn f64_to_rational(x: f64) -> Rational {
    Rational::from_float(x).unwrap_or_else(Rational::zero)
}

/// Natural log of |r| for nonzero r, stable for huge numerators/denominators.
pub fn ln_abs_rational(r: &Rational) -> f64 {
    ln_abs_bigint(r.numer()) - ln_abs_bigint(r.denom())
}

pub fn ln_abs_bigint(n: &BigInt) -> f64 {
    let bits = n.bits() as i64;
    if bits <= 1000 {
        return n.abs().to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (n.abs() >> shift as usize).to_f64().unwrap_or(1.0);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Gaussian rational `re + i·im`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct GaussRat {
    pub re: Rational,
    pub im: Rational,
}

impl GaussRat {
    pub fn new(re: Rational, im: Rational) -> Self {
        GaussRat { re, im }
    }

    pub fn real(re: Rational) -> Self {
        GaussRat {
            re,
            im: Rational::zero(),
        }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        GaussRat::new(rat_int(re), rat_int(im))
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        GaussRat::new(self.re.clone(), -self.im.clone())
    }

    pub fn norm_sqr(&self) -> Rational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(rational_to_f64(&self.re), rational_to_f64(&self.im))
    }

    pub fn from_complex(z: Complex64) -> Self {
        GaussRat::new(f64_to_rational(z.re), f64_to_rational(z.im))
    }

    /// Total bit size of all numerators and denominators.
    pub fn bit_size(&self) -> u64 {
        self.re.numer().bits() + self.re.denom().bits() + self.im.numer().bits() + self.im.denom().bits()
    }

    /// Parses `"x"`, `"x+yi"`, `"x-yi"`, `"yi"` with rational parts.
    pub fn parse(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
        if !t.ends_with('i') {
            return Ok(GaussRat::real(parse_rational(&t)?));
        }
        let body = &t[..t.len() - 1];
        // Split at the last sign that is not at position 0 and not after '/'.
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            if (bytes[k] == b'+' || bytes[k] == b'-') && bytes[k - 1] != b'/' {
                split = Some(k);
                break;
            }
        }
        let (re, im) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            x => x,
        };
        Ok(GaussRat::new(parse_rational(re)?, parse_rational(im.trim_start_matches('+'))?))
    }
}

impl fmt::Display for GaussRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", format_rational(&self.re));
        }
        let im = format_rational(&self.im.abs());
        let sign = if self.im.is_negative() { '-' } else { '+' };
        if self.re.is_zero() {
            if self.im.is_negative() {
                write!(f, "-{im}i")
            } else {
                write!(f, "{im}i")
            }
        } else {
            write!(f, "{}{sign}{im}i", format_rational(&self.re))
        }
    }
}

/// Common arithmetic surface of exact and floating parameter values.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn is_zero(&self) -> bool;
    /// Division; `None` when dividing by zero.
    fn checked_div(&self, other: &Self) -> Option<Self>;
    fn to_complex(&self) -> Complex64;

    fn from_i64(n: i64) -> Self {
        Self::from_rational(&rat_int(n))
    }

    fn powu(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl Add for GaussRat {
    type Output = GaussRat;
    fn add(self, o: GaussRat) -> GaussRat {
        GaussRat::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for GaussRat {
    type Output = GaussRat;
    fn sub(self, o: GaussRat) -> GaussRat {
        GaussRat::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for GaussRat {
    type Output = GaussRat;
    fn mul(self, o: GaussRat) -> GaussRat {
        if self.im.is_zero() && o.im.is_zero() {
            return GaussRat::real(self.re * o.re);
        }
        GaussRat::new(
            &self.re * &o.re - &self.im * &o.im,
            &self.re * &o.im + &self.im * &o.re,
        )
    }
}

impl Div for GaussRat {
    type Output = GaussRat;
    fn div(self, o: GaussRat) -> GaussRat {
        self.checked_div(&o).expect("division by zero")
    }
}

impl Neg for GaussRat {
    type Output = GaussRat;
    fn neg(self) -> GaussRat {
        GaussRat::new(-self.re, -self.im)
    }
}

impl Scalar for GaussRat {
    fn zero() -> Self {
        GaussRat::new(Rational::zero(), Rational::zero())
    }
    fn one() -> Self {
        GaussRat::new(Rational::one(), Rational::zero())
    }
    fn from_rational(r: &Rational) -> Self {
        GaussRat::real(r.clone())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn checked_div(&self, o: &Self) -> Option<Self> {
        if Scalar::is_zero(o) {
            return None;
        }
        if o.im.is_zero() {
            return Some(GaussRat::new(&self.re / &o.re, &self.im / &o.re));
        }
        let n = o.norm_sqr();
        let num = self.clone() * o.conj();
        Some(GaussRat::new(num.re / &n, num.im / &n))
    }
    fn to_complex(&self) -> Complex64 {
        GaussRat::to_complex(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_rational(r: &Rational) -> Self {
        Complex64::new(rational_to_f64(r), 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn checked_div(&self, o: &Self) -> Option<Self> {
        if Scalar::is_zero(o) {
            None
        } else {
            Some(self / o)
        }
    }
    fn to_complex(&self) -> Complex64 {
        *self
    }
}

/// `n!` as an exact integer.
pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("3/2").unwrap(), rat(3, 2));
        assert_eq!(parse_rational("-84/55").unwrap(), rat(-84, 55));
        assert_eq!(parse_rational("-0.25").unwrap(), rat(-1, 4));
        assert_eq!(parse_rational("7").unwrap(), rat_int(7));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn gaussian_parse_and_display() {
        let z = GaussRat::parse("1/2-3i").unwrap();
        assert_eq!(z, GaussRat::new(rat(1, 2), rat_int(-3)));
        assert_eq!(z.to_string(), "1/2-3i");
        assert_eq!(GaussRat::parse("2i").unwrap(), GaussRat::from_ints(0, 2));
        assert_eq!(GaussRat::parse("-i").unwrap(), GaussRat::from_ints(0, -1));
        assert_eq!(GaussRat::parse("-1/3").unwrap().to_string(), "-1/3");
        assert_eq!(GaussRat::parse("-1/3+2/5i").unwrap().to_string(), "-1/3+2/5i");
    }

    #[test]
    fn gaussian_division_inverts_multiplication() {
        let x = GaussRat::parse("3/2+5i").unwrap();
        let y = GaussRat::parse("-7+2/3i").unwrap();
        let q = (x.clone() * y.clone()).checked_div(&y).unwrap();
        assert_eq!(q, x);
        assert!(x.checked_div(&GaussRat::zero()).is_none());
    }

    #[test]
    fn huge_rationals_convert_to_f64() {
        let big = Rational::new(num_traits::pow(BigInt::from(10), 400) * 3, num_traits::pow(BigInt::from(10), 400));
        assert!((rational_to_f64(&big) - 3.0).abs() < 1e-12);
        let r = Rational::new(BigInt::from(-1), num_traits::pow(BigInt::from(2), 1100));
        assert!(rational_to_f64(&r) == 0.0 || rational_to_f64(&r).abs() < 1e-300);
        assert!((ln_abs_rational(&big) - 3f64.ln()).abs() < 1e-12);
    }
}
