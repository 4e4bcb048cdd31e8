//! Sparse multivariate polynomials with exact rational coefficients.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{format_rational, parse_rational, Rational, Scalar};

/// Polynomial in an ordered list of named variables.
///
/// Terms are keyed by exponent vectors (one entry per variable); zero
/// coefficients are never stored.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SymbolicPoly {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl SymbolicPoly {
    pub fn zero(vars: &[String]) -> Self {
        SymbolicPoly {
            vars: vars.to_vec(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[String], c: Rational) -> Self {
        let mut p = Self::zero(vars);
        if !c.is_zero() {
            p.terms.insert(vec![0; vars.len()], c);
        }
        p
    }

    pub fn var(vars: &[String], idx: usize) -> Self {
        Self::monomial(vars, &unit_exponent(vars.len(), idx, 1), Rational::one())
    }

    pub fn monomial(vars: &[String], exps: &[u32], coeff: Rational) -> Self {
        assert_eq!(exps.len(), vars.len());
        let mut p = Self::zero(vars);
        if !coeff.is_zero() {
            p.terms.insert(exps.to_vec(), coeff);
        }
        p
    }

    pub fn from_terms(vars: &[String], terms: impl IntoIterator<Item = (Vec<u32>, Rational)>) -> Self {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            assert_eq!(e.len(), vars.len());
            p.add_term(e, c);
        }
        p
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exps: &[u32]) -> Rational {
        self.terms.get(exps).cloned().unwrap_or_else(Rational::zero)
    }

    fn add_term(&mut self, e: Vec<u32>, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&e) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&e);
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).max()
    }

    pub fn degree_in(&self, idx: usize) -> Option<u32> {
        self.terms.keys().map(|e| e[idx]).max()
    }

    /// True when every stored exponent vector sums to `deg`.
    pub fn is_homogeneous_of_degree(&self, deg: u32) -> bool {
        self.terms.keys().all(|e| e.iter().sum::<u32>() == deg)
    }

    /// Sum of the terms of total degree exactly `deg`.
    pub fn homogeneous_part(&self, deg: u32) -> Self {
        Self::from_terms(
            &self.vars,
            self.terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() == deg)
                .map(|(e, c)| (e.clone(), c.clone())),
        )
    }

    fn check_vars(&self, other: &Self) {
        assert_eq!(self.vars, other.vars, "polynomials over different variable lists");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_vars(other);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_vars(other);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Rational::one())
    }

    pub fn scale(&self, s: &Rational) -> Self {
        if s.is_zero() {
            return Self::zero(&self.vars);
        }
        SymbolicPoly {
            vars: self.vars.clone(),
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check_vars(other);
        let mut acc: HashMap<Vec<u32>, Rational> = HashMap::with_capacity(self.terms.len() * 2);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(x, y)| x + y).collect();
                let prod = c1 * c2;
                match acc.get_mut(&e) {
                    Some(v) => *v += prod,
                    None => {
                        acc.insert(e, prod);
                    }
                }
            }
        }
        SymbolicPoly {
            vars: self.vars.clone(),
            terms: acc.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::constant(&self.vars, Rational::one());
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

    /// Exact partial derivative with respect to variable `idx`.
    pub fn derivative(&self, idx: usize) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            if e[idx] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[idx] -= 1;
            out.add_term(e2, c * Rational::from_integer(e[idx].into()));
        }
        out
    }

    /// Evaluates at a point given in variable order.
    pub fn eval<S: Scalar>(&self, values: &[S]) -> S {
        assert_eq!(values.len(), self.vars.len());
        let maxdeg: Vec<u32> = (0..self.vars.len())
            .map(|i| self.degree_in(i).unwrap_or(0))
            .collect();
        let powers: Vec<Vec<S>> = values
            .iter()
            .zip(&maxdeg)
            .map(|(v, &m)| {
                let mut p = Vec::with_capacity(m as usize + 1);
                p.push(S::one());
                for k in 1..=m as usize {
                    p.push(p[k - 1].clone() * v.clone());
                }
                p
            })
            .collect();
        let mut acc = S::zero();
        for (e, c) in &self.terms {
            let mut t = S::from_rational(c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t = t * powers[i][k as usize].clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// Substitutes exact values for a subset of variables, keeping the
    /// variable list (substituted variables end up with exponent 0).
    pub fn substitute(&self, assignments: &[(usize, Rational)]) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            let mut coeff = c.clone();
            for (idx, val) in assignments {
                let k = e2[*idx];
                if k > 0 {
                    coeff *= num_traits::pow(val.clone(), k as usize);
                    e2[*idx] = 0;
                }
            }
            out.add_term(e2, coeff);
        }
        out
    }

    /// Coefficients with respect to variable `idx`, lowest power first.
    /// Each coefficient keeps the full variable list with exponent 0 in `idx`.
    pub fn coefficients_in(&self, idx: usize) -> Vec<SymbolicPoly> {
        let deg = self.degree_in(idx).unwrap_or(0) as usize;
        let mut out = vec![Self::zero(&self.vars); deg + 1];
        if self.is_zero() {
            return vec![];
        }
        for (e, c) in &self.terms {
            let k = e[idx] as usize;
            let mut e2 = e.clone();
            e2[idx] = 0;
            out[k].add_term(e2, c.clone());
        }
        out
    }

    /// Univariate coefficient list when `self` depends on variable `idx` only.
    pub fn to_univariate(&self, idx: usize) -> Result<Vec<Rational>> {
        let deg = self.degree_in(idx).unwrap_or(0) as usize;
        let mut out = vec![Rational::zero(); if self.is_zero() { 0 } else { deg + 1 }];
        for (e, c) in &self.terms {
            if e.iter().enumerate().any(|(i, &k)| i != idx && k != 0) {
                return Err(Error::VariableMismatch(format!(
                    "polynomial depends on variables other than {}",
                    self.vars[idx]
                )));
            }
            out[e[idx] as usize] = c.clone();
        }
        Ok(out)
    }

    /// Re-expresses the polynomial over a larger variable list.
    pub fn extend_vars(&self, new_vars: &[String]) -> Result<Self> {
        let map: Vec<usize> = self
            .vars
            .iter()
            .map(|v| {
                new_vars
                    .iter()
                    .position(|w| w == v)
                    .ok_or_else(|| Error::VariableMismatch(format!("variable {v} missing from target list")))
            })
            .collect::<Result<_>>()?;
        let mut out = Self::zero(new_vars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0; new_vars.len()];
            for (i, &k) in e.iter().enumerate() {
                e2[map[i]] = k;
            }
            out.add_term(e2, c.clone());
        }
        Ok(out)
    }

    /// Canonical text form: a `vars` header followed by one line per term,
    /// `e_1 … e_k coeff`, sorted by exponent vector.
    pub fn to_canonical_string(&self) -> String {
        let mut s = format!("vars {}\n", self.vars.join(" "));
        for (e, c) in &self.terms {
            let exps: Vec<String> = e.iter().map(|k| k.to_string()).collect();
            s.push_str(&exps.join(" "));
            s.push(' ');
            s.push_str(&format_rational(c));
            s.push('\n');
        }
        s
    }

    pub fn parse_canonical(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing vars header".into()))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("vars") {
            return Err(Error::Parse("header must start with 'vars'".into()));
        }
        let vars: Vec<String> = it.map(String::from).collect();
        let mut p = Self::zero(&vars);
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != vars.len() + 1 {
                return Err(Error::Parse(format!("term line has wrong arity: {line:?}")));
            }
            let exps = fields[..vars.len()]
                .iter()
                .map(|f| f.parse::<u32>().map_err(|_| Error::Parse(format!("bad exponent {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let c = parse_rational(fields[vars.len()])?;
            if c.is_zero() {
                return Err(Error::Parse("zero coefficient in canonical form".into()));
            }
            if p.terms.contains_key(&exps) {
                return Err(Error::Parse("duplicate exponent vector".into()));
            }
            p.terms.insert(exps, c);
        }
        Ok(p)
    }
}

fn unit_exponent(n: usize, idx: usize, k: u32) -> Vec<u32> {
    let mut e = vec![0; n];
    e[idx] = k;
    e
}

impl fmt::Display for SymbolicPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            let mut mono = Vec::new();
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => mono.push(self.vars[i].clone()),
                    _ => mono.push(format!("{}^{}", self.vars[i], k)),
                }
            }
            let neg = c < &Rational::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            if !first {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            } else if neg {
                write!(f, "-")?;
            }
            first = false;
            if mono.is_empty() {
                write!(f, "{}", format_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{}*{}", format_rational(&mag), mono.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_int};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn xy() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    #[test]
    fn arithmetic_and_degree() {
        let v = xy();
        let x = SymbolicPoly::var(&v, 0);
        let y = SymbolicPoly::var(&v, 1);
        let p = x.add(&y).pow(3);
        assert_eq!(p.total_degree(), Some(3));
        assert!(p.is_homogeneous_of_degree(3));
        assert_eq!(p.coeff(&[2, 1]), rat_int(3));
        let q = p.sub(&p);
        assert!(q.is_zero());
        assert_eq!(q.total_degree(), None);
    }

    #[test]
    fn derivative_is_exact() {
        let v = xy();
        let x = SymbolicPoly::var(&v, 0);
        let p = x.pow(4).scale(&rat(1, 2)).add(&x.pow(2));
        let dp = p.derivative(0);
        assert_eq!(dp.coeff(&[3, 0]), rat_int(2));
        assert_eq!(dp.coeff(&[1, 0]), rat_int(2));
        assert_eq!(dp.num_terms(), 2);
    }

    #[test]
    fn canonical_text_parses_back() {
        let v = xy();
        let p = SymbolicPoly::from_terms(&v, [(vec![2, 0], rat(-3, 7)), (vec![0, 5], rat_int(2))]);
        let s = p.to_canonical_string();
        assert_eq!(s, "vars x y\n0 5 2\n2 0 -3/7\n");
        assert_eq!(SymbolicPoly::parse_canonical(&s).unwrap(), p);
        assert!(SymbolicPoly::parse_canonical("vars x\n1 0\n").is_err());
        assert!(SymbolicPoly::parse_canonical("x\n").is_err());
    }

    #[test]
    fn display_is_readable() {
        let v = vec!["a".to_string()];
        let a = SymbolicPoly::var(&v, 0);
        let p = a.pow(4).scale(&rat(1, 2)).add(&a.pow(2));
        assert_eq!(p.to_string(), "1/2*a^4 + a^2");
    }

    proptest! {
        #[test]
        fn eval_is_a_ring_homomorphism(
            c1 in -5i64..5, c2 in -5i64..5, e1 in 0u32..4, e2 in 0u32..4,
            x in -3.0f64..3.0, y in -3.0f64..3.0
        ) {
            let v = xy();
            let p = SymbolicPoly::from_terms(&v, [(vec![e1, e2], rat_int(c1)), (vec![1, 0], rat_int(c2))]);
            let q = SymbolicPoly::var(&v, 1).add(&SymbolicPoly::constant(&v, rat(1, 3)));
            let pt = [Complex64::new(x, 0.0), Complex64::new(y, 0.0)];
            let lhs = p.mul(&q).eval(&pt);
            let rhs = p.eval(&pt) * q.eval(&pt);
            prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
            let text = p.mul(&q).to_canonical_string();
            prop_assert_eq!(SymbolicPoly::parse_canonical(&text).unwrap(), p.mul(&q));
        }
    }
}
