//! The critically marked family
//! `P_{c,a}(z) = z^d/d + Σ_{j=2}^{d-1} (-1)^{d-j} σ_{d-j}(c) z^j/j + a^d`
//! with critical points `c_0 = 0, c_1, …, c_{d-2}`.

use num_complex::Complex64;
use num_traits::One;

use crate::error::{Error, Result};
use crate::exact::{rat, GaussRat, Rational, Scalar};
use crate::symbolic::SymbolicPoly;

/// Default guard on `d^n` for symbolic iterates.
pub const DEFAULT_DEGREE_BUDGET: u64 = 4096;

/// A parameter `(c_1, …, c_{d-2}, a)` together with the degree `d`.
///
/// The scalar type fixes the flavor: [`GaussRat`] for exact points,
/// [`Complex64`] for floating ones.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoint<S: Scalar> {
    d: usize,
    c: Vec<S>,
    a: S,
    /// Coefficients of `P` in `z`, lowest degree first (length d+1).
    coeffs: Vec<S>,
}

pub type ExactPoint = ParamPoint<GaussRat>;
pub type FloatPoint = ParamPoint<Complex64>;

impl<S: Scalar> ParamPoint<S> {
    pub fn new(d: usize, c: Vec<S>, a: S) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("degree must be at least 2, got {d}")));
        }
        if c.len() != d - 2 {
            return Err(Error::invalid(format!(
                "degree {d} needs {} critical coordinates, got {}",
                d - 2,
                c.len()
            )));
        }
        let coeffs = family_coefficients(d, &c, &a);
        Ok(ParamPoint { d, c, a, coeffs })
    }

    /// The origin `(0, …, 0)` of parameter space.
    pub fn origin(d: usize) -> Result<Self> {
        Self::new(d, vec![S::zero(); d.saturating_sub(2)], S::zero())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> &[S] {
        &self.c
    }

    pub fn a(&self) -> &S {
        &self.a
    }

    /// Coordinates in variable order `(c_1, …, c_{d-2}, a)`.
    pub fn coords(&self) -> Vec<S> {
        let mut v = self.c.clone();
        v.push(self.a.clone());
        v
    }

    pub fn from_coords(d: usize, coords: &[S]) -> Result<Self> {
        if coords.len() != d - 1 {
            return Err(Error::invalid(format!("expected {} coordinates, got {}", d - 1, coords.len())));
        }
        Self::new(d, coords[..d - 2].to_vec(), coords[d - 2].clone())
    }

    pub fn coefficients(&self) -> &[S] {
        &self.coeffs
    }

    pub fn eval(&self, z: &S) -> S {
        let mut acc = self.coeffs[self.d].clone();
        for k in (0..self.d).rev() {
            acc = acc * z.clone() + self.coeffs[k].clone();
        }
        acc
    }

    /// `P'(z) = Π_i (z - c_i)`.
    pub fn derivative(&self, z: &S) -> S {
        let mut acc = z.clone();
        for ci in &self.c {
            acc = acc * (z.clone() - ci.clone());
        }
        acc
    }

    /// `[c_0 = 0, c_1, …, c_{d-2}]`.
    pub fn critical_points(&self) -> Vec<S> {
        let mut v = Vec::with_capacity(self.d - 1);
        v.push(S::zero());
        v.extend(self.c.iter().cloned());
        v
    }

    /// `[z, P(z), …, P^n(z)]`, truncated at the first non-finite value.
    pub fn orbit(&self, z: &S, n: usize) -> Orbit<S> {
        let mut points = Vec::with_capacity(n + 1);
        points.push(z.clone());
        let mut cur = z.clone();
        for k in 1..=n {
            cur = self.eval(&cur);
            let zc = cur.to_complex();
            if !(zc.re.is_finite() && zc.im.is_finite()) {
                return Orbit {
                    points,
                    escaped_at: Some(k),
                };
            }
            points.push(cur.clone());
        }
        Orbit {
            points,
            escaped_at: None,
        }
    }

    pub fn iterate(&self, z: &S, n: usize) -> S {
        (0..n).fold(z.clone(), |acc, _| self.eval(&acc))
    }

    /// The same parameter with `a` replaced by `ζ·a`.
    pub fn with_a(&self, a: S) -> Self {
        Self::new(self.d, self.c.clone(), a).expect("same shape")
    }
}

impl ExactPoint {
    pub fn to_float(&self) -> FloatPoint {
        FloatPoint::new(
            self.d,
            self.c.iter().map(|x| x.to_complex()).collect(),
            self.a.to_complex(),
        )
        .expect("same shape")
    }

    /// True when all coordinates are real rationals.
    pub fn is_rational(&self) -> bool {
        self.a.is_real() && self.c.iter().all(|x| x.is_real())
    }
}

/// Result of [`ParamPoint::orbit`]; `escaped_at` marks floating overflow.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit<S> {
    pub points: Vec<S>,
    pub escaped_at: Option<usize>,
}

/// `σ_j(c)`, with `σ_0 = 1`.
pub fn elementary_symmetric<S: Scalar>(c: &[S], j: usize) -> Result<S> {
    if j > c.len() {
        return Err(Error::invalid(format!(
            "elementary symmetric index {j} exceeds {} variables",
            c.len()
        )));
    }
    // e[k] after processing a prefix holds σ_k of that prefix.
    let mut e = vec![S::zero(); j + 1];
    e[0] = S::one();
    for x in c {
        for k in (1..=j).rev() {
            e[k] = e[k].clone() + e[k - 1].clone() * x.clone();
        }
    }
    Ok(e[j].clone())
}

fn family_coefficients<S: Scalar>(d: usize, c: &[S], a: &S) -> Vec<S> {
    let mut coeffs = vec![S::zero(); d + 1];
    coeffs[d] = S::from_rational(&rat(1, d as i64));
    for j in 2..d {
        let sigma = elementary_symmetric(c, d - j).expect("index in range");
        let sign = if (d - j) % 2 == 0 { 1 } else { -1 };
        coeffs[j] = sigma * S::from_rational(&rat(sign, j as i64));
    }
    coeffs[0] = a.powu(d as u32);
    coeffs
}

pub fn eval_p<S: Scalar>(p: &ParamPoint<S>, z: &S) -> S {
    p.eval(z)
}

/// Parameter variable names `c_1, …, c_{d-2}, a`.
pub fn family_vars(d: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=d.saturating_sub(2)).map(|i| format!("c_{i}")).collect();
    v.push("a".into());
    v
}

/// Coefficients of `P` in `z` as polynomials in the parameters.
pub fn symbolic_coefficients(d: usize) -> Vec<SymbolicPoly> {
    let vars = family_vars(d);
    let cvars: Vec<SymbolicPoly> = (0..d - 2).map(|i| SymbolicPoly::var(&vars, i)).collect();
    let mut coeffs = vec![SymbolicPoly::zero(&vars); d + 1];
    coeffs[d] = SymbolicPoly::constant(&vars, rat(1, d as i64));
    for j in 2..d {
        let sigma = symbolic_elementary(&vars, &cvars, d - j);
        let sign = if (d - j) % 2 == 0 { 1 } else { -1 };
        coeffs[j] = sigma.scale(&rat(sign, j as i64));
    }
    coeffs[0] = SymbolicPoly::var(&vars, d - 2).pow(d as u32);
    coeffs
}

fn symbolic_elementary(vars: &[String], c: &[SymbolicPoly], j: usize) -> SymbolicPoly {
    let mut e = vec![SymbolicPoly::zero(vars); j + 1];
    e[0] = SymbolicPoly::constant(vars, Rational::one());
    for x in c {
        for k in (1..=j).rev() {
            e[k] = e[k].add(&e[k - 1].mul(x));
        }
    }
    e[j].clone()
}

/// Applies `P` to a symbolic argument whose variable list extends the
/// family variables.
pub fn apply_symbolic(coeffs: &[SymbolicPoly], x: &SymbolicPoly) -> SymbolicPoly {
    let mut acc = coeffs.last().expect("nonempty").clone();
    for k in (0..coeffs.len() - 1).rev() {
        acc = acc.mul(x).add(&coeffs[k]);
    }
    acc
}

/// The critical point `c_i` as a polynomial (`0` for `i = 0`).
pub fn symbolic_critical_point(d: usize, i: usize) -> SymbolicPoly {
    let vars = family_vars(d);
    if i == 0 {
        SymbolicPoly::zero(&vars)
    } else {
        SymbolicPoly::var(&vars, i - 1)
    }
}

/// Exact `P^n_{c,a}(c_i) ∈ Q[c_1, …, c_{d-2}, a]`.
pub fn symbolic_iterate(d: usize, i: usize, n: u32) -> Result<SymbolicPoly> {
    symbolic_iterate_with_budget(d, i, n, DEFAULT_DEGREE_BUDGET)
}

pub fn symbolic_iterate_with_budget(d: usize, i: usize, n: u32, budget: u64) -> Result<SymbolicPoly> {
    if d < 2 {
        return Err(Error::invalid("degree must be at least 2"));
    }
    if i > d - 2 {
        return Err(Error::invalid(format!("critical index {i} out of range for degree {d}")));
    }
    let deg = (d as u64).checked_pow(n).unwrap_or(u64::MAX);
    if deg > budget {
        return Err(Error::budget(format!("symbolic iterate of degree {d}^{n}"), budget));
    }
    let coeffs = symbolic_coefficients(d);
    let mut x = symbolic_critical_point(d, i);
    for _ in 0..n {
        x = apply_symbolic(&coeffs, &x);
    }
    Ok(x)
}

/// Jacobian `∂F_k/∂x_j` of `d-1` equations in `(c_1, …, c_{d-2}, a)`,
/// evaluated at `p`. Differentiation is symbolic and exact.
pub fn jacobian_of_system<S: Scalar>(p: &ParamPoint<S>, equations: &[SymbolicPoly]) -> Result<Vec<Vec<S>>> {
    let vars = family_vars(p.d());
    if equations.len() != p.d() - 1 {
        return Err(Error::VariableMismatch(format!(
            "expected {} equations, got {}",
            p.d() - 1,
            equations.len()
        )));
    }
    let coords = p.coords();
    equations
        .iter()
        .map(|eq| {
            if eq.vars() != vars.as_slice() {
                return Err(Error::VariableMismatch(format!(
                    "equation variables {:?} differ from {:?}",
                    eq.vars(),
                    vars
                )));
            }
            Ok((0..vars.len()).map(|j| eq.derivative(j).eval(&coords)).collect())
        })
        .collect()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant<S: Scalar>(m: &[Vec<S>]) -> S {
    let n = m.len();
    let mut a: Vec<Vec<S>> = m.to_vec();
    let mut det = S::one();
    for col in 0..n {
        let Some(piv) = (col..n).max_by(|&i, &j| {
            a[i][col]
                .to_complex()
                .norm()
                .partial_cmp(&a[j][col].to_complex().norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        }) else {
            return S::zero();
        };
        if a[piv][col].is_zero() {
            return S::zero();
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det = det * a[col][col].clone();
        for r in col + 1..n {
            let f = a[r][col].checked_div(&a[col][col]).expect("nonzero pivot");
            for k in col..n {
                let t = a[col][k].clone() * f.clone();
                a[r][k] = a[r][k].clone() - t;
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat_int, Rational};
    use proptest::prelude::*;

    fn exact(d: usize, c: &[i64], a: GaussRat) -> ExactPoint {
        ParamPoint::new(d, c.iter().map(|&x| GaussRat::from_ints(x, 0)).collect(), a).unwrap()
    }

    #[test]
    fn elementary_symmetric_values() {
        let c = [Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0)];
        assert_eq!(elementary_symmetric(&c, 1).unwrap(), Complex64::new(5.0, 0.0));
        assert_eq!(elementary_symmetric(&c, 2).unwrap(), Complex64::new(6.0, 0.0));
        assert_eq!(elementary_symmetric(&c[..1], 0).unwrap(), Complex64::new(1.0, 0.0));
        assert!(elementary_symmetric(&c, 3).is_err());
    }

    #[test]
    fn eval_matches_family_definition() {
        // d=2: z^2/2 + a^2
        let p = exact(2, &[], GaussRat::from_ints(3, 0));
        assert_eq!(p.eval(&GaussRat::from_ints(2, 0)), GaussRat::from_ints(11, 0));
        // d=3, c=0, a=0, z=0
        let p = exact(3, &[0], GaussRat::zero());
        assert!(p.eval(&GaussRat::zero()).is_zero());
        // d=3, c=1, a=0: z^3/3 - z^2/2
        let p = exact(3, &[1], GaussRat::zero());
        let co = p.coefficients();
        assert_eq!(co[3], GaussRat::real(rat(1, 3)));
        assert_eq!(co[2], GaussRat::real(rat(-1, 2)));
        assert!(co[1].is_zero() && co[0].is_zero());
    }

    #[test]
    fn critical_points_are_zeros_of_the_derivative() {
        let p = exact(2, &[], GaussRat::from_ints(5, 1));
        assert_eq!(p.critical_points(), vec![GaussRat::zero()]);
        let p = exact(3, &[1], GaussRat::from_ints(2, 0));
        assert_eq!(p.critical_points(), vec![GaussRat::zero(), GaussRat::one()]);
        let p = exact(4, &[1, 2], GaussRat::from_ints(0, 1));
        let crit = p.critical_points();
        assert_eq!(crit, vec![GaussRat::zero(), GaussRat::one(), GaussRat::from_ints(2, 0)]);
        // Derivative from the coefficient list vanishes at each critical point.
        let co = p.coefficients();
        for z in &crit {
            let mut acc = GaussRat::zero();
            for k in (1..co.len()).rev() {
                acc = acc * z.clone() + co[k].clone() * GaussRat::from_ints(k as i64, 0);
            }
            assert!(acc.is_zero(), "P'({z}) = {acc}");
            assert!(p.derivative(z).is_zero());
        }
    }

    #[test]
    fn exact_orbits() {
        let p = exact(2, &[], GaussRat::from_ints(0, 2));
        let o = p.orbit(&GaussRat::zero(), 3);
        let expect: Vec<GaussRat> = [0, -4, 4, 4].iter().map(|&x| GaussRat::from_ints(x, 0)).collect();
        assert_eq!(o.points, expect);
        assert_eq!(o.escaped_at, None);
        assert_eq!(p.orbit(&GaussRat::from_ints(7, 3), 0).points.len(), 1);
        let p = exact(3, &[0], GaussRat::zero());
        let o = p.orbit(&GaussRat::one(), 2);
        assert_eq!(o.points[1], GaussRat::real(rat(1, 3)));
        assert_eq!(o.points[2], GaussRat::real(rat(1, 81)));
    }

    #[test]
    fn floating_orbit_reports_escape() {
        let p = FloatPoint::new(2, vec![], Complex64::new(10.0, 0.0)).unwrap();
        let o = p.orbit(&Complex64::new(0.0, 0.0), 50);
        assert!(o.escaped_at.is_some());
        assert!(o.points.len() < 51);
    }

    #[test]
    fn symbolic_iterates_small_cases() {
        let p1 = symbolic_iterate(2, 0, 1).unwrap();
        assert_eq!(p1.to_string(), "a^2");
        let p2 = symbolic_iterate(2, 0, 2).unwrap();
        assert_eq!(p2.to_string(), "1/2*a^4 + a^2");
        assert_eq!(p2.total_degree(), Some(4));
        let p0 = symbolic_iterate(3, 1, 0).unwrap();
        assert_eq!(p0, SymbolicPoly::var(&family_vars(3), 0));
        assert!(symbolic_iterate(2, 0, 13).is_err());
        assert!(symbolic_iterate(3, 2, 1).is_err());
    }

    #[test]
    fn first_iterates_are_homogeneous_of_degree_d() {
        for d in 2..=4 {
            for i in 0..=d - 2 {
                let p = symbolic_iterate(d, i, 1).unwrap();
                assert!(p.is_homogeneous_of_degree(d as u32), "d={d} i={i}: {p}");
            }
        }
    }

    #[test]
    fn degree_law() {
        for (d, nmax) in [(2usize, 6u32), (3, 4), (4, 3)] {
            for i in 0..=d - 2 {
                for n in 1..=nmax {
                    let p = symbolic_iterate(d, i, n).unwrap();
                    assert_eq!(p.total_degree(), Some((d as u32).pow(n)), "d={d} i={i} n={n}");
                }
            }
        }
    }

    #[test]
    fn jacobian_examples() {
        let vars = family_vars(2);
        let a2 = symbolic_iterate(2, 0, 1).unwrap();
        let p = FloatPoint::new(2, vec![], Complex64::new(1.0, 0.0)).unwrap();
        let j = jacobian_of_system(&p, &[a2.clone()]).unwrap();
        assert_eq!(j[0][0], Complex64::new(2.0, 0.0));
        // a^4/2 + a^2 - a^2 at a = 2i: derivative 2a^3 = 2 (2i)^3 = -16i.
        let eq = symbolic_iterate(2, 0, 2).unwrap().sub(&a2);
        let p = ExactPoint::new(2, vec![], GaussRat::from_ints(0, 2)).unwrap();
        let j = jacobian_of_system(&p, &[eq]).unwrap();
        assert_eq!(j[0][0], GaussRat::from_ints(0, -16));
        let zero = SymbolicPoly::zero(&vars);
        let j = jacobian_of_system(&p, &[zero]).unwrap();
        assert!(j[0][0].is_zero());
        let bad = SymbolicPoly::var(&["x".to_string()], 0);
        assert!(matches!(jacobian_of_system(&p, &[bad]), Err(Error::VariableMismatch(_))));
        assert!(jacobian_of_system(&p, &[]).is_err());
    }

    #[test]
    fn determinant_small() {
        let m = vec![
            vec![GaussRat::from_ints(2, 0), GaussRat::from_ints(1, 0)],
            vec![GaussRat::from_ints(4, 0), GaussRat::from_ints(3, 0)],
        ];
        assert_eq!(determinant(&m), GaussRat::from_ints(2, 0));
        let sing = vec![vec![GaussRat::one(), GaussRat::one()], vec![GaussRat::one(), GaussRat::one()]];
        assert!(determinant(&sing).is_zero());
        let _ = Rational::one() + rat_int(0);
    }

    proptest! {
        #[test]
        fn symbolic_iterate_agrees_with_orbit(
            cr in -8i64..8, ci in -8i64..8, ar in -8i64..8, ai in -8i64..8,
            d in 2usize..4, n in 1u32..5
        ) {
            let q = |x: i64| rat(x, 4);
            let c = if d == 3 { vec![GaussRat::new(q(cr), q(ci))] } else { vec![] };
            let p = ExactPoint::new(d, c, GaussRat::new(q(ar), q(ai))).unwrap();
            for i in 0..=d - 2 {
                let sym = symbolic_iterate(d, i, n).unwrap();
                let via_sym = sym.eval(&p.coords());
                let via_orbit = p.iterate(&p.critical_points()[i], n as usize);
                prop_assert_eq!(via_sym, via_orbit);
            }
        }
    }
}
