//! Floating-point building blocks shared by the solvers: first-order jets
//! with a binary exponent (so iterates of high degree never overflow), small
//! dense complex linear algebra and Aberth–Ehrlich root finding.

use num_complex::Complex64;
use rayon::prelude::*;

/// `(value, gradient) · 2^exp` with `N` partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    v: Complex64,
    g: [Complex64; N],
    e: i64,
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn ldexp(x: Complex64, k: i64) -> Complex64 {
    if k < -2000 {
        return ZERO;
    }
    let k = k.clamp(-2000, 2000) as i32;
    // Two steps keep the intermediate power of two representable.
    let h = k / 2;
    x * 2f64.powi(h) * 2f64.powi(k - h)
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: Complex64) -> Self {
        Jet { v, g: [ZERO; N], e: 0 }.normalized()
    }

    /// The coordinate function `x_idx` at the value `v`.
    pub fn var(v: Complex64, idx: usize) -> Self {
        let mut g = [ZERO; N];
        g[idx] = Complex64::new(1.0, 0.0);
        Jet { v, g, e: 0 }.normalized()
    }

    fn magnitude(&self) -> f64 {
        self.g.iter().fold(self.v.norm(), |m, x| m.max(x.norm()))
    }

    fn normalized(mut self) -> Self {
        let m = self.magnitude();
        if m == 0.0 || !m.is_finite() {
            return self;
        }
        let k = m.log2().floor() as i64;
        if k.abs() > 32 {
            self.v = ldexp(self.v, -k);
            for x in self.g.iter_mut() {
                *x = ldexp(*x, -k);
            }
            self.e += k;
        }
        self
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut g = [ZERO; N];
        for (k, x) in g.iter_mut().enumerate() {
            *x = self.v * o.g[k] + o.v * self.g[k];
        }
        Jet {
            v: self.v * o.v,
            g,
            e: self.e + o.e,
        }
        .normalized()
    }

    pub fn add(&self, o: &Self) -> Self {
        if self.magnitude() == 0.0 {
            return *o;
        }
        if o.magnitude() == 0.0 {
            return *self;
        }
        let (hi, lo) = if self.e >= o.e { (self, o) } else { (o, self) };
        let shift = lo.e - hi.e;
        let mut g = hi.g;
        for (k, x) in g.iter_mut().enumerate() {
            *x += ldexp(lo.g[k], shift);
        }
        Jet {
            v: hi.v + ldexp(lo.v, shift),
            g,
            e: hi.e,
        }
        .normalized()
    }

    pub fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn scale(&self, k: Complex64) -> Self {
        let mut g = self.g;
        for x in g.iter_mut() {
            *x *= k;
        }
        Jet { v: self.v * k, g, e: self.e }.normalized()
    }

    pub fn add_const(&self, k: Complex64) -> Self {
        self.add(&Jet::constant(k))
    }

    /// The value; infinite when it does not fit in a double.
    pub fn value(&self) -> Complex64 {
        ldexp_unbounded(self.v, self.e)
    }

    pub fn grad(&self) -> [Complex64; N] {
        let mut g = self.g;
        for x in g.iter_mut() {
            *x = ldexp_unbounded(*x, self.e);
        }
        g
    }

    /// Value and gradient sharing one arbitrary power-of-two factor; ratios
    /// (Newton steps) are unaffected by it.
    pub fn mantissa(&self) -> (Complex64, [Complex64; N]) {
        (self.v, self.g)
    }

    /// `log2` of the common scale, for residual normalization.
    pub fn exponent(&self) -> i64 {
        self.e
    }
}

fn ldexp_unbounded(x: Complex64, k: i64) -> Complex64 {
    if x == ZERO {
        return ZERO;
    }
    if k > 2000 {
        let inf = f64::INFINITY;
        return Complex64::new(inf.copysign(x.re), inf.copysign(x.im));
    }
    ldexp(x, k)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot vanishes.
pub fn solve_linear(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() == 0.0 || !a[piv][col].norm().is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let t = a[col][k];
                a[row][k] -= f * t;
            }
            let t = b[col];
            b[row] -= f * t;
        }
    }
    let mut x = vec![ZERO; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Determinant by elimination with partial pivoting.
pub fn determinant(mut a: Vec<Vec<Complex64>>) -> Complex64 {
    let n = a.len();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .expect("nonempty");
        if a[piv][col].norm() == 0.0 {
            return ZERO;
        }
        if piv != col {
            a.swap(col, piv);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let t = a[col][k];
                a[row][k] -= f * t;
            }
        }
    }
    det
}

/// Outcome of [`aberth`].
#[derive(Clone, Debug)]
pub struct AberthResult {
    pub roots: Vec<Complex64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Simultaneous approximation of all `degree` roots of a polynomial given
/// only through its Newton quotient `z ↦ f(z)/f'(z)`.
///
/// Starting points sit on a circle of radius `radius`.
pub fn aberth<F>(newton: F, degree: usize, radius: f64, max_iter: usize) -> AberthResult
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    aberth_with_state(vec![(); degree], |_, z| newton(z), radius, max_iter)
}

/// [`aberth`] with a mutable per-root state (warm starts for implicitly
/// defined polynomials). The degree is `states.len()`.
pub fn aberth_with_state<S, F>(mut states: Vec<S>, newton: F, radius: f64, max_iter: usize) -> AberthResult
where
    S: Send,
    F: Fn(&mut S, Complex64) -> Complex64 + Sync,
{
    let degree = states.len();
    let mut roots: Vec<Complex64> = (0..degree)
        .map(|k| Complex64::from_polar(radius, std::f64::consts::TAU * (k as f64 + 0.25) / degree as f64 + 0.4))
        .collect();
    let mut done = vec![false; degree];
    for it in 0..max_iter {
        let snapshot = roots.clone();
        let steps: Vec<Option<Complex64>> = states
            .par_iter_mut()
            .with_min_len(16)
            .enumerate()
            .map(|(k, st)| {
                if done[k] {
                    return None;
                }
                let z = snapshot[k];
                let n = newton(st, z);
                let s: Complex64 = snapshot
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, r)| (z - r).inv())
                    .sum();
                let w = n / (Complex64::new(1.0, 0.0) - n * s);
                Some(if w.re.is_finite() && w.im.is_finite() { w } else { ZERO })
            })
            .collect();
        for (k, w) in steps.into_iter().enumerate() {
            if let Some(w) = w {
                roots[k] -= w;
                if w.norm() <= 1e-15 * (1.0 + roots[k].norm()) {
                    done[k] = true;
                }
            }
        }
        if done.iter().all(|&x| x) {
            return AberthResult {
                roots,
                iterations: it + 1,
                converged: true,
            };
        }
    }
    AberthResult {
        roots,
        iterations: max_iter,
        converged: false,
    }
}

/// Minimum pairwise distance (infinite for fewer than two points).
pub fn min_separation(points: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn jets_survive_overflowing_powers() {
        // x^(2^12) at x = 4 is 2^(2^13), far beyond f64.
        let mut x = Jet::<1>::var(c(4.0, 0.0), 0);
        for _ in 0..12 {
            x = x.mul(&x);
        }
        let (v, g) = x.mantissa();
        // d/dx x^n / x^n = n / x.
        let ratio = g[0] / v;
        assert!((ratio.re - 4096.0 / 4.0).abs() < 1e-9);
        assert_eq!(x.exponent() + (v.norm().log2().round() as i64), 8192);
        assert!(x.value().re.is_infinite());
    }

    #[test]
    fn jet_arithmetic_matches_plain_derivatives() {
        // f(x, y) = x^2 y - 3y + 1 at (2, -1).
        let x = Jet::<2>::var(c(2.0, 0.0), 0);
        let y = Jet::<2>::var(c(-1.0, 0.0), 1);
        let f = x.mul(&x).mul(&y).sub(&y.scale(c(3.0, 0.0))).add_const(c(1.0, 0.0));
        assert_eq!(f.value(), c(0.0, 0.0));
        let g = f.grad();
        assert_eq!(g[0], c(-4.0, 0.0));
        assert_eq!(g[1], c(1.0, 0.0));
    }

    #[test]
    fn linear_solve_and_determinant() {
        let a = vec![vec![c(2.0, 0.0), c(1.0, 0.0)], vec![c(4.0, 0.0), c(3.0, 1.0)]];
        assert!((determinant(a.clone()) - c(2.0, 2.0)).norm() < 1e-14);
        let x = solve_linear(a.clone(), vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let r0 = a[0][0] * x[0] + a[0][1] * x[1];
        let r1 = a[1][0] * x[0] + a[1][1] * x[1];
        assert!((r0 - c(1.0, 0.0)).norm() < 1e-14 && r1.norm() < 1e-14);
        assert!(solve_linear(vec![vec![c(1.0, 0.0), c(1.0, 0.0)]; 2], vec![c(1.0, 0.0); 2]).is_none());
    }

    #[test]
    fn aberth_finds_roots_of_unity() {
        let n = 40;
        let res = aberth(|z| (z.powu(n) - 1.0) / (z.powu(n - 1) * n as f64), n as usize, 1.5, 500);
        assert!(res.converged);
        for r in &res.roots {
            assert!((r.powu(n) - 1.0).norm() < 1e-12);
        }
        assert!(min_separation(&res.roots) > 0.1);
    }

    proptest! {
        #[test]
        fn aberth_recovers_planted_roots(seed in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..12)) {
            let planted: Vec<Complex64> = seed.iter().map(|&(a, b)| c(a, b)).collect();
            prop_assume!(min_separation(&planted) > 1e-2);
            let newton = |z: Complex64| {
                let s: Complex64 = planted.iter().map(|r| (z - r).inv()).sum();
                s.inv()
            };
            let res = aberth(newton, planted.len(), 3.0, 2000);
            prop_assert!(res.converged);
            for p in &planted {
                let best = res.roots.iter().map(|r| (r - p).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(best < 1e-9);
            }
        }
    }
}
