//! Archimedean Green functions `g_{c,a}(z) = lim d^{-n} log⁺|P^n(z)|`, the
//! parameter potential `G(c,a) = max_i g_{c,a}(c_i)`, and grids of `G`.
//!
//! Values carry an error radius. Escaping orbits are summed in closed form
//! once past the escape radius with an explicit tail bound; orbits that stay
//! inside the escape disk long enough are certified to have `g ≤ tol`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::GaussRat;
use crate::poly_family::{ExactPoint, FloatPoint};

/// Orbit points beyond this modulus are summed in closed form.
const STOP_MODULUS: f64 = 1e40;
/// Hard cap on iterations for a single point.
pub const MAX_ITERATIONS: usize = 100_000;
/// Exact orbit search stops past this many steps or bits.
const EXACT_STEPS: usize = 64;
const EXACT_BITS: u64 = 2048;

/// A real value with an error radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedValue {
    pub value: f64,
    pub error: f64,
}

impl CertifiedValue {
    pub fn exact(value: f64) -> Self {
        CertifiedValue { value, error: 0.0 }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.error
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        (x - self.value).abs() <= self.error + slack
    }

    /// Enclosure of the max of two enclosed quantities.
    pub fn max(self, o: Self) -> Self {
        let lo = self.lower().max(o.lower());
        let hi = self.upper().max(o.upper());
        CertifiedValue {
            value: 0.5 * (lo + hi),
            error: 0.5 * (hi - lo),
        }
    }

    pub fn add(self, o: Self) -> Self {
        CertifiedValue {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }

    pub fn scale(self, s: f64) -> Self {
        CertifiedValue {
            value: self.value * s,
            error: self.error * s.abs(),
        }
    }
}

/// Radius `R` with `|P(z)| ≥ max(2|z|, |z|^d/(2d))` and
/// `|P(z)| ≤ 3|z|^d/(2d)` whenever `|z| ≥ R`.
pub fn escape_bound(p: &FloatPoint) -> f64 {
    let d = p.d();
    let df = d as f64;
    let k = 2.0 * df * (df - 1.0);
    let coeffs = p.coefficients();
    let mut r = (4.0 * df).powf(1.0 / (df - 1.0));
    for (j, cj) in coeffs.iter().enumerate().take(d).skip(2) {
        r = r.max((k * cj.norm()).powf(1.0 / (d - j) as f64));
    }
    r.max(k.powf(1.0 / df) * p.a().norm())
}

/// Upper bound for `d·|P(z) - z^d/d| / |z|^d` at modulus `r`.
fn relative_defect(p: &FloatPoint, r: f64) -> f64 {
    let d = p.d();
    let coeffs = p.coefficients();
    let mut e = coeffs[0].norm() * r.powi(-(d as i32));
    for (j, cj) in coeffs.iter().enumerate().take(d).skip(2) {
        e += cj.norm() * r.powi(j as i32 - d as i32);
    }
    d as f64 * e
}

/// Number of in-disk steps after which `g ≤ tol` is guaranteed.
pub fn bounded_steps(d: usize, radius: f64, tol: f64) -> usize {
    let ratio = radius.ln().max(f64::MIN_POSITIVE) / tol;
    if ratio <= 1.0 {
        return 0;
    }
    (ratio.ln() / (d as f64).ln()).ceil() as usize
}

/// Certified `g_{c,a}(z)` with error at most `tol`.
///
/// A floating orbit that stays in the escape disk for [`bounded_steps`]
/// iterations is reported as `0 ± tol`.
pub fn green_point(p: &FloatPoint, z: Complex64, tol: f64) -> Result<CertifiedValue> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let d = p.d();
    let df = d as f64;
    let r = escape_bound(p);
    let n_bounded = bounded_steps(d, r, tol);
    if n_bounded > MAX_ITERATIONS {
        return Err(Error::budget("green function iterations", MAX_ITERATIONS as u64));
    }
    let mut w = z;
    let mut n = 0usize;
    // Phase 1: wait for the orbit to leave the escape disk.
    while w.norm() < r {
        if n >= n_bounded {
            return Ok(CertifiedValue { value: 0.0, error: tol });
        }
        w = p.eval(&w);
        n += 1;
    }
    // Phase 2: push out to where the tail is negligible.
    loop {
        let m = w.norm();
        let scale = df.powi(-(n as i32));
        let tail = scale * 2.0 * relative_defect(p, m) / (df - 1.0);
        if m >= STOP_MODULUS || tail <= 0.25 * tol {
            let value = scale * (m.ln() - df.ln() / (df - 1.0));
            let rounding = 8.0 * f64::EPSILON * (n as f64 + 1.0) * value.abs().max(scale);
            return Ok(CertifiedValue {
                value,
                error: tail + rounding,
            });
        }
        if n >= MAX_ITERATIONS {
            return Err(Error::budget("green function iterations", MAX_ITERATIONS as u64));
        }
        w = p.eval(&w);
        n += 1;
    }
}

/// Exact-flavor Green value: detects preperiodic orbits exactly (reported as
/// `0 ± 0`), otherwise falls back to the floating certificate.
pub fn green_point_exact(p: &ExactPoint, z: &GaussRat, tol: f64) -> Result<CertifiedValue> {
    if exact_orbit_is_preperiodic(p, z, EXACT_STEPS, EXACT_BITS) {
        return Ok(CertifiedValue::exact(0.0));
    }
    green_point(&p.to_float(), z.to_complex(), tol)
}

/// True when the exact orbit of `z` repeats within the step and size caps.
pub fn exact_orbit_is_preperiodic(p: &ExactPoint, z: &GaussRat, steps: usize, bits: u64) -> bool {
    let mut seen: Vec<GaussRat> = vec![z.clone()];
    let mut cur = z.clone();
    for _ in 0..steps {
        cur = p.eval(&cur);
        if seen.contains(&cur) {
            return true;
        }
        if cur.bit_size() > bits {
            return false;
        }
        seen.push(cur.clone());
    }
    false
}

/// `G(c,a) = max_i g_{c,a}(c_i)`, certified.
#[allow(non_snake_case)]
pub fn G_point(p: &FloatPoint, tol: f64) -> Result<CertifiedValue> {
    let mut acc: Option<CertifiedValue> = None;
    for ci in p.critical_points() {
        let g = green_point(p, ci, tol)?;
        acc = Some(match acc {
            None => g,
            Some(prev) => prev.max(g),
        });
    }
    Ok(acc.expect("at least one critical point"))
}

#[allow(non_snake_case)]
pub fn G_point_exact(p: &ExactPoint, tol: f64) -> Result<CertifiedValue> {
    let mut acc: Option<CertifiedValue> = None;
    for ci in p.critical_points() {
        let g = green_point_exact(p, &ci, tol)?;
        acc = Some(match acc {
            None => g,
            Some(prev) => prev.max(g),
        });
    }
    Ok(acc.expect("at least one critical point"))
}

/// Explicit constants for `G(c,a) = log max(|c|,|a|) + O(1)` (d ∈ {2,3}).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    /// If `max(|c|,|a|) > radius` then `G > 0`.
    pub radius: f64,
    /// `G ≥ log M - lower` for `M ≥ radius`.
    pub lower: f64,
    /// `G ≤ log M + upper` for `M ≥ radius`.
    pub upper: f64,
}

/// Derives [`GrowthConstants`] from coefficient bounds of the family and
/// the critical-value estimate `max_j |P(c_j)| ≥ β M^d`
/// (β = 1 for d = 2 and 1/12 for d = 3).
pub fn growth_constants(d: usize) -> Result<GrowthConstants> {
    let beta = match d {
        2 => 1.0,
        3 => 1.0 / 12.0,
        _ => return Err(Error::invalid("growth constants are derived for d ∈ {2,3}")),
    };
    let df = d as f64;
    let k = 2.0 * df * (df - 1.0);
    // |σ_{d-j}(c)| ≤ binom(d-2, d-j) M^{d-j}.
    let mut kr = k.powf(1.0 / df);
    for j in 2..d {
        let binom = binomial(d - 2, d - j) as f64;
        kr = kr.max((k * binom / j as f64).powf(1.0 / (d - j) as f64));
    }
    let r0 = (4.0 * df).powf(1.0 / (df - 1.0));
    let radius = (kr / beta).powf(1.0 / (df - 1.0)).max(r0 / kr).max(1.0);
    Ok(GrowthConstants {
        radius,
        lower: (-beta.ln() + (2.0 * df).ln() / (df - 1.0)) / df,
        upper: kr.ln().max(0.0),
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// Which real part of which coordinate a grid axis varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Index into `(c_1, …, c_{d-2}, a)`.
    pub coord: usize,
    pub part: Part,
    pub min: f64,
    pub max: f64,
    pub res: usize,
}

impl Axis {
    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.res as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.step()
    }
}

/// A box in parameter space: varying axes plus a base point for the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub base: Vec<Complex64>,
    pub axes: Vec<Axis>,
}

impl GridSpec {
    /// The `a`-plane for d = 2, or any 2-real slice with fixed remaining coordinates.
    pub fn a_plane(d: usize, base_c: Vec<Complex64>, half_width: f64, res: usize) -> Self {
        let mut base = base_c;
        base.push(Complex64::new(0.0, 0.0));
        let coord = d - 2;
        GridSpec {
            d,
            base,
            axes: vec![
                Axis { coord, part: Part::Re, min: -half_width, max: half_width, res },
                Axis { coord, part: Part::Im, min: -half_width, max: half_width, res },
            ],
        }
    }

    /// Full 4-real-dimensional box for d = 3.
    pub fn full_d3(half_width: f64, res: usize) -> Self {
        let ax = |coord, part| Axis { coord, part, min: -half_width, max: half_width, res };
        GridSpec {
            d: 3,
            base: vec![Complex64::new(0.0, 0.0); 2],
            axes: vec![ax(0, Part::Re), ax(0, Part::Im), ax(1, Part::Re), ax(1, Part::Im)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.len() + 1 != self.d || self.d < 2 {
            return Err(Error::invalid("grid base point has the wrong number of coordinates"));
        }
        if self.axes.is_empty() {
            return Err(Error::invalid("grid needs at least one axis"));
        }
        for ax in &self.axes {
            if ax.coord >= self.base.len() || ax.res == 0 || !(ax.max > ax.min) {
                return Err(Error::invalid(format!("degenerate grid axis {ax:?}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.res).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat index; the first axis varies fastest.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|ax| {
                let i = idx % ax.res;
                idx /= ax.res;
                i
            })
            .collect()
    }

    pub fn ravel(&self, ix: &[usize]) -> usize {
        let mut idx = 0;
        for (ax, &i) in self.axes.iter().zip(ix).rev() {
            idx = idx * ax.res + i;
        }
        idx
    }

    /// Parameter coordinates at the center of a cell.
    pub fn cell_coords(&self, ix: &[usize]) -> Vec<Complex64> {
        let mut coords = self.base.clone();
        for (ax, &i) in self.axes.iter().zip(ix) {
            let v = ax.center(i);
            match ax.part {
                Part::Re => coords[ax.coord].re = v,
                Part::Im => coords[ax.coord].im = v,
            }
        }
        coords
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }
}

/// Per-cell values over a [`GridSpec`]; failed cells hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub failed_cells: usize,
}

impl GridField {
    pub fn get(&self, ix: &[usize]) -> f64 {
        self.values[self.spec.ravel(ix)]
    }
}

/// `G` at every cell center, computed in parallel and assembled in index order.
#[allow(non_snake_case)]
pub fn G_grid(spec: &GridSpec, tol: f64) -> Result<GridField> {
    if !(2..=3).contains(&spec.d) {
        return Err(Error::invalid(format!("G grids are offered for d = 2, 3, not {}", spec.d)));
    }
    spec.validate()?;
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let coords = spec.cell_coords(&spec.unravel(idx));
            let p = FloatPoint::from_coords(spec.d, &coords).expect("validated shape");
            G_point(&p, tol).map(|v| v.value.max(0.0)).unwrap_or(f64::NAN)
        })
        .collect();
    let failed_cells = values.iter().filter(|v| v.is_nan()).count();
    Ok(GridField {
        spec: spec.clone(),
        values,
        failed_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn quad(a: Complex64) -> FloatPoint {
        FloatPoint::new(2, vec![], a).unwrap()
    }

    /// Independent oracle: the telescoping series
    /// `log|z| + Σ d^{-n-1} log(|z_{n+1}| / |z_n|^d)` summed to machine precision.
    fn telescoping(p: &FloatPoint, z: Complex64) -> f64 {
        let d = p.d() as f64;
        let mut w = z;
        let mut total = w.norm().ln();
        let mut scale = 1.0 / d;
        for _ in 0..60 {
            let next = p.eval(&w);
            if !next.norm().is_finite() || next.norm() > 1e100 {
                break;
            }
            total += scale * (next.norm().ln() - d * w.norm().ln());
            w = next;
            scale /= d;
        }
        total
    }

    #[test]
    fn escape_bound_examples() {
        let r0 = escape_bound(&quad(c(0.0, 0.0)));
        assert!(r0 <= 8.0 + 1e-12);
        // |z|²/4 ≥ 2|z| at the bound.
        assert!(r0 * r0 / 4.0 >= 2.0 * r0 - 1e-9);
        let r10 = escape_bound(&quad(c(10.0, 0.0)));
        assert!(r10 >= 10.0 && r10 >= r0);
    }

    #[test]
    fn escape_bound_guarantee_on_samples() {
        for d in 2..=4usize {
            for k in 0..30 {
                let t = k as f64 * 0.37;
                let cs: Vec<Complex64> = (0..d - 2).map(|i| c(3.0 * (t + i as f64).cos(), 2.0 * t.sin())).collect();
                let p = FloatPoint::new(d, cs, c(t.cos() * 4.0, t.sin())).unwrap();
                let r = escape_bound(&p);
                for s in 0..16 {
                    let theta = s as f64 * 0.4;
                    let z = Complex64::from_polar(r * (1.0 + 0.1 * s as f64), theta);
                    let pz = p.eval(&z).norm();
                    let zd = z.norm().powi(d as i32) / d as f64;
                    assert!(pz >= 2.0 * z.norm() && pz >= zd / 2.0 && pz <= 1.5 * zd, "d={d}");
                }
            }
        }
    }

    #[test]
    fn green_examples() {
        let p = quad(c(0.0, 0.0));
        let g = green_point(&p, c(0.0, 0.0), 1e-10).unwrap();
        assert!(g.value.abs() <= g.error && g.error <= 1e-10);
        let pe = ExactPoint::origin(2).unwrap();
        assert_eq!(green_point_exact(&pe, &GaussRat::from_ints(0, 0), 1e-10).unwrap(), CertifiedValue::exact(0.0));
        for r in [1e3, 1e6] {
            let g = green_point(&p, c(r, 0.0), 1e-12).unwrap();
            let dev = (g.value - (r.ln() - 2f64.ln())).abs();
            assert!(dev < if r < 1e4 { 1e-3 } else { 1e-6 });
        }
        // Telescoping oracle at a non-trivial parameter.
        let p = quad(c(0.3, 0.8));
        let z = c(1.5, -0.7);
        let g = green_point(&p, z, 1e-12).unwrap();
        assert!((g.value - telescoping(&p, z)).abs() < 1e-10);
    }

    #[test]
    fn big_g_examples() {
        assert!(G_point(&quad(c(0.0, 0.0)), 1e-9).unwrap().upper() <= 1e-9);
        let g = G_point(&quad(c(2.0, 0.0)), 1e-9).unwrap();
        assert!(g.lower() > 0.0);
        let pe = ExactPoint::new(2, vec![], GaussRat::from_ints(0, 2)).unwrap();
        assert_eq!(G_point_exact(&pe, 1e-9).unwrap(), CertifiedValue::exact(0.0));
    }

    #[test]
    fn growth_constants_hold_on_samples() {
        for d in [2usize, 3] {
            let k = growth_constants(d).unwrap();
            for s in 0..200 {
                let t = s as f64;
                let m = 10.0 * (1.0 + (t * 0.7).sin().abs() * 1e3);
                let (cm, am) = if s % 2 == 0 { (m, m * (t.cos().abs())) } else { (m * t.sin().abs(), m) };
                let cs = if d == 3 { vec![Complex64::from_polar(cm, t * 1.3)] } else { vec![] };
                let a = if d == 2 { Complex64::from_polar(m, t) } else { Complex64::from_polar(am, t * 0.9) };
                let p = FloatPoint::new(d, cs, a).unwrap();
                let mm = p.coords().iter().map(|x| x.norm()).fold(0.0, f64::max);
                if mm < k.radius {
                    continue;
                }
                let g = G_point(&p, 1e-10).unwrap();
                assert!(g.upper() >= mm.ln() - k.lower && g.lower() <= mm.ln() + k.upper, "d={d} M={mm} G={g:?} k={k:?}");
                assert!(g.lower() > 0.0);
            }
        }
    }

    #[test]
    fn grid_symmetry_and_origin() {
        let spec = GridSpec::a_plane(2, vec![], 2.0, 16);
        let f = G_grid(&spec, 1e-10).unwrap();
        assert_eq!(f.values.len(), 256);
        assert_eq!(f.failed_cells, 0);
        for iy in 0..16 {
            for ix in 0..16 {
                let v = f.get(&[ix, iy]);
                let w = f.get(&[15 - ix, 15 - iy]);
                assert!((v - w).abs() < 1e-12);
                assert!(v >= 0.0);
            }
        }
        // Cell containing the origin: odd resolution puts it at the center.
        let spec = GridSpec::a_plane(2, vec![], 1.0, 5);
        let f = G_grid(&spec, 1e-10).unwrap();
        assert_eq!(f.get(&[2, 2]), 0.0);
        assert_eq!(spec.ravel(&spec.unravel(17)), 17);
        let bad = GridSpec::a_plane(2, vec![], 0.0, 4);
        assert!(G_grid(&bad, 1e-6).is_err());
    }

    #[test]
    fn large_parameters_have_positive_potential() {
        let k = growth_constants(2).unwrap();
        let spec = GridSpec::a_plane(2, vec![], 8.0, 32);
        let f = G_grid(&spec, 1e-10).unwrap();
        for idx in 0..spec.len() {
            let a = spec.cell_coords(&spec.unravel(idx))[0];
            if a.norm() > k.radius {
                assert!(f.values[idx] >= a.norm().ln() - k.lower);
            }
        }
    }

    proptest! {
        #[test]
        fn functional_equation(are in -2.0..2.0f64, aim in -2.0..2.0f64, zre in -3.0..3.0f64, zim in -3.0..3.0f64, cre in -1.5..1.5f64) {
            let tol = 1e-9;
            for p in [quad(c(are, aim)), FloatPoint::new(3, vec![c(cre, 0.2)], c(are, aim)).unwrap()] {
                let z = c(zre, zim);
                let g = green_point(&p, z, tol).unwrap();
                let gp = green_point(&p, p.eval(&z), tol).unwrap();
                let d = p.d() as f64;
                prop_assert!((gp.value - d * g.value).abs() <= gp.error + d * g.error + 1e-12);
                prop_assert!(g.upper() >= 0.0);
            }
        }

        #[test]
        fn rotation_symmetry(cre in -2.0..2.0f64, are in -2.0..2.0f64, aim in -2.0..2.0f64) {
            let zeta = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
            let a = c(are, aim);
            let p = FloatPoint::new(3, vec![c(cre, 0.1)], a).unwrap();
            let q = FloatPoint::new(3, vec![c(cre, 0.1)], zeta * a).unwrap();
            let g1 = G_point(&p, 1e-9).unwrap();
            let g2 = G_point(&q, 1e-9).unwrap();
            prop_assert!((g1.value - g2.value).abs() <= g1.error + g2.error + 1e-9);
        }
    }
}
