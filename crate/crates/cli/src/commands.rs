//! One function per subcommand. Each writes its bundle and reports whether
//! the run was partial.

use num_complex::Complex64;
use serde_json::json;

use pcf_core::angle_dynamics::{angles_to_csv, build_portraits, count_exact_periodic, empirical_arc_constant, enumerate_p_with_budget, exact_periodic_angles};
use pcf_core::exact::parse_rational;
use pcf_core::green_arch::{growth_constants, G_grid, Axis, GridSpec, Part};
use pcf_core::green_padic::{PadicContext, Place};
use pcf_core::heights::h_bif;
use pcf_core::measure_equidist::{cell_of, equidist_experiment_observed, mu_bif_d2, mu_bif_d3, GridMeasure, ScheduleEntry};
use pcf_core::multiplier_curves::{
    attracting_cycles, multiplier_poly_numeric, multiplier_poly_symbolic, p_degree_at_zero, p_degree_lower_bound, path_continue, per_star_solve,
};
use pcf_core::pcf_solver::{solve_with, PcfSolutionSet, SolveOptions, SOLVER_VERSION};
use pcf_core::poly_family::family_vars;
use pcf_core::{ExactPoint, FloatPoint, GaussRat};

use crate::config::RunConfig;
use crate::output::{raster_rows, Bundle, Cache, GrayScale};
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<bool, CliError> {
    let mut out = Bundle::create(&cfg.out_dir())?;
    match cfg.command.as_str() {
        "green-grid" => green_grid(cfg, &mut out)?,
        "measure-bif" => measure_bif(cfg, &mut out)?,
        "pcf" => pcf(cfg, &mut out, false)?,
        "centers" => pcf(cfg, &mut out, true)?,
        "per-star" => per_star(cfg, &mut out)?,
        "height" => height(cfg, &mut out)?,
        "angles" => angles(cfg, &mut out)?,
        "equidist" => equidist(cfg, &mut out)?,
        "multiplier-curve" => multiplier_curve(cfg, &mut out)?,
        "continue" => continuation(cfg, &mut out)?,
        other => return Err(CliError::config(format!("unknown command '{other}'"))),
    }
    out.finish(cfg)
}

/// `c_1, …, c_{d-2}` from `--c`, zero when omitted.
fn base_c(cfg: &RunConfig, d: usize) -> Result<Vec<Complex64>, CliError> {
    let c = cfg.complex_list("c")?;
    match c.len() {
        0 => Ok(vec![Complex64::new(0.0, 0.0); d - 2]),
        k if k == d - 2 => Ok(c),
        k => Err(CliError::config(format!("degree {d} needs {} values for c, got {k}", d - 2))),
    }
}

fn float_point(cfg: &RunConfig, d: usize) -> Result<FloatPoint, CliError> {
    let a = cfg.complex_list("a")?;
    let [a] = a[..] else {
        return Err(CliError::config("a needs exactly one value"));
    };
    Ok(FloatPoint::new(d, base_c(cfg, d)?, a)?)
}

/// The plane of the last coordinate, from one half-width or four bounds.
fn plane_spec(cfg: &RunConfig, d: usize) -> Result<GridSpec, CliError> {
    let res = cfg.usize("res")?;
    let region = cfg.f64_list("region")?;
    let mut spec = GridSpec::a_plane(d, base_c(cfg, d)?, 1.0, res);
    let (re, im) = match region[..] {
        [hw] => ((-hw, hw), (-hw, hw)),
        [x0, x1, y0, y1] => ((x0, x1), (y0, y1)),
        _ => return Err(CliError::config("region needs a half-width or re_min,re_max,im_min,im_max")),
    };
    spec.axes[0].min = re.0;
    spec.axes[0].max = re.1;
    spec.axes[1].min = im.0;
    spec.axes[1].max = im.1;
    spec.validate()?;
    Ok(spec)
}

/// The full `(c, a)` box for `d = 3`, from `hw_c,hw_a`.
fn full_d3_spec(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    let res = cfg.usize("res")?;
    let (hc, ha) = match cfg.f64_list("region")?[..] {
        [h] => (h, h),
        [hc, ha] => (hc, ha),
        _ => return Err(CliError::config("a full d = 3 region needs hw or hw_c,hw_a")),
    };
    let axis = |coord, part, h: f64| Axis { coord, part, min: -h, max: h, res };
    let spec = GridSpec {
        d: 3,
        base: vec![Complex64::new(0.0, 0.0); 2],
        axes: vec![axis(0, Part::Re, hc), axis(0, Part::Im, hc), axis(1, Part::Re, ha), axis(1, Part::Im, ha)],
    };
    spec.validate()?;
    Ok(spec)
}

fn grid_csv(spec: &GridSpec, values: &[f64], column: &str) -> String {
    let names = family_vars(spec.d);
    let mut s = String::new();
    for nm in &names {
        s.push_str(&format!("{nm}_re,{nm}_im,"));
    }
    s.push_str(column);
    s.push('\n');
    for (i, v) in values.iter().enumerate() {
        for z in spec.cell_coords(&spec.unravel(i)) {
            s.push_str(&format!("{:.17e},{:.17e},", z.re, z.im));
        }
        s.push_str(&format!("{v:.17e}\n"));
    }
    s
}

/// Sums a grid onto its last two axes (the `a`-plane).
fn project_to_plane(spec: &GridSpec, values: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = spec.axes.len();
    let (w, h) = (spec.axes[k - 2].res, spec.axes[k - 1].res);
    let mut out = vec![0.0; w * h];
    for (i, v) in values.iter().enumerate() {
        let ix = spec.unravel(i);
        out[ix[k - 1] * w + ix[k - 2]] += v;
    }
    (out, w, h)
}

fn green_grid(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let spec = plane_spec(cfg, d)?;
    let field = G_grid(&spec, cfg.f64("tol")?)?;
    record_growth_constants(d, out)?;
    out.write("green.csv", grid_csv(&spec, &field.values, "G").as_bytes())?;
    let (w, h) = (spec.axes[0].res, spec.axes[1].res);
    out.graymap("green", w, h, &raster_rows(&field.values, w, h), GrayScale::Linear, json!(spec))?;
    if field.failed_cells > 0 {
        out.failures.push(format!("{} cells were not certified", field.failed_cells));
    }
    Ok(())
}

/// The escape-box constants `log M - lower ≤ G ≤ log M + upper` for
/// `M ≥ radius`.
fn record_growth_constants(d: usize, out: &mut Bundle) -> Result<(), CliError> {
    out.constants.insert("growth".into(), json!(growth_constants(d)?));
    Ok(())
}

fn measure_summary(mu: &GridMeasure) -> serde_json::Value {
    json!({
        "spec": mu.spec,
        "signed_total": mu.signed_total,
        "raw_total": mu.raw_total,
        "clipped_mass": mu.clipped_mass,
        "clipped_fraction": mu.clipped_fraction,
        "unreliable": mu.unreliable,
        "slice": mu.slice,
        "smoothing": mu.smoothing,
        "failed_cells": mu.failed_cells,
    })
}

fn bif_measure(cfg: &RunConfig) -> Result<GridMeasure, CliError> {
    let d = cfg.degree()?;
    let tol = cfg.f64("tol")?;
    Ok(match d {
        2 => mu_bif_d2(&plane_spec(cfg, d)?, tol)?,
        3 if cfg.flag("slice")? => mu_bif_d3(&plane_spec(cfg, d)?, cfg.f64("smoothing")?, tol)?,
        3 => mu_bif_d3(&full_d3_spec(cfg)?, cfg.f64("smoothing")?, tol)?,
        _ => return Err(CliError::config(format!("the bifurcation measure is implemented for d = 2, 3, not {d}"))),
    })
}

fn note_measure(mu: &GridMeasure, out: &mut Bundle) {
    if mu.slice {
        out.notes.push("2-real slice of the parameter space, not the bifurcation measure".into());
    }
    if mu.spec.axes.len() == 4 {
        out.notes.push("graymap shows the measure summed onto the a-plane".into());
    }
    if mu.unreliable {
        out.failures.push(format!("unreliable: clipped fraction {:.3} exceeds the 5% budget", mu.clipped_fraction));
    }
    if mu.failed_cells > 0 {
        out.failures.push(format!("{} cells were not certified", mu.failed_cells));
    }
}

fn measure_bif(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let mu = bif_measure(cfg)?;
    record_growth_constants(mu.spec.d, out)?;
    out.write("measure.csv", grid_csv(&mu.spec, &mu.masses, "mass").as_bytes())?;
    out.json("measure.json", &measure_summary(&mu))?;
    let (plane, w, h) = project_to_plane(&mu.spec, &mu.masses);
    out.graymap("measure", w, h, &raster_rows(&plane, w, h), GrayScale::Log, json!(mu.spec))?;
    note_measure(&mu, out);
    Ok(())
}

fn solve_options(cfg: &RunConfig) -> Result<SolveOptions, CliError> {
    Ok(SolveOptions {
        bezout_cap: cfg.u64("budget")?,
        classify_tol: cfg.f64("classify_tol")?,
    })
}

fn pcf(cfg: &RunConfig, out: &mut Bundle, centers: bool) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let m = cfg.usize_list("m")?;
    let n = match cfg.usize_list("n")?[..] {
        _ if centers => vec![0; m.len()],
        [k] => vec![k; m.len()],
        ref ns => ns.to_vec(),
    };
    let opts = solve_options(cfg)?;
    let key = Cache::key(&[
        "pcf",
        &d.to_string(),
        &format!("{m:?}"),
        &format!("{n:?}"),
        &format!("{:e}", opts.classify_tol),
        SOLVER_VERSION,
    ]);
    let cache = cfg.cache_dir().map(|p| Cache::open(&p)).transpose()?;
    let hit = cache.as_ref().and_then(|c| c.load(&key)).and_then(|t| serde_json::from_str::<PcfSolutionSet>(&t).ok());
    let sols = match hit {
        Some(s) => {
            out.cached = true;
            out.notes.push("cached".into());
            s
        }
        None => {
            let s = solve_with(d, &m, &n, &opts)?;
            if let Some(c) = &cache {
                c.store(&key, &serde_json::to_string(&s).map_err(|e| CliError::internal(e.to_string()))?)?;
            }
            s
        }
    };
    out.json("solutions.json", &sols)?;
    out.write("solutions.csv", sols.to_csv().as_bytes())?;
    let exact = PcfSolutionSet {
        points: sols.exact_points().into_iter().cloned().collect(),
        ..sols.clone()
    };
    out.write("exact.csv", exact.to_csv().as_bytes())?;
    out.notes.push(format!("{} distinct points, {} of exact type", sols.points.len(), exact.points.len()));
    let unresolved = sols.points.iter().filter(|p| p.classification.critical().is_none()).count();
    if unresolved > 0 {
        out.failures.push(format!("{unresolved} points could not be classified"));
    }
    Ok(())
}

fn multipliers(cfg: &RunConfig, d: usize) -> Result<Vec<Complex64>, CliError> {
    let w = cfg.complex_list("w")?;
    match w.len() {
        1 => Ok(vec![w[0]; d - 1]),
        k if k == d - 1 => Ok(w),
        k => Err(CliError::config(format!("need 1 or {} multipliers, got {k}", d - 1))),
    }
}

fn per_star(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let set = per_star_solve(d, &cfg.usize_list("m")?, &multipliers(cfg, d)?)?;
    out.json("per_star.json", &set)?;
    out.write("per_star.csv", set.to_csv().as_bytes())?;
    for (center, why) in &set.failures {
        out.failures.push(format!("path from {center:?}: {why}"));
    }
    Ok(())
}

fn rational_coord(key: &str, s: &str) -> Result<GaussRat, CliError> {
    parse_rational(s)
        .map(GaussRat::real)
        .map_err(|e| CliError::config(format!("{key}: {e}")))
}

fn height(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let cs: Vec<GaussRat> = cfg
        .raw("c")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| rational_coord("c", s))
        .collect::<Result<_, _>>()?;
    let cs = if cs.is_empty() { vec![GaussRat::from_ints(0, 0); d.saturating_sub(2)] } else { cs };
    let a = rational_coord("a", cfg.raw("a").trim())?;
    let p = ExactPoint::new(d, cs, a)?;
    let report = h_bif(&p, cfg.f64("tol")?)?;
    let real = |g: &GaussRat| g.re.clone();
    let mut c_v = serde_json::Map::new();
    for (place, _) in &report.breakdown {
        if let Place::Prime(q) = place {
            let ctx = PadicContext::new(*q, d, p.c().iter().map(real).collect(), real(p.a()))?;
            c_v.insert(q.to_string(), json!(ctx.constants().c_v(*q)));
        }
    }
    out.constants.insert("c_v".into(), json!(c_v));
    out.json("height.json", &report)?;
    Ok(())
}

fn angles(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()? as u64;
    let budget = cfg.u64("budget")?;
    if budget == 0 {
        return Err(CliError::config("budget must be positive"));
    }
    let qmax = cfg.usize("qmax")? as u32;
    let mut counts = String::from("q,count\n");
    for q in 1..=qmax {
        counts.push_str(&format!("{q},{}\n", count_exact_periodic(d, q)));
    }
    out.write("counts.csv", counts.as_bytes())?;
    let m = cfg.usize_list("m")?;
    let n = cfg.usize_list("n")?;
    let (m0, n0) = (m.first().copied().unwrap_or(1) as u32, n.first().copied().unwrap_or(0) as u32);
    let set = if n0 == 0 {
        exact_periodic_angles(d, m0)
    } else {
        enumerate_p_with_budget(d, m0, n0, budget)?
    };
    if n0 >= 1 && !set.is_empty() {
        out.constants.insert("arc_constant".into(), json!(empirical_arc_constant(d, m0, n0)?));
    }
    out.write("angles.csv", angles_to_csv(&set).as_bytes())?;
    if m.len() as u64 == d - 1 && n.len() == m.len() && d > 2 && n.iter().all(|x| *x >= 1) {
        let ms: Vec<u32> = m.iter().map(|x| *x as u32).collect();
        let ns: Vec<u32> = n.iter().map(|x| *x as u32).collect();
        let portraits = build_portraits(d, &ms, &ns, budget.min(usize::MAX as u64) as usize)?;
        if portraits.truncated {
            out.failures.push("portrait enumeration truncated by the budget".into());
        }
        out.json("portraits.json", &portraits)?;
    }
    Ok(())
}

/// `centers:A..B`, `misiurewicz:A..B[:n]` or `per-star:A..B@w`.
pub fn parse_schedule(d: usize, s: &str) -> Result<Vec<ScheduleEntry>, CliError> {
    let bad = || CliError::config(format!("cannot parse schedule '{s}'"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    let (range, tail) = match kind {
        "per-star" => {
            let (r, w) = rest.split_once('@').ok_or_else(bad)?;
            (r, Some(w))
        }
        "misiurewicz" => match rest.split_once(':') {
            Some((r, n)) => (r, Some(n)),
            None => (rest, None),
        },
        _ => (rest, None),
    };
    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    // Distinct periods for the critical points when d = 3.
    let periods = |q: usize| (0..d - 1).map(|i| q + i).collect::<Vec<_>>();
    (lo..=hi)
        .map(|q| match kind {
            "centers" => Ok(ScheduleEntry::Pcf { m: periods(q), n: vec![0; d - 1] }),
            "misiurewicz" => {
                let pre: usize = tail.map_or(Ok(2), |t| t.trim().parse().map_err(|_| bad()))?;
                if pre == 0 {
                    return Err(bad());
                }
                Ok(ScheduleEntry::Pcf {
                    m: periods(q).into_iter().map(|p| p + pre).collect(),
                    n: vec![pre; d - 1],
                })
            }
            "per-star" => {
                let w = crate::config::parse_complex("schedule", tail.unwrap_or(""))?;
                Ok(ScheduleEntry::PerStar { m: periods(q), w: vec![w; d - 1] })
            }
            _ => Err(bad()),
        })
        .collect()
}

fn equidist(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let schedule = parse_schedule(d, cfg.raw("schedule"))?;
    let depth = cfg.usize("depth")? as u32;
    let grid = bif_measure(cfg)?;
    note_measure(&grid, out);
    let (density, w, h) = project_to_plane(&grid.spec, &grid.masses);
    let peak = density.iter().copied().fold(0.0, f64::max);
    out.graymap("density", w, h, &raster_rows(&density, w, h), GrayScale::Log, json!(grid.spec))?;
    let plane = GridSpec {
        axes: grid.spec.axes[grid.spec.axes.len() - 2..].to_vec(),
        ..grid.spec.clone()
    };
    let mut overlays = Vec::new();
    let report = equidist_experiment_observed(d, &schedule, &grid, depth, &solve_options(cfg)?, &mut |k, mu| {
        let mut img = density.clone();
        for x in &mu.points {
            let Some(ix) = cell_of(&plane, x) else { continue };
            img[ix[1] * w + ix[0]] = 2.0 * peak.max(f64::MIN_POSITIVE);
        }
        overlays.push((k, img));
    })?;
    for (k, img) in overlays {
        out.graymap(&format!("overlay_{k:02}"), w, h, &raster_rows(&img, w, h), GrayScale::Log, json!({"k": k}))?;
    }
    let mut table = String::from("k,atoms,discrepancy,error\n");
    for r in &report.rows {
        let disc = r.discrepancy.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let err = r.error.clone().unwrap_or_default().replace(',', ";");
        table.push_str(&format!("{},{},{disc},{err}\n", r.k, r.atoms));
        if let Some(e) = &r.error {
            out.failures.push(format!("k = {}: {e}", r.k));
        }
    }
    out.write("discrepancy.csv", table.as_bytes())?;
    let settings = json!({
        "schedule": cfg.raw("schedule"),
        "res": cfg.raw("res"),
        "region": cfg.raw("region"),
        "tol": cfg.raw("tol"),
        "classify_tol": cfg.raw("classify_tol"),
        "smoothing": cfg.raw("smoothing"),
        "depth": depth,
        "seed": cfg.raw("seed"),
        "trend_ratio_bound": pcf_core::measure_equidist::TREND_RATIO,
        "trend_violation_bound": pcf_core::measure_equidist::TREND_VIOLATION,
    });
    out.json("report.json", &json!({ "settings": settings, "measure": measure_summary(&grid), "report": report }))?;
    Ok(())
}

fn multiplier_curve(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let n = cfg.usize("period")?;
    match cfg.raw("mode") {
        "symbolic" => {
            if d != 2 {
                return Err(CliError::config("symbolic multiplier polynomials are offered for d = 2 only"));
            }
            let r = multiplier_poly_symbolic(n)?;
            out.json(
                "multiplier.json",
                &json!({
                    "d": d,
                    "n": n,
                    "vars": r.vars(),
                    "polynomial": r.to_string(),
                    "p_degree_at_zero": p_degree_at_zero(&r, n),
                    "p_degree_lower_bound": p_degree_lower_bound(d, n),
                }),
            )?;
        }
        "numeric" => {
            let p = float_point(cfg, d)?;
            let r = multiplier_poly_numeric(&p, n)?;
            let cycles = attracting_cycles(&p, cfg.usize("budget")?);
            if !cycles.unresolved.is_empty() {
                out.notes.push(format!("{} critical orbits did not settle within the budget", cycles.unresolved.len()));
            }
            out.json("multiplier.json", &json!({ "d": d, "n": n, "polynomial": r, "attracting_cycles": cycles }))?;
        }
        other => return Err(CliError::config(format!("mode must be symbolic or numeric, got '{other}'"))),
    }
    Ok(())
}

fn continuation(cfg: &RunConfig, out: &mut Bundle) -> Result<(), CliError> {
    let d = cfg.degree()?;
    let center = float_point(cfg, d)?;
    let res = path_continue(&center, &cfg.usize_list("m")?, &multipliers(cfg, d)?, cfg.usize("steps")?)?;
    out.json("continuation.json", &res)?;
    let names = family_vars(d);
    let mut csv = String::from("coordinate,t");
    for nm in &names {
        csv.push_str(&format!(",{nm}_re,{nm}_im"));
    }
    csv.push('\n');
    for ((k, t), x) in res.trace.coordinate.iter().zip(&res.trace.t).zip(&res.trace.params) {
        csv.push_str(&format!("{k},{t:.17e}"));
        for z in x {
            csv.push_str(&format!(",{:.17e},{:.17e}", z.re, z.im));
        }
        csv.push('\n');
    }
    out.write("trace.csv", csv.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let s = parse_schedule(2, "centers:6..8").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], ScheduleEntry::Pcf { m: vec![6], n: vec![0] });
        let s = parse_schedule(2, "misiurewicz:4..5").unwrap();
        assert_eq!(s[1], ScheduleEntry::Pcf { m: vec![7], n: vec![2] });
        let s = parse_schedule(3, "misiurewicz:1..1:1").unwrap();
        assert_eq!(s[0], ScheduleEntry::Pcf { m: vec![2, 3], n: vec![1, 1] });
        let s = parse_schedule(2, "per-star:3..4@0.5").unwrap();
        assert_eq!(s[0], ScheduleEntry::PerStar { m: vec![3], w: vec![Complex64::new(0.5, 0.0)] });
        for bad in ["centers", "centers:5..3", "per-star:3..4", "spiral:1..2", "centers:0..2"] {
            assert!(parse_schedule(2, bad).is_err(), "{bad}");
        }
    }
}
