use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pcfdyn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfdyn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn green_grid_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = pcfdyn(&["green-grid", "--res", "24"], dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["green.csv", "green.pgm", "green.pgm.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read(a.join("green.csv")).unwrap(), std::fs::read(b.join("green.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("green.pgm")).unwrap(), std::fs::read(b.join("green.pgm")).unwrap());
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["status"], "ok");
    assert!(ma["constants"]["growth"]["radius"].as_f64().unwrap() >= 4.0);
    let pgm = std::fs::read(a.join("green.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n24 24\n255\n"));
}

#[test]
fn degree_five_grid_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pcfdyn(&["green-grid", "--degree", "5", "--res", "8"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d = 2, 3"), "{}", stderr(&o));
}

#[test]
fn pcf_finds_snapped_misiurewicz_points_and_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let cache_s = cache.to_str().unwrap();
    let first = tmp.path().join("first");
    let o = pcfdyn(&["pcf", "--m", "3", "--n", "2", "--cache", cache_s], &first);
    assert!(o.status.success(), "{}", stderr(&o));
    let sols = json(&first.join("solutions.json"));
    let exact: Vec<String> = sols["points"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|p| p["exact"].as_array().map(|e| e[0].as_str().unwrap().to_string()))
        .collect();
    assert!(exact.contains(&"2i".to_string()) && exact.contains(&"-2i".to_string()), "{exact:?}");
    assert_eq!(json(&first.join("manifest.json"))["cached"], false);

    let second = tmp.path().join("second");
    let o = pcfdyn(&["pcf", "--m", "3", "--n", "2", "--cache", cache_s], &second);
    assert!(o.status.success());
    let man = json(&second.join("manifest.json"));
    assert_eq!(man["cached"], true);
    assert!(man["notes"].as_array().unwrap().iter().any(|n| n == "cached"));
    assert_eq!(std::fs::read(first.join("solutions.csv")).unwrap(), std::fs::read(second.join("solutions.csv")).unwrap());
}

#[test]
fn oversized_d3_request_reports_the_bezout_number() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pcfdyn(&["pcf", "--degree", "3", "--m", "5,4", "--n", "0,0"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(&3u64.pow(9).to_string()), "{}", stderr(&o));
}

#[test]
fn centers_cover_period_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pcfdyn(&["centers", "--m", "3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let exact = std::fs::read_to_string(tmp.path().join("exact.csv")).unwrap();
    // Three period-3 centers c, each with two square roots a.
    assert_eq!(exact.lines().count(), 1 + 6);
}

#[test]
fn heights() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = tmp.path().join("zero");
    assert!(pcfdyn(&["height", "--a", "0"], &zero).status.success());
    assert_eq!(json(&zero.join("height.json"))["h_bif"]["value"], 0.0);

    let two = tmp.path().join("two");
    assert!(pcfdyn(&["height", "--a", "2"], &two).status.success());
    let rep = json(&two.join("height.json"));
    assert!(rep["h_bif"]["value"].as_f64().unwrap() > 0.0);
    assert!(rep["breakdown"].as_array().unwrap().len() >= 2);
    // 2 is the only prime place here and C_v = 1/2 for d = 2 at p = 2.
    assert_eq!(json(&two.join("manifest.json"))["constants"]["c_v"]["2"], 0.5);

    let o = pcfdyn(&["height", "--a", "1/x"], &tmp.path().join("bad"));
    assert_eq!(o.status.code(), Some(2));
}

/// Exact period of `k / (d^q - 1)` under `t ↦ d t`, by iterating numerators.
fn brute_period_count(d: u64, q: u32) -> u64 {
    let den = d.pow(q) - 1;
    (0..den)
        .filter(|&k| {
            let mut x = k;
            for j in 1..=q {
                x = x * d % den;
                if x == k {
                    return j == q;
                }
            }
            false
        })
        .count() as u64
}

#[test]
fn angles_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pcfdyn(&["angles", "--m", "3", "--n", "1"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let angles = std::fs::read_to_string(tmp.path().join("angles.csv")).unwrap();
    assert_eq!(angles.lines().skip(1).collect::<Vec<_>>(), vec!["1/6", "5/6"]);
    assert!(json(&tmp.path().join("manifest.json"))["constants"]["arc_constant"].as_f64().is_some());
    let counts = std::fs::read_to_string(tmp.path().join("counts.csv")).unwrap();
    for line in counts.lines().skip(1) {
        let (q, c) = line.split_once(',').unwrap();
        assert_eq!(c.parse::<u64>().unwrap(), brute_period_count(2, q.parse().unwrap()), "q = {q}");
    }
    let o = pcfdyn(&["angles", "--budget", "0"], &tmp.path().join("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "res = 12\nregion = 2.0\n").unwrap();
    let out = tmp.path().join("o");
    let o = pcfdyn(&["green-grid", "--config", cfg.to_str().unwrap(), "--res", "10"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let man = json(&out.join("manifest.json"));
    assert_eq!(man["config"]["res"], "10");
    assert_eq!(man["config"]["region"], "2.0");
    std::fs::write(&cfg, "resolution = 12\n").unwrap();
    let o = pcfdyn(&["green-grid", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn measure_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d2 = tmp.path().join("d2");
    let o = pcfdyn(&["measure-bif", "--res", "64"], &d2);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&d2.join("measure.json"));
    assert!((m["raw_total"].as_f64().unwrap() - 1.0).abs() < 0.15);
    let slice = tmp.path().join("slice");
    let o = pcfdyn(&["measure-bif", "--degree", "3", "--slice", "true", "--res", "32", "--c", "0.5"], &slice);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&slice.join("measure.json"))["slice"], true);
    let notes = json(&slice.join("manifest.json"))["notes"].to_string();
    assert!(notes.contains("slice"));
}

#[test]
fn equidist_report_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["equidist", "--res", "64", "--depth", "3", "--schedule", "centers:3..5"];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = pcfdyn(&args, dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let rep = json(&a.join("report.json"));
    assert_eq!(rep["report"]["rows"].as_array().unwrap().len(), 3);
    assert!(a.join("overlay_02.pgm").exists() && a.join("density.pgm").exists());
    assert_eq!(std::fs::read(a.join("discrepancy.csv")).unwrap(), std::fs::read(b.join("discrepancy.csv")).unwrap());
    let o = pcfdyn(&["equidist", "--res", "32", "--schedule", "centers:5..3"], &tmp.path().join("empty"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn multiplier_and_continuation() {
    let tmp = tempfile::tempdir().unwrap();
    let sym = tmp.path().join("sym");
    assert!(pcfdyn(&["multiplier-curve", "--period", "1"], &sym).status.success());
    let r = json(&sym.join("multiplier.json"));
    assert!(r["polynomial"].as_str().unwrap().contains('w'));

    let num = tmp.path().join("num");
    let o = pcfdyn(&["multiplier-curve", "--mode", "numeric", "--period", "2", "--a", "0.3"], &num);
    assert!(o.status.success(), "{}", stderr(&o));

    let cont = tmp.path().join("cont");
    let o = pcfdyn(&["continue", "--m", "1", "--a", "0", "--w", "0.5"], &cont);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = json(&cont.join("continuation.json"));
    let a = &res["coords"][0];
    let (re, im) = (a[0].as_f64().unwrap(), a[1].as_f64().unwrap());
    // Fixed-point multiplier w on the main cardioid: a² = w(2 - w)/2.
    assert!(((re * re - im * im) - 0.375).abs() < 1e-9 && (2.0 * re * im).abs() < 1e-9);

    let ps = tmp.path().join("ps");
    let o = pcfdyn(&["per-star", "--m", "3", "--w", "0.3"], &ps);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&ps.join("per_star.json"))["points"].as_array().unwrap().len(), 6);
}
