//! End-to-end runs of the `cbrw` binary on small scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cbrw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbrw")).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn one_sided(alpha: f64, m: usize) -> Value {
    json!({
        "seed": 4,
        "walk": {"rate_q": 1.0, "law": {"kind": "semi_exponential", "axes": [
            {"gamma_plus": 0.5, "gamma_minus": 0.5, "l2_plus": 1.0, "l2_minus": 1.0, "l1_plus": 1.0, "l1_minus": 0.0}]}},
        "catalysts": [{"position": [0], "beta": 1.0, "alpha": alpha, "offspring": {"dirac": m}}],
        "mc": {"n_paths": 0, "horizon": 50.0}
    })
}

fn symmetric_d1() -> Value {
    json!({
        "seed": 6,
        "walk": {"rate_q": 1.0, "law": {"kind": "semi_exponential", "axes": [
            {"gamma_plus": 0.5, "gamma_minus": 0.5, "l2_plus": 1.0, "l2_minus": 1.0, "l1_plus": "auto", "l1_minus": "auto"}]}},
        "catalysts": [{"position": [0], "beta": 1.0, "alpha": 0.9, "offspring": {"dirac": 2}}],
        "mc": {"n_paths": 4000, "horizon": 20.0},
        "simulation": {"start": [0], "t_end": 2.0, "snapshot_times": [], "population_cap": 1000, "runs": 3}
    })
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn subcritical_scenario_reports_no_nu() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "s.json", &one_sided(0.4, 2));
    let out = dir.path().join("out");
    let o = cbrw(&["solve-nu", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("regime.json"));
    assert_eq!(r["regime"], "subcritical");
    assert!(r["nu"].is_null());
    assert!((r["perron_at_zero"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn inconclusive_regime_exits_with_two() {
    // A recurrent walk with m = 1 has Perron root exactly 1 at zero; the
    // Monte Carlo interval cannot exclude it.
    let dir = tempfile::tempdir().unwrap();
    let mut v = json!({
        "seed": 2,
        "walk": {"rate_q": 1.0, "law": {"kind": "nearest_neighbour", "dimension": 1}},
        "catalysts": [{"position": [0], "beta": 1.0, "alpha": 0.5, "offspring": {"dirac": 1}}],
        "mc": {"n_paths": 2000, "horizon": 20.0}
    });
    v["output_dir"] = json!(dir.path().join("out"));
    let s = write_scenario(dir.path(), "s.json", &v);
    let o = cbrw(&["solve-nu", "--scenario", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inconclusive"));
}

#[test]
fn missing_prerequisite_and_bad_config_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "s.json", &symmetric_d1());
    let out = dir.path().join("out");
    let o = cbrw(&["front", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cbrw solve-nu"));

    let mut bad = symmetric_d1();
    bad["walk"]["law"]["axes"][0]["gamma_minus"] = json!(1.2);
    let b = write_scenario(dir.path(), "bad.json", &bad);
    let o = cbrw(&["calibrate", "--scenario", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("axes[0]"));
}

#[test]
fn calibrate_writes_back_then_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "s.json", &symmetric_d1());
    let o = cbrw(&["calibrate", "--scenario", s.to_str().unwrap()]);
    assert!(o.status.success());
    let v = read_json(&s);
    assert_eq!(v["walk"]["law"]["axes"][0]["l1_plus"], json!(0.5));
    assert_eq!(v["walk"]["law"]["axes"][0]["l1_minus"], json!(0.5));
    let before = fs::read(&s).unwrap();
    let o = cbrw(&["calibrate", "--scenario", s.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("residual mean"));
    assert_eq!(fs::read(&s).unwrap(), before);
}

#[test]
fn empty_schedule_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "s.json", &symmetric_d1());
    let out = dir.path().join("out");
    let o = cbrw(&["simulate", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("snapshots.csv")).unwrap(), "run_id,time,x_1\n");
    let runs = read_json(&out.join("runs.json"));
    assert_eq!(runs["runs"].as_array().unwrap().len(), 3);
    assert_eq!(runs["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn surface_extremes_sit_at_axis_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    let v = json!({
        "seed": 1,
        "walk": {"rate_q": 1.0, "law": {"kind": "semi_exponential", "axes": [
            {"gamma_plus": 0.75, "gamma_minus": 0.3333333333333333, "l2_plus": 1.0, "l2_minus": 3.0, "l1_plus": "auto", "l1_minus": "auto"},
            {"gamma_plus": 0.5, "gamma_minus": 0.25, "l2_plus": 2.0, "l2_minus": 4.0, "l1_plus": "auto", "l1_minus": "auto"}]}},
        "catalysts": [{"position": [0, 0], "beta": 1.0, "alpha": 0.9, "offspring": {"dirac": 2}}],
        "front": {"resolution": 32}
    });
    let s = write_scenario(dir.path(), "s.json", &v);
    // ν = 1 written by hand, as in the reference shape plots.
    fs::write(
        out.join("regime.json"),
        serde_json::to_string(&json!({
            "config_hash": "", "regime": "supercritical", "perron_at_zero": 1.5,
            "perron_interval": [1.5, 1.5], "nu": 1.0, "nu_ci": [1.0, 1.0],
            "mc_budget": 0, "horizon": 50.0, "censored_fraction": 0.0, "seed": 0
        }))
        .unwrap(),
    )
    .unwrap();
    let o = cbrw(&["shape-export", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("surface.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("orthant,x_1,x_2"));
    let pts: Vec<[f64; 2]> = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
            [f[0], f[1]]
        })
        .collect();
    let max1 = pts.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
    let min1 = pts.iter().map(|p| p[0]).fold(f64::MAX, f64::min);
    let max2 = pts.iter().map(|p| p[1]).fold(f64::MIN, f64::max);
    let min2 = pts.iter().map(|p| p[1]).fold(f64::MAX, f64::min);
    // With ν = 1 every semi-axis extreme is 1^{1/γ} = 1.
    for (got, want) in [(max1, 1.0), (min1, -1.0), (max2, 1.0), (min2, -1.0)] {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    let manifest = read_json(&out.join("plot_manifest.json"));
    assert_eq!(manifest["series"][0]["file"], "surface.csv");
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = symmetric_d1();
    v["simulation"]["snapshot_times"] = json!([0.5, 1.0, 2.0]);
    let s = write_scenario(dir.path(), "s.json", &v);
    let run = |out: &str, workers: &str| {
        let out = dir.path().join(out);
        for cmd in ["solve-nu", "simulate"] {
            let o = cbrw(&[cmd, "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        ["regime.json", "snapshots.csv", "runs.json", "plot_manifest.json"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "2"));
    let o = cbrw(&["simulate", "--scenario", s.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success());
    assert_ne!(fs::read(dir.path().join("d/runs.json")).unwrap(), a[2]);
}
