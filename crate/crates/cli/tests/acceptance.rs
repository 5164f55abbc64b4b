//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cbrw_cli::commands::{self, Context};
use cbrw_cli::{run_from, Common};
use cbrw_core::front::trend_holds;
use cbrw_core::sim::{ensemble_map, run_observed};
use cbrw_core::walk::{Clock, TabooBatch};
use cbrw_core::{AxisTailLaw, FrontShape, JumpLaw, Side, StreamSeed};

/// Absolute tolerance on the calibrated weights.
const CALIBRATION_TOL: f64 = 1e-4;
/// Absolute tolerance on the closed-form Malthusian parameter.
const CLOSED_FORM_TOL: f64 = 1e-6;
const GROWTH_REL_TOL: f64 = 0.15;
const SHELL_EPS_FRACTION: f64 = 0.3;
const MAX_OUTSIDE_O: f64 = 0.1;
const MIN_BEYOND_Q: f64 = 0.9;
const TREND_WINDOW: usize = 3;
const COMBINED_SE_Z: f64 = 3.0;
const SAMPLER_Z: f64 = 4.0;
const SAMPLER_DRAWS: usize = 1_000_000;
const WITNESS_TOL: f64 = 1e-12;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn common(scenario: &Path, out: &Path) -> Common {
    Common {
        scenario: scenario.to_path_buf(),
        out: Some(out.to_path_buf()),
        seed: None,
        workers: None,
        budget: None,
    }
}

fn context(name: &str, out: &Path) -> Context {
    Context::new(&common(&scenario(name), out)).expect("scenario loads")
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn calibration(tmp: &Path) -> Outcome {
    let path = tmp.join("calibration_d2.json");
    fs::copy(scenario("calibration_d2.json"), &path).unwrap();
    let start = Instant::now();
    commands::calibrate(&path).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let law = cbrw_cli::Scenario::load(&path).unwrap().jump_law().unwrap().unwrap();
    let got = [
        law.axis(0).l1(Side::Plus),
        law.axis(0).l1(Side::Minus),
        law.axis(1).l1(Side::Plus),
        law.axis(1).l1(Side::Minus),
    ];
    let want = [0.382737, 0.617263, 0.450655, 0.549345];
    let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(
        err <= CALIBRATION_TOL && elapsed < 1.0,
        format!("weights {got:.6?}, max |diff| {err:.1e}, {elapsed:.3} s"),
    )
}

fn closed_form(tmp: &Path) -> Outcome {
    let out = tmp.join("zero_return");
    let start = Instant::now();
    let scen = scenario("zero_return.json").display().to_string();
    let o = out.display().to_string();
    let code = run_from(["cbrw", "solve-nu", "--scenario", &scen, "--out", &o, "--budget", "0"]);
    let elapsed = start.elapsed().as_secs_f64();
    let regime = cbrw_cli::artifacts::read_regime(&out).unwrap();
    let nu = regime.report.nu.unwrap_or(f64::NAN);
    outcome(
        code == 0 && (nu - 0.8).abs() <= CLOSED_FORM_TOL && regime.report.mc_budget == 0 && elapsed < 1.0,
        format!("nu = {nu}, budget {}, {elapsed:.3} s", regime.report.mc_budget),
    )
}

/// Root of `αm G*(ν) + (1−α) G*(ν) F̄*(ν) = 1`, with `F̄*` tabulated from an
/// independent batch of return times.
fn scalar_oracle(ctx: &Context) -> f64 {
    let walk = ctx.scenario.walk().unwrap();
    let cat = &ctx.scenario.catalysts().unwrap()[0];
    let batch = TabooBatch::simulate(&walk, &[0], &[0], &[], 60.0, 1_000_000, StreamSeed::new(0x5ca1a).derive("scalar-oracle"))
        .unwrap();
    let am = cat.alpha * cat.offspring_mean();
    let lambdas: Vec<f64> = (0..=400).map(|k| k as f64 * 0.005).collect();
    let table: Vec<f64> = lambdas.iter().map(|&l| batch.laplace(l, Clock::SinceExit).estimate).collect();
    let f_bar = |l: f64| {
        let k = ((l / 0.005) as usize).min(lambdas.len() - 2);
        let w = (l - lambdas[k]) / 0.005;
        table[k] * (1.0 - w) + table[k + 1] * w
    };
    let g = |l: f64| (am + (1.0 - cat.alpha) * f_bar(l)) * cat.beta / (cat.beta + l) - 1.0;
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mc_consistency(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let oracle = scalar_oracle(&context("recurrent_d1.json", tmp));
    let mut misses = Vec::new();
    let mut widest: f64 = 0.0;
    for seed in 0..5 {
        let mut args = common(&scenario("recurrent_d1.json"), &tmp.join(format!("recurrent_{seed}")));
        args.seed = Some(seed);
        let report = commands::solve_nu(&Context::new(&args).unwrap()).unwrap().report;
        let (lo, hi) = report.nu_ci.unwrap();
        widest = widest.max(hi - lo);
        if !(lo <= oracle && oracle <= hi) {
            misses.push((seed, lo, hi));
        }
    }
    outcome(
        misses.is_empty(),
        format!(
            "oracle {oracle:.6}, widest CI {widest:.1e}, misses {misses:?}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Least-squares slope of `ln(count)` on time over the second half of the
/// horizon, for runs with at least 10 occupied snapshots there.
fn growth(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let ctx = context("growth_d1.json", tmp);
    let nu = commands::solve_nu(&ctx).unwrap().report.nu.unwrap();
    let (cfg, runs) = ctx.scenario.sim_config().unwrap();
    let half = cfg.t_end / 2.0;
    let slopes: Vec<Option<f64>> = ensemble_map(&cfg, runs, |_, seed| {
        let mut pts = Vec::new();
        run_observed(&cfg, seed, |v| {
            if v.time >= half && v.local_counts[0] > 0 {
                pts.push((v.time, (v.local_counts[0] as f64).ln()));
            }
        })
        .unwrap();
        (pts.len() >= 10).then(|| {
            let n = pts.len() as f64;
            let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
            sxy / sxx
        })
    });
    let used: Vec<f64> = slopes.iter().flatten().copied().collect();
    let mean = used.iter().sum::<f64>() / used.len() as f64;
    let rel = (mean - nu).abs() / nu;
    outcome(
        runs >= 64 && rel <= GROWTH_REL_TOL,
        format!(
            "slope {mean:.4} vs nu {nu:.4} (rel {rel:.3}), {} of {runs} runs, {:.1} s",
            used.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn shell(tmp: &Path, name: &str) -> (bool, String) {
    let ctx = context(name, tmp);
    commands::solve_nu(&ctx).unwrap();
    let report = commands::front(&ctx).unwrap().report;
    let eps_ok = (report.epsilon - SHELL_EPS_FRACTION * report.nu).abs() < 1e-12;
    let out_o = *report.frac_outside_o.last().unwrap();
    let beyond_q = *report.frac_beyond_q.last().unwrap();
    let trend_o = trend_holds(&report.times, &report.frac_outside_o, TREND_WINDOW, false);
    let trend_q = trend_holds(&report.times, &report.frac_beyond_q, TREND_WINDOW, true);
    let pass = eps_ok && out_o <= MAX_OUTSIDE_O && beyond_q >= MIN_BEYOND_Q && trend_o && trend_q;
    let last = report.times.len() - TREND_WINDOW.min(report.times.len());
    (
        pass,
        format!(
            "d={} t={}: out_O {out_o:.3} {:?}, beyond_Q {beyond_q:.3} {:?}, {} runs ({} truncated)",
            ctx.scenario.dimension(),
            report.times.last().unwrap(),
            report.frac_outside_o[last..].iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            report.frac_beyond_q[last..].iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            report.n_runs,
            report.n_truncated
        ),
    )
}

fn front_shells(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let (p1, d1) = shell(tmp, "front_d1.json");
    let (p2, d2) = shell(tmp, "front_d2.json");
    outcome(p1 && p2, format!("{d1}; {d2}; {:.0} s", start.elapsed().as_secs_f64()))
}

fn volterra_vs_direct(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let ctx = context("volterra_d1.json", tmp);
    let sol = commands::volterra(&ctx).unwrap();
    let (mut cfg, runs) = ctx.scenario.sim_config().unwrap();
    cfg.snapshot_times = sol.grid.clone();
    let target = ctx.scenario.volterra_config().unwrap().target;
    let hits: Vec<Vec<bool>> = ensemble_map(&cfg, runs, |_, seed| {
        let mut h = Vec::with_capacity(sol.grid.len());
        run_observed(&cfg, seed, |v| h.push(v.positions().any(|p| target.contains(p)))).unwrap();
        h
    });
    let mut worst: f64 = 0.0;
    let mut refine_ok = true;
    for i in 0..sol.grid.len() {
        let p = hits.iter().filter(|h| h[i]).count() as f64 / runs as f64;
        let se = ((p * (1.0 - p) / runs as f64) + sol.stderr[i].powi(2)).sqrt();
        let diff = (sol.e[i] - p).abs();
        let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
        refine_ok &= sol.refinement_change[i] <= COMBINED_SE_Z * sol.stderr[i] + 1e-9;
    }
    outcome(
        worst <= COMBINED_SE_Z && refine_ok,
        format!(
            "{} grid points, worst |z| {worst:.2}, refinement within band: {refine_ok}, {:.1} s",
            sol.grid.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn nonconvexity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut all_above = true;
    for gamma in [0.25, 1.0 / 3.0, 0.5, 0.75] {
        for nu in [0.5, 1.0, 2.0] {
            let w = FrontShape::new(nu, vec![(gamma, gamma); 2]).unwrap().nonconvexity_witness().unwrap();
            let expected = 2f64.powf(1.0 - gamma) * nu;
            worst = worst.max((w.midpoint_value - expected).abs());
            all_above &= w.midpoint_value > nu && w.certifies_nonconvexity();
        }
    }
    outcome(
        worst <= WITNESS_TOL && all_above,
        format!("max |H(mid) - 2^(1-g) nu| = {worst:.1e}, all above nu: {all_above}"),
    )
}

fn sampler() -> Outcome {
    let law = JumpLaw::new(vec![
        AxisTailLaw::calibrated(0.75, 1.0 / 3.0, 1.0, 3.0).unwrap(),
        AxisTailLaw::calibrated(0.5, 0.25, 2.0, 4.0).unwrap(),
    ])
    .unwrap();
    let mut rng = StreamSeed::new(8).derive("acceptance-sampler").rng();
    let xs: Vec<Vec<i64>> = (0..SAMPLER_DRAWS).map(|_| law.sample(&mut rng)).collect();
    let n = SAMPLER_DRAWS as f64;
    let mut worst_tail: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    for (i, axis) in law.axes().iter().enumerate() {
        for y in [0u64, 1, 2, 4, 8] {
            for side in [Side::Plus, Side::Minus] {
                let p = axis.tail_prob(side, y);
                let hits = xs
                    .iter()
                    .filter(|x| match side {
                        Side::Plus => x[i] > y as i64,
                        Side::Minus => x[i] < -(y as i64),
                    })
                    .count();
                let se = (p * (1.0 - p) / n).sqrt();
                worst_tail = worst_tail.max((hits as f64 / n - p).abs() / se);
            }
        }
        let mean = xs.iter().map(|x| x[i] as f64).sum::<f64>() / n;
        let var = xs.iter().map(|x| (x[i] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        worst_mean = worst_mean.max(mean.abs() / (var / n).sqrt());
    }
    outcome(
        worst_tail <= SAMPLER_Z && worst_mean <= SAMPLER_Z,
        format!("worst tail z {worst_tail:.2}, worst mean z {worst_mean:.2} over {SAMPLER_DRAWS} draws"),
    )
}

fn pipeline(dir: &Path, workers: usize) -> Vec<(String, Vec<u8>)> {
    fs::create_dir_all(dir).unwrap();
    let pipe = dir.join("pipeline_d2.json");
    let volt = dir.join("volterra_d1.json");
    fs::copy(scenario("pipeline_d2.json"), &pipe).unwrap();
    fs::copy(scenario("volterra_d1.json"), &volt).unwrap();
    let out = dir.join("out");
    let w = workers.to_string();
    let o = out.display().to_string();
    let p = pipe.display().to_string();
    let v = volt.display().to_string();
    let mut codes = vec![run_from(["cbrw", "calibrate", "--scenario", &p])];
    for cmd in ["solve-nu", "simulate", "front", "shape-export"] {
        codes.push(run_from(["cbrw", cmd, "--scenario", &p, "--out", &o, "--workers", &w]));
    }
    codes.push(run_from(["cbrw", "volterra", "--scenario", &v, "--out", &o, "--workers", &w, "--budget", "4000"]));
    assert!(codes.iter().all(|&c| c == 0), "pipeline exit codes {codes:?}");
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.push(("pipeline_d2.json".into(), fs::read(&pipe).unwrap()));
    files.sort();
    files
}

fn determinism(tmp: &Path) -> Outcome {
    let a = pipeline(&tmp.join("det_a"), 1);
    let b = pipeline(&tmp.join("det_b"), 1);
    let c = pipeline(&tmp.join("det_c"), 3);
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    outcome(
        a == b && a == c && a.len() >= 9,
        format!("{} artifacts compared across 3 runs (workers 1, 1, 3): {names:?}", a.len()),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let criteria: Vec<(&str, Check)> = vec![
        ("calibration reproduces reference weights", Box::new(|| calibration(t))),
        ("closed-form Malthusian parameter", Box::new(|| closed_form(t))),
        ("Monte Carlo nu agrees with scalar oracle", Box::new(|| mc_consistency(t))),
        ("local growth rate matches nu", Box::new(|| growth(t))),
        ("front shell containment d=1 and d=2", Box::new(|| front_shells(t))),
        ("integral equation agrees with direct simulation", Box::new(|| volterra_vs_direct(t))),
        ("non-convexity certificate", Box::new(nonconvexity)),
        ("sampler fidelity", Box::new(sampler)),
        ("determinism across reruns and worker counts", Box::new(|| determinism(t))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
