//! Subcommand bodies. Each returns what it wrote so tests can inspect the
//! numbers without re-parsing files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cbrw_core::front::{directional_limit_check, run_front, shell_containment, write_surface_csv, FrontProbe};
use cbrw_core::malthusian::{solve_malthusian, MalthusianSystem};
use cbrw_core::sim::{ensemble_map, run_observed};
use cbrw_core::volterra::{volterra_hit_probability, VolterraSolution};
use cbrw_core::sim::RunStats;
use cbrw_core::{Error, FrontShape, Regime, ShellReport, Side, StreamSeed};
use serde::Serialize;

use crate::artifacts::{self, read_regime, write_atomic, write_json, write_plot_manifest, RegimeFile};
use crate::scenario::{Direction, Scenario};
use crate::{CliError, Common};

/// A scenario with command-line overrides applied, and where to write.
#[derive(Clone, Debug)]
pub struct Context {
    pub scenario: Scenario,
    pub out: PathBuf,
}

impl Context {
    pub fn new(args: &Common) -> Result<Self, CliError> {
        let mut scenario = Scenario::load(&args.scenario)?;
        if let Some(seed) = args.seed {
            scenario.seed = seed;
        }
        if let Some(n) = args.budget {
            scenario.mc.n_paths = n;
            if let Some(v) = scenario.volterra.as_mut() {
                v.n_paths = n;
            }
        }
        let out = args.out.clone().unwrap_or_else(|| scenario.output_dir.clone());
        Ok(Self { scenario, out })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn manifest(&self) -> Result<(), CliError> {
        write_plot_manifest(&self.out, &self.scenario.config_hash(), self.scenario.dimension())
    }
}

/// Fill in `"auto"` weights and rewrite the scenario file if anything
/// changed. Returns the residual mean of each axis.
pub fn calibrate(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut scenario = Scenario::load(path)?;
    let before = scenario.clone();
    let residuals = scenario.calibrate()?;
    for (i, r) in residuals.iter().enumerate() {
        println!("axis {i}: residual mean {r:e}");
    }
    if scenario != before {
        write_atomic(path, scenario.to_json().as_bytes())?;
        log::info!("wrote calibrated weights to {}", path.display());
    } else {
        log::info!("weights already set; scenario unchanged");
    }
    Ok(residuals)
}

pub fn solve_nu(ctx: &Context) -> Result<RegimeFile, CliError> {
    let s = &ctx.scenario;
    let walk = s.walk()?;
    let cats = s.catalysts()?;
    let seed = StreamSeed::new(s.seed).derive("solve-nu");
    let report = match solve_malthusian(&cats, &walk, s.mc, seed) {
        Ok(r) => r,
        Err(Error::NotSupercritical { .. }) => MalthusianSystem::build(&cats, &walk, s.mc, seed)?.classify(seed.value())?,
        Err(e) => return Err(e.into()),
    };
    match report.nu {
        Some(nu) => println!("regime {:?}, nu = {nu}", report.regime),
        None => println!("regime {:?}, no Malthusian parameter", report.regime),
    }
    let file = RegimeFile {
        config_hash: s.config_hash(),
        report,
    };
    write_json(&ctx.path(artifacts::REGIME), &file)?;
    Ok(file)
}

#[derive(Serialize)]
struct RunRecord {
    run_id: usize,
    #[serde(flatten)]
    stats: RunStats,
}

#[derive(Serialize)]
struct RunsFile {
    config_hash: String,
    runs: Vec<RunRecord>,
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let (cfg, runs) = ctx.scenario.sim_config()?;
    let d = cfg.walk.dimension();
    let results = ensemble_map(&cfg, runs, |i, seed| {
        let mut rows = String::new();
        let stats = run_observed(&cfg, seed, |view| {
            for p in view.positions() {
                let _ = write!(rows, "{i},{}", view.time);
                for c in p {
                    let _ = write!(rows, ",{c}");
                }
                rows.push('\n');
            }
        })
        .map(|(stats, _)| stats);
        (rows, stats)
    });
    let mut csv = String::from("run_id,time");
    for k in 1..=d {
        let _ = write!(csv, ",x_{k}");
    }
    csv.push('\n');
    let mut records = Vec::with_capacity(runs);
    for (run_id, (rows, stats)) in results.into_iter().enumerate() {
        csv.push_str(&rows);
        records.push(RunRecord { run_id, stats: stats? });
    }
    let truncated = records.iter().filter(|r| r.stats.truncated).count();
    let extinct = records.iter().filter(|r| r.stats.extinct).count();
    println!("{runs} runs: {extinct} extinct, {truncated} truncated");
    write_atomic(&ctx.path(artifacts::SNAPSHOTS), csv.as_bytes())?;
    write_json(
        &ctx.path(artifacts::RUNS),
        &RunsFile {
            config_hash: ctx.scenario.config_hash(),
            runs: records,
        },
    )?;
    ctx.manifest()
}

#[derive(Clone, Debug)]
pub struct FrontOutcome {
    pub report: ShellReport,
    /// Per direction target, the fraction of catalyst-visiting runs with a
    /// particle near it, per snapshot time.
    pub directional: Vec<Vec<f64>>,
}

fn front_shape(ctx: &Context) -> Result<(FrontShape, cbrw_core::JumpLaw), CliError> {
    let regime = read_regime(&ctx.out)?;
    if regime.config_hash != ctx.scenario.config_hash() {
        log::warn!("{} was produced from a different scenario", artifacts::REGIME);
    }
    let nu = match (regime.report.regime, regime.report.nu) {
        (Regime::Supercritical, Some(nu)) => nu,
        (r, _) => return Err(CliError::Config(format!("the front needs a supercritical regime, got {r:?}"))),
    };
    let law = ctx
        .scenario
        .jump_law()?
        .ok_or_else(|| CliError::Config("the front needs a semi_exponential jump law".into()))?;
    Ok((FrontShape::from_law(nu, &law)?, law))
}

fn export_surface(ctx: &Context, front: &FrontShape) -> Result<(), CliError> {
    let resolution = ctx.scenario.front.as_ref().map_or(64, |f| f.resolution);
    let points = front.sample_shape_surface(resolution)?;
    let mut buf = Vec::new();
    write_surface_csv(&points, front.dimension(), &mut buf).expect("write to memory");
    write_atomic(&ctx.path(artifacts::SURFACE), &buf)
}

pub fn shape_export(ctx: &Context) -> Result<(), CliError> {
    let (front, _) = front_shape(ctx)?;
    export_surface(ctx, &front)?;
    ctx.manifest()
}

pub fn front(ctx: &Context) -> Result<FrontOutcome, CliError> {
    let (front, law) = front_shape(ctx)?;
    law.check_calibrated()
        .map_err(|e| CliError::Config(format!("walk.law: {e}; run `cbrw calibrate` first")))?;
    let spec = ctx.scenario.front.clone().unwrap_or_default();
    let mut probe = FrontProbe::new(front.clone(), law)?;
    for (k, t) in spec.targets.iter().enumerate() {
        if t.axis >= front.dimension() {
            return Err(CliError::Config(format!("front.targets[{k}]: axis {} out of range", t.axis)));
        }
        let side = match t.side {
            Direction::Plus => Side::Plus,
            Direction::Minus => Side::Minus,
        };
        let mut y = vec![0.0; front.dimension()];
        y[t.axis] = side.sign() * front.nu().powf(1.0 / front.exponent(t.axis, side));
        probe = probe.with_target(y, t.radius)?;
    }
    let (cfg, runs) = ctx.scenario.sim_config()?;
    let records = ensemble_map(&cfg, runs, |_, seed| run_front(&cfg, seed, &probe))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let report = shell_containment(&records, &front, spec.epsilon_fraction * front.nu())?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).expect("write to memory");
    write_atomic(&ctx.path(artifacts::SHELL_REPORT), &buf)?;

    let directional = (0..spec.targets.len())
        .map(|k| directional_limit_check(&records, k))
        .collect::<Result<Vec<_>, _>>()?;
    if !directional.is_empty() {
        let mut csv = String::from("time");
        for k in 0..directional.len() {
            let _ = write!(csv, ",target_{k}");
        }
        csv.push('\n');
        for (i, t) in report.times.iter().enumerate() {
            let _ = write!(csv, "{t}");
            for series in &directional {
                let _ = write!(csv, ",{}", series[i]);
            }
            csv.push('\n');
        }
        write_atomic(&ctx.path(artifacts::DIRECTIONAL), csv.as_bytes())?;
    }
    if let (Some(last), Some(t)) = (report.frac_outside_o.last(), report.times.last()) {
        println!(
            "t = {t}: outside O {last}, beyond Q {} ({} runs, {} truncated)",
            report.frac_beyond_q.last().copied().unwrap_or(0.0),
            report.n_runs,
            report.n_truncated
        );
    }
    export_surface(ctx, &front)?;
    ctx.manifest()?;
    Ok(FrontOutcome { report, directional })
}

pub fn volterra(ctx: &Context) -> Result<VolterraSolution, CliError> {
    let cfg = ctx.scenario.volterra_config()?;
    let sol = volterra_hit_probability(&cfg, StreamSeed::new(ctx.scenario.seed).derive("volterra"))?;
    let mut buf = Vec::new();
    sol.write_csv(&mut buf).expect("write to memory");
    write_atomic(&ctx.path(artifacts::VOLTERRA), &buf)?;
    if let (Some(t), Some(e)) = (sol.grid.last(), sol.e.last()) {
        println!("E({t}) = {e}");
    }
    ctx.manifest()?;
    Ok(sol)
}
