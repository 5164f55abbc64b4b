//! The continuous-time lattice walk `S(t) = x + Σ_{i ≤ Π(t)} Y^i` and
//! Monte Carlo estimators for its taboo hitting times.
//!
//! Clock ticks arrive at rate `q`. A tick whose jump is the zero vector does
//! not move the walk, so the walk leaves a site at the effective rate
//! `q · P(Y ≠ 0)` and then jumps by the non-zero conditional law. Hitting
//! estimators simulate that embedded jump chain directly.
//!
//! Taboo semantics: after the first exit from `x`, the walk is absorbed if it
//! enters the taboo set `T` before reaching `y`. The taboo is only checked
//! after the exit, so `x ∈ T` is allowed.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::jump_laws::{Site, StepLaw};
use crate::seed::StreamSeed;

#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    rate_q: f64,
    law: StepLaw,
}

impl WalkConfig {
    pub fn new(rate_q: f64, law: impl Into<StepLaw>) -> Result<Self> {
        if !(rate_q > 0.0 && rate_q.is_finite()) {
            return Err(invalid("rate_q", format!("must be positive and finite, got {rate_q}")));
        }
        let law = law.into();
        if law.prob_zero() >= 1.0 {
            return Err(invalid("law", "jump law never moves the walk"));
        }
        Ok(Self { rate_q, law })
    }

    pub fn rate_q(&self) -> f64 {
        self.rate_q
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    pub fn dimension(&self) -> usize {
        self.law.dimension()
    }

    /// `q · P(Y ≠ 0)`: the rate at which the walk leaves its current site.
    pub fn effective_rate(&self) -> f64 {
        self.rate_q * (1.0 - self.law.prob_zero())
    }

    pub(crate) fn exit_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        exponential(self.effective_rate(), rng)
    }

    /// Move `pos` by one non-zero jump.
    pub(crate) fn step<R: Rng + ?Sized>(&self, rng: &mut R, pos: &mut [i64], scratch: &mut [i64]) {
        self.law.sample_nonzero_into(rng, scratch);
        for (p, j) in pos.iter_mut().zip(scratch.iter()) {
            *p += j;
        }
    }

    fn check_site(&self, name: &'static str, s: &[i64]) -> Result<()> {
        if s.len() == self.dimension() {
            Ok(())
        } else {
            Err(invalid(name, format!("expected dimension {}, got {}", self.dimension(), s.len())))
        }
    }
}

pub(crate) fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

/// A right-continuous piecewise-constant trajectory. `positions[k]` holds
/// on `[tick_times[k-1], tick_times[k])`, with `tick_times[-1] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub tick_times: Vec<f64>,
    pub positions: Vec<Site>,
    pub t_end: f64,
}

impl WalkPath {
    pub fn start(&self) -> &Site {
        &self.positions[0]
    }

    pub fn ticks(&self) -> usize {
        self.tick_times.len()
    }

    pub fn position_at(&self, t: f64) -> &Site {
        let k = self.tick_times.partition_point(|&s| s <= t);
        &self.positions[k]
    }

    pub fn end_position(&self) -> &Site {
        self.positions.last().expect("path has a start")
    }
}

/// Simulate every clock tick (including zero jumps) on `[0, t_end]`.
pub fn simulate_walk<R: Rng + ?Sized>(cfg: &WalkConfig, start: &[i64], t_end: f64, rng: &mut R) -> Result<WalkPath> {
    cfg.check_site("start", start)?;
    if !(t_end >= 0.0) {
        return Err(invalid("t_end", format!("must be non-negative, got {t_end}")));
    }
    let mut path = WalkPath {
        tick_times: Vec::new(),
        positions: vec![start.to_vec()],
        t_end,
    };
    let mut t = 0.0;
    let mut jump = vec![0; cfg.dimension()];
    loop {
        t += exponential(cfg.rate_q, rng);
        if t > t_end {
            return Ok(path);
        }
        cfg.law.sample_into(rng, &mut jump);
        let next: Site = path.end_position().iter().zip(&jump).map(|(p, j)| p + j).collect();
        path.tick_times.push(t);
        path.positions.push(next);
    }
}

/// Result of one taboo hitting-time simulation.
///
/// `time` is measured from the exit moment `exit_time`; it is meaningful only
/// when `hit` is true. When not hit, `censored_at` is the (since-exit) time
/// at which the path was absorbed in the taboo set, or the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingOutcome {
    pub exit_time: f64,
    pub hit: bool,
    pub time: f64,
    pub censored_at: f64,
    pub absorbed: bool,
}

impl HittingOutcome {
    /// Hitting time counted from 0 rather than from the exit.
    pub fn total_time(&self) -> f64 {
        self.exit_time + self.time
    }

    pub fn time_on(&self, clock: Clock) -> f64 {
        match clock {
            Clock::SinceExit => self.time,
            Clock::SinceStart => self.total_time(),
        }
    }
}

/// Which origin hitting times are measured from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clock {
    /// `_Tτ̄_{x,y}`: from the first exit out of `x`.
    SinceExit,
    /// `_Tτ_{x,y} = τ_x + _Tτ̄_{x,y}`.
    SinceStart,
}

/// First arrival of the post-exit walk in a finite set of sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Arrival {
    pub exit_time: f64,
    /// Index into the target list and since-exit time of the arrival.
    pub first: Option<(usize, f64)>,
}

/// Simulate from `start`: exit, then jump until one of `targets` is entered
/// or `horizon` (since exit) passes.
pub(crate) fn first_arrival<R: Rng + ?Sized>(
    cfg: &WalkConfig,
    start: &[i64],
    targets: &[Site],
    horizon: f64,
    rng: &mut R,
) -> Arrival {
    let mut pos = start.to_vec();
    let mut scratch = vec![0; pos.len()];
    let exit_time = cfg.exit_delay(rng);
    let mut elapsed = 0.0;
    cfg.step(rng, &mut pos, &mut scratch);
    loop {
        if let Some(k) = targets.iter().position(|t| *t == pos) {
            return Arrival {
                exit_time,
                first: Some((k, elapsed)),
            };
        }
        elapsed += cfg.exit_delay(rng);
        if elapsed > horizon {
            return Arrival { exit_time, first: None };
        }
        cfg.step(rng, &mut pos, &mut scratch);
    }
}

/// One draw of `_Tτ̄_{x,y}` (and `τ_x`), censored at `horizon` after exit.
pub fn hitting_time_taboo<R: Rng + ?Sized>(
    cfg: &WalkConfig,
    start: &[i64],
    target: &[i64],
    taboo: &[Site],
    horizon: f64,
    rng: &mut R,
) -> Result<HittingOutcome> {
    let targets = hitting_targets(cfg, start, target, taboo, horizon)?;
    Ok(outcome_from(first_arrival(cfg, start, &targets, horizon, rng), horizon))
}

fn hitting_targets(cfg: &WalkConfig, start: &[i64], target: &[i64], taboo: &[Site], horizon: f64) -> Result<Vec<Site>> {
    cfg.check_site("start", start)?;
    cfg.check_site("target", target)?;
    for t in taboo {
        cfg.check_site("taboo", t)?;
    }
    if taboo.iter().any(|t| t.as_slice() == target) {
        return Err(invalid("taboo", "target must not lie in the taboo set"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let mut targets = Vec::with_capacity(taboo.len() + 1);
    targets.push(target.to_vec());
    targets.extend(taboo.iter().cloned());
    Ok(targets)
}

fn outcome_from(a: Arrival, horizon: f64) -> HittingOutcome {
    match a.first {
        Some((0, t)) => HittingOutcome {
            exit_time: a.exit_time,
            hit: true,
            time: t,
            censored_at: horizon,
            absorbed: false,
        },
        Some((_, t)) => HittingOutcome {
            exit_time: a.exit_time,
            hit: false,
            time: f64::INFINITY,
            censored_at: t,
            absorbed: true,
        },
        None => HittingOutcome {
            exit_time: a.exit_time,
            hit: false,
            time: f64::INFINITY,
            censored_at: horizon,
            absorbed: false,
        },
    }
}

/// A frozen batch of hitting outcomes. Estimators evaluated on the same
/// batch share their random numbers, so e.g. the Laplace transform is exactly
/// monotone in `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabooBatch {
    pub horizon: f64,
    pub outcomes: Vec<HittingOutcome>,
}

/// Monte Carlo Laplace-transform estimate `E[e^{−λτ} 1{hit}]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceEstimate {
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// `e^{−λ·horizon}`: the most a censored path could have contributed.
    pub bias_bound: f64,
    /// Fraction of paths still running at the horizon.
    pub censored_fraction: f64,
    pub n_paths: usize,
}

impl LaplaceEstimate {
    pub fn check_bias(&self, tolerance: f64) -> Result<()> {
        if self.bias_bound > tolerance {
            Err(Error::BiasDominated {
                bound: self.bias_bound,
                tolerance,
            })
        } else {
            Ok(())
        }
    }
}

impl TabooBatch {
    /// Simulate `n_paths` outcomes; path `i` uses `seed.path_rng(i)`.
    pub fn simulate(
        cfg: &WalkConfig,
        start: &[i64],
        target: &[i64],
        taboo: &[Site],
        horizon: f64,
        n_paths: usize,
        seed: StreamSeed,
    ) -> Result<Self> {
        let targets = hitting_targets(cfg, start, target, taboo, horizon)?;
        let outcomes = (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.path_rng(i as u64);
                outcome_from(first_arrival(cfg, start, &targets, horizon, &mut rng), horizon)
            })
            .collect();
        Ok(Self { horizon, outcomes })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn hit_fraction(&self) -> f64 {
        self.hit_fraction_within(f64::INFINITY)
    }

    /// Fraction of paths that hit within `t` after exit.
    pub fn hit_fraction_within(&self, t: f64) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        let n = self.outcomes.iter().filter(|o| o.hit && o.time <= t).count();
        n as f64 / self.outcomes.len() as f64
    }

    /// Paths neither hit nor absorbed by the horizon.
    pub fn censored_fraction(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        let n = self.outcomes.iter().filter(|o| !o.hit && !o.absorbed).count();
        n as f64 / self.outcomes.len() as f64
    }

    pub fn laplace(&self, lambda: f64, clock: Clock) -> LaplaceEstimate {
        let n = self.outcomes.len();
        let (mut s, mut s2) = (0.0, 0.0);
        for o in self.outcomes.iter().filter(|o| o.hit) {
            let v = (-lambda * o.time_on(clock)).exp();
            s += v;
            s2 += v * v;
        }
        let (estimate, std_error) = mean_and_stderr(s, s2, n);
        LaplaceEstimate {
            lambda,
            estimate,
            std_error,
            bias_bound: (-lambda * self.horizon).exp(),
            censored_fraction: self.censored_fraction(),
            n_paths: n,
        }
    }

    pub fn empirical_cdf(&self, grid: &[f64], clock: Clock) -> Result<EmpiricalCdf> {
        let mut times: Vec<f64> = self
            .outcomes
            .iter()
            .filter(|o| o.hit)
            .map(|o| o.time_on(clock))
            .collect();
        times.sort_by(f64::total_cmp);
        EmpiricalCdf::from_sorted_hits(&times, self.outcomes.len(), grid)
    }
}

pub(crate) fn mean_and_stderr(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Improper empirical c.d.f. of a hitting time on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Binomial standard error at each grid point.
    pub stderr: Vec<f64>,
    /// Fraction of paths that did not hit (never or not by the horizon).
    pub mass_at_infinity: f64,
    pub n_samples: usize,
}

impl EmpiricalCdf {
    fn from_sorted_hits(times: &[f64], n_samples: usize, grid: &[f64]) -> Result<Self> {
        if n_samples == 0 {
            return Err(invalid("n_paths", "need at least one path"));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("grid", "grid must be strictly increasing"));
        }
        let n = n_samples as f64;
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| times.partition_point(|&s| s <= t) as f64 / n)
            .collect();
        let stderr = values.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
        Ok(Self {
            grid: grid.to_vec(),
            values,
            stderr,
            mass_at_infinity: (n_samples - times.len()) as f64 / n,
            n_samples,
        })
    }

    /// CSV with header `t,value,stderr,mass_at_infinity`; the last column
    /// repeats the constant on every row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value,stderr,mass_at_infinity")?;
        for ((t, v), e) in self.grid.iter().zip(&self.values).zip(&self.stderr) {
            writeln!(w, "{t},{v},{e},{}", self.mass_at_infinity)?;
        }
        Ok(())
    }
}

/// Empirical improper c.d.f. of `_Tτ̄_{x,y}` on `grid`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_hitting_cdf(
    cfg: &WalkConfig,
    start: &[i64],
    target: &[i64],
    taboo: &[Site],
    horizon: f64,
    n_paths: usize,
    grid: &[f64],
    seed: StreamSeed,
) -> Result<EmpiricalCdf> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    TabooBatch::simulate(cfg, start, target, taboo, horizon, n_paths, seed)?.empirical_cdf(grid, Clock::SinceExit)
}

/// Estimate `E[e^{−λ·_Tτ_{x,y}}]` (clock chosen by `clock`). If
/// `bias_tolerance` is given, fails when `e^{−λ·horizon}` exceeds it.
#[allow(clippy::too_many_arguments)]
pub fn laplace_taboo_mc(
    cfg: &WalkConfig,
    start: &[i64],
    target: &[i64],
    taboo: &[Site],
    lambda: f64,
    clock: Clock,
    n_paths: usize,
    horizon: f64,
    bias_tolerance: Option<f64>,
    seed: StreamSeed,
) -> Result<LaplaceEstimate> {
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", format!("must be non-negative, got {lambda}")));
    }
    if n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    if let Some(tol) = bias_tolerance {
        let bound = (-lambda * horizon).exp();
        if bound > tol {
            return Err(Error::BiasDominated { bound, tolerance: tol });
        }
    }
    let batch = TabooBatch::simulate(cfg, start, target, taboo, horizon, n_paths, seed)?;
    Ok(batch.laplace(lambda, clock))
}

/// Escape probability `1 − F̄_{0,0}(∞)` with a horizon-doubling report.
#[derive(Clone, Debug, PartialEq)]
pub struct EscapeReport {
    pub estimate: f64,
    pub std_error: f64,
    /// `(horizon, estimate)` at `horizon / 2^k`, ascending; the estimate is
    /// non-increasing along this list because the same paths are reused.
    pub by_horizon: Vec<(f64, f64)>,
}

/// `1 − (return frequency within horizon)`; biased upwards by censoring.
pub fn escape_probability(
    cfg: &WalkConfig,
    n_paths: usize,
    horizon: f64,
    doublings: usize,
    seed: StreamSeed,
) -> Result<EscapeReport> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    let origin = vec![0; cfg.dimension()];
    let batch = TabooBatch::simulate(cfg, &origin, &origin, &[], horizon, n_paths, seed)?;
    let by_horizon = (0..=doublings)
        .rev()
        .map(|k| {
            let h = horizon / f64::powi(2.0, k as i32);
            (h, 1.0 - batch.hit_fraction_within(h))
        })
        .collect();
    let p = 1.0 - batch.hit_fraction();
    Ok(EscapeReport {
        estimate: p,
        std_error: (p * (1.0 - p) / n_paths as f64).sqrt(),
        by_horizon,
    })
}
