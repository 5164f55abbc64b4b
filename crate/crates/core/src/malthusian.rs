//! The matrix `D(λ)`, its Perron root, regime classification and the
//! Malthusian parameter `ν` solving `ρ(D(λ)) = 1`.
//!
//! `d_ij(λ) = δ_ij α_i m_i G*_i(λ) + (1 − α_i) G*_i(λ) · E[e^{−λ τ̄_ij}]`, where
//! `G*_i(λ) = β_i / (β_i + λ)` and `τ̄_ij` is the hitting time of `w_j` after
//! leaving `w_i`, under taboo on the other catalysts. A path leaving `w_i`
//! contributes to exactly one entry of row `i`: the first catalyst it enters.
//! Each row is therefore estimated from one frozen batch of paths, which is
//! reused for every `λ` so that the estimated map `λ ↦ D(λ)` is monotone.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::jump_laws::Site;
use crate::seed::StreamSeed;
use crate::walk::{first_arrival, mean_and_stderr, WalkConfig};

/// Upper bound tolerated for `e^{−ν·horizon}` before the horizon is doubled.
pub const LAPLACE_BIAS_TOL: f64 = 1e-6;
/// Standard errors per side in Perron-root and `ν` intervals.
pub const INTERVAL_Z: f64 = 3.0;
/// Relative tolerance of the power iteration.
pub const PERRON_TOL: f64 = 1e-12;
const PERRON_MAX_ITER: usize = 200_000;
const MAX_HORIZON_DOUBLINGS: usize = 8;

/// Offspring law `ξ` on `{0, …, K}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    probs: Vec<f64>,
}

impl OffspringLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(invalid("offspring", "probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("offspring", format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn dirac(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self { probs }
    }

    /// Poisson(mean) truncated to `{0, …, max}` and renormalized.
    pub fn poisson(mean: f64, max: usize) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(invalid("offspring mean", format!("must be finite and >= 0, got {mean}")));
        }
        let mut p = (-mean).exp();
        let mut probs = Vec::with_capacity(max + 1);
        for k in 0..=max {
            probs.push(p);
            p *= mean / (k + 1) as f64;
        }
        let total: f64 = probs.iter().sum();
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    /// `P(ξ = k) ∝ (1 − p)^k p` truncated to `{0, …, max}`.
    pub fn geometric(p: f64, max: usize) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid("offspring p", format!("must lie in (0,1], got {p}")));
        }
        let probs: Vec<f64> = (0..=max).map(|k| (1.0 - p).powi(k as i32) * p).collect();
        let total: f64 = probs.iter().sum();
        Ok(Self {
            probs: probs.into_iter().map(|q| q / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Generating function `f(s) = E s^ξ`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.probs.len() - 1
    }
}

/// A catalyst `w_k` with sojourn rate `β_k`, branching probability `α_k`
/// and offspring law `ξ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalystSpec {
    pub position: Site,
    pub beta: f64,
    pub alpha: f64,
    pub offspring: OffspringLaw,
}

impl CatalystSpec {
    pub fn new(position: Site, beta: f64, alpha: f64, offspring: OffspringLaw) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid("alpha", format!("must lie in [0,1), got {alpha}")));
        }
        Ok(Self {
            position,
            beta,
            alpha,
            offspring,
        })
    }

    /// A site that never branches and is left at the walk's own rate; adding
    /// it to a system does not change `ν`.
    pub fn inert(position: Site, walk: &WalkConfig) -> Self {
        Self {
            position,
            beta: walk.effective_rate(),
            alpha: 0.0,
            offspring: OffspringLaw::dirac(0),
        }
    }

    pub fn offspring_mean(&self) -> f64 {
        self.offspring.mean()
    }

    /// `G*_k(λ) = β_k / (β_k + λ)`.
    pub fn sojourn_transform(&self, lambda: f64) -> f64 {
        self.beta / (self.beta + lambda)
    }
}

pub(crate) fn validate_catalysts(catalysts: &[CatalystSpec], walk: &WalkConfig) -> Result<()> {
    if catalysts.is_empty() {
        return Err(invalid("catalysts", "need at least one catalyst"));
    }
    for (i, c) in catalysts.iter().enumerate() {
        if c.position.len() != walk.dimension() {
            return Err(invalid("catalysts", format!("catalyst {i} has the wrong dimension")));
        }
        if catalysts[..i].iter().any(|o| o.position == c.position) {
            return Err(invalid("catalysts", format!("catalyst {i} duplicates an earlier position")));
        }
    }
    Ok(())
}

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix", "rows must form a non-empty square"));
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.n).map(|j| self.get(i, j) * v[j]).sum();
        }
    }

    fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Whether the directed graph of positive entries is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let reach_all = |m: &SquareMatrix| {
            let mut seen = vec![false; m.n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..m.n {
                    if m.get(i, j) > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach_all(self) && reach_all(&self.transpose())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerronResult {
    pub root: f64,
    /// Right eigenvector, `‖v‖₁ = 1`.
    pub right: Vec<f64>,
    /// Left eigenvector, `‖u‖₁ = 1`.
    pub left: Vec<f64>,
    pub iterations: usize,
}

impl PerronResult {
    /// First-order bound on `|Δρ|` for an entrywise perturbation of size
    /// `delta`: `uᵀ Δ v / uᵀ v`.
    pub fn perturbation(&self, delta: &SquareMatrix) -> f64 {
        let n = self.right.len();
        let mut num = 0.0;
        for i in 0..n {
            for j in 0..n {
                num += self.left[i] * delta.get(i, j).abs() * self.right[j];
            }
        }
        let den: f64 = self.left.iter().zip(&self.right).map(|(a, b)| a * b).sum();
        if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    }
}

/// Spectral radius of a non-negative matrix by shifted power iteration on
/// `M + I` (the shift makes periodic irreducible matrices primitive).
pub fn perron_root(m: &SquareMatrix) -> Result<PerronResult> {
    if m.data.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(invalid("matrix", "entries must be finite and non-negative"));
    }
    let (root, right, it_r) = power_iterate(m)?;
    let (_, left, it_l) = power_iterate(&m.transpose())?;
    Ok(PerronResult {
        root,
        right,
        left,
        iterations: it_r.max(it_l),
    })
}

fn power_iterate(m: &SquareMatrix) -> Result<(f64, Vec<f64>, usize)> {
    let n = m.n;
    let shift = 1.0;
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    for it in 1..=PERRON_MAX_ITER {
        m.mul_vec(&v, &mut w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        let norm: f64 = w.iter().sum();
        // Collatz–Wielandt bounds on the shifted root.
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        let mut positive = true;
        for (wi, vi) in w.iter().zip(&v) {
            if *vi > 1e-200 {
                let r = wi / vi;
                lo = lo.min(r);
                hi = hi.max(r);
            } else {
                positive = false;
            }
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if positive && hi - lo <= PERRON_TOL * 1e-2 * hi {
            return Ok((0.5 * (lo + hi) - shift, v, it));
        }
        if it > 10 && (norm - prev).abs() <= 1e-15 * norm {
            return Ok((norm - shift, v, it));
        }
        prev = norm;
    }
    Err(Error::NonConvergence {
        iterations: PERRON_MAX_ITER,
    })
}

/// Monte Carlo budget for taboo transforms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub n_paths: usize,
    /// Initial censoring horizon (time units after exit).
    pub horizon: f64,
}

impl McBudget {
    pub fn new(n_paths: usize, horizon: f64) -> Self {
        Self { n_paths, horizon }
    }

    /// Budget for systems whose transforms are all known in closed form.
    pub fn closed_form() -> Self {
        Self {
            n_paths: 0,
            horizon: 50.0,
        }
    }
}

/// Frozen exits out of one catalyst.
#[derive(Clone, Debug, PartialEq)]
enum RowBatch {
    /// No other catalyst, nor a return, is reachable: the taboo part is 0.
    Unreachable,
    /// Per path: index of the first catalyst entered and the time since exit.
    Sampled(Vec<Option<(usize, f64)>>),
}

/// `D(λ)` with entrywise standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct DMatrix {
    pub lambda: f64,
    pub entries: SquareMatrix,
    pub stderr: SquareMatrix,
    /// Per row, fraction of exit paths still running at the horizon.
    pub censored: Vec<f64>,
}

impl DMatrix {
    pub fn size(&self) -> usize {
        self.entries.size()
    }

    pub fn is_irreducible(&self) -> bool {
        self.entries.is_irreducible()
    }

    /// `D + z·SE` entrywise, clamped at zero.
    pub fn shifted(&self, z: f64) -> SquareMatrix {
        let n = self.size();
        let mut m = self.entries.clone();
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, (self.entries.get(i, j) + z * self.stderr.get(i, j)).max(0.0));
            }
        }
        m
    }
}

/// Catalysts, walk, and frozen exit batches: everything needed to evaluate
/// `D(λ)` for any `λ` without further sampling.
#[derive(Clone, Debug)]
pub struct MalthusianSystem {
    catalysts: Vec<CatalystSpec>,
    rows: Vec<RowBatch>,
    horizon: f64,
    n_paths: usize,
}

impl MalthusianSystem {
    pub fn build(catalysts: &[CatalystSpec], walk: &WalkConfig, budget: McBudget, seed: StreamSeed) -> Result<Self> {
        validate_catalysts(catalysts, walk)?;
        if !(budget.horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive, got {}", budget.horizon)));
        }
        let positions: Vec<Site> = catalysts.iter().map(|c| c.position.clone()).collect();
        let monotone = walk.law().monotone_axis();
        let rows = positions
            .iter()
            .enumerate()
            .map(|(i, from)| {
                let reachable = match monotone {
                    None => true,
                    Some((axis, side)) => positions
                        .iter()
                        .any(|to| side.sign() * (to[axis] - from[axis]) as f64 > 0.0),
                };
                if !reachable {
                    return Ok(RowBatch::Unreachable);
                }
                if budget.n_paths == 0 {
                    return Err(Error::BudgetRequired(format!(
                        "catalyst {i} can reach a catalyst after leaving, so its taboo transforms need Monte Carlo paths"
                    )));
                }
                let stream = seed.derive("d-matrix-row").child(i as u64);
                let arrivals = (0..budget.n_paths)
                    .into_par_iter()
                    .map(|p| {
                        let mut rng = stream.path_rng(p as u64);
                        first_arrival(walk, from, &positions, budget.horizon, &mut rng).first
                    })
                    .collect();
                Ok(RowBatch::Sampled(arrivals))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            catalysts: catalysts.to_vec(),
            rows,
            horizon: budget.horizon,
            n_paths: budget.n_paths,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Whether any entry is a Monte Carlo estimate.
    pub fn is_stochastic(&self) -> bool {
        self.rows.iter().any(|r| matches!(r, RowBatch::Sampled(_)))
    }

    pub fn d_matrix(&self, lambda: f64) -> DMatrix {
        let n = self.catalysts.len();
        let mut entries = SquareMatrix::zeros(n);
        let mut stderr = SquareMatrix::zeros(n);
        let mut censored = vec![0.0; n];
        for (i, (c, row)) in self.catalysts.iter().zip(&self.rows).enumerate() {
            let g = c.sojourn_transform(lambda);
            let branch = c.alpha * c.offspring_mean() * g;
            let leave = (1.0 - c.alpha) * g;
            entries.set(i, i, branch);
            if let RowBatch::Sampled(arrivals) = row {
                let total = arrivals.len();
                let mut sums = vec![(0.0, 0.0); n];
                let mut running = 0usize;
                for a in arrivals {
                    match a {
                        Some((j, t)) => {
                            let v = (-lambda * t).exp();
                            sums[*j].0 += v;
                            sums[*j].1 += v * v;
                        }
                        None => running += 1,
                    }
                }
                for (j, (s, s2)) in sums.into_iter().enumerate() {
                    let (m, se) = mean_and_stderr(s, s2, total);
                    entries.set(i, j, entries.get(i, j) + leave * m);
                    stderr.set(i, j, leave * se);
                }
                censored[i] = running as f64 / total as f64;
            }
        }
        DMatrix {
            lambda,
            entries,
            stderr,
            censored,
        }
    }

    fn rho(&self, lambda: f64, z: f64) -> Result<f64> {
        let d = self.d_matrix(lambda);
        let m = if z == 0.0 { d.entries } else { d.shifted(z) };
        Ok(perron_root(&m)?.root)
    }

    /// Perron root of `D(0)` with a conservative interval.
    pub fn classify(&self, seed: u64) -> Result<RegimeReport> {
        let d0 = self.d_matrix(0.0);
        let perron = perron_root(&d0.entries)?;
        let mc = INTERVAL_Z * perron.perturbation(&d0.stderr);
        // Censored paths could still reach a catalyst: at λ = 0 each adds at
        // most (1 − α_i) to its row.
        let n = d0.size();
        let mut censor = SquareMatrix::zeros(n);
        for (i, c) in self.catalysts.iter().enumerate() {
            for j in 0..n {
                censor.set(i, j, (1.0 - c.alpha) * d0.censored[i]);
            }
        }
        let censor_bias = if d0.censored.iter().any(|&c| c > 0.0) {
            perron.perturbation(&censor)
        } else {
            0.0
        };
        let lower = perron.root - mc;
        let upper = perron.root + mc + censor_bias;
        let regime = if lower > 1.0 {
            Regime::Supercritical
        } else if upper < 1.0 {
            Regime::Subcritical
        } else if (perron.root - 1.0).abs() <= 1e-12 && mc == 0.0 && censor_bias == 0.0 {
            Regime::Critical
        } else {
            return Err(Error::Inconclusive {
                estimate: perron.root,
                lower,
                upper,
            });
        };
        Ok(RegimeReport {
            regime,
            perron_at_zero: perron.root,
            perron_interval: (lower, upper),
            nu: None,
            nu_ci: None,
            mc_budget: self.n_paths,
            horizon: self.horizon,
            censored_fraction: d0.censored.iter().copied().fold(0.0, f64::max),
            seed,
        })
    }

    /// Root of `λ ↦ ρ(D(λ) + z·SE(λ)) − 1` by bisection; `0` if the shifted
    /// root is already `≤ 1` at `λ = 0`.
    pub fn solve_nu(&self, z: f64) -> Result<f64> {
        if self.rho(0.0, z)? <= 1.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        let mut doublings = 0;
        while self.rho(hi, z)? >= 1.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > 80 {
                return Err(Error::NonConvergence { iterations: doublings });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.rho(mid, z)? > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Supercritical,
    Critical,
    Subcritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub perron_at_zero: f64,
    pub perron_interval: (f64, f64),
    pub nu: Option<f64>,
    pub nu_ci: Option<(f64, f64)>,
    pub mc_budget: usize,
    pub horizon: f64,
    pub censored_fraction: f64,
    pub seed: u64,
}

/// `D(λ)` estimated with a fresh batch of `budget.n_paths` exits per row.
pub fn build_d(
    catalysts: &[CatalystSpec],
    walk: &WalkConfig,
    lambda: f64,
    budget: McBudget,
    seed: StreamSeed,
) -> Result<DMatrix> {
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", format!("must be non-negative, got {lambda}")));
    }
    let sys = MalthusianSystem::build(catalysts, walk, budget, seed)?;
    let d = sys.d_matrix(lambda);
    if sys.is_stochastic() && lambda > 0.0 {
        let bound = (-lambda * budget.horizon).exp();
        if bound > LAPLACE_BIAS_TOL {
            return Err(Error::BiasDominated {
                bound,
                tolerance: LAPLACE_BIAS_TOL,
            });
        }
    }
    Ok(d)
}

pub fn classify_regime(catalysts: &[CatalystSpec], walk: &WalkConfig, budget: McBudget, seed: StreamSeed) -> Result<RegimeReport> {
    MalthusianSystem::build(catalysts, walk, budget, seed)?.classify(seed.value())
}

/// Solve `ρ(D(ν)) = 1`. The horizon starts at `budget.horizon` and doubles
/// (with fresh paths) until `e^{−ν·horizon} < LAPLACE_BIAS_TOL`.
pub fn solve_malthusian(catalysts: &[CatalystSpec], walk: &WalkConfig, budget: McBudget, seed: StreamSeed) -> Result<RegimeReport> {
    let mut horizon = budget.horizon;
    for _ in 0..=MAX_HORIZON_DOUBLINGS {
        let sys = MalthusianSystem::build(catalysts, walk, McBudget::new(budget.n_paths, horizon), seed)?;
        let mut report = sys.classify(seed.value())?;
        if report.regime != Regime::Supercritical {
            return Err(Error::NotSupercritical {
                perron_at_zero: report.perron_at_zero,
            });
        }
        let nu = sys.solve_nu(0.0)?;
        if sys.is_stochastic() && (-nu * horizon).exp() > LAPLACE_BIAS_TOL {
            log::debug!("horizon {horizon} too short for nu = {nu}; doubling");
            horizon *= 2.0;
            continue;
        }
        report.nu = Some(nu);
        report.nu_ci = Some(if sys.is_stochastic() {
            (sys.solve_nu(-INTERVAL_Z)?, sys.solve_nu(INTERVAL_Z)?)
        } else {
            (nu, nu)
        });
        return Ok(report);
    }
    Err(Error::BiasDominated {
        bound: LAPLACE_BIAS_TOL,
        tolerance: LAPLACE_BIAS_TOL,
    })
}
