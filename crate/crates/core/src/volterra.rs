//! Renewal equation for `E(t; U) = P_0(∃ v ∈ N(t) : X^v(t) ∈ U)` with a
//! single catalyst at the origin and a fixed target set `U ∌ 0`:
//!
//! ```text
//! E(t) = α ∫ (1 − f(1 − E(t−s))) dG_1(s) + (1 − α) ∫ E(t−s) dG_{1,1}(s) + I(t)
//! ```
//!
//! with `G_1(t) = 1 − e^{−βt}`, `G_{1,1} = G_1 ∗ F̄_{0,0}` and
//!
//! ```text
//! q I(t) / ((1−α)β) = A(t) − ((β − q)/β) ∫ A(t−s) dG_1(s),
//! A(t) = P_0(S(t) ∈ U) − ∫ P_0(S(t−s) ∈ U) dF_{0,0}(s),
//! ```
//!
//! where `q` is the walk's exit rate and `F_{0,0} = G_0 ∗ F̄_{0,0}` is the
//! c.d.f. of the first return time counted from the start.
//!
//! `P_0(S(t) ∈ U)` and the return time `τ̄_{0,0}` come from one batch of walk
//! paths. `F_{0,0}(t) = E G_0(t − τ̄)` and `G_{1,1}(t) = E G_1(t − τ̄)` are
//! evaluated with the exponential factor integrated out. Every Stieltjes
//! integral uses the trapezoid rule on a uniform grid; the implicit term at
//! each step is solved by fixed-point iteration. Error bands are jackknife
//! over `JACKKNIFE_GROUPS` path groups.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::jump_laws::Site;
use crate::malthusian::CatalystSpec;
use crate::seed::StreamSeed;
use crate::walk::WalkConfig;

pub const JACKKNIFE_GROUPS: usize = 10;
/// Standard errors allowed between the `h` and `h/2` solutions.
pub const REFINEMENT_Z: f64 = 3.0;
/// Absolute slack in the refinement check, for points where the band is 0.
pub const REFINEMENT_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisBound {
    Any,
    AtLeast(i64),
    AtMost(i64),
}

impl AxisBound {
    fn admits(self, x: i64) -> bool {
        match self {
            AxisBound::Any => true,
            AxisBound::AtLeast(a) => x >= a,
            AxisBound::AtMost(a) => x <= a,
        }
    }
}

/// A lattice box `{x : x_i satisfies bound_i}` not containing the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub bounds: Vec<AxisBound>,
}

impl TargetSet {
    pub fn new(bounds: Vec<AxisBound>) -> Result<Self> {
        let s = Self { bounds };
        if s.contains(&vec![0; s.bounds.len()]) {
            return Err(invalid("target", "the origin must not belong to the target set"));
        }
        Ok(s)
    }

    /// `{x : x_1 ≥ a}` in one dimension.
    pub fn half_line(a: i64) -> Result<Self> {
        Self::new(vec![AxisBound::AtLeast(a)])
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.bounds.iter().zip(x).all(|(b, &c)| b.admits(c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolterraConfig {
    pub walk: WalkConfig,
    pub catalyst: CatalystSpec,
    pub target: TargetSet,
    pub t_max: f64,
    /// Intervals of the coarse grid; the refinement check uses twice as many.
    pub steps: usize,
    pub n_paths: usize,
}

impl VolterraConfig {
    fn validate(&self) -> Result<()> {
        let d = self.walk.dimension();
        if self.catalyst.position != vec![0; d] {
            return Err(invalid("catalyst", "must sit at the origin"));
        }
        if self.target.bounds.len() != d {
            return Err(invalid("target", "dimension does not match the walk"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid("t_max", format!("must be positive, got {}", self.t_max)));
        }
        if self.steps < 1 {
            return Err(invalid("steps", "need at least one interval"));
        }
        if self.n_paths < 2 * JACKKNIFE_GROUPS {
            return Err(invalid("n_paths", format!("need at least {} paths", 2 * JACKKNIFE_GROUPS)));
        }
        Ok(())
    }
}

/// Ingredient sums on the fine grid (`2·steps` intervals).
#[derive(Clone, Debug, Default)]
struct Sums {
    n: usize,
    in_target: Vec<f64>,
    f00: Vec<f64>,
    g11: Vec<f64>,
}

impl Sums {
    fn zeros(len: usize) -> Self {
        Self {
            n: 0,
            in_target: vec![0.0; len],
            f00: vec![0.0; len],
            g11: vec![0.0; len],
        }
    }

    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        for (a, b) in [
            (&mut self.in_target, &o.in_target),
            (&mut self.f00, &o.f00),
            (&mut self.g11, &o.g11),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn sub(&self, o: &Sums) -> Sums {
        let diff = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Sums {
            n: self.n - o.n,
            in_target: diff(&self.in_target, &o.in_target),
            f00: diff(&self.f00, &o.f00),
            g11: diff(&self.g11, &o.g11),
        }
    }

    /// Means on every `stride`-th fine grid point.
    fn ingredients(&self, stride: usize) -> Ingredients {
        let pick = |v: &Vec<f64>| v.iter().step_by(stride).map(|x| x / self.n as f64).collect();
        Ingredients {
            p: pick(&self.in_target),
            f00: pick(&self.f00),
            g11: pick(&self.g11),
        }
    }
}

struct Ingredients {
    p: Vec<f64>,
    f00: Vec<f64>,
    g11: Vec<f64>,
}

fn simulate_group(cfg: &VolterraConfig, fine: &[f64], group: usize, seed: StreamSeed) -> Sums {
    let d = cfg.walk.dimension();
    let q = cfg.walk.effective_rate();
    let beta = cfg.catalyst.beta;
    let origin: Site = vec![0; d];
    let mut sums = Sums::zeros(fine.len());
    let mut pos = vec![0i64; d];
    let mut scratch = vec![0i64; d];
    for path in (group..cfg.n_paths).step_by(JACKKNIFE_GROUPS) {
        let mut rng = seed.path_rng(path as u64);
        pos.iter_mut().for_each(|c| *c = 0);
        let mut t = 0.0;
        let mut exit = None;
        let mut returned = None;
        let mut j = 0;
        loop {
            let next = t + cfg.walk.exit_delay(&mut rng);
            let inside = cfg.target.contains(&pos);
            while j < fine.len() && fine[j] < next {
                if inside {
                    sums.in_target[j] += 1.0;
                }
                j += 1;
            }
            if j == fine.len() {
                break;
            }
            t = next;
            exit.get_or_insert(t);
            cfg.walk.step(&mut rng, &mut pos, &mut scratch);
            if returned.is_none() && pos == origin {
                returned = Some(t - exit.unwrap());
            }
        }
        if let Some(tau) = returned {
            for (k, &tk) in fine.iter().enumerate() {
                if tk > tau {
                    let u = tk - tau;
                    sums.f00[k] += 1.0 - (-q * u).exp();
                    sums.g11[k] += 1.0 - (-beta * u).exp();
                }
            }
        }
        sums.n += 1;
    }
    sums
}

/// March the equation forward on a grid of step `h`.
fn march(cfg: &VolterraConfig, h: f64, ing: &Ingredients) -> Vec<f64> {
    let n = ing.p.len();
    let c = &cfg.catalyst;
    let (alpha, beta) = (c.alpha, c.beta);
    let q = cfg.walk.effective_rate();
    let g1: Vec<f64> = (0..n).map(|k| 1.0 - (-beta * k as f64 * h).exp()).collect();
    let incr = |g: &[f64]| -> Vec<f64> { (0..n).map(|k| if k == 0 { 0.0 } else { g[k] - g[k - 1] }).collect() };
    let dg1 = incr(&g1);
    let df00 = incr(&ing.f00);
    let dg11 = incr(&ing.g11);
    // ∫_0^{t_m} φ(t_m − s) dG(s) with φ known on 0..=m.
    let stieltjes = |phi: &[f64], dg: &[f64], m: usize| -> f64 {
        (1..=m).map(|k| 0.5 * (phi[m - k] + phi[m - k + 1]) * dg[k]).sum()
    };
    let a: Vec<f64> = (0..n).map(|m| ing.p[m] - stieltjes(&ing.p, &df00, m)).collect();
    let scale = (1.0 - alpha) * beta / q;
    let i_term: Vec<f64> = (0..n)
        .map(|m| scale * (a[m] - (beta - q) / beta * stieltjes(&a, &dg1, m)))
        .collect();

    let mut e = vec![0.0; n];
    let mut branch = vec![0.0; n];
    for m in 1..n {
        // Everything except the k = 1 half-weight on the unknown E_m.
        let mut explicit = i_term[m];
        explicit += 0.5 * alpha * branch[m - 1] * dg1[1] + 0.5 * (1.0 - alpha) * e[m - 1] * dg11[1];
        for k in 2..=m {
            explicit += alpha * 0.5 * (branch[m - k] + branch[m - k + 1]) * dg1[k];
            explicit += (1.0 - alpha) * 0.5 * (e[m - k] + e[m - k + 1]) * dg11[k];
        }
        let mut x = e[m - 1];
        for _ in 0..200 {
            let next = explicit + 0.5 * alpha * (1.0 - c.offspring.pgf(1.0 - x)) * dg1[1] + 0.5 * (1.0 - alpha) * x * dg11[1];
            let done = (next - x).abs() <= 1e-15;
            x = next;
            if done {
                break;
            }
        }
        e[m] = x;
        branch[m] = 1.0 - c.offspring.pgf(1.0 - x);
    }
    e
}

fn jackknife(full: &[f64], leave_out: &[Vec<f64>]) -> Vec<f64> {
    let k = leave_out.len() as f64;
    (0..full.len())
        .map(|i| {
            let mean = leave_out.iter().map(|v| v[i]).sum::<f64>() / k;
            let var = leave_out.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() * (k - 1.0) / k;
            var.sqrt()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolterraSolution {
    pub grid: Vec<f64>,
    pub e: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `|E_h − E_{h/2}|` at the coarse grid points.
    pub refinement_change: Vec<f64>,
    pub n_paths: usize,
}

impl VolterraSolution {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,e,stderr")?;
        for i in 0..self.grid.len() {
            writeln!(w, "{},{},{}", self.grid[i], self.e[i], self.stderr[i])?;
        }
        Ok(())
    }
}

/// Solve for `E(t; U)` on `steps + 1` grid points over `[0, t_max]`. The
/// returned values come from the half-step grid; the call fails with
/// [`Error::GridTooCoarse`] if they differ from the full-step solution by
/// more than `REFINEMENT_Z` jackknife standard errors anywhere.
pub fn volterra_hit_probability(cfg: &VolterraConfig, seed: StreamSeed) -> Result<VolterraSolution> {
    cfg.validate()?;
    let fine_steps = 2 * cfg.steps;
    let hf = cfg.t_max / fine_steps as f64;
    let fine: Vec<f64> = (0..=fine_steps).map(|k| k as f64 * hf).collect();
    let stream = seed.derive("volterra-ingredients");
    let groups: Vec<Sums> = (0..JACKKNIFE_GROUPS)
        .into_par_iter()
        .map(|g| simulate_group(cfg, &fine, g, stream))
        .collect();
    let mut total = Sums::zeros(fine.len());
    for g in &groups {
        total.add(g);
    }
    let solve = |s: &Sums, stride: usize| march(cfg, hf * stride as f64, &s.ingredients(stride));
    let fine_e = solve(&total, 1);
    let coarse_e = solve(&total, 2);
    let leave_out: Vec<Vec<f64>> = groups.par_iter().map(|g| solve(&total.sub(g), 1)).collect();
    let fine_se = jackknife(&fine_e, &leave_out);

    let grid: Vec<f64> = fine.iter().step_by(2).copied().collect();
    let e: Vec<f64> = fine_e.iter().step_by(2).copied().collect();
    let stderr: Vec<f64> = fine_se.iter().step_by(2).copied().collect();
    let refinement_change: Vec<f64> = e.iter().zip(&coarse_e).map(|(a, b)| (a - b).abs()).collect();
    for i in 0..grid.len() {
        let band = REFINEMENT_Z * stderr[i] + REFINEMENT_FLOOR;
        if refinement_change[i] > band {
            return Err(Error::GridTooCoarse {
                time: grid[i],
                change: refinement_change[i],
                band,
            });
        }
    }
    Ok(VolterraSolution {
        grid,
        e,
        stderr,
        refinement_change,
        n_paths: cfg.n_paths,
    })
}
