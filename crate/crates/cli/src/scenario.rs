//! Scenario files.
//!
//! A scenario is a JSON document. Rates (`rate_q`, `beta`) are per unit
//! time; `t_end`, `snapshot_times`, `horizon` and `t_max` are in the same
//! time unit. Positions are lattice sites.

use std::fs;
use std::path::{Path, PathBuf};

use cbrw_core::jump_laws::solve_mean_zero_weights;
use cbrw_core::volterra::{AxisBound, TargetSet, VolterraConfig};
use cbrw_core::{AxisTailLaw, CatalystSpec, FiniteLaw, JumpLaw, McBudget, OffspringLaw, SimConfig, StepLaw, WalkConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub walk: WalkSpec,
    pub catalysts: Vec<CatalystEntry>,
    #[serde(default = "default_mc")]
    pub mc: McBudget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<FrontSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volterra: Option<VolterraSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_mc() -> McBudget {
    McBudget::new(100_000, 20.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    /// Jump rate `q` (per unit time); jumps of size 0 are allowed.
    pub rate_q: f64,
    pub law: LawSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    SemiExponential { axes: Vec<AxisSpec> },
    NearestNeighbour { dimension: usize },
    Finite { jumps: Vec<Vec<i64>>, probs: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub l2_plus: f64,
    pub l2_minus: f64,
    pub l1_plus: Weight,
    pub l1_minus: Weight,
}

/// A tail weight, or `"auto"` to have `calibrate` solve for a mean-zero law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl Weight {
    pub const AUTO: Weight = Weight::Auto(AutoTag::Auto);

    fn value(self) -> Option<f64> {
        match self {
            Weight::Value(v) => Some(v),
            Weight::Auto(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalystEntry {
    pub position: Vec<i64>,
    /// Exit rate `β` from the catalyst (per unit time).
    pub beta: f64,
    /// Probability that an exit is a branching event.
    pub alpha: f64,
    pub offspring: OffspringSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffspringSpec {
    Dirac(usize),
    Probs(Vec<f64>),
    Poisson { mean: f64, max: usize },
    Geometric { p: f64, max: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub start: Vec<i64>,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub population_cap: usize,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSpec {
    /// Shell half-width as a fraction of `ν`.
    #[serde(default = "default_epsilon_fraction")]
    pub epsilon_fraction: f64,
    /// Angular points per orthant edge on the exported surface.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Extreme points of `P` on chosen semi-axes, checked for nearby particles.
    #[serde(default)]
    pub targets: Vec<AxisTarget>,
}

impl Default for FrontSpec {
    fn default() -> Self {
        Self {
            epsilon_fraction: default_epsilon_fraction(),
            resolution: default_resolution(),
            targets: Vec::new(),
        }
    }
}

fn default_epsilon_fraction() -> f64 {
    0.3
}

fn default_resolution() -> usize {
    64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisTarget {
    pub axis: usize,
    pub side: Direction,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolterraSpec {
    /// One bound per coordinate; the origin must not be in the set.
    pub target: Vec<AxisBound>,
    pub t_max: f64,
    pub steps: usize,
    pub n_paths: usize,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check(&self) -> Result<(), CliError> {
        for (i, c) in self.catalysts.iter().enumerate() {
            if self.catalysts[..i].iter().any(|o| o.position == c.position) {
                return Err(CliError::Config(format!("catalysts[{i}]: position {:?} is repeated", c.position)));
            }
        }
        if let Some(sim) = &self.simulation {
            if sim.snapshot_times.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(CliError::Config("simulation.snapshot_times: must be sorted".into()));
            }
        }
        Ok(())
    }

    /// Replace `"auto"` weights by the mean-zero solution. Returns the
    /// residual mean of every axis after the update.
    pub fn calibrate(&mut self) -> Result<Vec<f64>, CliError> {
        let LawSpec::SemiExponential { axes } = &mut self.walk.law else {
            return Err(CliError::Config("walk.law: only semi_exponential laws have weights to calibrate".into()));
        };
        let mut residuals = Vec::with_capacity(axes.len());
        for (i, a) in axes.iter_mut().enumerate() {
            let here = |field: &str| format!("walk.law.axes[{i}].{field}");
            match (a.l1_plus, a.l1_minus) {
                (Weight::Auto(_), Weight::Auto(_)) => {
                    let (p, m) = solve_mean_zero_weights(a.gamma_plus, a.gamma_minus, a.l2_plus, a.l2_minus)
                        .map_err(|e| CliError::Config(format!("{}: {e}", here("*"))))?;
                    a.l1_plus = Weight::Value(p);
                    a.l1_minus = Weight::Value(m);
                }
                (Weight::Value(_), Weight::Value(_)) => {}
                _ => return Err(CliError::Config(format!("{}: set both weights or neither to \"auto\"", here("l1_*")))),
            }
            let law = axis_law(a, i)?;
            residuals.push(law.mean().map_err(|e| CliError::Config(format!("{}: {e}", here("*"))))?);
        }
        Ok(residuals)
    }

    pub fn dimension(&self) -> usize {
        match &self.walk.law {
            LawSpec::SemiExponential { axes } => axes.len(),
            LawSpec::NearestNeighbour { dimension } => *dimension,
            LawSpec::Finite { jumps, .. } => jumps.first().map_or(0, Vec::len),
        }
    }

    /// Product law with weights resolved; `"auto"` weights are calibrated in
    /// memory.
    pub fn jump_law(&self) -> Result<Option<JumpLaw>, CliError> {
        let LawSpec::SemiExponential { .. } = &self.walk.law else {
            return Ok(None);
        };
        let mut resolved = self.clone();
        resolved.calibrate()?;
        let LawSpec::SemiExponential { axes } = &resolved.walk.law else {
            unreachable!()
        };
        let axes = axes.iter().enumerate().map(|(i, a)| axis_law(a, i)).collect::<Result<Vec<_>, _>>()?;
        Ok(Some(JumpLaw::new(axes).map_err(config)?))
    }

    pub fn walk(&self) -> Result<WalkConfig, CliError> {
        let law: StepLaw = match &self.walk.law {
            LawSpec::SemiExponential { .. } => self.jump_law()?.expect("semi-exponential").into(),
            LawSpec::NearestNeighbour { dimension } => FiniteLaw::nearest_neighbour(*dimension).into(),
            LawSpec::Finite { jumps, probs } => FiniteLaw::new(jumps.clone(), probs.clone()).map_err(config)?.into(),
        };
        WalkConfig::new(self.walk.rate_q, law).map_err(|e| CliError::Config(format!("walk: {e}")))
    }

    pub fn catalysts(&self) -> Result<Vec<CatalystSpec>, CliError> {
        self.catalysts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let offspring = match &c.offspring {
                    OffspringSpec::Dirac(k) => Ok(OffspringLaw::dirac(*k)),
                    OffspringSpec::Probs(p) => OffspringLaw::new(p.clone()),
                    OffspringSpec::Poisson { mean, max } => OffspringLaw::poisson(*mean, *max),
                    OffspringSpec::Geometric { p, max } => OffspringLaw::geometric(*p, *max),
                };
                offspring
                    .and_then(|o| CatalystSpec::new(c.position.clone(), c.beta, c.alpha, o))
                    .map_err(|e| CliError::Config(format!("catalysts[{i}]: {e}")))
            })
            .collect()
    }

    pub fn sim_config(&self) -> Result<(SimConfig, usize), CliError> {
        let spec = self
            .simulation
            .as_ref()
            .ok_or_else(|| CliError::Config("scenario has no \"simulation\" section".into()))?;
        let cfg = SimConfig {
            walk: self.walk()?,
            catalysts: self.catalysts()?,
            start: spec.start.clone(),
            t_end: spec.t_end,
            snapshot_times: spec.snapshot_times.clone(),
            population_cap: spec.population_cap,
            seed: self.seed,
            record_events: false,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("simulation: {e}")))?;
        Ok((cfg, spec.runs))
    }

    pub fn volterra_config(&self) -> Result<VolterraConfig, CliError> {
        let spec = self
            .volterra
            .as_ref()
            .ok_or_else(|| CliError::Config("scenario has no \"volterra\" section".into()))?;
        let mut cats = self.catalysts()?;
        if cats.len() != 1 {
            return Err(CliError::Config(format!("volterra: needs exactly one catalyst, found {}", cats.len())));
        }
        Ok(VolterraConfig {
            walk: self.walk()?,
            catalyst: cats.remove(0),
            target: TargetSet::new(spec.target.clone()).map_err(|e| CliError::Config(format!("volterra.target: {e}")))?,
            t_max: spec.t_max,
            steps: spec.steps,
            n_paths: spec.n_paths,
        })
    }
}

fn axis_law(a: &AxisSpec, i: usize) -> Result<AxisTailLaw, CliError> {
    let (Some(p), Some(m)) = (a.l1_plus.value(), a.l1_minus.value()) else {
        return Err(CliError::Config(format!("walk.law.axes[{i}]: weights are still \"auto\"")));
    };
    AxisTailLaw::new(a.gamma_plus, a.gamma_minus, p, m, a.l2_plus, a.l2_minus)
        .map_err(|e| CliError::Config(format!("walk.law.axes[{i}]: {e}")))
}

fn config(e: cbrw_core::Error) -> CliError {
    CliError::Config(format!("walk.law: {e}"))
}
