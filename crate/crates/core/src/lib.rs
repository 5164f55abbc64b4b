//! Numerics and simulation for catalytic branching random walks (CBRW) on
//! `Z^d` whose jump components have semi-exponential (discrete Weibull) tails.
//!
//! The crate is organised bottom-up:
//!
//! * [`jump_laws`]: per-axis tail laws, mean-zero calibration, samplers and
//!   the normalizing functions `R^{-1}`.
//! * [`walk`]: the compound Poisson walk, taboo hitting times and their
//!   Laplace transforms.
//! * [`malthusian`]: the matrix `D(λ)`, Perron roots, regime
//!   classification and the Malthusian parameter `ν`.
//! * [`sim`]: exact event-driven simulation of the particle system.
//! * [`front`]: the limiting front surface `H(z) = ν`, shell statistics
//!   over simulated ensembles.
//! * [`volterra`]: the renewal (Volterra) equation for the probability
//!   that some particle occupies a fixed target set.
//!
//! All randomness flows through [`seed::StreamSeed`], so every estimator is a
//! deterministic function of its master seed regardless of thread count.

pub mod error;
pub mod front;
pub mod jump_laws;
pub mod malthusian;
pub mod seed;
pub mod sim;
pub mod volterra;
pub mod walk;

pub use error::{Error, Result};
pub use front::{FrontShape, PointClass, ShellReport};
pub use jump_laws::{AxisTailLaw, FiniteLaw, JumpLaw, Side, Site, StepLaw};
pub use malthusian::{CatalystSpec, DMatrix, McBudget, OffspringLaw, Regime, RegimeReport};
pub use seed::StreamSeed;
pub use sim::{PopulationSnapshot, RunOutput, SimConfig};
pub use walk::{EmpiricalCdf, HittingOutcome, WalkConfig};
