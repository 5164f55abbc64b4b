use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("tail series did not fall below the truncation floor within {terms} terms")]
    SeriesTruncation { terms: usize },

    #[error("Laplace estimate is bias-dominated: e^(-lambda*horizon) = {bound:e} exceeds tolerance {tolerance:e}")]
    BiasDominated { bound: f64, tolerance: f64 },

    #[error("power iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("regime inconclusive: Perron root {estimate} with interval [{lower}, {upper}] straddles 1")]
    Inconclusive { estimate: f64, lower: f64, upper: f64 },

    #[error("system is not supercritical (Perron root at zero = {perron_at_zero})")]
    NotSupercritical { perron_at_zero: f64 },

    #[error("a Monte Carlo budget is required: {0}")]
    BudgetRequired(String),

    #[error("Volterra grid too coarse: halving the step moved E({time}) by {change:e}, above the band {band:e}")]
    GridTooCoarse { time: f64, change: f64, band: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("point is not on the front surface: H = {value}, nu = {nu}")]
    NotOnSurface { value: f64, nu: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
