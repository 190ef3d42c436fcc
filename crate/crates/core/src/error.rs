use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while evaluating, solving or simulating the
/// network model.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the formula it feeds.
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// The backoff series only converge while twice the collision
    /// probability stays below one.
    #[error("collision probability {p_cl} >= 0.5: backoff series diverge")]
    Divergence { p_cl: f64 },

    /// The backoff process cannot carry the offered load; the node would be
    /// saturated.
    #[error("offered load is infeasible: idle probability {p_idle} <= 0")]
    InfeasibleLoad { p_idle: f64 },

    /// A derived quantity that must be a probability exceeded one.
    #[error("model is infeasible: {quantity} = {value} exceeds 1")]
    InfeasibleModel { quantity: &'static str, value: f64 },

    #[error("queue is unstable: packet rate {p} >= service rate {mu}")]
    Unstable { p: f64, mu: f64 },

    /// No transmission probability satisfies the fixed point.
    #[error("packet rate {p} exceeds the fixed-point capacity {capacity} for {n_nodes} nodes")]
    OverCapacity { p: f64, capacity: f64, n_nodes: u32 },

    #[error("no admissible root: {0}")]
    NoRoot(String),

    #[error("root finder did not converge after {iterations} iterations (last x = {last_x}, residual = {residual})")]
    NoConvergence {
        iterations: usize,
        last_x: f64,
        residual: f64,
    },

    /// The truncated chain leaks more probability than the oracle tolerates.
    #[error("truncation too small: boundary flux {flux:e} exceeds {threshold:e}")]
    TruncationTooSmall { flux: f64, threshold: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }

    /// True when the inputs were well formed but the model has no valid
    /// operating point for them.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::InfeasibleLoad { .. }
                | Error::InfeasibleModel { .. }
                | Error::Unstable { .. }
                | Error::OverCapacity { .. }
                | Error::NoRoot(_)
                | Error::NoConvergence { .. }
                | Error::TruncationTooSmall { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }

    /// Short machine-readable tag used in result tables.
    pub fn reason_code(&self) -> &'static str {
        match self {
            Error::Domain { .. } | Error::Config(_) => "invalid_input",
            Error::Divergence { .. } => "collision_divergence",
            Error::InfeasibleLoad { .. } => "saturated",
            Error::InfeasibleModel { .. } => "infeasible_model",
            Error::Unstable { .. } => "unstable",
            Error::OverCapacity { .. } => "over_capacity",
            Error::NoRoot(_) => "no_root",
            Error::NoConvergence { .. } => "no_convergence",
            Error::TruncationTooSmall { .. } => "truncation_too_small",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        }
    }
}
