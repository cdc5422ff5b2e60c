//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance is not symmetric positive definite: leading minor of order {order} is not positive")]
    NotSpd { order: usize },

    #[error("moment diverges: E|X|^{q} is infinite for family `{family}`")]
    MomentDiverges { q: f64, family: String },

    #[error("degenerate pseudo-moment: L_n = 0")]
    DegeneratePseudoMoment,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("guard violated: {0}")]
    GuardViolated(String),

    #[error("missing input `{0}`: this input is problem-specific and must be supplied by the caller")]
    MissingInput(&'static str),

    #[error("experiment budget exceeded: n*p*reps = {requested} > {budget}; reduce reps, n, or p (or raise HDCLT_BUDGET)")]
    BudgetExceeded { requested: u128, budget: u128 },

    #[error("tail target below Monte Carlo resolution: probability {p:.3e} < floor {floor:.3e}")]
    UnresolvableTail { p: f64, floor: f64 },

    #[error("singular submodel Gram matrix for M = {model:?}")]
    SingularSubmodel { model: Vec<usize> },

    #[error("submodel cap exceeded: {count} submodels > cap {cap}")]
    SubmodelCapExceeded { count: u128, cap: u64 },

    #[error("finite-difference step underflow: requested step {step:.3e} is below resolution at scale {scale:.3e}")]
    StepUnderflow { step: f64, scale: f64 },

    #[error("context mismatch between estimate ({estimate}) and bound ({bound})")]
    ContextMismatch { estimate: String, bound: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
