use thiserror::Error;

/// Errors surfaced by the numeric operations.
#[derive(Debug, Clone, Error)]
pub enum NdsError {
    #[error("root solve did not reach tolerance {tol:e} (residual {residual:e})")]
    NonConvergence { residual: f64, tol: f64 },

    #[error("radius {eps} is not below the even-covering threshold {threshold}")]
    RadiusTooLarge { eps: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    PrecondViolated(String),

    #[error("joined partition exceeds the cell budget ({cells} > {budget})")]
    CellBlowup { cells: usize, budget: usize },

    #[error("density must be strictly positive (minimum value {min})")]
    NonPositiveDensity { min: f64 },

    #[error("kappa {kappa} too large for density minimum {min} (requires kappa < 2*min)")]
    KappaTooLarge { kappa: f64, min: f64 },

    #[error("updated displacement at slot {slot} is not strictly increasing (grid too coarse)")]
    NonMonotone { slot: usize },

    #[error("degree mismatch: map at index {index} has degree {found}, target has degree {expected}")]
    DegreeMismatch {
        index: usize,
        found: u64,
        expected: u64,
    },

    #[error("sequence tail differs from the conjugacy target map")]
    TailMismatch,

    #[error("fixed-point iteration did not converge in {max_iter} iterations (last delta {last_delta:e})")]
    NoConvergence {
        max_iter: usize,
        last_delta: f64,
        trace: Vec<f64>,
    },

    #[error("neighborhood level {depth} still contains off-diagonal pairs")]
    DepthInsufficient { depth: usize },

    #[error("composition hypothesis violated at level {level}: chain {chain:?} leaves the coarser level")]
    HypothesisViolated { level: usize, chain: [usize; 4] },

    #[error("metric sandwich failed at level {level} for pair ({i}, {j})")]
    SandwichViolated { level: usize, i: usize, j: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl NdsError {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            NdsError::NonConvergence { .. } => "NonConvergence",
            NdsError::RadiusTooLarge { .. } => "RadiusTooLarge",
            NdsError::PrecondViolated(_) => "PrecondViolated",
            NdsError::CellBlowup { .. } => "CellBlowup",
            NdsError::NonPositiveDensity { .. } => "NonPositiveDensity",
            NdsError::KappaTooLarge { .. } => "KappaTooLarge",
            NdsError::NonMonotone { .. } => "NonMonotone",
            NdsError::DegreeMismatch { .. } => "DegreeMismatch",
            NdsError::TailMismatch => "TailMismatch",
            NdsError::NoConvergence { .. } => "NoConvergence",
            NdsError::DepthInsufficient { .. } => "DepthInsufficient",
            NdsError::HypothesisViolated { .. } => "HypothesisViolated",
            NdsError::SandwichViolated { .. } => "SandwichViolated",
            NdsError::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, NdsError>;
