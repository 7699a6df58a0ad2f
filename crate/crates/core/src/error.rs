use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} must be positive, got {value} at node {node}")]
    NonPositive {
        what: &'static str,
        node: usize,
        value: f64,
    },

    #[error("grid too coarse for the discrete maximum principle: h = {h}, need h < {required_h}")]
    GridTooCoarse { h: f64, required_h: f64 },

    #[error("assembled matrix is not an M-matrix at row {row}: {detail}")]
    NotMMatrix { row: usize, detail: String },

    #[error("degenerate bracket: max phi_plus = {upper} < min phi_minus = {lower}")]
    BracketDegenerate { lower: f64, upper: f64 },

    #[error("bracket violated by {amount:e} at iteration {iteration}")]
    BracketViolation { iteration: usize, amount: f64 },

    #[error("no convergence after {iterations} iterations (sup diff {sup_diff:e}, residual {residual:e})")]
    MaxIterations {
        iterations: usize,
        sup_diff: f64,
        residual: f64,
    },

    #[error("no admissible sigma: {0}")]
    NoAdmissibleSigma(String),

    #[error("no admissible barrier: {0}")]
    NoAdmissibleBarrier(String),

    #[error("counterexample regime: {0}")]
    CounterexampleRegime(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("insufficient decay window: rho(T) = {rho_end:e} > {required:e}")]
    InsufficientDecayWindow { rho_end: f64, required: f64 },
}

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidInput(_) => "invalid_input",
            Error::NonPositive { .. } => "non_positive",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::NotMMatrix { .. } => "not_m_matrix",
            Error::BracketDegenerate { .. } => "bracket_degenerate",
            Error::BracketViolation { .. } => "bracket_violation",
            Error::MaxIterations { .. } => "max_iterations",
            Error::NoAdmissibleSigma(_) => "no_admissible_sigma",
            Error::NoAdmissibleBarrier(_) => "no_admissible_barrier",
            Error::CounterexampleRegime(_) => "counterexample_regime",
            Error::Integrator(_) => "integrator",
            Error::InsufficientDecayWindow { .. } => "insufficient_decay_window",
        }
    }
}
