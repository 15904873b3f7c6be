use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A scaling inequality failed; the message names it.
    #[error("scaling constraint violated: {0}")]
    Constraint(String),

    #[error("unsupported spatial dimension {0} (only 2 is supported)")]
    UnsupportedDimension(usize),

    #[error("direction distribution is not normalized: integral = {integral}")]
    NotNormalized { integral: f64 },

    #[error("quadrature did not converge for {what} (estimated error {error:e})")]
    Quadrature { what: String, error: f64 },

    #[error("degenerate closure: |C0| = {c0:e} below tolerance")]
    DegenerateClosure { c0: f64 },

    #[error("singular mobility: min F(u) = {min_f} <= 0")]
    SingularMobility { min_f: f64 },

    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("alignment fixed point did not converge after {} iterations (last residual {:e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    FixedPoint { history: Vec<f64> },

    #[error("agents {i} and {j} still overlap after {sweeps} sweeps (distance {distance})")]
    Overlap {
        i: usize,
        j: usize,
        distance: f64,
        sweeps: usize,
    },

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input (as opposed to a solver failing).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::Constraint(_)
            | Error::UnsupportedDimension(_)
            | Error::NotNormalized { .. }
            | Error::Cfl(_)
            | Error::Config(_) => true,
            Error::DegenerateClosure { .. } => true,
            Error::Step { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
