use crate::expr::ExprError;
use crate::integrate::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("in equation for `{state}`: {source}")]
    Equation { state: String, source: ExprError },
    #[error("model schema error: {0}")]
    Schema(String),
    #[error("unknown built-in model `{0}`")]
    UnknownModel(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operation supports at most {max} state variables, model has {dim}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("integration blew up at t = {time}")]
    Blowup { time: f64, partial: Box<Trajectory> },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("equilibrium is not stable")]
    NotStable,
    #[error("no stable equilibrium found in the search box")]
    NoAttractors,
    #[error("only one basin of attraction is present")]
    SingleBasin,
    #[error("separatrix estimate is empty")]
    EmptySeparatrix,
    #[error("no escape found after {0} doublings of the kick magnitude")]
    NoEscapeFound(usize),
    #[error("forced system leaves the basin of the starting equilibrium")]
    BasinExit,
    #[error("continuation failed at the first step from mu = {0}")]
    ImmediateFailure(f64),
    #[error("no fold points supplied")]
    NoFolds,
    #[error("settling was undecided: {0}")]
    Undecided(String),
    #[error("classification inconclusive: {0}")]
    ClassificationInconclusive(String),
}

impl Error {
    /// True for numerical failures (as opposed to usage errors or
    /// inconclusive verdicts).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Expr(ExprError::Domain(_))
                | Error::Blowup { .. }
                | Error::NoConvergence(_)
                | Error::NotStable
                | Error::NoAttractors
                | Error::SingleBasin
                | Error::EmptySeparatrix
                | Error::NoEscapeFound(_)
                | Error::BasinExit
                | Error::ImmediateFailure(_)
                | Error::NoFolds
        )
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(
            self,
            Error::Undecided(_) | Error::ClassificationInconclusive(_)
        )
    }
}
