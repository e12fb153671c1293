use thiserror::Error;

use crate::mvdist::ProbResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// The biomarker model puts no mass on the union of populations.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("empty sample: prevalences cannot be estimated from zero patients")]
    EmptySample,

    /// Raised by the minimal-prevalence rule when `|L| * pi_min >= 1`.
    #[error("infeasible adjustment: {small} strata below pi_min = {pi_min} leave no mass to rescale")]
    InfeasibleAdjustment { small: usize, pi_min: f64 },

    #[error("correlation matrix error: {0}")]
    Matrix(String),

    /// The integrator ran out of evaluations before meeting its tolerance.
    #[error(
        "integration budget exceeded: estimate {:.3e} +/- {:.3e} after {} evaluations",
        best.value, best.error, best.evaluations
    )]
    BudgetExceeded { best: ProbResult },

    /// A test statistic is undefined because a population has no treated or
    /// no control patients.
    #[error("undefined statistic for population {population}: {reason}")]
    UndefinedStatistic { population: usize, reason: String },

    #[error("variance not estimable: {0}")]
    VarianceInestimable(String),

    /// Root bracketing or convergence failed in the critical-value solver.
    #[error("solver error: {message} (bracket [{lo}, {hi}], {iterations} iterations)")]
    Solver {
        message: String,
        lo: f64,
        hi: f64,
        iterations: usize,
    },

    #[error("invalid scenario: {0}")]
    Specification(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. } | Error::Solver { .. } | Error::Matrix(_)
        )
    }
}
