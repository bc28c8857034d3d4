use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("duplicate term `{0}` in model specification")]
    DuplicateTerm(String),

    #[error("variable `{0}` is constant")]
    DegenerateVariable(String),

    #[error("variable `{variable}` has {found} distinct values, need at least {required}")]
    TooFewDistinctValues {
        variable: String,
        found: usize,
        required: usize,
    },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("too few observations: n = {n}, estimated coefficients = {params}")]
    TooFewObservations { n: usize, params: usize },

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("binomial fit shows separation (max |coefficient| = {max_abs_coef:.2})")]
    Separation { max_abs_coef: f64 },

    #[error("models are not nested: reduced deviance is smaller than full by {excess:.3e}")]
    NotNested { excess: f64 },

    #[error("variable `{0}` has no zeros; use an ordinary fractional polynomial")]
    NoSpike(String),

    #[error("variable `{0}` is zero everywhere")]
    AllZero(String),

    #[error("exposure term `{0}` is not in the starting model")]
    ExposureMissing(String),

    #[error("selection cycled: {0}")]
    CycleDetected(String),

    #[error("fit failed in cross-validation fold {fold}: {message}")]
    FoldFitFailure { fold: usize, message: String },

    #[error("shrinkage components are collinear: {0}")]
    CollinearComponents(String),

    #[error("no admissible cutpoint in search range")]
    RangeEmpty,

    #[error("correlation matrix is not symmetric positive definite")]
    InvalidCorrelation,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_)
                | Error::NotConverged { .. }
                | Error::Separation { .. }
                | Error::NotNested { .. }
                | Error::FoldFitFailure { .. }
                | Error::CollinearComponents(_)
                | Error::InvalidCorrelation
        )
    }
}
