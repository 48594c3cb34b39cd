use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("Laplace transform pole at rho = -1/theta")]
    Pole,
    #[error("no subdominant eigenvalue for k = {k} (k < 2)")]
    NoSubdominantEigenvalue { k: f64 },
    #[error("numeric consistency failure: {0}")]
    NumericConsistency(String),
    #[error("unsupported age {age}: survival underflows")]
    UnsupportedAge { age: f64 },
    #[error("population exceeded the safety cap of {cap} individuals")]
    PopulationOverflow { cap: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("quadrature did not converge on [{lo}, {hi}]")]
    QuadratureNonConvergence { lo: f64, hi: f64 },
    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("empty regression window: {0}")]
    EmptyWindow(String),
    #[error("non-positive count {value} at trajectory {row}, index {col}")]
    NonPositiveCount { row: usize, col: usize, value: f64 },
    #[error("insufficient valid trajectories ({n}) at grid index {index}")]
    InsufficientTrajectories { index: usize, n: usize },
    #[error("non-positive variance at grid index {index}")]
    NonPositiveVariance { index: usize },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("cannot estimate in Gaussian regime from proportional counts")]
    ProportionalGaussian,
    #[error("Gaussian regime estimation requires a sigma grid")]
    GridRequired,
    #[error("target variance {target} outside grid value range [{lo}, {hi}]")]
    Extrapolation { target: f64, lo: f64, hi: f64 },
    #[error("ratio lambda/alpha = {ratio} outside the attainable range ({lo}, {hi}]")]
    RatioOutOfRange { ratio: f64, lo: f64, hi: f64 },
    #[error("k = {k} outside grid range [{lo}, {hi}]")]
    OutOfGridRange { k: f64, lo: f64, hi: f64 },
    #[error("grid rejected: {0}")]
    GridRejected(String),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: alloc::boxed::Box::new(self),
        }
    }

    /// The innermost error, with stage and replicate tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Replicate { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }
}
