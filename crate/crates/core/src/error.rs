use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step law has nonzero mean {mean:e}")]
    NonZeroMean { mean: f64 },

    #[error("span is not maximal: every offset is a multiple of {gcd}")]
    NonMaximalSpan { gcd: i64 },

    #[error("step law needs at least two support points")]
    DegenerateSupport,

    #[error("bad step masses: {0}")]
    BadMass(String),

    #[error("window of {cells} cells exceeds the budget of {budget}")]
    HorizonTooLarge { cells: usize, budget: usize },

    #[error("the walk cannot stay positive up to time {n}")]
    ZeroSurvival { n: usize },

    #[error("path enumeration needs {paths} paths, cap is {cap}")]
    ExplosionGuard { paths: f64, cap: f64 },

    #[error("ladder renewal mass disagrees with killed law by {discrepancy:e} at n = {n}")]
    DualityViolation { n: usize, discrepancy: f64 },

    #[error("no lattice point in the requested window")]
    EmptyRange,

    #[error("series tail bound {tail:e} exceeds tolerance {tol:e}; raise the depth (currently {depth})")]
    TruncationInsufficient { tail: f64, tol: f64, depth: usize },

    #[error("argument {value} outside the domain [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("grid step mismatch: {0} vs {1}")]
    GridMismatch(f64, f64),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonZeroMean { .. } => "NonZeroMean",
            Error::NonMaximalSpan { .. } => "NonMaximalSpan",
            Error::DegenerateSupport => "DegenerateSupport",
            Error::BadMass(_) => "BadMass",
            Error::HorizonTooLarge { .. } => "HorizonTooLarge",
            Error::ZeroSurvival { .. } => "ZeroSurvival",
            Error::ExplosionGuard { .. } => "ExplosionGuard",
            Error::DualityViolation { .. } => "DualityViolation",
            Error::EmptyRange => "EmptyRange",
            Error::TruncationInsufficient { .. } => "TruncationInsufficient",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::GridMismatch(..) => "GridMismatch",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_)
            | Error::NonZeroMean { .. }
            | Error::NonMaximalSpan { .. }
            | Error::DegenerateSupport
            | Error::BadMass(_)
            | Error::Json(_)
            | Error::OutOfRange { .. }
            | Error::EmptyRange => 2,
            Error::HorizonTooLarge { .. }
            | Error::ExplosionGuard { .. }
            | Error::TruncationInsufficient { .. }
            | Error::QuadratureFailure { .. }
            | Error::ZeroSurvival { .. }
            | Error::GridMismatch(..)
            | Error::NumericalFailure(_)
            | Error::Io(_) => 3,
            Error::DualityViolation { .. } => 4,
        }
    }
}
