use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative weight {weight} for direction {direction}")]
    NegativeWeight { direction: String, weight: f64 },

    #[error("weights sum to {sum}, expected 1")]
    SumOutOfTolerance { sum: f64 },

    #[error("empty support")]
    EmptySupport,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("parameter `{name}` out of range: {value}")]
    ParamOutOfRange { name: String, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot parse direction `{0}`")]
    InvalidDirection(String),

    #[error("zero vector")]
    ZeroVector,

    #[error("direction vector is zero")]
    DirectionZero,

    #[error("insufficient records: need {needed}, have {have}")]
    InsufficientRecords { needed: usize, have: usize },

    #[error("covariance is singular on every tested direction")]
    SingularCovariance,

    #[error("empty site set")]
    EmptySet,

    #[error("invalid bracket ({lo}, {hi})")]
    BracketInvalid { lo: f64, hi: f64 },

    #[error("estimated work {estimated:.3e} exceeds limit {limit:.3e}")]
    WorkLimitExceeded { estimated: f64, limit: f64 },

    #[error("no feasible point on the search grid")]
    NoFeasiblePoint,

    #[error("search grid has {points} points, limit is {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("law has {0} atoms, expected exactly 2")]
    NotTwoValued(usize),

    #[error("no usable transverse direction")]
    NoTransverseDirection,
}
