use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("level {level} exceeds the guard {max}")]
    LevelTooHigh { level: u32, max: u32 },
    #[error("cannot refine from level {current} down to {requested}")]
    RefineBelowCurrent { current: u32, requested: u32 },
    #[error("path is frozen against refinement")]
    Frozen,
    #[error("window [{a}, {b}] is not aligned to the dyadic grid at level {level}")]
    MisalignedWindow { a: f64, b: f64, level: u32 },
    #[error("dyadic index (n={n}, k={k}) out of range")]
    BadDyadicIndex { n: u32, k: u64 },
    #[error("quadrature level {quad_level} is below the oversampling floor {floor}")]
    OversamplingFloor { quad_level: u32, floor: u32 },
    #[error("path level {path_level} is below the quadrature level {quad_level}")]
    InsufficientPathLevel { path_level: u32, quad_level: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid field parameter: {0}")]
    BadFieldParameter(String),
    #[error("partition is empty")]
    EmptyPartition,
    #[error("partition times must start at 0 and increase strictly")]
    NonMonotonePartition,
    #[error("partition horizon {horizon} exceeds the path horizon {path_horizon}")]
    HorizonTooLong { horizon: f64, path_horizon: f64 },
    #[error("partition has two times that snap to the same grid node at level {level}")]
    SnapCollision { level: u32 },
    #[error("unknown partition kind `{0}`")]
    UnknownPartitionKind(String),
    #[error("partition kind `{0}` needs a path")]
    PartitionNeedsPath(String),
    #[error("invalid partition size {n} for kind `{kind}`")]
    BadPartitionSize { kind: String, n: usize },
    #[error("moment order {0} must be even and in 2..=8")]
    BadMomentOrder(u32),
    #[error("integrability exponent p = {p} must exceed 1 + d/2 = {threshold}")]
    IntegrabilityExponent { p: f64, threshold: f64 },
    #[error("field `{0}` has no finite L^p norm")]
    NotInLp(String),
    #[error("word length {0} must be within 1..=20")]
    WordLength(usize),
    #[error("kernel time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("chain leaves [0, 1]: k + r = {end} exceeds {max}")]
    ChainOutOfRange { end: u64, max: u64 },
    #[error("starting function is not admissible: {0}")]
    InadmissibleStart(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed path dump: {0}")]
    MalformedDump(String),
}

pub type Result<T> = std::result::Result<T, Error>;
