use thiserror::Error;

/// Errors produced anywhere in the simulation and training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("gate of arity {arity} applied to {targets} target(s)")]
    ArityMismatch { arity: usize, targets: usize },

    #[error("target qubit {0} listed more than once")]
    DuplicateTarget(usize),

    #[error("unsupported qubit count {0}; supported range is 1..=12")]
    QubitCount(usize),

    #[error("amplitude vector of length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid ansatz id {0}; valid ids are 1..=6")]
    InvalidAnsatz(i64),

    #[error("layer count {0} out of range; valid range is 1..=14")]
    InvalidLayers(usize),

    #[error("ansatz circuits need at least 2 qubits, got {0}")]
    TooFewQubits(usize),

    #[error("scale factor {0} must be a positive odd integer")]
    InvalidScaleFactor(i64),

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("cannot normalize an all-zero feature vector")]
    ZeroNorm,

    #[error("feature block {0} is entirely zero")]
    ZeroBlock(usize),

    #[error("{features} features exceed encoder capacity of {capacity}")]
    CapacityExceeded { features: usize, capacity: usize },

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("labels are constant; correlation metrics are undefined")]
    ConstantLabels,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("sample `{id}` has {got} features, expected {expected}")]
    FeatureArity { id: String, got: usize, expected: usize },

    #[error("degenerate histogram: {0}")]
    DegenerateBins(String),

    #[error("error-mitigation layer must be frozen before use")]
    NotFrozen,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
