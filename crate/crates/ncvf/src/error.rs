use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not self-adjoint: ||x - x*||_inf = {residual:.3e} exceeds {tol:.1e}")]
    NotSelfAdjoint { residual: f64, tol: f64 },

    #[error("norm exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("operator of dimension {dim} fails the projection invariants: {residual:.3e}")]
    NotAProjection { dim: usize, residual: f64 },

    #[error("index {index} is not representable at depth {depth} (cap {cap})")]
    IndexOutOfRange { index: u64, depth: usize, cap: u64 },

    #[error("radix entry m_{position} = {value} is below the minimum of 2")]
    InvalidRadix { position: usize, value: u32 },

    #[error("system `{system}` violates assumption ({clause}) at k={k}, n={n}, l={l}: residual {residual:.3e}")]
    AssumptionViolated {
        system: String,
        clause: String,
        k: usize,
        n: u64,
        l: u64,
        residual: f64,
    },

    #[error("operator field is not positive: min eigenvalue {min_eig:.3e} at point {point}")]
    NotPositive { min_eig: f64, point: u64 },

    #[error("lambda must be positive, got {0}")]
    InvalidLambda(f64),

    #[error("invalid parameters for {what}: {detail}")]
    InvalidParams { what: &'static str, detail: String },

    #[error("certificate check failed at index {index}: residual {residual:.3e} over level {level}")]
    CertificateViolation {
        index: usize,
        residual: f64,
        level: f64,
    },

    #[error("degenerate atom request: {0}")]
    DegenerateAtom(String),

    #[error("scalar-deviation residual {residual:.3e} in structure-constant extraction for (m={m}, n={n})")]
    StructureConstantMismatch { m: u64, n: u64, residual: f64 },

    #[error("pipelines disagree: {what} residual {residual:.3e} exceeds {tol:.1e}")]
    PipelineMismatch {
        what: String,
        residual: f64,
        tol: f64,
    },

    #[error("configured budget exceeded: estimated {estimate} complex entries over budget {budget}")]
    BudgetExceeded { estimate: u64, budget: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
