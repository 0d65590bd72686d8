use thiserror::Error;

#[derive(Debug, Error)]
pub enum HdgError {
    #[error("invalid mesh request: {0}")]
    InvalidMesh(String),

    #[error("element {0} is degenerate (non-positive measure)")]
    DegenerateElement(usize),

    #[error("unsupported polynomial degree {degree} in dimension {dim}")]
    UnsupportedDegree { dim: usize, degree: usize },

    #[error("no quadrature rule of exactness {0} in dimension {1} (maximum is 14)")]
    QuadratureUnavailable(usize, usize),

    #[error("local factorization failed on element {0}")]
    LocalFactorization(usize),

    #[error(
        "trace factorization broke down at block {block} (system of {blocks} blocks of size {block_size}, {stored} stored blocks)"
    )]
    TraceFactorization {
        block: usize,
        blocks: usize,
        block_size: usize,
        stored: usize,
    },

    #[error("trace solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    TraceResidual { residual: f64, tolerance: f64 },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<HdgError>,
    },

    #[error("mesh {mesh}: {source}")]
    Run {
        mesh: usize,
        #[source]
        source: Box<HdgError>,
    },

    #[error("unknown manufactured example {0} (expected 1, 2 or 3)")]
    UnknownExample(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense oracle limited to 16 elements, mesh has {0}")]
    OracleSizeGuard(usize),
}

pub type Result<T, E = HdgError> = std::result::Result<T, E>;
