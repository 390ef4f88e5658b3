//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the forward model, inversion and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An evaluation point coincides (or nearly coincides) with a kernel
    /// singularity, e.g. a search point hitting a source position.
    #[error("evaluation point within {dist:.3e} m of a kernel singularity")]
    SingularPoint { dist: f64 },

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid sensor/target geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The structural zero rows of a polarization tensor are violated
    /// beyond tolerance, which signals a malformed input tensor.
    #[error("zero-row structure violated: |row| = {violation:.3e} exceeds {tol:.3e}")]
    ZeroRowViolation { violation: f64, tol: f64 },

    /// All singular values of a tensor are numerically zero.
    #[error("degenerate tensor: largest singular value {max_sv:.3e}")]
    DegenerateTensor { max_sv: f64 },

    /// A subspace rank selection is impossible for the given matrix.
    #[error("rank error: {0}")]
    Rank(String),

    /// The bisection for the two-target resolution distance found no
    /// admissible separation inside the initial bracket.
    #[error("bisection failure: {0}")]
    BisectionFailure(String),

    /// Inputs that must agree (frequencies, measurement directions, grids)
    /// do not.
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),

    /// Two dictionary entries share a label.
    #[error("duplicate dictionary label: {0}")]
    DuplicateLabel(String),

    /// Descriptor lengths differ between a query and a dictionary entry.
    #[error("descriptor length mismatch: query has {query}, entry has {entry}")]
    LengthMismatch { query: usize, entry: usize },

    /// An iterative solve did not reach the requested tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Current fields passed to the moment integration belong to a
    /// different voxel grid or parameter value.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Voxelization produced no cells.
    #[error("empty voxel grid: {0}")]
    EmptyGrid(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// A binary MSR container is malformed.
    #[error("invalid MSR container: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
