//! Crate-wide error type.

use alloc::string::String;

/// Errors produced by the library.
///
/// The taxonomy distinguishes usage errors (dimension mismatches, malformed
/// input) from numerical precondition rejections (aliasing, empty frequency
/// windows, loss of ellipticity, Newton divergence); the CLI maps the two
/// groups onto different exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular (|det| = {det:.3e} below 1e-12)")]
    SingularMatrix { det: f64 },

    #[error("rank out of range: r = {r} with n = {n}")]
    RankOutOfRange { r: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid size {n} is not a power of two >= 4")]
    BadGridSize { n: usize },

    #[error(
        "aliasing risk: spectrum has relative energy {energy:.3e} at the Nyquist \
         frequency of axis {axis}"
    )]
    Aliasing { axis: usize, energy: f64 },

    #[error("frequency window is empty: {0}")]
    EmptyWindow(String),

    #[error("ellipticity violated: sampled |p| = {sampled:.6e} <= {bound:.6e}")]
    NotElliptic { sampled: f64, bound: f64 },

    #[error(
        "gradient degenerate: |d p / d xi_{index}| = {value:.3e} below tolerance \
         {tol:.3e}"
    )]
    DegenerateGradient { index: usize, value: f64, tol: f64 },

    #[error(
        "normals nearly dependent at row {index}: pivot {pivot:.3e} below \
         {tol:.3e} * row norm; condition 2 fails"
    )]
    DependentNormals { index: usize, pivot: f64, tol: f64 },

    #[error(
        "Newton did not converge for xi_{index} after {iterations} iterations \
         (last residual {residual:.3e}); retry with a smaller validity box"
    )]
    NewtonDiverged {
        index: usize,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "evaluation outside the graph validity box: coordinate {coordinate} is \
         {distance:.3e} from the base, half-width {half_width:.3e}"
    )]
    OutsideValidityBox {
        coordinate: String,
        distance: f64,
        half_width: f64,
    },

    #[error("reduction failed at stage {stage} ({removed}): {reason}")]
    ReductionStage {
        stage: usize,
        removed: String,
        reason: String,
    },

    #[error("admissibility precondition failed: {0}")]
    NotAdmissible(String),

    #[error("symbol parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("degenerate fit abscissae: all points share x = {x:.6e}")]
    DegenerateFit { x: f64 },

    #[error("sweep failed at lambda = {lambda}: {source}")]
    Sweep {
        lambda: f64,
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// True for errors that signal a numerical precondition rejection rather
    /// than a malformed request.
    pub fn is_precondition(&self) -> bool {
        match self {
            Error::Aliasing { .. }
            | Error::EmptyWindow(_)
            | Error::NotElliptic { .. }
            | Error::DegenerateGradient { .. }
            | Error::DependentNormals { .. }
            | Error::NewtonDiverged { .. }
            | Error::OutsideValidityBox { .. }
            | Error::ReductionStage { .. }
            | Error::NotAdmissible(_) => true,
            Error::Sweep { source, .. } => source.is_precondition(),
            _ => false,
        }
    }
}
