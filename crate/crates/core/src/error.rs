use std::fmt;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence { routine: &'static str, iterations: usize },

    #[error("shift {shift} is singular or near-singular (condition estimate {condition:.3e})")]
    SingularShift { shift: ShiftDisplay, condition: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} is not orthonormal: Gram deviation {deviation:.3e}")]
    NotOrthonormal { what: &'static str, deviation: f64 },

    #[error("strength {value} is subcritical: must exceed threshold {threshold}")]
    Subcritical { value: f64, threshold: f64 },

    #[error("eigenvalues not separated: gap {gap:.3e} below required {required:.3e}")]
    Separation { gap: f64, required: f64 },

    #[error("kernel inverse does not exist: spectral radius {radius:.6} >= 1")]
    KernelSingular { radius: f64 },

    #[error("no eigenvectors stored for index {0}")]
    MissingEigenvectors(usize),

    #[error("left/right eigenvector pairing is degenerate: |l* r| = {0:.3e}")]
    DegenerateNormalization(f64),

    #[error("fixed-point iteration stopped after {iterations} iterations with residual {residual:.3e}")]
    DysonNoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<crate::theory::DysonSolution>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

/// A complex shift rendered compactly in error messages.
#[derive(Debug, Clone, Copy)]
pub struct ShiftDisplay(pub num_complex::Complex64);

impl fmt::Display for ShiftDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.0;
        if z.im >= 0.0 {
            write!(f, "{}+{}i", z.re, z.im)
        } else {
            write!(f, "{}{}i", z.re, z.im)
        }
    }
}
