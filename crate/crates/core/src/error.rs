use thiserror::Error;

/// Failures raised by the geometry, retraction and optimizer layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value, gradient or Hessian-vector product came back non-finite.
    #[error("numerical breakdown in {context} at component {index}")]
    NumericalBreakdown { context: &'static str, index: usize },

    /// The warp function vanishes, so the embedded normal is undefined.
    #[error("warp function is zero at this point; the normal vector is undefined")]
    PsiDegenerate,

    /// Transport was requested for a zero-length step.
    #[error("degenerate step: {0}")]
    DegenerateStep(&'static str),

    /// The Dai-Yuan denominator vanished.
    #[error("degenerate conjugacy coefficient (denominator {0:e})")]
    DegenerateBeta(f64),

    /// The search direction does not increase the objective.
    #[error("direction is not an ascent direction (slope {0:e})")]
    NonAscent(f64),

    #[error("line search failed to satisfy the strong Wolfe conditions after {evals} evaluations")]
    LineSearchFail { evals: usize },

    /// Geodesic integration produced non-finite state.
    #[error("geodesic integration became unstable at step {0}")]
    StepUnstable(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Returns the index of the first non-finite entry, if any.
pub(crate) fn first_non_finite(xs: &[f64]) -> Option<usize> {
    xs.iter().position(|x| !x.is_finite())
}

pub(crate) fn check_finite(xs: &[f64], context: &'static str) -> Result<()> {
    match first_non_finite(xs) {
        Some(index) => Err(Error::NumericalBreakdown { context, index }),
        None => Ok(()),
    }
}

pub(crate) fn check_scalar(x: f64, context: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NumericalBreakdown { context, index: 0 })
    }
}
