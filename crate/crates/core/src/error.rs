use thiserror::Error;

/// Errors surfaced by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// Pointwise density requested from a measure with no Lebesgue density.
    #[error("measure kind has no Lebesgue density")]
    UnsupportedKind,

    /// Inner singular integral failed the Cauchy refinement test.
    #[error("integral did not converge under radial refinement (measure likely outside the admissible class)")]
    DivergentIntegral,

    /// A simulated state stopped being finite.
    #[error("non-finite state encountered at path index {path}, step {step}")]
    NonFiniteState { path: u64, step: u64 },

    /// Cache-backed field queried outside its lattice.
    #[error("point {point:?} outside cached lattice")]
    OutOfCache { point: [f64; 3] },

    /// Green-function evaluation at coincident points.
    #[error("Green function evaluated at (near-)coincident points")]
    SingularPoint,

    /// Neumann-series preflight measured a contraction factor >= 1.
    #[error("no contraction: measured factor {kappa} >= 1 at radius {radius}")]
    NoContraction { kappa: f64, radius: f64 },

    /// Iterative linear solve stalled.
    #[error("finite-difference solve did not converge (residual {residual} after {iters} sweeps)")]
    NonConvergence { residual: f64, iters: usize },

    /// Run configuration problems (parse or semantic).
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
