use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid is empty at h = {h}: no point has all six lattice neighbours inside the domain")]
    EmptyGrid { h: f64 },

    #[error("core sublattice {class} is not connected under 2h steps (component sizes {sizes:?})")]
    DisconnectedSublattice { class: usize, sizes: Vec<usize> },

    #[error("torus grid needs N >= 4, got N = {0}")]
    InvalidN(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("query point {point:?} is outside the cells anchored at sublattice {class}")]
    OutsideCoverage { point: [f64; 3], class: usize },

    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:e}, tolerance {tol:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("Helmholtz-Hodge pressure solve failed on class {class}: relative residual {residual:e} after {iterations} iterations")]
    SolverDivergence {
        class: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("smallness condition violated: max |u| = {max_abs:e} at step {step} exceeds beta0 = {beta0:e}")]
    SmallnessViolated {
        max_abs: f64,
        beta0: f64,
        step: usize,
    },

    #[error("singular matrix in dense LU (pivot {pivot} vanished)")]
    SingularMatrix { pivot: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error comes from a numerical failure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::SolverDivergence { .. }
                | Error::SmallnessViolated { .. }
                | Error::SingularMatrix { .. }
        )
    }
}
