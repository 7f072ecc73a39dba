//! Sparse matrices and the linear solvers used by the projection and momentum steps.

mod cg;
mod csr;
mod dense;
mod gmres;

pub use cg::cg_deflated;
pub use csr::CsrMatrix;
pub use dense::DenseLu;
pub use gmres::{gmres, krylov_nonsym, DENSE_FALLBACK_MAX};

use serde::Serialize;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub converged: bool,
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

pub(crate) fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
