use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{advect, laplacian_vector};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{dir, Grid, OUTSIDE};
use crate::linsolve::{krylov_nonsym, CsrMatrix};
use crate::scalar::Real;

const NONE: u32 = u32::MAX;

/// Per-row slot positions into the cached CSR value array.
#[derive(Debug, Clone)]
struct RowSlots {
    diag: u32,
    /// `x ± he_j`, indexed by [`dir`].
    near: [u32; 6],
    /// `x ± 2he_j`, indexed by [`dir`].
    far: [u32; 6],
    /// Grid ordinals of `x ± he_j`.
    nb: [u32; 6],
}

/// Assembles the implicit momentum matrix
/// `I + τ·(skew advection by uⁿ) − τν·Σ D_j²` on `Ω_h \ ∂Ω_h`.
///
/// The sparsity pattern depends only on the grid and is built once.
#[derive(Debug, Clone)]
pub struct MomentumAssembler {
    grid: Arc<Grid>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    slots: Vec<RowSlots>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentumReport {
    /// Largest GMRES iteration count over the three components.
    pub iterations: usize,
    /// Largest final relative residual over the three components.
    pub residual: f64,
    /// `max |ũ − uⁿ + τ·advect − τν·Δ_h ũ − τfⁿ|` over the interior,
    /// evaluated from the stencils directly.
    pub stencil_residual: f64,
    pub nnz: usize,
}

impl MomentumAssembler {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let g = grid.as_ref();
        let nbs = g.neighbors();
        let interior = g.interior();
        let iidx = |o: u32| -> u32 {
            if o == OUTSIDE {
                NONE
            } else {
                g.interior_index(o as usize).map_or(NONE, |i| i as u32)
            }
        };
        let mut row_ptr = Vec::with_capacity(interior.len() + 1);
        row_ptr.push(0);
        let mut cols: Vec<u32> = Vec::with_capacity(13 * interior.len());
        let mut slots = Vec::with_capacity(interior.len());
        for (r, &x) in interior.iter().enumerate() {
            let nb = nbs[x as usize];
            let mut near_col = [NONE; 6];
            let mut far_col = [NONE; 6];
            for d in 0..6 {
                near_col[d] = iidx(nb[d]);
                far_col[d] = if nb[d] == OUTSIDE {
                    NONE
                } else {
                    iidx(nbs[nb[d] as usize][d])
                };
            }
            let mut row: Vec<u32> = std::iter::once(r as u32)
                .chain(near_col.iter().copied())
                .chain(far_col.iter().copied())
                .filter(|&c| c != NONE)
                .collect();
            row.sort_unstable();
            row.dedup();
            let base = cols.len() as u32;
            let pos = |c: u32| -> u32 {
                if c == NONE {
                    NONE
                } else {
                    base + row.binary_search(&c).expect("column in row") as u32
                }
            };
            slots.push(RowSlots {
                diag: pos(r as u32),
                near: near_col.map(pos),
                far: far_col.map(pos),
                nb,
            });
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }
        MomentumAssembler {
            grid: grid.clone(),
            row_ptr,
            cols,
            slots,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn pattern_nnz(&self) -> usize {
        self.cols.len()
    }

    /// The matrix for carrier `u_n`, time step `tau` and viscosity `nu`.
    pub fn assemble<T: Real>(&self, u_n: &VectorField<T>, tau: T, nu: T) -> CsrMatrix<T> {
        let h = T::lit(self.grid.h());
        let adv = tau / (T::lit(4.0) * h);
        let diff = tau * nu / (h * h);
        let mut vals = vec![T::zero(); self.cols.len()];
        for s in &self.slots {
            vals[s.diag as usize] += T::one() + T::lit(6.0) * diff;
            for j in 0..3 {
                let m = dir(j, false);
                let p = dir(j, true);
                let cm = u_n.at_ordinal(s.nb[m])[j];
                let cp = u_n.at_ordinal(s.nb[p])[j];
                vals[s.diag as usize] += adv * (cm - cp);
                if s.far[m] != NONE {
                    vals[s.far[m] as usize] -= adv * cm;
                }
                if s.far[p] != NONE {
                    vals[s.far[p] as usize] += adv * cp;
                }
                for d in [m, p] {
                    if s.near[d] != NONE {
                        vals[s.near[d] as usize] -= diff;
                    }
                }
            }
        }
        CsrMatrix::from_csr(self.slots.len(), &self.row_ptr, &self.cols, &vals, false)
    }

    /// Solves for `ũ^{n+1}` given `uⁿ` and `fⁿ`.
    #[allow(clippy::too_many_arguments)]
    pub fn solve<T: Real>(
        &self,
        u_n: &VectorField<T>,
        f_n: &VectorField<T>,
        tau: T,
        nu: T,
        tol: T,
        restart: usize,
        cap: usize,
    ) -> Result<(VectorField<T>, MomentumReport)> {
        let g = &self.grid;
        u_n.check(f_n)?;
        if !Arc::ptr_eq(u_n.grid(), g) && u_n.grid().fingerprint() != g.fingerprint() {
            return Err(Error::GridMismatch);
        }
        let a = self.assemble(u_n, tau, nu);
        let interior = g.interior();
        let solved: Vec<Result<(Vec<T>, crate::linsolve::SolveReport)>> = (0..3)
            .into_par_iter()
            .map(|c| {
                let b: Vec<T> = interior
                    .iter()
                    .map(|&k| u_n.at(k as usize)[c] + tau * f_n.at(k as usize)[c])
                    .collect();
                let x0: Vec<T> = interior.iter().map(|&k| u_n.at(k as usize)[c]).collect();
                krylov_nonsym(&a, &b, Some(&x0), tol, restart, cap)
            })
            .collect();
        let mut out = VectorField::zeros(g);
        let mut iterations = 0;
        let mut residual = 0.0f64;
        for (c, res) in solved.into_iter().enumerate() {
            let (x, rep) = res?;
            if !rep.converged {
                return Err(Error::NotConverged {
                    solver: "momentum GMRES",
                    iterations: rep.iterations,
                    residual: rep.residual,
                    tol: tol.as_f64(),
                });
            }
            iterations = iterations.max(rep.iterations);
            residual = residual.max(rep.residual);
            let vals = out.values_mut();
            for (&k, v) in interior.iter().zip(x) {
                vals[k as usize][c] = v;
            }
        }
        let stencil_residual = stencil_residual(u_n, &out, f_n, tau, nu)?;
        Ok((
            out,
            MomentumReport {
                iterations,
                residual,
                stencil_residual,
                nnz: a.nnz(),
            },
        ))
    }
}

/// `max_{Ω_h\∂Ω_h} |ũ − uⁿ + τ·advect(uⁿ, ũ) − τν Σ D_j² ũ − τ fⁿ|`, matrix-free.
pub fn stencil_residual<T: Real>(
    u_n: &VectorField<T>,
    u_tilde: &VectorField<T>,
    f_n: &VectorField<T>,
    tau: T,
    nu: T,
) -> Result<f64> {
    let adv = advect(u_n, u_tilde)?;
    let lap = laplacian_vector(u_tilde);
    let mut r = 0.0f64;
    for &k in u_n.grid().interior() {
        let k = k as usize;
        let (ut, un, a, l, f) = (u_tilde.at(k), u_n.at(k), adv.at(k), lap.at(k), f_n.at(k));
        for c in 0..3 {
            let e = ut[c] - un[c] + tau * a[c] - tau * nu * l[c] - tau * f[c];
            r = r.max(e.abs().as_f64());
        }
    }
    Ok(r)
}
