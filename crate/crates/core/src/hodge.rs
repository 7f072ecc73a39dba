//! Discrete Helmholtz–Hodge decomposition `u = w + 𝒟φ`.
//!
//! Eliminating `w = χ(u − 𝒟φ)` (χ the indicator of `Ω_h \ ∂Ω_h`) from
//! `𝒟·w = 0` leaves the graph-Laplacian system `Gφ = −4h² 𝒟·(χu)`, where `G`
//! couples `m − he_i` and `m + he_i` for every interior `m`. The graph splits
//! into components (one per parity class on the core, plus small pieces near
//! the boundary), each solved independently.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{divergence, gradient};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{dir, Grid, OUTSIDE};
use crate::linsolve::{cg_deflated, CsrMatrix, SolveReport};
use crate::scalar::Real;

/// Default relative tolerance of the pressure solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// One connected component of the pressure coupling graph.
#[derive(Debug, Clone)]
pub struct PressureComponent<T> {
    /// Grid ordinals, ascending.
    pub nodes: Vec<u32>,
    /// Graph Laplacian restricted to `nodes` (local indexing).
    pub matrix: CsrMatrix<T>,
    /// Local positions of core points (`Ω_h^∘`).
    pub core: Vec<u32>,
    /// Core class carried by this component, if any.
    pub class: Option<usize>,
}

impl<T: Real> PressureComponent<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Edges `(m − he_i, m + he_i)` of the coupling graph, one per interior `m` and axis.
fn coupling_edges(grid: &Grid) -> Vec<(u32, u32)> {
    let nbs = grid.neighbors();
    let mut edges = Vec::with_capacity(3 * grid.interior().len());
    for &m in grid.interior() {
        let nb = &nbs[m as usize];
        for i in 0..3 {
            let a = nb[dir(i, false)];
            let b = nb[dir(i, true)];
            debug_assert!(a != OUTSIDE && b != OUTSIDE);
            if a != b {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn laplacian_triplets<T: Real>(edges: &[(u32, u32)]) -> Vec<(u32, u32, T)> {
    let mut t = Vec::with_capacity(4 * edges.len());
    for &(a, b) in edges {
        t.push((a, a, T::one()));
        t.push((b, b, T::one()));
        t.push((a, b, -T::one()));
        t.push((b, a, -T::one()));
    }
    t
}

/// The global pressure matrix `G` on all of `Ω_h`.
pub fn pressure_matrix<T: Real>(grid: &Grid) -> CsrMatrix<T> {
    CsrMatrix::from_triplets(grid.len(), laplacian_triplets(&coupling_edges(grid)), true)
}

/// Splits the coupling graph into connected components.
pub fn pressure_components<T: Real>(grid: &Grid) -> Vec<PressureComponent<T>> {
    let n = grid.len();
    let g = pressure_matrix::<T>(grid);
    let mut label = vec![u32::MAX; n];
    let mut comps: Vec<Vec<u32>> = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..n {
        if label[s] != u32::MAX {
            continue;
        }
        let id = comps.len() as u32;
        label[s] = id;
        queue.push_back(s);
        let mut nodes = Vec::new();
        while let Some(k) = queue.pop_front() {
            nodes.push(k as u32);
            for (c, _) in g.row(k) {
                if label[c] == u32::MAX {
                    label[c] = id;
                    queue.push_back(c);
                }
            }
        }
        nodes.sort_unstable();
        comps.push(nodes);
    }
    let mut local = vec![0u32; n];
    comps
        .into_iter()
        .map(|nodes| {
            for (i, &k) in nodes.iter().enumerate() {
                local[k as usize] = i as u32;
            }
            let mut t = Vec::new();
            for &k in &nodes {
                for (c, v) in g.row(k as usize) {
                    t.push((local[k as usize], local[c], v));
                }
            }
            let core: Vec<u32> = nodes
                .iter()
                .enumerate()
                .filter(|(_, &k)| grid.in_core(k as usize))
                .map(|(i, _)| i as u32)
                .collect();
            let class = core.first().and_then(|&i| grid.core_class(nodes[i as usize] as usize));
            PressureComponent {
                matrix: CsrMatrix::from_triplets(nodes.len(), t, true),
                nodes,
                core,
                class,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HodgeDecomposition<T> {
    pub w: VectorField<T>,
    pub phi: ScalarField<T>,
    /// `max_{Ω_h} |𝒟·w|`.
    pub residual_div: f64,
    /// `max_{Ω_h \ ∂Ω_h} |w + 𝒟φ − u|`.
    pub residual_recon: f64,
    /// Largest iteration count over the component solves.
    pub iterations: usize,
    pub reports: Vec<SolveReport>,
}

/// Reusable decomposition operator for a fixed grid.
#[derive(Debug, Clone)]
pub struct HodgeSolver<T> {
    grid: Arc<Grid>,
    components: Vec<PressureComponent<T>>,
}

impl<T: Real> HodgeSolver<T> {
    pub fn new(grid: &Arc<Grid>) -> Self {
        HodgeSolver {
            grid: grid.clone(),
            components: pressure_components(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> &[PressureComponent<T>] {
        &self.components
    }

    /// Iteration cap `50·√n + 500` for a component of `n` unknowns.
    pub fn iteration_cap(n: usize) -> usize {
        (50.0 * (n as f64).sqrt()) as usize + 500
    }

    pub fn decompose(&self, u: &VectorField<T>, tol: T) -> Result<HodgeDecomposition<T>> {
        self.decompose_from(u, tol, None)
    }

    /// As [`HodgeSolver::decompose`], starting the pressure solves from `phi0`.
    pub fn decompose_from(
        &self,
        u: &VectorField<T>,
        tol: T,
        phi0: Option<&ScalarField<T>>,
    ) -> Result<HodgeDecomposition<T>> {
        let g = &self.grid;
        if !Arc::ptr_eq(u.grid(), g) && u.grid().fingerprint() != g.fingerprint() {
            return Err(Error::GridMismatch);
        }
        if !(tol > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must be positive, got {tol:e}"),
            });
        }
        let mut masked = u.clone();
        masked.zero_boundary();
        let div = divergence(&masked);
        let scale = T::lit(-4.0 * g.h() * g.h());
        let rhs: Vec<T> = div.values().iter().map(|&d| scale * d).collect();

        let solved: Vec<Result<(Vec<T>, SolveReport)>> = self
            .components
            .par_iter()
            .map(|c| solve_component(c, &rhs, phi0, tol))
            .collect();

        let mut phi = vec![T::zero(); g.len()];
        let mut reports = Vec::with_capacity(solved.len());
        for (c, res) in self.components.iter().zip(solved) {
            let (x, rep) = res?;
            for (&k, v) in c.nodes.iter().zip(x) {
                phi[k as usize] = v;
            }
            reports.push(rep);
        }
        let phi = ScalarField::from_values(g, phi);
        let grad = gradient(&phi);
        let mut w = masked.sub(&grad)?;
        w.zero_boundary();

        let residual_div = divergence(&w).linf_norm().as_f64();
        let mut residual_recon = 0.0f64;
        for &k in g.interior() {
            let k = k as usize;
            let (a, b, c) = (w.at(k), grad.at(k), u.at(k));
            for i in 0..3 {
                residual_recon = residual_recon.max((a[i] + b[i] - c[i]).abs().as_f64());
            }
        }
        Ok(HodgeDecomposition {
            w,
            phi,
            residual_div,
            residual_recon,
            iterations: reports.iter().map(|r| r.iterations).max().unwrap_or(0),
            reports,
        })
    }

    /// `P_h u`.
    pub fn project(&self, u: &VectorField<T>, tol: T) -> Result<VectorField<T>> {
        Ok(self.decompose(u, tol)?.w)
    }
}

fn solve_component<T: Real>(
    c: &PressureComponent<T>,
    rhs: &[T],
    phi0: Option<&ScalarField<T>>,
    tol: T,
) -> Result<(Vec<T>, SolveReport)> {
    let n = c.len();
    if c.matrix.nnz() == 0 {
        return Ok((
            vec![T::zero(); n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let b: Vec<T> = c.nodes.iter().map(|&k| rhs[k as usize]).collect();
    let x0: Option<Vec<T>> = phi0.map(|p| c.nodes.iter().map(|&k| p.at(k as usize)).collect());
    let ones = vec![vec![T::one(); n]];
    let cap = HodgeSolver::<T>::iteration_cap(n);
    let (mut x, rep) = cg_deflated(&c.matrix, &b, &ones, tol, cap, x0.as_deref()).map_err(|e| match e {
        Error::NotConverged {
            iterations, residual, ..
        } => Error::SolverDivergence {
            class: c.class.map_or(0, |j| j + 1),
            iterations,
            residual,
        },
        other => other,
    })?;
    if !c.core.is_empty() {
        let mut s = T::zero();
        for &i in &c.core {
            s += x[i as usize];
        }
        let mean = s / T::lit(c.core.len() as f64);
        for v in &mut x {
            *v -= mean;
        }
    }
    Ok((x, rep))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs` (0 when both vanish).
    pub ratio: f64,
    /// Whether the hypothesis of the inequality is met by the input.
    pub applicable: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub checks: Vec<EstimateCheck>,
}

impl EstimateReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| !c.applicable || c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&EstimateCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, lhs: f64, rhs: f64, applicable: bool) -> EstimateCheck {
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    EstimateCheck {
        name,
        lhs,
        rhs,
        ratio,
        applicable,
        holds: lhs <= rhs * (1.0 + 1e-9) + 1e-300,
    }
}

/// `(Ω_h \ Ω_h^∘) ∪ ∂Ω_h^∘` as a membership mask.
pub fn core_margin(grid: &Grid) -> Vec<bool> {
    (0..grid.len())
        .map(|k| {
            if !grid.in_core(k) {
                return true;
            }
            (0..3).any(|i| {
                [true, false]
                    .iter()
                    .any(|&p| grid.neighbor(k, i, p).map_or(true, |o| !grid.in_core(o)))
            })
        })
        .collect()
}

/// Evaluates the norm inequalities of the decomposition with Poincaré constant `a_tilde`.
pub fn verify_estimates<T: Real>(u: &VectorField<T>, dec: &HodgeDecomposition<T>, a_tilde: f64) -> EstimateReport {
    let g = u.grid();
    let interior = || g.interior().iter().map(|&k| k as usize);
    let core = || (0..g.len()).filter(|&k| g.in_core(k));
    let u_int = u.interior_sum_squares().as_f64();
    let w_all = dec.w.l2_norm().as_f64().powi(2);
    let grad = gradient(&dec.phi);
    let grad_int = grad.sum_squares_over(interior()).as_f64();
    let phi_core = dec.phi.sum_squares_over(core()).as_f64();
    let a2 = a_tilde * a_tilde;

    let margin = core_margin(g);
    let supported = (0..g.len()).all(|k| !margin[k] || u.at(k).iter().all(|c| *c == T::zero()));
    let defect = u.sub(&dec.w).expect("same grid").sum_squares_over(interior()).as_f64();
    let div_core = divergence(u).sum_squares_over(core()).as_f64();

    EstimateReport {
        checks: vec![
            check("projection_norm", w_all, u_int, true),
            check("gradient_norm", grad_int, u_int, true),
            check("potential_poincare", phi_core, a2 * grad_int, true),
            check("projection_defect", defect, a2 * div_core, supported),
        ],
    }
}
