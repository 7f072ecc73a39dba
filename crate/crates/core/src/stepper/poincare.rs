use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{dir, Grid, OUTSIDE};
use crate::hodge::{pressure_components, PressureComponent};
use crate::linsolve::{cg_deflated, dot, norm2, CsrMatrix};

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareEstimate {
    pub value: f64,
    /// Axis constants (Poincaré I) or component constants (Poincaré II).
    pub parts: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Directional stiffness `Σ_{x∈Ω_h} |φ(x+he_i) − φ(x)|²` on interior unknowns
/// (`φ = 0` on `∂Ω_h` and outside).
pub fn directional_stiffness(grid: &Grid, axis: usize) -> CsrMatrix<f64> {
    let nbs = grid.neighbors();
    let mut t = Vec::new();
    for (r, &x) in grid.interior().iter().enumerate() {
        t.push((r as u32, r as u32, 2.0));
        for plus in [true, false] {
            let o = nbs[x as usize][dir(axis, plus)];
            if o == OUTSIDE {
                continue;
            }
            if let Some(c) = grid.interior_index(o as usize) {
                t.push((r as u32, c as u32, -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(grid.interior().len(), t, true)
}

fn smallest_eigenvalue(k: &CsrMatrix<f64>) -> Result<(f64, usize, bool)> {
    let n = k.dim();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = dot(&v, &k.matvec(&v));
    for it in 1..=POWER_CAP {
        let (x, _) = cg_deflated(k, &v, &[], 1e-12, 20 * n + 100, Some(&v))?;
        let nx = norm2(&x);
        v = x.iter().map(|xi| xi / nx).collect();
        let next = dot(&v, &k.matvec(&v));
        let done = (lambda - next).abs() <= POWER_TOL * next;
        lambda = next;
        if done {
            return Ok((lambda, it, true));
        }
    }
    Ok((lambda, POWER_CAP, false))
}

/// Sharp discrete constant `Â` with `Σ_{Ω_h}|φ|² ≤ Â² Σ_{Ω_h}|D_i⁺φ|²` for
/// every axis `i` and every `φ` vanishing on `∂Ω_h`, by inverse power iteration.
pub fn estimate_poincare_i(grid: &Grid) -> Result<PoincareEstimate> {
    if grid.is_periodic() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "the first Poincaré inequality needs a Dirichlet grid".into(),
        });
    }
    let h = grid.h();
    let per_axis: Vec<Result<(f64, usize, bool)>> = (0..3)
        .into_par_iter()
        .map(|i| smallest_eigenvalue(&directional_stiffness(grid, i)))
        .collect();
    let mut parts = Vec::with_capacity(3);
    let mut iterations = 0;
    let mut converged = true;
    for r in per_axis {
        let (lambda, it, ok) = r?;
        parts.push(h / lambda.sqrt());
        iterations = iterations.max(it);
        converged &= ok;
    }
    Ok(PoincareEstimate {
        value: parts.iter().fold(0.0f64, |m, &a| m.max(a)),
        parts,
        iterations,
        converged,
    })
}

fn project_core(c: &PressureComponent<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mean = c.core.iter().map(|&i| v[i as usize]).sum::<f64>() / c.core.len() as f64;
    for &i in &c.core {
        out[i as usize] = v[i as usize] - mean;
    }
    out
}

const BLOCK: usize = 4;

/// Largest `μ` with `P v = μ G v` on one component, by block inverse
/// iteration with Rayleigh–Ritz extraction.
fn largest_ratio(c: &PressureComponent<f64>, seed: u64) -> Result<(f64, usize, bool)> {
    let n = c.len();
    let k = BLOCK.min(c.core.len() - 1).max(1);
    let ones = vec![vec![1.0; n]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let cap = 20 * n + 100;
    let mut mu = 0.0;
    for it in 1..=POWER_CAP {
        let mut x = Vec::with_capacity(k);
        for v in &block {
            let (xi, _) = cg_deflated(&c.matrix, &project_core(c, v), &ones, 1e-12, cap, None)?;
            x.push(xi);
        }
        let px: Vec<Vec<f64>> = x.iter().map(|xi| project_core(c, xi)).collect();
        let gx: Vec<Vec<f64>> = x.iter().map(|xi| c.matrix.matvec(xi)).collect();
        let m = x.len();
        let a = DMatrix::from_fn(m, m, |i, j| dot(&x[i], &px[j]));
        let b = DMatrix::from_fn(m, m, |i, j| dot(&x[i], &gx[j]));
        let b = (&b + b.transpose()) * 0.5;
        let Some(chol) = Cholesky::new(b) else {
            // Block collapsed onto a smaller subspace; keep the dominant direction.
            let nx = norm2(&x[0]);
            if nx == 0.0 {
                return Ok((0.0, it, true));
            }
            block = vec![x[0].iter().map(|v| v / nx).collect()];
            continue;
        };
        let l = chol.l();
        let linv = l.clone().try_inverse().expect("Cholesky factor is invertible");
        let s = &linv * ((&a + a.transpose()) * 0.5) * linv.transpose();
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let y = linv.transpose() * &eig.eigenvectors;
        let next = eig.eigenvalues[order[0]];
        block = order
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; n];
                for (i, xi) in x.iter().enumerate() {
                    let w = y[(i, col)];
                    for (vj, xj) in v.iter_mut().zip(xi) {
                        *vj += w * xj;
                    }
                }
                let nv = norm2(&v);
                v.iter_mut().for_each(|vj| *vj /= nv);
                v
            })
            .collect();
        if next <= 0.0 {
            return Ok((0.0, it, true));
        }
        let done = (next - mu).abs() <= POWER_TOL * next;
        mu = next;
        if done {
            return Ok((mu, it, true));
        }
    }
    Ok((mu, POWER_CAP, false))
}

/// Sharp discrete constant `Ã` with
/// `Σ_j Σ_{Ω_h^{∘j}} |φ − [φ]^j|² ≤ Ã² Σ_{Ω_h\∂Ω_h} |𝒟φ|²`,
/// from the largest generalised eigenvalue of (core mean-zero mass, 2h-stencil stiffness).
/// Each pressure component is treated separately.
pub fn estimate_poincare_ii(grid: &Grid) -> Result<PoincareEstimate> {
    let comps: Vec<PressureComponent<f64>> = pressure_components(grid)
        .into_iter()
        .filter(|c| c.core.len() > 1)
        .collect();
    let h = grid.h();
    let solved: Vec<Result<(f64, usize, bool)>> = comps
        .par_iter()
        .enumerate()
        .map(|(i, c)| largest_ratio(c, i as u64))
        .collect();
    let mut parts = Vec::with_capacity(comps.len());
    let mut iterations = 0;
    let mut converged = true;
    for r in solved {
        let (mu, it, ok) = r?;
        parts.push((4.0 * h * h * mu).sqrt());
        iterations = iterations.max(it);
        converged &= ok;
    }
    Ok(PoincareEstimate {
        value: parts.iter().fold(0.0f64, |m, &a| m.max(a)),
        parts,
        iterations,
        converged,
    })
}

/// `Σ_{Ω_h}|φ|² / Σ_{Ω_h}|D_i⁺φ|²` for `φ` (its boundary values are ignored).
pub fn poincare_i_ratio(phi: &ScalarField<f64>, axis: usize) -> f64 {
    let g = phi.grid();
    let mut num = 0.0;
    let mut den = 0.0;
    let val = |k: usize| if g.is_boundary(k) { 0.0 } else { phi.at(k) };
    for k in 0..g.len() {
        let v = val(k);
        num += v * v;
        let p = g.neighbor(k, axis, true).map_or(0.0, val);
        den += (p - v) * (p - v);
    }
    num / (den / (g.h() * g.h()))
}

/// `Σ_j Σ_{Ω_h^{∘j}} |φ − [φ]^j|² / Σ_{Ω_h\∂Ω_h} |𝒟φ|²`.
pub fn poincare_ii_ratio(phi: &ScalarField<f64>) -> f64 {
    let g = phi.grid();
    let mut num = 0.0;
    for class in g.sublattices() {
        if class.is_empty() {
            continue;
        }
        let mean = class.iter().map(|&k| phi.at(k as usize)).sum::<f64>() / class.len() as f64;
        num += class.iter().map(|&k| (phi.at(k as usize) - mean).powi(2)).sum::<f64>();
    }
    let h2 = 2.0 * g.h();
    let mut den = 0.0;
    for &m in g.interior() {
        for i in 0..3 {
            let p = phi.at_ordinal(g.neighbors()[m as usize][dir(i, true)]);
            let q = phi.at_ordinal(g.neighbors()[m as usize][dir(i, false)]);
            den += ((p - q) / h2).powi(2);
        }
    }
    num / den
}

/// `R₀ = (1 − e^{−A⁻²})⁻¹ ((1 − e^{−2A⁻²}) / (2A⁻²))^{1/2} α`.
pub fn r0_bound(a_hat: f64, alpha: f64) -> f64 {
    let s = a_hat.powi(-2);
    (1.0 / (1.0 - (-s).exp())) * ((1.0 - (-2.0 * s).exp()) / (2.0 * s)).sqrt() * alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r0_closed_form() {
        assert_eq!(r0_bound(1.0, 0.0), 0.0);
        let e = std::f64::consts::E;
        let direct = 1.0 / (1.0 - 1.0 / e) * ((1.0 - 1.0 / (e * e)) / 2.0).sqrt();
        assert!((r0_bound(1.0, 1.0) - direct).abs() < 1e-15);
        assert!((r0_bound(1.0, 1.0) - 1.040181093305068).abs() < 1e-12);
        // Fixed point of R ↦ e^{-A⁻²}R + c·α.
        let (a, alpha): (f64, f64) = (0.7, 2.3);
        let s: f64 = a.powi(-2);
        let r = r0_bound(a, alpha);
        let rhs = (-s).exp() * r + ((1.0 - (-2.0 * s).exp()) / (2.0 * s)).sqrt() * alpha;
        assert!((r - rhs).abs() < 1e-12 * r);
    }
}
