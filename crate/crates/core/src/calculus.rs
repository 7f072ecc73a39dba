//! Finite-difference operators on grid functions (zero extension outside `Ω_h`).

use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::grid::{dir, Grid, OUTSIDE};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diff {
    /// `D_i⁺`
    Forward,
    /// `D_i⁻`
    Backward,
    /// `D_i` (denominator `2h`)
    Central,
    /// `D_i²`
    Second,
}

#[inline]
fn stencil<T: Real>(values: &[T], nb: &[u32; 6], k: usize, axis: usize, variant: Diff, h: T) -> T {
    let read = |o: u32| if o == OUTSIDE { T::zero() } else { values[o as usize] };
    let p = read(nb[dir(axis, true)]);
    let m = read(nb[dir(axis, false)]);
    let c = values[k];
    match variant {
        Diff::Forward => (p - c) / h,
        Diff::Backward => (c - m) / h,
        Diff::Central => (p - m) / (h + h),
        Diff::Second => (p + m - c - c) / (h * h),
    }
}

/// Applies one difference operator along `axis` at every grid point.
pub fn diff<T: Real>(u: &ScalarField<T>, axis: usize, variant: Diff) -> ScalarField<T> {
    let g = u.grid();
    let h = T::lit(g.h());
    let nbs = g.neighbors();
    let vals = u.values();
    let out = (0..g.len())
        .map(|k| stencil(vals, &nbs[k], k, axis, variant, h))
        .collect();
    ScalarField::from_values(g, out)
}

/// Componentwise difference of a vector field.
pub fn diff_vector<T: Real>(u: &VectorField<T>, axis: usize, variant: Diff) -> VectorField<T> {
    let c = [
        diff(&u.component(0), axis, variant),
        diff(&u.component(1), axis, variant),
        diff(&u.component(2), axis, variant),
    ];
    VectorField::from_components([&c[0], &c[1], &c[2]]).expect("same grid")
}

/// `𝒟φ = (D₁φ, D₂φ, D₃φ)`.
pub fn gradient<T: Real>(phi: &ScalarField<T>) -> VectorField<T> {
    let g = phi.grid();
    let h2 = T::lit(2.0 * g.h());
    let nbs = g.neighbors();
    let out = (0..g.len())
        .map(|k| {
            let nb = &nbs[k];
            let mut v = [T::zero(); 3];
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = (phi.at_ordinal(nb[dir(i, true)]) - phi.at_ordinal(nb[dir(i, false)])) / h2;
            }
            v
        })
        .collect();
    VectorField::from_values(g, out)
}

/// `𝒟·w = Σ D_i w_i`.
pub fn divergence<T: Real>(w: &VectorField<T>) -> ScalarField<T> {
    let g = w.grid();
    let h2 = T::lit(2.0 * g.h());
    let nbs = g.neighbors();
    let out = (0..g.len())
        .map(|k| {
            let nb = &nbs[k];
            let mut s = T::zero();
            for i in 0..3 {
                s += (w.at_ordinal(nb[dir(i, true)])[i] - w.at_ordinal(nb[dir(i, false)])[i]) / h2;
            }
            s
        })
        .collect();
    ScalarField::from_values(g, out)
}

/// `Σ_j D_j² u`.
pub fn laplacian<T: Real>(u: &ScalarField<T>) -> ScalarField<T> {
    let g = u.grid();
    let h = T::lit(g.h());
    let nbs = g.neighbors();
    let vals = u.values();
    let out = (0..g.len())
        .map(|k| (0..3).map(|i| stencil(vals, &nbs[k], k, i, Diff::Second, h)).sum())
        .collect();
    ScalarField::from_values(g, out)
}

/// Componentwise `Σ_j D_j² u`.
pub fn laplacian_vector<T: Real>(u: &VectorField<T>) -> VectorField<T> {
    let c = [
        laplacian(&u.component(0)),
        laplacian(&u.component(1)),
        laplacian(&u.component(2)),
    ];
    VectorField::from_components([&c[0], &c[1], &c[2]]).expect("same grid")
}

/// Central difference of `w` along `axis` at the neighbour ordinal `o`
/// (itself read through the neighbour table; zero when `o` is outside).
#[inline]
fn central_at<T: Real>(g: &Grid, w: &VectorField<T>, o: u32, axis: usize, h2: T) -> [T; 3] {
    if o == OUTSIDE {
        return [T::zero(); 3];
    }
    let nb = &g.neighbors()[o as usize];
    let p = w.at_ordinal(nb[dir(axis, true)]);
    let m = w.at_ordinal(nb[dir(axis, false)]);
    [(p[0] - m[0]) / h2, (p[1] - m[1]) / h2, (p[2] - m[2]) / h2]
}

/// The skew-averaged advection
/// `½ Σ_j [c_j(x−he_j) D_j w(x−he_j) + c_j(x+he_j) D_j w(x+he_j)]`
/// on `Ω_h \ ∂Ω_h`, zero on `∂Ω_h`.
pub fn advect<T: Real>(carrier: &VectorField<T>, target: &VectorField<T>) -> Result<VectorField<T>> {
    carrier.check(target)?;
    let g = carrier.grid();
    let h2 = T::lit(2.0 * g.h());
    let half = T::lit(0.5);
    let nbs = g.neighbors();
    let out = (0..g.len())
        .map(|k| {
            if g.is_boundary(k) {
                return [T::zero(); 3];
            }
            let mut s = [T::zero(); 3];
            for j in 0..3 {
                for plus in [false, true] {
                    let o = nbs[k][dir(j, plus)];
                    let c = carrier.at_ordinal(o)[j];
                    let d = central_at(g, target, o, j, h2);
                    for i in 0..3 {
                        s[i] += c * d[i];
                    }
                }
            }
            [s[0] * half, s[1] * half, s[2] * half]
        })
        .collect();
    Ok(VectorField::from_values(g, out))
}

/// `Σ u·𝒟φ h³ + Σ (𝒟·u) φ h³`, which vanishes by summation by parts.
pub fn summation_by_parts_residual<T: Real>(u: &VectorField<T>, phi: &ScalarField<T>) -> Result<T> {
    let grad = gradient(phi);
    let div = divergence(u);
    let a = u.inner(&grad)?;
    let b = div.inner(phi)?;
    Ok(a + b)
}

/// `Σ_j ‖D_j⁺ u‖²_{Ω_h}` summed over all of `Ω_h`.
pub fn forward_dissipation<T: Real>(u: &VectorField<T>) -> T {
    let g = u.grid();
    let h = T::lit(g.h());
    let h3 = T::lit(g.h().powi(3));
    let nbs = g.neighbors();
    let mut s = T::zero();
    for k in 0..g.len() {
        let c = u.at(k);
        for j in 0..3 {
            let p = u.at_ordinal(nbs[k][dir(j, true)]);
            for i in 0..3 {
                let d = (p[i] - c[i]) / h;
                s += d * d;
            }
        }
    }
    s * h3
}
