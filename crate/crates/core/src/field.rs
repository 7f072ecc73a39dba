//! Grid functions with zero extension outside `Ω_h`.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{parity_class, Grid, OUTSIDE};
use crate::scalar::Real;

/// Which grid points receive sampled values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// `Ω_h \ ∂Ω_h` only; zero on `∂Ω_h`.
    InteriorOnly,
    All,
}

/// 2-point Gauss offsets on a cell of side `h` centred at the node.
fn gauss_offsets(h: f64) -> [f64; 2] {
    let d = h / (2.0 * 3f64.sqrt());
    [-d, d]
}

/// Offsets of the 8 tensor-product Gauss nodes of the cell `C_h(x)`.
pub fn cell_nodes(h: f64) -> [[f64; 3]; 8] {
    let g = gauss_offsets(h);
    let mut nodes = [[0.0; 3]; 8];
    let mut k = 0;
    for a in g {
        for b in g {
            for c in g {
                nodes[k] = [a, b, c];
                k += 1;
            }
        }
    }
    nodes
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b)
        || (a.h() == b.h() && a.bc() == b.bc() && a.points() == b.points())
}

/// Real-valued grid function.
#[derive(Debug, Clone)]
pub struct ScalarField<T> {
    grid: Arc<Grid>,
    values: Vec<T>,
}

/// `R³`-valued grid function.
#[derive(Debug, Clone)]
pub struct VectorField<T> {
    grid: Arc<Grid>,
    values: Vec<[T; 3]>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), grid.len(), "field length must match the grid");
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    /// `values[k] = f(position of k)`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| T::lit(f(grid.position(k)))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    /// Uniform random values in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> Self {
        let values = (0..grid.len()).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, k: usize) -> T {
        self.values[k]
    }

    /// Value at a neighbour ordinal; zero for [`OUTSIDE`].
    #[inline]
    pub fn at_ordinal(&self, o: u32) -> T {
        if o == OUTSIDE {
            T::zero()
        } else {
            self.values[o as usize]
        }
    }

    /// Value at lattice point `z`: zero off the grid, periodic on the torus.
    pub fn at_lattice(&self, z: [i64; 3]) -> T {
        self.grid.find(z).map_or(T::zero(), |k| self.values[k])
    }

    fn check(&self, other: &Self) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `Σ u v h³`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check(other)?;
        let h3 = T::lit(self.grid.h().powi(3));
        let mut s = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            s += *a * *b;
        }
        Ok(s * h3)
    }

    pub fn l2_norm(&self) -> T {
        self.sum_squares_over(0..self.grid.len()).sqrt()
    }

    /// `Σ_{k ∈ set} |u(k)|² h³`.
    pub fn sum_squares_over(&self, set: impl IntoIterator<Item = usize>) -> T {
        let mut s = T::zero();
        for k in set {
            s += self.values[k] * self.values[k];
        }
        s * T::lit(self.grid.h().powi(3))
    }

    pub fn linf_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: T) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.check(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * *v;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    /// Cell averages `h⁻³∫_{C_h(x)} f` by 2-point Gauss quadrature per axis.
    pub fn sample_cell_average(
        grid: &Arc<Grid>,
        f: impl Fn([f64; 3]) -> f64,
        mode: SampleMode,
    ) -> Self {
        let nodes = cell_nodes(grid.h());
        let values = (0..grid.len())
            .map(|k| {
                if mode == SampleMode::InteriorOnly && grid.is_boundary(k) {
                    return T::zero();
                }
                let x = grid.position(k);
                let s: f64 = nodes
                    .iter()
                    .map(|d| f([x[0] + d[0], x[1] + d[1], x[2] + d[2]]))
                    .sum();
                T::lit(s / 8.0)
            })
            .collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    /// Piecewise-trilinear interpolant over the `2h`-cells anchored at the
    /// sublattice `class` (0-based), evaluated at `x`.
    ///
    /// On the cell `[y, y + 2h)³` this is the blend `f₃ + (g₃ − f₃)(x₃ − y₃)/2h`
    /// of the bilinear faces `f₃` (at `y₃`) and `g₃` (at `y₃ + 2h`).
    pub fn interpolate_trilinear(&self, class: usize, x: [f64; 3]) -> Result<T> {
        let g = &self.grid;
        let h = g.h();
        let pattern = class_parity(class);
        let mut base = [0i64; 3];
        let mut on_lower_face = [false; 3];
        for i in 0..3 {
            let mut z = (x[i] / h + 1e-9).floor() as i64;
            if z.rem_euclid(2) != pattern[i] {
                z -= 1;
            }
            base[i] = z;
            on_lower_face[i] = (x[i] - z as f64 * h).abs() <= 1e-9 * h;
        }
        // A point on a lower face also lies on the upper face of the
        // neighbouring cell; accept either anchor.
        for mask in 0..8u8 {
            let mut y = base;
            let mut valid = true;
            for i in 0..3 {
                if mask & (1 << i) != 0 {
                    if !on_lower_face[i] {
                        valid = false;
                        break;
                    }
                    y[i] -= 2;
                }
            }
            if !valid {
                continue;
            }
            let Some(k) = g.find(y) else { continue };
            if g.core_class(k) != Some(class) {
                continue;
            }
            let corner = |a: i64, b: i64, c: i64| -> f64 {
                self.at_lattice([y[0] + 2 * a, y[1] + 2 * b, y[2] + 2 * c]).as_f64()
            };
            let s = [
                (x[0] - y[0] as f64 * h) / (2.0 * h),
                (x[1] - y[1] as f64 * h) / (2.0 * h),
                (x[2] - y[2] as f64 * h) / (2.0 * h),
            ];
            let f1 = corner(0, 0, 0) + (corner(1, 0, 0) - corner(0, 0, 0)) * s[0];
            let f2 = corner(0, 1, 0) + (corner(1, 1, 0) - corner(0, 1, 0)) * s[0];
            let f3 = f1 + (f2 - f1) * s[1];
            let g1 = corner(0, 0, 1) + (corner(1, 0, 1) - corner(0, 0, 1)) * s[0];
            let g2 = corner(0, 1, 1) + (corner(1, 1, 1) - corner(0, 1, 1)) * s[0];
            let g3 = g1 + (g2 - g1) * s[1];
            return Ok(T::lit(f3 + (g3 - f3) * s[2]));
        }
        Err(Error::OutsideCoverage { point: x, class })
    }
}

/// Parities `(z1, z2, z3) mod 2` of the sublattice with the given 0-based index.
fn class_parity(class: usize) -> [i64; 3] {
    for b in 0..8i64 {
        let z = [b >> 2 & 1, b >> 1 & 1, b & 1];
        if parity_class(z) == class {
            return z;
        }
    }
    [0, 0, 0]
}

impl<T: Real> VectorField<T> {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField {
            grid: grid.clone(),
            values: vec![[T::zero(); 3]; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<[T; 3]>) -> Self {
        assert_eq!(values.len(), grid.len(), "field length must match the grid");
        VectorField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_components(c: [&ScalarField<T>; 3]) -> Result<Self> {
        c[0].check(c[1])?;
        c[0].check(c[2])?;
        let values = (0..c[0].values.len())
            .map(|k| [c[0].values[k], c[1].values[k], c[2].values[k]])
            .collect();
        Ok(VectorField {
            grid: c[0].grid.clone(),
            values,
        })
    }

    /// Point samples `values[k] = f(position of k)`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let v = f(grid.position(k));
                [T::lit(v[0]), T::lit(v[1]), T::lit(v[2])]
            })
            .collect();
        VectorField {
            grid: grid.clone(),
            values,
        }
    }

    /// Uniform random components in `[-1, 1]`, optionally zero on `∂Ω_h`.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, mode: SampleMode) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let v = [
                    T::lit(rng.gen_range(-1.0..=1.0)),
                    T::lit(rng.gen_range(-1.0..=1.0)),
                    T::lit(rng.gen_range(-1.0..=1.0)),
                ];
                if mode == SampleMode::InteriorOnly && grid.is_boundary(k) {
                    [T::zero(); 3]
                } else {
                    v
                }
            })
            .collect();
        VectorField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[[T; 3]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[T; 3]] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, k: usize) -> [T; 3] {
        self.values[k]
    }

    #[inline]
    pub fn at_ordinal(&self, o: u32) -> [T; 3] {
        if o == OUTSIDE {
            [T::zero(); 3]
        } else {
            self.values[o as usize]
        }
    }

    pub fn component(&self, i: usize) -> ScalarField<T> {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v[i]).collect(),
        }
    }

    pub fn check(&self, other: &Self) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `Σ u·v h³`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check(other)?;
        let mut s = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            s += a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        }
        Ok(s * T::lit(self.grid.h().powi(3)))
    }

    pub fn l2_norm(&self) -> T {
        self.sum_squares_over(0..self.grid.len()).sqrt()
    }

    /// `Σ_{k ∈ set} |u(k)|² h³`.
    pub fn sum_squares_over(&self, set: impl IntoIterator<Item = usize>) -> T {
        let mut s = T::zero();
        for k in set {
            let v = self.values[k];
            s += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        }
        s * T::lit(self.grid.h().powi(3))
    }

    /// `Σ_{Ω_h \ ∂Ω_h} |u|² h³`.
    pub fn interior_sum_squares(&self) -> T {
        self.sum_squares_over(self.grid.interior().iter().map(|&k| k as usize))
    }

    /// `max_x |u(x)|` (Euclidean length per point).
    pub fn linf_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| {
            m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        })
    }

    /// Largest absolute component value.
    pub fn max_abs_component(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| m.max(v[0].abs()).max(v[1].abs()).max(v[2].abs()))
    }

    pub fn scale(&mut self, a: T) {
        for v in &mut self.values {
            for c in v.iter_mut() {
                *c *= a;
            }
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.check(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            for i in 0..3 {
                s[i] += a * v[i];
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(T::one(), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    /// Sets the field to zero on `∂Ω_h`.
    pub fn zero_boundary(&mut self) {
        for k in 0..self.values.len() {
            if self.grid.is_boundary(k) {
                self.values[k] = [T::zero(); 3];
            }
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> VectorField<U> {
        VectorField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .map(|v| [U::lit(v[0].as_f64()), U::lit(v[1].as_f64()), U::lit(v[2].as_f64())])
                .collect(),
        }
    }

    /// Cell averages `h⁻³∫_{C_h(x)} f` by 2-point Gauss quadrature per axis.
    pub fn sample_cell_average(
        grid: &Arc<Grid>,
        f: impl Fn([f64; 3]) -> [f64; 3],
        mode: SampleMode,
    ) -> Self {
        Self::sample_cell_average_with_energy(grid, f, mode).0
    }

    /// Cell averages together with the same-node quadrature of `∫|f|²`
    /// over the cells of the sampled points.
    pub fn sample_cell_average_with_energy(
        grid: &Arc<Grid>,
        f: impl Fn([f64; 3]) -> [f64; 3],
        mode: SampleMode,
    ) -> (Self, f64) {
        let h = grid.h();
        let nodes = cell_nodes(h);
        let mut energy = 0.0;
        let values = (0..grid.len())
            .map(|k| {
                if mode == SampleMode::InteriorOnly && grid.is_boundary(k) {
                    return [T::zero(); 3];
                }
                let x = grid.position(k);
                let mut s = [0.0; 3];
                let mut sq = 0.0;
                for d in &nodes {
                    let v = f([x[0] + d[0], x[1] + d[1], x[2] + d[2]]);
                    for i in 0..3 {
                        s[i] += v[i];
                    }
                    sq += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                }
                energy += sq / 8.0 * h.powi(3);
                [T::lit(s[0] / 8.0), T::lit(s[1] / 8.0), T::lit(s[2] / 8.0)]
            })
            .collect();
        (
            VectorField {
                grid: grid.clone(),
                values,
            },
            energy,
        )
    }

    /// Space-time averages `τ⁻¹h⁻³∫_{t0}^{t1}∫_{C_h(x)} f` (2-point Gauss in
    /// space and time) and the same-node quadrature of `∫_{t0}^{t1}∫|f|²`.
    pub fn sample_space_time_average(
        grid: &Arc<Grid>,
        f: impl Fn(f64, [f64; 3]) -> [f64; 3],
        t0: f64,
        t1: f64,
        mode: SampleMode,
    ) -> (Self, f64) {
        let mid = 0.5 * (t0 + t1);
        let half = 0.5 * (t1 - t0) / 3f64.sqrt();
        let times = [mid - half, mid + half];
        let (a, ea) = Self::sample_cell_average_with_energy(grid, |x| f(times[0], x), mode);
        let (b, eb) = Self::sample_cell_average_with_energy(grid, |x| f(times[1], x), mode);
        let two = T::lit(0.5);
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(p, q)| [(p[0] + q[0]) * two, (p[1] + q[1]) * two, (p[2] + q[2]) * two])
            .collect();
        (
            VectorField {
                grid: grid.clone(),
                values,
            },
            0.5 * (ea + eb) * (t1 - t0),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ball(h: f64) -> Arc<Grid> {
        Arc::new(Grid::dirichlet(&DomainSpec::unit_ball(), h).unwrap())
    }

    #[test]
    fn single_point_inner() {
        let g = ball(0.1);
        let mut u = ScalarField::<f64>::zeros(&g);
        u.values_mut()[7] = 1.0;
        assert_relative_eq!(u.inner(&u).unwrap(), 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn spike_norms_are_tight() {
        let g = ball(0.1);
        let mut u = ScalarField::<f64>::zeros(&g);
        u.values_mut()[3] = -2.5;
        assert_relative_eq!(u.l2_norm(), 2.5 * 0.1f64.powf(1.5), max_relative = 1e-12);
        assert_eq!(u.linf_norm(), 2.5);
    }

    #[test]
    fn mismatch_detected() {
        let a = ScalarField::<f64>::zeros(&ball(0.1));
        let b = ScalarField::<f64>::zeros(&ball(0.09));
        assert_eq!(a.inner(&b), Err(Error::GridMismatch));
    }

    #[test]
    fn cell_average_of_constant_and_linear() {
        let g = ball(0.1);
        let c = ScalarField::<f64>::sample_cell_average(&g, |_| 2.0, SampleMode::InteriorOnly);
        let lin = ScalarField::<f64>::sample_cell_average(
            &g,
            |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2],
            SampleMode::All,
        );
        for k in 0..g.len() {
            let expected = if g.is_boundary(k) { 0.0 } else { 2.0 };
            assert_relative_eq!(c.at(k), expected, epsilon = 1e-14);
            let x = g.position(k);
            assert_relative_eq!(lin.at(k), 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2], epsilon = 1e-13);
        }
    }

    #[test]
    fn trilinear_corner_center_affine() {
        let g = ball(0.1);
        let affine = |x: [f64; 3]| 0.3 - x[0] + 2.0 * x[1] + 0.7 * x[2];
        let u = ScalarField::<f64>::from_fn(&g, affine);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in 0..8 {
            let anchors = &g.sublattices()[class];
            let y = anchors[anchors.len() / 2] as usize;
            let p = g.position(y);
            assert_relative_eq!(u.interpolate_trilinear(class, p).unwrap(), u.at(y), epsilon = 1e-13);
            let c = [p[0] + 0.1, p[1] + 0.1, p[2] + 0.1];
            let z = g.points()[y];
            let mut mean = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    for d in 0..2 {
                        mean += u.at_lattice([z[0] + 2 * a, z[1] + 2 * b, z[2] + 2 * d]) / 8.0;
                    }
                }
            }
            assert_relative_eq!(u.interpolate_trilinear(class, c).unwrap(), mean, epsilon = 1e-13);
            for _ in 0..100 {
                let q = [
                    p[0] + rng.gen_range(0.0..0.2),
                    p[1] + rng.gen_range(0.0..0.2),
                    p[2] + rng.gen_range(0.0..0.2),
                ];
                assert_relative_eq!(u.interpolate_trilinear(class, q).unwrap(), affine(q), epsilon = 1e-12);
            }
        }
        assert!(matches!(
            u.interpolate_trilinear(0, [5.0, 5.0, 5.0]),
            Err(Error::OutsideCoverage { .. })
        ));
    }

    #[test]
    fn linf_l2_inequality() {
        let g = ball(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = VectorField::<f64>::random(&g, &mut rng, SampleMode::All);
        let h = g.h();
        assert!(u.linf_norm() * h.powf(1.5) < u.l2_norm());
        let v = VectorField::<f64>::random(&g, &mut rng, SampleMode::All);
        assert!(u.inner(&v).unwrap().abs() <= u.l2_norm() * v.l2_norm());
    }
}
