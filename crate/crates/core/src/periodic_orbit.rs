//! Time-periodic forcing, the time-1 map and its fixed points, and
//! contraction diagnostics for small solutions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SampleMode, VectorField};
use crate::grid::Grid;
use crate::harness::linear_fit;
use crate::scalar::Real;
use crate::stepper::{ForcingFn, SolverSettings, Stepper};

/// `f` with period 1, sampled once per step of a period of `T₁` steps.
#[derive(Clone)]
pub struct PeriodicForcing<T> {
    f: ForcingFn,
    steps: usize,
    samples: Vec<VectorField<T>>,
    energies: Vec<f64>,
}

impl<T> fmt::Debug for PeriodicForcing<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicForcing")
            .field("steps", &self.steps)
            .field("energies", &self.energies)
            .finish()
    }
}

impl<T: Real> PeriodicForcing<T> {
    /// Samples `fⁿ` for `n < T₁` with `τ = 1/T₁`.
    pub fn new(grid: &Arc<Grid>, f: ForcingFn, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter {
                name: "steps_per_period",
                reason: "must be positive".into(),
            });
        }
        let tau = 1.0 / steps as f64;
        let (samples, energies) = (0..steps)
            .into_par_iter()
            .map(|n| {
                VectorField::sample_space_time_average(
                    grid,
                    f.as_ref(),
                    n as f64 * tau,
                    (n + 1) as f64 * tau,
                    SampleMode::All,
                )
            })
            .unzip();
        Ok(PeriodicForcing {
            f,
            steps,
            samples,
            energies,
        })
    }

    pub fn zero(grid: &Arc<Grid>, steps: usize) -> Result<Self> {
        Self::new(grid, Arc::new(|_, _| [0.0; 3]), steps)
    }

    /// `ε f`.
    pub fn scaled(&self, eps: f64) -> Self {
        let f = self.f.clone();
        PeriodicForcing {
            f: Arc::new(move |t, x| f(t, x).map(|v| eps * v)),
            steps: self.steps,
            samples: self.samples.iter().map(|s| s.scaled(T::lit(eps))).collect(),
            energies: self.energies.iter().map(|e| e * eps * eps).collect(),
        }
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn function(&self) -> &ForcingFn {
        &self.f
    }

    /// `fⁿ`, periodic in `n`.
    pub fn sample(&self, n: usize) -> &VectorField<T> {
        &self.samples[n % self.steps]
    }

    /// Quadrature of `∫_{nτ}^{(n+1)τ}‖f‖²`.
    pub fn energy(&self, n: usize) -> f64 {
        self.energies[n % self.steps]
    }

    /// Sliding bound `α = (Σ_{n<T₁}‖fⁿ‖²τ)^{1/2}`; every window of `T₁` steps gives the same sum.
    pub fn alpha(&self) -> f64 {
        let tau = self.tau();
        self.samples
            .iter()
            .map(|s| s.l2_norm().as_f64().powi(2) * tau)
            .sum::<f64>()
            .sqrt()
    }

    /// Quadrature of `‖f‖_{L²([0,1];L²)}`; bounds [`PeriodicForcing::alpha`] from above.
    pub fn alpha_quadrature(&self) -> f64 {
        self.energies.iter().sum::<f64>().sqrt()
    }
}

/// `β₀ = νÂ⁻¹/4`.
pub fn beta0(a_hat: f64, nu: f64) -> f64 {
    nu / (4.0 * a_hat)
}

/// `1/(1 + τνÂ⁻²)`.
pub fn per_step_contraction(a_hat: f64, tau: f64, nu: f64) -> f64 {
    1.0 / (1.0 + tau * nu / (a_hat * a_hat))
}

fn max_magnitude<T: Real>(u: &VectorField<T>) -> f64 {
    u.values().iter().fold(0.0f64, |m, v| {
        m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().as_f64())
    })
}

/// `Φ_δ: ũ⁰ ↦ ũ^{T₁}`.
#[derive(Debug, Clone)]
pub struct TimeOneMap<T> {
    stepper: Stepper<T>,
    forcing: PeriodicForcing<T>,
}

impl<T: Real> TimeOneMap<T> {
    pub fn new(grid: &Arc<Grid>, nu: f64, settings: SolverSettings, forcing: PeriodicForcing<T>) -> Result<Self> {
        if forcing.samples[0].grid().fingerprint() != grid.fingerprint() {
            return Err(Error::GridMismatch);
        }
        let stepper = Stepper::new(grid, forcing.tau(), nu, settings)?.with_history(0);
        Ok(TimeOneMap { stepper, forcing })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.stepper.grid()
    }

    pub fn forcing(&self) -> &PeriodicForcing<T> {
        &self.forcing
    }

    pub fn stepper(&self) -> &Stepper<T> {
        &self.stepper
    }

    pub fn tau(&self) -> f64 {
        self.forcing.tau()
    }

    pub fn nu(&self) -> f64 {
        self.stepper.nu()
    }

    /// Restarts from `ũ⁰` at `t = 0`.
    pub fn start(&mut self, u_tilde0: &VectorField<T>) -> Result<()> {
        self.stepper.init_from_discrete(u_tilde0.clone(), None)
    }

    /// One step of the running trajectory; returns `ũ^{n+1}`.
    pub fn advance(&mut self) -> Result<&VectorField<T>> {
        let n = self.stepper.state().n;
        self.stepper.step(self.forcing.sample(n), Some(self.forcing.energy(n)))?;
        Ok(&self.stepper.state().u_tilde)
    }

    pub fn apply(&mut self, u_tilde0: &VectorField<T>) -> Result<VectorField<T>> {
        self.apply_observed(u_tilde0, |_, _| {})
    }

    /// As [`TimeOneMap::apply`], calling `observer(n, ũⁿ)` for `n = 0..=T₁`.
    pub fn apply_observed(
        &mut self,
        u_tilde0: &VectorField<T>,
        mut observer: impl FnMut(usize, &VectorField<T>),
    ) -> Result<VectorField<T>> {
        self.start(u_tilde0)?;
        observer(0, &self.stepper.state().u_tilde);
        for n in 1..=self.forcing.steps {
            observer(n, self.advance()?);
        }
        Ok(self.stepper.state().u_tilde.clone())
    }

    /// `ũⁿ` for `n = 0..=periods·T₁`.
    pub fn orbit(&mut self, u_tilde0: &VectorField<T>, periods: usize) -> Result<Vec<VectorField<T>>> {
        self.start(u_tilde0)?;
        let mut out = vec![self.stepper.state().u_tilde.clone()];
        for _ in 0..periods * self.forcing.steps {
            out.push(self.advance()?.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Acceleration {
    Picard,
    /// Anderson mixing over the last `m ≤ 5` residuals.
    Anderson { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub acceleration: Acceleration,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-8,
            max_iter: 200,
            acceleration: Acceleration::Picard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    /// Number of evaluations of `Φ_δ`.
    pub iterations: usize,
    /// `‖Φ_δ(ũ⁰) − ũ⁰‖_{Ω_h}` at the returned iterate.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// `max_n max_x |ũⁿ(x)|` over one period of the returned orbit.
    pub max_abs: f64,
    pub a_hat: f64,
    pub beta0: f64,
    /// `max_abs < β₀`.
    pub certified_small: bool,
}

/// A fixed-point search that stopped without reaching the tolerance.
#[derive(Debug, Clone)]
pub struct FixedPointFailure<T> {
    pub error: Error,
    pub best: VectorField<T>,
    pub report: FixedPointReport,
}

impl<T> fmt::Display for FixedPointFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl<T: fmt::Debug> std::error::Error for FixedPointFailure<T> {}

struct Anderson {
    m: usize,
    dx: Vec<Vec<f64>>,
    dr: Vec<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    fn new(m: usize) -> Self {
        Anderson {
            m,
            dx: Vec::new(),
            dr: Vec::new(),
            last: None,
        }
    }

    /// Next iterate from `x` and its residual `r = Φ(x) − x`.
    fn next(&mut self, x: Vec<f64>, r: Vec<f64>) -> Vec<f64> {
        if let Some((xp, rp)) = self.last.take() {
            self.dx.push(x.iter().zip(&xp).map(|(a, b)| a - b).collect());
            self.dr.push(r.iter().zip(&rp).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.m {
                self.dx.remove(0);
                self.dr.remove(0);
            }
        }
        let mut out: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a + b).collect();
        let k = self.dr.len();
        if k > 0 {
            let f = DMatrix::from_fn(r.len(), k, |i, j| self.dr[j][i]);
            let rhs = DVector::from_column_slice(&r);
            if let Ok(gamma) = f.clone().svd(true, true).solve(&rhs, 1e-12) {
                for j in 0..k {
                    let g = gamma[j];
                    for i in 0..out.len() {
                        out[i] -= g * (self.dx[j][i] + self.dr[j][i]);
                    }
                }
            }
        }
        self.last = Some((x, r));
        out
    }
}

fn flatten<T: Real>(u: &VectorField<T>) -> Vec<f64> {
    u.values().iter().flat_map(|v| v.map(|c| c.as_f64())).collect()
}

fn unflatten<T: Real>(grid: &Arc<Grid>, x: &[f64]) -> VectorField<T> {
    VectorField::from_values(
        grid,
        x.chunks_exact(3).map(|c| [T::lit(c[0]), T::lit(c[1]), T::lit(c[2])]).collect(),
    )
}

/// Searches for `ũ⁰ = Φ_δ(ũ⁰)` starting from 0.
pub fn find_fixed_point<T: Real>(
    map: &mut TimeOneMap<T>,
    opts: &FixedPointOptions,
    a_hat: f64,
) -> std::result::Result<(VectorField<T>, FixedPointReport), FixedPointFailure<T>> {
    let grid = map.grid().clone();
    let fail = |error: Error, best: VectorField<T>, report: FixedPointReport| FixedPointFailure { error, best, report };
    let b0 = beta0(a_hat, map.nu());
    let mut report = FixedPointReport {
        iterations: 0,
        residual: f64::INFINITY,
        residual_history: Vec::new(),
        converged: false,
        max_abs: 0.0,
        a_hat,
        beta0: b0,
        certified_small: false,
    };
    if !(opts.tol > 0.0) {
        return Err(fail(
            Error::InvalidParameter {
                name: "tol",
                reason: format!("must be positive, got {}", opts.tol),
            },
            VectorField::zeros(&grid),
            report,
        ));
    }
    let mut anderson = match opts.acceleration {
        Acceleration::Picard => None,
        Acceleration::Anderson { m } => Some(Anderson::new(m.clamp(1, 5))),
    };
    let mut x = VectorField::<T>::zeros(&grid);
    let mut best = (f64::INFINITY, x.clone());
    while report.iterations < opts.max_iter {
        let mut max_abs = 0.0f64;
        let gx = match map.apply_observed(&x, |_, u| max_abs = max_abs.max(max_magnitude(u))) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, best.1, report)),
        };
        report.iterations += 1;
        let r = gx.sub(&x).expect("same grid");
        let res = r.l2_norm().as_f64();
        report.residual_history.push(res);
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= opts.tol {
            report.residual = res;
            report.converged = true;
            report.max_abs = max_abs;
            report.certified_small = max_abs < b0;
            return Ok((x, report));
        }
        x = match anderson.as_mut() {
            None => gx,
            Some(acc) => unflatten(&grid, &acc.next(flatten(&x), flatten(&r))),
        };
    }
    report.residual = best.0;
    Err(fail(
        Error::NotConverged {
            solver: "fixed point",
            iterations: report.iterations,
            residual: best.0,
            tol: opts.tol,
        },
        best.1,
        report,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// `‖b̃ⁿ‖` for `n = 0..=n_steps`.
    pub norms: Vec<f64>,
    /// `‖b̃^{n+1}‖/‖b̃ⁿ‖` (0 once the difference vanishes).
    pub ratios: Vec<f64>,
    /// Differences below this are solver noise and are left out of the checks.
    pub noise_floor: f64,
    /// Number of ratios with both norms above the noise floor.
    pub resolved_steps: usize,
    /// `1/(1 + τνÂ⁻²)`.
    pub per_step_bound: f64,
    pub slack: f64,
    pub ratios_hold: bool,
    /// `‖b̃ⁿ‖ ≤ e^{−(νÂ⁻²/2)nτ}‖b̃⁰‖` (with slack) for every `n`.
    pub cumulative_holds: bool,
    /// Least-squares slope of `ln‖b̃ⁿ‖` against `t = nτ`.
    pub fitted_exponent: Option<f64>,
    /// `−νÂ⁻²/2`.
    pub exponent_bound: f64,
    /// `max_n max_x |ũ_aⁿ(x)|`.
    pub max_abs_a: f64,
    pub beta0: f64,
}

/// Runs the trajectories from `a0` (which must stay below `β₀`) and `b0`
/// in lockstep and measures the decay of their difference.
pub fn contraction_test<T: Real>(
    map: &TimeOneMap<T>,
    a0: &VectorField<T>,
    b0: &VectorField<T>,
    n_steps: usize,
    a_hat: f64,
) -> Result<ContractionReport> {
    let slack = 0.05;
    let tau = map.tau();
    let nu = map.nu();
    let beta = beta0(a_hat, nu);
    let mut a = map.clone();
    let mut b = map.clone();
    a.start(a0)?;
    b.start(b0)?;
    let diff = |a: &TimeOneMap<T>, b: &TimeOneMap<T>| {
        a.stepper().state().u_tilde.sub(&b.stepper().state().u_tilde).expect("same grid").l2_norm().as_f64()
    };
    let mut max_abs_a = max_magnitude(&a.stepper().state().u_tilde);
    let mut norms = vec![diff(&a, &b)];
    for n in 0..n_steps {
        let (ra, rb) = rayon::join(|| a.advance().map(|_| ()), || b.advance().map(|_| ()));
        ra?;
        rb?;
        let m = max_magnitude(&a.stepper().state().u_tilde);
        max_abs_a = max_abs_a.max(m);
        if max_abs_a > beta {
            return Err(Error::SmallnessViolated {
                max_abs: max_abs_a,
                beta0: beta,
                step: n + 1,
            });
        }
        norms.push(diff(&a, &b));
    }
    let ratios: Vec<f64> = norms
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect();
    let bound = per_step_contraction(a_hat, tau, nu);
    let rate = nu / (a_hat * a_hat) / 2.0;
    let noise_floor = 1e-10 * a0.l2_norm().as_f64().max(b0.l2_norm().as_f64()).max(1.0);
    let resolved = norms.iter().take_while(|&&v| v > noise_floor).count();
    let resolved_steps = resolved.saturating_sub(1);
    let ratios_hold = ratios[..resolved_steps].iter().all(|&r| r <= bound * (1.0 + slack));
    let cumulative_holds = norms
        .iter()
        .enumerate()
        .all(|(n, &v)| v <= (-rate * n as f64 * tau).exp() * norms[0] * (1.0 + slack) + noise_floor);
    let (t, l): (Vec<f64>, Vec<f64>) = norms[..resolved]
        .iter()
        .enumerate()
        .map(|(n, &v)| (n as f64 * tau, v.ln()))
        .unzip();
    Ok(ContractionReport {
        norms,
        ratios,
        noise_floor,
        resolved_steps,
        per_step_bound: bound,
        slack,
        ratios_hold,
        cumulative_holds,
        fitted_exponent: linear_fit(&t, &l).map(|f| f.slope),
        exponent_bound: -rate,
        max_abs_a,
        beta0: beta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// Largest pairwise distance between `Φ^m(ũ⁰_k)` over the starts, `m = 0..=periods`.
    pub spread: Vec<f64>,
    /// Distance of each start to the reference after the last period.
    pub final_distance: Vec<f64>,
    /// Starts farther than `10·tol` from the reference at the end.
    pub divergent_starts: Vec<usize>,
    /// Whether the spread decreases monotonically once it falls below its initial value.
    pub monotone_after_entry: bool,
}

/// Iterates `Φ_δ` from `k_starts` random divergence-compatible data of norm
/// at most `radius` and compares the resulting orbits with `reference`.
pub fn uniqueness_probe<T: Real>(
    map: &TimeOneMap<T>,
    reference: &VectorField<T>,
    k_starts: usize,
    radius: f64,
    periods: usize,
    tol: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    let grid = map.grid().clone();
    let starts: Vec<VectorField<T>> = (0..k_starts)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut u = VectorField::<T>::random(&grid, &mut rng, SampleMode::InteriorOnly);
            let n = u.l2_norm().as_f64();
            let s = radius * (k + 1) as f64 / k_starts as f64;
            if n > 0.0 {
                u.scale(T::lit(s / n));
            }
            u
        })
        .collect();
    let paths: Vec<Result<Vec<VectorField<T>>>> = starts
        .par_iter()
        .map(|u0| {
            let mut m = map.clone();
            let mut path = vec![u0.clone()];
            let mut u = u0.clone();
            for _ in 0..periods {
                u = m.apply(&u)?;
                path.push(u.clone());
            }
            Ok(path)
        })
        .collect();
    let paths: Vec<Vec<VectorField<T>>> = paths.into_iter().collect::<Result<_>>()?;
    let dist = |a: &VectorField<T>, b: &VectorField<T>| a.sub(b).expect("same grid").l2_norm().as_f64();
    let spread: Vec<f64> = (0..=periods)
        .map(|m| {
            let mut s = 0.0f64;
            for i in 0..paths.len() {
                for j in i + 1..paths.len() {
                    s = s.max(dist(&paths[i][m], &paths[j][m]));
                }
            }
            s
        })
        .collect();
    let final_distance: Vec<f64> = paths.iter().map(|p| dist(&p[periods], reference)).collect();
    let divergent_starts = final_distance
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 10.0 * tol)
        .map(|(k, _)| k)
        .collect();
    let entry = spread.iter().skip(1).position(|&s| s < spread[0]).map(|p| p + 1);
    // Below the solver noise floor the spread only fluctuates.
    let floor = 10.0 * tol;
    let monotone_after_entry = entry.map_or(true, |e| {
        spread[e..].windows(2).all(|w| w[1] <= w[0] || w[1] <= floor)
    });
    Ok(UniquenessReport {
        spread,
        final_distance,
        divergent_starts,
        monotone_after_entry,
    })
}
