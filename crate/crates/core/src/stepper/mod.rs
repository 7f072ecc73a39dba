//! The discrete Navier–Stokes recurrence: implicit momentum step followed by
//! the discrete Hodge projection.

mod ledger;
mod momentum;
mod poincare;
mod sources;

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use ledger::{EnergyLedger, InitialRecord, StepChecks, StepRecord, LEDGER_SLACK};
pub use momentum::{stencil_residual, MomentumAssembler, MomentumReport};
pub use poincare::{
    directional_stiffness, estimate_poincare_i, estimate_poincare_ii, poincare_i_ratio, poincare_ii_ratio,
    r0_bound, PoincareEstimate, POWER_CAP, POWER_TOL,
};
pub use sources::{ForcingFn, ForcingSpec, InitialSpec, VelocityFn};

use crate::calculus::{divergence, forward_dissipation};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::{SampleMode, ScalarField, VectorField};
use crate::grid::Grid;
use crate::hodge::HodgeSolver;
use crate::scalar::Real;
use ledger::StepMeasure;

/// How `τ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeStepRule {
    /// `τ = θ h^{3/4}`
    ThetaH34 { theta: f64 },
    /// `τ = θ h²`
    ThetaH2 { theta: f64 },
    Explicit { tau: f64 },
}

impl TimeStepRule {
    pub fn tau(&self, h: f64) -> Result<f64> {
        let (tau, name) = match *self {
            TimeStepRule::ThetaH34 { theta } => (theta * h.powf(0.75), "time_step.theta"),
            TimeStepRule::ThetaH2 { theta } => (theta * h * h, "time_step.theta"),
            TimeStepRule::Explicit { tau } => (tau, "time_step.tau"),
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("gives τ = {tau}, which is not positive"),
            });
        }
        Ok(tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative tolerance of the pressure solves.
    pub hodge_tol: f64,
    /// Relative tolerance of the momentum solves.
    pub momentum_tol: f64,
    pub gmres_restart: usize,
    pub momentum_cap: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            hodge_tol: 1e-10,
            momentum_tol: 1e-12,
            gmres_restart: 40,
            momentum_cap: 4000,
        }
    }
}

impl SolverSettings {
    /// Defaults scaled to the precision of `T`.
    pub fn for_precision<T: Real>() -> Self {
        let eps = T::epsilon().as_f64();
        let d = SolverSettings::default();
        SolverSettings {
            hodge_tol: d.hodge_tol.max(100.0 * eps),
            momentum_tol: d.momentum_tol.max(10.0 * eps),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("solver.hodge_tol", self.hodge_tol), ("solver.momentum_tol", self.momentum_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must lie in (0, 1), got {v}"),
                });
            }
        }
        if self.gmres_restart == 0 || self.momentum_cap == 0 {
            return Err(Error::InvalidParameter {
                name: "solver",
                reason: "restart length and iteration cap must be positive".into(),
            });
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}

fn default_keep() -> usize {
    2
}

/// A complete simulation description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain: DomainSpec,
    /// Mesh size; implied by `n` on the torus.
    #[serde(default)]
    pub h: Option<f64>,
    pub time_step: TimeStepRule,
    #[serde(default = "one")]
    pub nu: f64,
    /// Horizon `T`; the run takes `⌊T/τ⌋` steps.
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Dump fields every this many steps (0: never).
    #[serde(default)]
    pub output_every: usize,
    /// Number of recent states kept in memory.
    #[serde(default = "default_keep")]
    pub keep_last: usize,
}

impl SimConfig {
    pub fn new(domain: DomainSpec, h: Option<f64>, time_step: TimeStepRule) -> Self {
        SimConfig {
            domain,
            h,
            time_step,
            nu: 1.0,
            t_final: None,
            steps: None,
            solver: SolverSettings::default(),
            forcing: ForcingSpec::Zero,
            initial: InitialSpec::Zero,
            output_every: 0,
            keep_last: default_keep(),
        }
    }

    pub fn mesh_size(&self) -> Result<f64> {
        match (&self.domain, self.h) {
            (DomainSpec::Torus { n }, None) if *n > 0 => Ok(1.0 / *n as f64),
            (DomainSpec::Torus { n }, Some(h)) => {
                if *n > 0 && (h * *n as f64 - 1.0).abs() < 1e-12 {
                    Ok(h)
                } else {
                    Err(Error::InvalidParameter {
                        name: "h",
                        reason: format!("torus with n = {n} has h = 1/n, got {h}"),
                    })
                }
            }
            (DomainSpec::Torus { n }, None) => Err(Error::InvalidN(*n)),
            (_, Some(h)) if h > 0.0 && h.is_finite() => Ok(h),
            (_, Some(h)) => Err(Error::InvalidParameter {
                name: "h",
                reason: format!("must be positive, got {h}"),
            }),
            (_, None) => Err(Error::InvalidParameter {
                name: "h",
                reason: "required for bounded domains".into(),
            }),
        }
    }

    pub fn tau(&self) -> Result<f64> {
        self.time_step.tau(self.mesh_size()?)
    }

    /// `T_τ = ⌊T/τ⌋`, or the explicit step count.
    pub fn num_steps(&self) -> Result<usize> {
        match (self.t_final, self.steps) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter {
                name: "t_final",
                reason: "give either t_final or steps, not both".into(),
            }),
            (None, Some(s)) => Ok(s),
            (Some(t), None) if t >= 0.0 && t.is_finite() => Ok((t / self.tau()? + 1e-9).floor() as usize),
            (Some(t), None) => Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("must be finite and non-negative, got {t}"),
            }),
            (None, None) => Err(Error::InvalidParameter {
                name: "t_final",
                reason: "a horizon t_final or a step count is required".into(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.tau()?;
        self.num_steps()?;
        self.solver.validate()?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("must be positive, got {}", self.nu),
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(&self.domain, self.mesh_size()?)?))
    }
}

/// State after step `n`.
#[derive(Debug, Clone)]
pub struct SimState<T> {
    pub n: usize,
    pub t: f64,
    /// `uⁿ`, divergence-free.
    pub u: VectorField<T>,
    /// `ũⁿ`.
    pub u_tilde: VectorField<T>,
}

impl<T: Real> SimState<T> {
    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }
}

/// Drives the recurrence on one grid with fixed `τ` and `ν`.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    tau: f64,
    nu: f64,
    settings: SolverSettings,
    momentum: MomentumAssembler,
    hodge: HodgeSolver<T>,
    state: SimState<T>,
    phi: Option<ScalarField<T>>,
    ledger: EnergyLedger,
    history: VecDeque<SimState<T>>,
    keep_last: usize,
}

impl<T: Real> Stepper<T> {
    pub fn new(grid: &Arc<Grid>, tau: f64, nu: f64, settings: SolverSettings) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be positive, got {tau}"),
            });
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("must be positive, got {nu}"),
            });
        }
        settings.validate()?;
        let zero = VectorField::zeros(grid);
        Ok(Stepper {
            tau,
            nu,
            settings,
            momentum: MomentumAssembler::new(grid),
            hodge: HodgeSolver::new(grid),
            state: SimState {
                n: 0,
                t: 0.0,
                u: zero.clone(),
                u_tilde: zero,
            },
            phi: None,
            ledger: EnergyLedger::new(tau, nu),
            history: VecDeque::new(),
            keep_last: default_keep(),
        })
    }

    /// Number of recent states retained by [`Stepper::history`].
    pub fn with_history(mut self, keep_last: usize) -> Self {
        self.keep_last = keep_last;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.momentum.grid()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn state(&self) -> &SimState<T> {
        &self.state
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn hodge(&self) -> &HodgeSolver<T> {
        &self.hodge
    }

    /// Most recent states, oldest first (the current state is last).
    pub fn history(&self) -> impl Iterator<Item = &SimState<T>> {
        self.history.iter()
    }

    /// `ũ⁰` = interior cell averages of `v0`, `u⁰ = P_h ũ⁰`.
    pub fn init(&mut self, v0: &(dyn Fn([f64; 3]) -> [f64; 3] + Sync)) -> Result<()> {
        let (ut, energy) = VectorField::<T>::sample_cell_average_with_energy(self.grid(), v0, SampleMode::InteriorOnly);
        self.init_from_discrete(ut, Some(energy.sqrt()))
    }

    /// Starts from a given `ũ⁰` (its boundary values are discarded).
    pub fn init_from_discrete(&mut self, mut u_tilde0: VectorField<T>, norm_v0: Option<f64>) -> Result<()> {
        if u_tilde0.grid().fingerprint() != self.grid().fingerprint() {
            return Err(Error::GridMismatch);
        }
        u_tilde0.zero_boundary();
        let dec = self.hodge.decompose(&u_tilde0, T::lit(self.settings.hodge_tol))?;
        self.ledger = EnergyLedger::new(self.tau, self.nu);
        self.ledger.initial = Some(InitialRecord::new(
            norm_v0,
            u_tilde0.l2_norm().as_f64(),
            dec.w.l2_norm().as_f64(),
        ));
        self.state = SimState {
            n: 0,
            t: 0.0,
            u: dec.w,
            u_tilde: u_tilde0,
        };
        self.phi = Some(dec.phi);
        self.history.clear();
        self.remember();
        Ok(())
    }

    fn remember(&mut self) {
        if self.keep_last == 0 {
            return;
        }
        while self.history.len() >= self.keep_last {
            self.history.pop_front();
        }
        self.history.push_back(self.state.clone());
    }

    /// `ũ^{n+1}` from the current `uⁿ` without advancing.
    pub fn momentum_step(&self, f_n: &VectorField<T>) -> Result<(VectorField<T>, MomentumReport)> {
        self.momentum.solve(
            &self.state.u,
            f_n,
            T::lit(self.tau),
            T::lit(self.nu),
            T::lit(self.settings.momentum_tol),
            self.settings.gmres_restart,
            self.settings.momentum_cap,
        )
    }

    /// Advances by one step with the discrete forcing `fⁿ`. `forcing_energy`
    /// is a quadrature of `∫_{nτ}^{(n+1)τ}‖f‖²` when `fⁿ` came from continuum data.
    pub fn step(&mut self, f_n: &VectorField<T>, forcing_energy: Option<f64>) -> Result<&StepRecord> {
        let tol = self.settings.hodge_tol;
        let (ut, mom) = self.momentum_step(f_n)?;
        let dec = self
            .hodge
            .decompose_from(&ut, T::lit(tol), self.phi.as_ref())
            .map_err(|e| match e {
                Error::NotConverged { iterations, residual, .. } => Error::SolverDivergence {
                    class: 0,
                    iterations,
                    residual,
                },
                e => e,
            })?;
        let div_tilde = divergence(&ut)
            .values()
            .iter()
            .map(|d| d.as_f64().powi(2))
            .sum::<f64>()
            .sqrt();
        let measure = StepMeasure {
            norm_u_prev: self.state.u.l2_norm().as_f64(),
            norm_u: dec.w.l2_norm().as_f64(),
            norm_u_tilde: ut.l2_norm().as_f64(),
            dissipation: forward_dissipation(&ut).as_f64(),
            norm_f: f_n.l2_norm().as_f64(),
            forcing_energy,
            div_max: dec.residual_div,
            div_bound: 10.0 * tol * div_tilde.max(1.0),
            momentum_iterations: mom.iterations,
            momentum_residual: mom.residual,
            stencil_residual: mom.stencil_residual,
            hodge_iterations: dec.iterations,
        };
        self.state = SimState {
            n: self.state.n + 1,
            t: (self.state.n + 1) as f64 * self.tau,
            u: dec.w,
            u_tilde: ut,
        };
        self.phi = Some(dec.phi);
        self.remember();
        Ok(self.ledger.record(measure))
    }

    /// `fⁿ` = space-time cell averages of `f` over `[nτ, (n+1)τ]`.
    pub fn sample_forcing(&self, f: &(dyn Fn(f64, [f64; 3]) -> [f64; 3] + Sync)) -> (VectorField<T>, f64) {
        let t0 = self.state.n as f64 * self.tau;
        VectorField::sample_space_time_average(self.grid(), f, t0, t0 + self.tau, SampleMode::All)
    }

    pub fn step_forced(&mut self, f: &(dyn Fn(f64, [f64; 3]) -> [f64; 3] + Sync)) -> Result<&StepRecord> {
        let (f_n, e) = self.sample_forcing(f);
        self.step(&f_n, Some(e))
    }

    /// Takes `count` forced steps, calling `observer` after each.
    pub fn run_steps(
        &mut self,
        count: usize,
        f: &(dyn Fn(f64, [f64; 3]) -> [f64; 3] + Sync),
        mut observer: impl FnMut(&SimState<T>, &StepRecord) -> Result<()>,
    ) -> Result<()> {
        for _ in 0..count {
            self.step_forced(f)?;
            let rec = self.ledger.steps.last().expect("recorded");
            observer(&self.state, rec)?;
        }
        Ok(())
    }
}

/// A failed run with whatever was computed before the failure.
pub struct RunFailure {
    pub error: Error,
    pub stepper: Option<Box<Stepper<f64>>>,
}

impl fmt::Debug for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunFailure")
            .field("error", &self.error)
            .field("completed_steps", &self.stepper.as_ref().map(|s| s.state().n))
            .finish()
    }
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stepper {
            Some(s) => write!(f, "{} (after {} steps)", self.error, s.state().n),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for RunFailure {}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, stepper: None }
    }
}

/// Runs `config` with explicit initial velocity and forcing.
pub fn run_with(
    config: &SimConfig,
    v0: &(dyn Fn([f64; 3]) -> [f64; 3] + Sync),
    f: &(dyn Fn(f64, [f64; 3]) -> [f64; 3] + Sync),
    observer: impl FnMut(&SimState<f64>, &StepRecord) -> Result<()>,
) -> std::result::Result<Stepper<f64>, RunFailure> {
    config.validate()?;
    let grid = config.grid()?;
    let mut s = Stepper::new(&grid, config.tau()?, config.nu, config.solver)?.with_history(config.keep_last);
    s.init(v0)?;
    match s.run_steps(config.num_steps()?, f, observer) {
        Ok(()) => Ok(s),
        Err(error) => Err(RunFailure {
            error,
            stepper: Some(Box::new(s)),
        }),
    }
}

/// Runs `config` with the initial data and forcing it describes.
pub fn run(
    config: &SimConfig,
    observer: impl FnMut(&SimState<f64>, &StepRecord) -> Result<()>,
) -> std::result::Result<Stepper<f64>, RunFailure> {
    let v0 = config.initial.build(&config.domain)?;
    let f = config.forcing.build(&config.domain, config.nu)?;
    run_with(config, v0.as_ref(), f.as_ref(), observer)
}
