use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{linear_fit, LinearFit};
use super::solutions::{forcing_value, ManufacturedSolution, ManufacturedSpec};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::Grid;
use crate::scalar::Real;
use crate::stepper::{SimConfig, SimState, SolverSettings, Stepper, TimeStepRule};

/// Fits whose log–log residual exceeds this are flagged.
pub const FIT_RESIDUAL_FLAG: f64 = 0.2;

/// Errors of a trajectory against point samples `v(nτ, ·)` on `Ω_h`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorSeries {
    pub n: Vec<usize>,
    pub t: Vec<f64>,
    /// `‖uⁿ − v(nτ)‖_{Ω_h}`
    pub l2_u: Vec<f64>,
    /// `‖ũⁿ − v(nτ)‖_{Ω_h}`
    pub l2_u_tilde: Vec<f64>,
    pub linf_u: Vec<f64>,
    pub linf_u_tilde: Vec<f64>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x))
}

impl ErrorSeries {
    pub fn push<T: Real>(&mut self, state: &SimState<T>, ms: &dyn ManufacturedSolution) {
        let exact = VectorField::<f64>::from_fn(state.grid(), |x| ms.velocity(state.t, x));
        let eu = state.u.cast::<f64>().sub(&exact).expect("same grid");
        let et = state.u_tilde.cast::<f64>().sub(&exact).expect("same grid");
        self.n.push(state.n);
        self.t.push(state.t);
        self.l2_u.push(eu.l2_norm());
        self.l2_u_tilde.push(et.l2_norm());
        self.linf_u.push(eu.linf_norm());
        self.linf_u_tilde.push(et.linf_norm());
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn max_l2_u(&self) -> f64 {
        max_of(&self.l2_u)
    }

    pub fn max_l2_u_tilde(&self) -> f64 {
        max_of(&self.l2_u_tilde)
    }

    pub fn max_linf_u_tilde(&self) -> f64 {
        max_of(&self.linf_u_tilde)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "t", "l2_u", "l2_u_tilde", "linf_u", "linf_u_tilde"])?;
        for k in 0..self.len() {
            w.write_record([
                self.n[k].to_string(),
                self.t[k].to_string(),
                self.l2_u[k].to_string(),
                self.l2_u_tilde[k].to_string(),
                self.linf_u[k].to_string(),
                self.linf_u_tilde[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Error series of recorded states.
pub fn error_series<'a, T: Real + 'a>(
    states: impl IntoIterator<Item = &'a SimState<T>>,
    ms: &dyn ManufacturedSolution,
) -> ErrorSeries {
    let mut s = ErrorSeries::default();
    for st in states {
        s.push(st, ms);
    }
    s
}

/// Runs `steps` steps from the cell averages of `v(0, ·)` with the synthesised
/// forcing, measuring the error after every step (and at `n = 0`).
pub fn run_manufactured<T: Real>(
    grid: &Arc<Grid>,
    tau: f64,
    nu: f64,
    settings: SolverSettings,
    ms: &Arc<dyn ManufacturedSolution>,
    steps: usize,
) -> Result<(Stepper<T>, ErrorSeries)> {
    let mut s = Stepper::<T>::new(grid, tau, nu, settings)?.with_history(1);
    let v0 = ms.clone();
    s.init(&move |x| v0.velocity(0.0, x))?;
    let mut series = ErrorSeries::default();
    series.push(s.state(), ms.as_ref());
    let f = ms.clone();
    let force = move |t: f64, x: [f64; 3]| forcing_value(f.as_ref(), nu, t, x);
    s.run_steps(steps, &force, |st, _| {
        series.push(st, ms.as_ref());
        Ok(())
    })?;
    Ok((s, series))
}

/// How `τ` follows `h` across the levels of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scaling {
    ThetaH34 { theta: f64 },
    ThetaH2 { theta: f64 },
    /// One `τ` per level.
    Explicit { taus: Vec<f64> },
}

impl Scaling {
    pub fn rule(&self, level: usize) -> Result<TimeStepRule> {
        Ok(match self {
            Scaling::ThetaH34 { theta } => TimeStepRule::ThetaH34 { theta: *theta },
            Scaling::ThetaH2 { theta } => TimeStepRule::ThetaH2 { theta: *theta },
            Scaling::Explicit { taus } => TimeStepRule::Explicit {
                tau: *taus.get(level).ok_or_else(|| Error::InvalidParameter {
                    name: "scaling.taus",
                    reason: format!("no τ given for level {level}"),
                })?,
            },
        })
    }
}

fn default_t() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

/// A family of runs of one manufactured solution on successively finer grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub solution: ManufacturedSpec,
    /// Domain; the torus size is taken from each level.
    pub domain: DomainSpec,
    /// Mesh sizes, coarsest first; on the torus `h = 1/N`.
    pub levels: Vec<f64>,
    pub scaling: Scaling,
    #[serde(default = "default_t")]
    pub t_final: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl StudyConfig {
    /// Torus study over `N ∈ sizes`.
    pub fn torus(solution: ManufacturedSpec, sizes: &[usize], scaling: Scaling, t_final: f64) -> Self {
        StudyConfig {
            solution,
            domain: DomainSpec::Torus { n: sizes[0] },
            levels: sizes.iter().map(|&n| 1.0 / n as f64).collect(),
            scaling,
            t_final,
            nu: 1.0,
            solver: SolverSettings::default(),
        }
    }

    /// The single-level configuration at `level`.
    pub fn level_config(&self, level: usize) -> Result<SimConfig> {
        let h = *self.levels.get(level).ok_or(Error::InvalidParameter {
            name: "levels",
            reason: format!("no level {level}"),
        })?;
        let (domain, h) = match self.domain {
            DomainSpec::Torus { .. } => {
                let n = (1.0 / h).round();
                if (n * h - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter {
                        name: "levels",
                        reason: format!("torus levels must be 1/N, got {h}"),
                    });
                }
                (DomainSpec::Torus { n: n as usize }, None)
            }
            ref d => (d.clone(), Some(h)),
        };
        let mut c = SimConfig::new(domain, h, self.scaling.rule(level)?);
        c.nu = self.nu;
        c.solver = self.solver;
        c.t_final = Some(self.t_final);
        c.keep_last = 1;
        c.forcing = crate::stepper::ForcingSpec::Manufactured {
            solution: self.solution.clone(),
        };
        c.initial = crate::stepper::InitialSpec::Manufactured {
            solution: self.solution.clone(),
        };
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 3 {
            return Err(Error::InvalidParameter {
                name: "levels",
                reason: format!("a study needs at least 3 levels, got {}", self.levels.len()),
            });
        }
        if self.levels.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidParameter {
                name: "levels",
                reason: "mesh sizes must be strictly decreasing".into(),
            });
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("must be positive, got {}", self.t_final),
            });
        }
        self.solution.build(&self.domain)?;
        for l in 0..self.levels.len() {
            self.level_config(l)?.validate()?;
        }
        Ok(())
    }
}

/// One level of a [`ConvergenceTable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub points: usize,
    /// `‖ũ^N − v(Nτ)‖`
    pub l2_final: f64,
    /// `max_n ‖ũⁿ − v(nτ)‖`
    pub l2_max: f64,
    /// `max_n ‖uⁿ − v(nτ)‖`
    pub l2_u_max: f64,
    pub linf_final: f64,
    pub linf_max: f64,
    pub momentum_iterations: usize,
    pub hodge_iterations: usize,
    pub max_stencil_residual: f64,
    pub ledger_holds: bool,
}

/// Least-squares order of one error column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    pub column: &'static str,
    pub order: f64,
    pub stderr: f64,
    /// `order ± 2·stderr`
    pub band: (f64, f64),
    pub max_residual: f64,
    pub flagged: bool,
}

/// `e ≤ β* h^p` with `β*` fitted on the coarsest two levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub column: &'static str,
    pub exponent: f64,
    pub beta_star: f64,
    /// Errors strictly decrease from level to level.
    pub decreasing: bool,
    pub finest_error: f64,
    pub finest_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub solution: String,
    pub rows: Vec<ConvergenceRow>,
    pub fits: Vec<OrderFit>,
}

const COLUMNS: [&str; 5] = ["l2_final", "l2_max", "l2_u_max", "linf_final", "linf_max"];

impl ConvergenceRow {
    fn column(&self, name: &str) -> f64 {
        match name {
            "l2_final" => self.l2_final,
            "l2_max" => self.l2_max,
            "l2_u_max" => self.l2_u_max,
            "linf_final" => self.linf_final,
            "linf_max" => self.linf_max,
            _ => f64::NAN,
        }
    }
}

impl ConvergenceTable {
    pub fn new(solution: String, mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        let fits = COLUMNS
            .iter()
            .filter_map(|&c| {
                let (x, y): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.column(c) > 0.0)
                    .map(|r| (r.h.ln(), r.column(c).ln()))
                    .unzip();
                let LinearFit {
                    slope,
                    slope_stderr,
                    max_residual,
                    ..
                } = linear_fit(&x, &y)?;
                Some(OrderFit {
                    column: c,
                    order: slope,
                    stderr: slope_stderr,
                    band: (slope - 2.0 * slope_stderr, slope + 2.0 * slope_stderr),
                    max_residual,
                    flagged: max_residual > FIT_RESIDUAL_FLAG,
                })
            })
            .collect();
        ConvergenceTable { solution, rows, fits }
    }

    pub fn fit(&self, column: &str) -> Option<&OrderFit> {
        self.fits.iter().find(|f| f.column == column)
    }

    /// Values of an error column, coarsest first.
    pub fn column(&self, column: &str) -> Vec<f64> {
        self.rows.iter().map(|r| r.column(column)).collect()
    }

    pub fn bound_check(&self, column: &'static str, exponent: f64) -> Option<BoundCheck> {
        if self.rows.len() < 3 {
            return None;
        }
        let e = self.column(column);
        let beta_star = self.rows[..2]
            .iter()
            .zip(&e)
            .map(|(r, e)| e / r.h.powf(exponent))
            .fold(0.0, f64::max);
        let last = self.rows.last().expect("rows");
        let finest_bound = beta_star * last.h.powf(exponent);
        let finest_error = *e.last().expect("rows");
        Some(BoundCheck {
            column,
            exponent,
            beta_star,
            decreasing: e.windows(2).all(|w| w[1] < w[0]),
            finest_error,
            finest_bound,
            holds: finest_error <= finest_bound,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "h",
            "tau",
            "steps",
            "points",
            "l2_final",
            "l2_max",
            "l2_u_max",
            "linf_final",
            "linf_max",
            "momentum_iterations",
            "hodge_iterations",
            "max_stencil_residual",
            "ledger_holds",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.h.to_string(),
                r.tau.to_string(),
                r.steps.to_string(),
                r.points.to_string(),
                r.l2_final.to_string(),
                r.l2_max.to_string(),
                r.l2_u_max.to_string(),
                r.linf_final.to_string(),
                r.linf_max.to_string(),
                r.momentum_iterations.to_string(),
                r.hodge_iterations.to_string(),
                r.max_stencil_residual.to_string(),
                r.ledger_holds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_fits_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["column", "order", "stderr", "band_low", "band_high", "max_residual", "flagged"])?;
        for f in &self.fits {
            w.write_record([
                f.column.to_string(),
                f.order.to_string(),
                f.stderr.to_string(),
                f.band.0.to_string(),
                f.band.1.to_string(),
                f.max_residual.to_string(),
                f.flagged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text table with the fitted orders.
    pub fn report(&self) -> String {
        let mut s = format!("convergence study: {}\n", self.solution);
        let _ = writeln!(
            s,
            "{:>10} {:>10} {:>6} {:>8} {:>12} {:>12} {:>12} {:>12}",
            "h", "tau", "steps", "points", "L2 final", "L2 max", "Linf final", "Linf max"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>10.4e} {:>10.4e} {:>6} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                r.h, r.tau, r.steps, r.points, r.l2_final, r.l2_max, r.linf_final, r.linf_max
            );
        }
        for f in &self.fits {
            let _ = writeln!(
                s,
                "order[{}] = {:.3} ± {:.3} (max log residual {:.3}){}",
                f.column,
                f.order,
                2.0 * f.stderr,
                f.max_residual,
                if f.flagged { "  FLAGGED" } else { "" }
            );
        }
        s
    }
}

fn run_level(cfg: &StudyConfig, level: usize) -> Result<ConvergenceRow> {
    let c = cfg.level_config(level)?;
    let grid = c.grid()?;
    let tau = c.tau()?;
    let steps = c.num_steps()?;
    let ms = cfg.solution.build(&cfg.domain)?;
    let (s, e) = run_manufactured::<f64>(&grid, tau, cfg.nu, cfg.solver, &ms, steps)?;
    let ledger = s.ledger();
    Ok(ConvergenceRow {
        h: grid.h(),
        tau,
        steps,
        points: grid.len(),
        l2_final: *e.l2_u_tilde.last().expect("n = 0 recorded"),
        l2_max: e.max_l2_u_tilde(),
        l2_u_max: e.max_l2_u(),
        linf_final: *e.linf_u_tilde.last().expect("n = 0 recorded"),
        linf_max: e.max_linf_u_tilde(),
        momentum_iterations: ledger.steps.iter().map(|r| r.momentum_iterations).sum(),
        hodge_iterations: ledger.steps.iter().map(|r| r.hodge_iterations).sum(),
        max_stencil_residual: ledger.max_stencil_residual(),
        ledger_holds: ledger.all_hold(),
    })
}

/// Runs every level (concurrently) and fits orders on log–log axes.
pub fn convergence_study(cfg: &StudyConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let rows = (0..cfg.levels.len())
        .into_par_iter()
        .map(|l| run_level(cfg, l))
        .collect::<Result<Vec<_>>>()?;
    let ms = cfg.solution.build(&cfg.domain)?;
    Ok(ConvergenceTable::new(ms.name().to_string(), rows))
}

/// Piecewise-constant trajectory `ũ_δ(t, x) = ũⁿ(z)` on `[nτ, (n+1)τ) × C_h(z)`.
#[derive(Debug, Clone)]
pub struct StepTrajectory {
    pub tau: f64,
    pub states: Vec<VectorField<f64>>,
}

impl StepTrajectory {
    fn grid(&self) -> &Arc<Grid> {
        self.states[0].grid()
    }

    /// Index of the state active at time `t`.
    fn index_at(&self, t: f64) -> usize {
        ((t / self.tau).floor() as usize).min(self.states.len() - 1)
    }
}

/// Overlap lengths of the cell `[(z−½)h, (z+½)h)` with the cells of spacing `hc`.
fn overlaps(z: i64, h: f64, hc: f64) -> Vec<(i64, f64)> {
    let (lo, hi) = ((z as f64 - 0.5) * h, (z as f64 + 0.5) * h);
    let first = (lo / hc + 0.5).floor() as i64;
    let last = (hi / hc + 0.5).ceil() as i64;
    (first..last)
        .filter_map(|j| {
            let a = lo.max((j as f64 - 0.5) * hc);
            let b = hi.min((j as f64 + 0.5) * hc);
            (b > a).then_some((j, b - a))
        })
        .collect()
}

/// `∫ a·b` over space for step functions on two grids of the same domain.
fn cross_inner(a: &VectorField<f64>, b: &VectorField<f64>) -> f64 {
    let (ga, gb) = (a.grid(), b.grid());
    let (ha, hb) = (ga.h(), gb.h());
    let wrap = gb.is_periodic().then(|| (1.0 / hb).round() as i64);
    let mut sum = 0.0;
    for (k, z) in ga.points().iter().enumerate() {
        let va = a.at(k);
        if va == [0.0; 3] {
            continue;
        }
        let axes: [Vec<(i64, f64)>; 3] = [0, 1, 2].map(|i| overlaps(z[i], ha, hb));
        for &(i, wi) in &axes[0] {
            for &(j, wj) in &axes[1] {
                for &(l, wl) in &axes[2] {
                    let mut zb = [i, j, l];
                    if let Some(n) = wrap {
                        zb = zb.map(|c| c.rem_euclid(n));
                    }
                    if let Some(kb) = gb.find(zb) {
                        let vb = b.at(kb);
                        sum += wi * wj * wl * (va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2]);
                    }
                }
            }
        }
    }
    sum
}

/// `(∫₀ᵀ ‖a_δ − b_δ‖²_{L²} dt)^{1/2}`.
pub fn step_distance(a: &StepTrajectory, b: &StepTrajectory, t_final: f64) -> f64 {
    let same = crate::field::same_grid(a.grid(), b.grid());
    let mut cuts: Vec<f64> = (0..)
        .map(|n| n as f64 * a.tau)
        .take_while(|&t| t < t_final)
        .chain((0..).map(|n| n as f64 * b.tau).take_while(|&t| t < t_final))
        .collect();
    cuts.push(t_final);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * t_final);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mid = 0.5 * (t0 + t1);
        let (ua, ub) = (&a.states[a.index_at(mid)], &b.states[b.index_at(mid)]);
        let d2 = if same {
            ua.sub(ub).expect("same grid").l2_norm().powi(2)
        } else {
            let na = ua.l2_norm().powi(2);
            let nb = ub.l2_norm().powi(2);
            (na + nb - 2.0 * cross_inner(ua, ub)).max(0.0)
        };
        total += (t1 - t0) * d2;
    }
    total.sqrt()
}

/// Pairwise distances of successive levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyReport {
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    pub distances: Vec<f64>,
    /// `distances[k]/distances[k+1]`
    pub ratios: Vec<f64>,
    pub monotone: bool,
}

/// Runs `base` at every mesh size in `levels` (coarsest first) and measures the
/// `L²(0,T;L²)` distance between step-function interpolants of successive levels.
pub fn refinement_cauchy_check(base: &SimConfig, levels: &[f64]) -> Result<CauchyReport> {
    let t_final = base.t_final.ok_or(Error::InvalidParameter {
        name: "t_final",
        reason: "a refinement check needs a horizon".into(),
    })?;
    let trajectories = levels
        .par_iter()
        .map(|&h| {
            let mut c = base.clone();
            match c.domain {
                DomainSpec::Torus { ref mut n } => *n = (1.0 / h).round() as usize,
                _ => c.h = Some(h),
            }
            c.steps = None;
            c.validate()?;
            let grid = c.grid()?;
            let tau = c.tau()?;
            let steps = (t_final / tau - 1e-9).ceil() as usize;
            let v0 = c.initial.build(&c.domain)?;
            let f = c.forcing.build(&c.domain, c.nu)?;
            let mut s = Stepper::<f64>::new(&grid, tau, c.nu, c.solver)?.with_history(0);
            s.init(v0.as_ref())?;
            let mut states = vec![s.state().u_tilde.clone()];
            s.run_steps(steps, f.as_ref(), |st, _| {
                states.push(st.u_tilde.clone());
                Ok(())
            })?;
            Ok(StepTrajectory { tau, states })
        })
        .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = trajectories
        .windows(2)
        .map(|w| step_distance(&w[0], &w[1], t_final))
        .collect();
    let ratios: Vec<f64> = distances.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(CauchyReport {
        h: trajectories.iter().map(|t| t.grid().h()).collect(),
        tau: trajectories.iter().map(|t| t.tau).collect(),
        monotone: distances.windows(2).all(|w| w[1] < w[0]),
        distances,
        ratios,
    })
}
