use std::io::Write;

use serde::Serialize;

/// Relative slack for rounding in the recorded inequalities.
pub const LEDGER_SLACK: f64 = 1e-9;

#[inline]
fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + LEDGER_SLACK * rhs.abs() + 1e-13
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialRecord {
    /// Same-node quadrature of `‖v⁰‖_{L²}` over the interior cells, when the
    /// data came from a continuum field.
    pub norm_v0: Option<f64>,
    pub norm_u_tilde0: f64,
    pub norm_u0: f64,
    pub chain_holds: bool,
}

impl InitialRecord {
    pub fn new(norm_v0: Option<f64>, norm_u_tilde0: f64, norm_u0: f64) -> Self {
        let chain_holds = le(norm_u0, norm_u_tilde0) && norm_v0.map_or(true, |v| le(norm_u_tilde0, v));
        InitialRecord {
            norm_v0,
            norm_u_tilde0,
            norm_u0,
            chain_holds,
        }
    }
}

/// Outcome of each recorded inequality at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepChecks {
    /// `‖ũ^{n+1}‖ ≤ ‖uⁿ‖ + ‖fⁿ‖τ`
    pub one_step: bool,
    /// `‖u^{n+1}‖ ≤ ‖ũ^{n+1}‖`
    pub projection: bool,
    /// `‖u^{n+1}‖ ≤ ‖u⁰‖ + Σ_{m≤n}‖f^m‖τ`
    pub cumulative: bool,
    /// `‖u^{n+1}‖² ≤ ‖u⁰‖² − νΣ_{m≤n} Σ_j‖D_j⁺ũ^{m+1}‖²τ + 2Σ‖u^m‖‖f^m‖τ + Σ‖f^m‖²τ²`
    pub energy: bool,
    /// `Σ_{m≤n}‖f^m‖²τ ≤ ∫_0^{τ(n+1)}‖f‖²` (quadrature), when the forcing is continuum data.
    pub forcing_average: Option<bool>,
    /// `max|𝒟·u^{n+1}| ≤ 10·tol·max(1, ‖𝒟·ũ^{n+1}‖_2)`
    pub divergence: bool,
}

impl StepChecks {
    pub fn all(&self) -> bool {
        self.one_step
            && self.projection
            && self.cumulative
            && self.energy
            && self.forcing_average.unwrap_or(true)
            && self.divergence
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        [
            ("one_step", self.one_step),
            ("projection", self.projection),
            ("cumulative", self.cumulative),
            ("energy", self.energy),
            ("forcing_average", self.forcing_average.unwrap_or(true)),
            ("divergence", self.divergence),
        ]
        .into_iter()
        .find(|(_, ok)| !ok)
        .map(|(n, _)| n)
    }
}

/// Everything measured at the transition `n → n+1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// Index of the new state.
    pub n: usize,
    pub t: f64,
    pub norm_u: f64,
    pub norm_u_tilde: f64,
    /// `Σ_j ‖D_j⁺ũ^{n+1}‖²_{Ω_h}`
    pub dissipation: f64,
    /// `‖fⁿ‖`
    pub norm_f: f64,
    pub sum_f: f64,
    pub sum_f2: f64,
    pub sum_dissipation: f64,
    pub sum_uf: f64,
    pub forcing_quadrature: Option<f64>,
    pub energy_rhs: f64,
    pub div_max: f64,
    pub div_bound: f64,
    pub momentum_iterations: usize,
    pub momentum_residual: f64,
    pub stencil_residual: f64,
    pub hodge_iterations: usize,
    pub checks: StepChecks,
}

/// Per-step norms and the discrete energy estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub tau: f64,
    pub nu: f64,
    pub initial: Option<InitialRecord>,
    pub steps: Vec<StepRecord>,
}

/// Inputs of one ledger row, measured by the stepper.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepMeasure {
    pub norm_u_prev: f64,
    pub norm_u: f64,
    pub norm_u_tilde: f64,
    pub dissipation: f64,
    pub norm_f: f64,
    pub forcing_energy: Option<f64>,
    pub div_max: f64,
    pub div_bound: f64,
    pub momentum_iterations: usize,
    pub momentum_residual: f64,
    pub stencil_residual: f64,
    pub hodge_iterations: usize,
}

impl EnergyLedger {
    pub fn new(tau: f64, nu: f64) -> Self {
        EnergyLedger {
            tau,
            nu,
            initial: None,
            steps: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, m: StepMeasure) -> &StepRecord {
        let tau = self.tau;
        let u0 = self.initial.map_or(m.norm_u_prev, |i| i.norm_u0);
        let prev = self.steps.last();
        let n = prev.map_or(1, |p| p.n + 1);
        let sum_f = prev.map_or(0.0, |p| p.sum_f) + m.norm_f * tau;
        let sum_f2 = prev.map_or(0.0, |p| p.sum_f2) + m.norm_f * m.norm_f * tau;
        let sum_dissipation = prev.map_or(0.0, |p| p.sum_dissipation) + m.dissipation * tau;
        let sum_uf = prev.map_or(0.0, |p| p.sum_uf) + m.norm_u_prev * m.norm_f * tau;
        let forcing_quadrature = match (prev, m.forcing_energy) {
            (None, Some(e)) => Some(e),
            (Some(p), Some(e)) => p.forcing_quadrature.map(|q| q + e),
            (_, None) => None,
        };
        let energy_rhs = u0 * u0 - self.nu * sum_dissipation + 2.0 * sum_uf + sum_f2 * tau;
        let checks = StepChecks {
            one_step: le(m.norm_u_tilde, m.norm_u_prev + m.norm_f * tau),
            projection: le(m.norm_u, m.norm_u_tilde),
            cumulative: le(m.norm_u, u0 + sum_f),
            energy: le(m.norm_u * m.norm_u, energy_rhs),
            forcing_average: forcing_quadrature.map(|q| le(sum_f2, q)),
            divergence: m.div_max <= m.div_bound,
        };
        self.steps.push(StepRecord {
            n,
            t: n as f64 * tau,
            norm_u: m.norm_u,
            norm_u_tilde: m.norm_u_tilde,
            dissipation: m.dissipation,
            norm_f: m.norm_f,
            sum_f,
            sum_f2,
            sum_dissipation,
            sum_uf,
            forcing_quadrature,
            energy_rhs,
            div_max: m.div_max,
            div_bound: m.div_bound,
            momentum_iterations: m.momentum_iterations,
            momentum_residual: m.momentum_residual,
            stencil_residual: m.stencil_residual,
            hodge_iterations: m.hodge_iterations,
            checks,
        });
        self.steps.last().expect("just pushed")
    }

    pub fn all_hold(&self) -> bool {
        self.initial.map_or(true, |i| i.chain_holds) && self.steps.iter().all(|s| s.checks.all())
    }

    /// First failing check as `(step index, check name)`; step 0 is the initial chain.
    pub fn first_violation(&self) -> Option<(usize, &'static str)> {
        if let Some(i) = self.initial {
            if !i.chain_holds {
                return Some((0, "initial_chain"));
            }
        }
        self.steps
            .iter()
            .find_map(|s| s.checks.first_failure().map(|c| (s.n, c)))
    }

    pub fn max_stencil_residual(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.stencil_residual))
    }

    /// One CSV row per step; row 0 holds the initial data.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "t",
            "norm_u",
            "norm_u_tilde",
            "dissipation",
            "norm_f",
            "sum_f",
            "sum_f2",
            "sum_dissipation",
            "energy_rhs",
            "forcing_quadrature",
            "div_max",
            "div_bound",
            "momentum_iterations",
            "momentum_residual",
            "stencil_residual",
            "hodge_iterations",
            "slack_one_step",
            "slack_cumulative",
            "slack_energy",
            "all_checks",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        if let Some(i) = self.initial {
            w.write_record([
                "0".to_string(),
                "0".to_string(),
                i.norm_u0.to_string(),
                i.norm_u_tilde0.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                opt(i.norm_v0.map(|v| v * v)),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                i.chain_holds.to_string(),
            ])?;
        }
        let mut prev_u = self.initial.map_or(0.0, |i| i.norm_u0);
        let u0 = prev_u;
        for s in &self.steps {
            w.write_record([
                s.n.to_string(),
                s.t.to_string(),
                s.norm_u.to_string(),
                s.norm_u_tilde.to_string(),
                s.dissipation.to_string(),
                s.norm_f.to_string(),
                s.sum_f.to_string(),
                s.sum_f2.to_string(),
                s.sum_dissipation.to_string(),
                s.energy_rhs.to_string(),
                opt(s.forcing_quadrature),
                s.div_max.to_string(),
                s.div_bound.to_string(),
                s.momentum_iterations.to_string(),
                s.momentum_residual.to_string(),
                s.stencil_residual.to_string(),
                s.hodge_iterations.to_string(),
                (prev_u + s.norm_f * self.tau - s.norm_u_tilde).to_string(),
                (u0 + s.sum_f - s.norm_u).to_string(),
                (s.energy_rhs - s.norm_u * s.norm_u).to_string(),
                s.checks.all().to_string(),
            ])?;
            prev_u = s.norm_u;
        }
        w.flush()?;
        Ok(())
    }
}
