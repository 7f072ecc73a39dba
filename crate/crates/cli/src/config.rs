use std::path::Path;

use chorin::harness::{ManufacturedSpec, Scaling, StudyConfig};
use chorin::periodic_orbit::FixedPointOptions;
use chorin::stepper::{ForcingSpec, SimConfig, SolverSettings, TimeStepRule};
use chorin::{DomainSpec, Grid};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// The JSON configuration file; every subcommand reads its own section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<PeriodicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hodge: Option<HodgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poincare: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                c.schema_version
            )));
        }
        Ok(c)
    }
}

fn one() -> f64 {
    1.0
}

/// A domain with its mesh size (implied on the torus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub h: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            domain: DomainSpec::unit_ball(),
            h: Some(0.12),
        }
    }
}

impl GridConfig {
    pub fn mesh_size(&self) -> Result<f64, CliError> {
        let mut c = SimConfig::new(self.domain.clone(), self.h, TimeStepRule::Explicit { tau: 1.0 });
        c.steps = Some(0);
        Ok(c.mesh_size()?)
    }

    pub fn build(&self) -> Result<Grid, CliError> {
        self.domain.validate()?;
        Ok(Grid::build(&self.domain, self.mesh_size()?)?)
    }
}

fn default_samples() -> usize {
    20
}

fn default_hodge_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HodgeConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hodge_tol")]
    pub tol: f64,
}

impl Default for HodgeConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        HodgeConfig {
            domain: g.domain,
            h: g.h,
            samples: default_samples(),
            seed: 0,
            tol: default_hodge_tol(),
        }
    }
}

impl HodgeConfig {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            domain: self.domain.clone(),
            h: self.h,
        }
    }
}

fn default_period_steps() -> usize {
    10
}

/// Fixed-point search for the time-1 map under period-1 forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub h: Option<f64>,
    /// `T₁ = 1/τ`.
    #[serde(default = "default_period_steps")]
    pub steps_per_period: usize,
    #[serde(default = "one")]
    pub nu: f64,
    pub forcing: ForcingSpec,
    /// Multiplies the forcing.
    #[serde(default = "one")]
    pub forcing_scale: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        PeriodicConfig {
            domain: DomainSpec::unit_ball(),
            h: Some(0.12),
            steps_per_period: default_period_steps(),
            nu: 1.0,
            forcing: ForcingSpec::Trigonometric {
                amplitude: 1.0,
                wavenumber: 1.0,
            },
            forcing_scale: 1.0,
            solver: SolverSettings::default(),
            fixed_point: FixedPointOptions::default(),
        }
    }
}

impl PeriodicConfig {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            domain: self.domain.clone(),
            h: self.h,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.steps_per_period == 0 {
            return Err(CliError::Config("periodic.steps_per_period: must be positive".into()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(CliError::Config(format!("periodic.nu: must be positive, got {}", self.nu)));
        }
        if !self.forcing_scale.is_finite() {
            return Err(CliError::Config("periodic.forcing_scale: must be finite".into()));
        }
        if !(self.fixed_point.tol > 0.0) || self.fixed_point.max_iter == 0 {
            return Err(CliError::Config(
                "periodic.fixed_point: tol and max_iter must be positive".into(),
            ));
        }
        self.solver.validate()?;
        Ok(())
    }
}

pub fn default_run() -> SimConfig {
    let mut c = SimConfig::new(DomainSpec::Torus { n: 8 }, None, TimeStepRule::ThetaH2 { theta: 1.0 });
    c.t_final = Some(0.1);
    c
}

pub fn torus_study(sizes: &[usize]) -> StudyConfig {
    StudyConfig::torus(
        ManufacturedSpec::TaylorGreen { amplitude: 1.0 },
        sizes,
        Scaling::ThetaH2 { theta: 1.0 },
        0.25,
    )
}

pub fn ball_study(levels: &[f64]) -> StudyConfig {
    StudyConfig {
        solution: ManufacturedSpec::Swirl {
            amplitude: 1.0,
            support: Some(0.5),
        },
        domain: DomainSpec::unit_ball(),
        levels: levels.to_vec(),
        scaling: Scaling::ThetaH34 { theta: 1.0 },
        t_final: 0.5,
        nu: 1.0,
        solver: SolverSettings::default(),
    }
}

pub fn default_study() -> StudyConfig {
    torus_study(&[8, 16, 32])
}
