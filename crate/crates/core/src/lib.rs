//! Fully discrete Chorin projection method for the 3D incompressible
//! Navier–Stokes equations on staircase domains and on the periodic torus.

pub mod calculus;
pub mod domain;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod hodge;
pub mod io;
pub mod linsolve;
pub mod periodic_orbit;
pub mod scalar;
pub mod stepper;

pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use field::{SampleMode, ScalarField, VectorField};
pub use grid::{BoundaryCondition, GapReport, Grid};
pub use scalar::Real;

pub type ScalarField64 = ScalarField<f64>;
pub type VectorField64 = VectorField<f64>;
pub type ScalarField32 = ScalarField<f32>;
pub type VectorField32 = VectorField<f32>;
pub type HodgeSolver64 = hodge::HodgeSolver<f64>;
pub type HodgeSolver32 = hodge::HodgeSolver<f32>;
pub type Stepper64 = stepper::Stepper<f64>;
pub type Stepper32 = stepper::Stepper<f32>;
pub type TimeOneMap64 = periodic_orbit::TimeOneMap<f64>;
