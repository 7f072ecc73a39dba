//! Manufactured solutions and convergence measurement.

mod convergence;
mod fit;
mod solutions;

pub use convergence::{
    convergence_study, error_series, refinement_cauchy_check, run_manufactured, step_distance, BoundCheck,
    CauchyReport, ConvergenceRow, ConvergenceTable, ErrorSeries, OrderFit, Scaling, StepTrajectory, StudyConfig,
    FIT_RESIDUAL_FLAG,
};
pub use fit::{linear_fit, LinearFit};
pub use solutions::{
    divergence_fd, forcing_value, pde_residual_fd, BoundaryTag, ManufacturedSolution, ManufacturedSpec, Smoothness,
    SwirlBall, TaylorGreenTorus,
};
