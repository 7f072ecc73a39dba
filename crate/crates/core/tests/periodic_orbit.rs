use std::f64::consts::PI;
use std::sync::Arc;

use chorin::periodic_orbit::{
    contraction_test, find_fixed_point, per_step_contraction, uniqueness_probe, Acceleration, FixedPointOptions,
    PeriodicForcing, TimeOneMap,
};
use chorin::stepper::{estimate_poincare_i, r0_bound, SolverSettings};
use chorin::{DomainSpec, Error, Grid, SampleMode, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ball() -> Arc<Grid> {
    Arc::new(Grid::dirichlet(&DomainSpec::unit_ball(), 0.12).unwrap())
}

fn big_ball() -> Arc<Grid> {
    let spec = DomainSpec::Ball {
        center: [0.0; 3],
        radius: 2.0,
    };
    Arc::new(Grid::dirichlet(&spec, 0.24).unwrap())
}

fn forcing(grid: &Arc<Grid>, amplitude: f64, steps: usize) -> PeriodicForcing<f64> {
    PeriodicForcing::new(
        grid,
        Arc::new(move |t, x| {
            let g = amplitude * (1.0 + 0.5 * (2.0 * PI * t).sin());
            [g * (PI * x[1]).sin(), g * (PI * x[2]).cos() * x[0], -g * x[1] * x[0]]
        }),
        steps,
    )
    .unwrap()
}

fn map(grid: &Arc<Grid>, f: PeriodicForcing<f64>) -> TimeOneMap<f64> {
    TimeOneMap::new(grid, 1.0, SolverSettings::default(), f).unwrap()
}

fn random(grid: &Arc<Grid>, seed: u64, norm: f64) -> VectorField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = VectorField::random(grid, &mut rng, SampleMode::InteriorOnly);
    let n = u.l2_norm();
    u.scale(norm / n);
    u
}

#[test]
fn forcing_samples_are_periodic() {
    let g = ball();
    let f = forcing(&g, 1.0, 10);
    for n in 0..10 {
        assert_eq!(f.sample(n).values(), f.sample(n + 10).values());
        assert_eq!(f.sample(n).values(), f.sample(n + 30).values());
    }
    assert!(f.alpha() <= f.alpha_quadrature() * (1.0 + 1e-12));
    assert!((f.scaled(0.5).alpha() - 0.5 * f.alpha()).abs() < 1e-14);
}

#[test]
fn zero_forcing_has_zero_fixed_point() {
    let g = ball();
    let mut m = map(&g, PeriodicForcing::zero(&g, 10).unwrap());
    assert_eq!(m.apply(&VectorField::zeros(&g)).unwrap().linf_norm(), 0.0);
    let (u, rep) = find_fixed_point(&mut m, &FixedPointOptions::default(), 0.3).unwrap();
    assert_eq!(rep.iterations, 1);
    assert_eq!(u.linf_norm(), 0.0);
    assert!(rep.certified_small);
}

#[test]
fn absorbing_ball_and_continuity() {
    let g = ball();
    let a_hat = estimate_poincare_i(&g).unwrap().value;
    let base = forcing(&g, 1.0, 10);
    let f = base.scaled(1.0 / r0_bound(a_hat, base.alpha()));
    assert!((r0_bound(a_hat, f.alpha()) - 1.0).abs() < 1e-12);
    let mut m = map(&g, f);
    for (seed, norm) in [(1, 1.0), (2, 0.3)] {
        let u0 = random(&g, seed, norm);
        let phi = m.apply(&u0).unwrap();
        assert!(phi.l2_norm() <= 1.05, "{}", phi.l2_norm());
        let mut du = random(&g, seed + 10, 1e-6);
        du.axpy(1.0, &u0).unwrap();
        let phi2 = m.apply(&du).unwrap();
        let change = phi2.sub(&phi).unwrap().l2_norm();
        assert!(change <= 10.0 * 1e-6, "{change:e}");
    }
}

#[test]
fn picard_contracts_to_a_periodic_orbit() {
    let g = ball();
    let a_hat = estimate_poincare_i(&g).unwrap().value;
    let mut m = map(&g, forcing(&g, 1.0, 10));
    let opts = FixedPointOptions::default();
    let (u0, rep) = find_fixed_point(&mut m, &opts, a_hat).unwrap();
    assert!(rep.converged && rep.residual <= 1e-8);
    assert!(rep.iterations <= 200);
    assert!(rep.certified_small, "{} vs {}", rep.max_abs, rep.beta0);
    let bound = (-0.5 / (a_hat * a_hat)).exp();
    for w in rep.residual_history.windows(2) {
        if w[1] > 1e-11 {
            assert!(w[1] <= bound * w[0], "{:e} -> {:e}", w[0], w[1]);
        }
    }
    let orbit = m.orbit(&u0, 2).unwrap();
    for n in 0..=10 {
        let d = orbit[n + 10].sub(&orbit[n]).unwrap().l2_norm();
        assert!(d <= 2e-8, "n = {n}: {d:e}");
    }
    let mut m2 = m.clone();
    let (u1, rep1) = find_fixed_point(
        &mut m2,
        &FixedPointOptions {
            acceleration: Acceleration::Anderson { m: 3 },
            ..opts
        },
        a_hat,
    )
    .unwrap();
    assert!(rep1.residual <= 1e-8);
    assert!(u1.sub(&u0).unwrap().l2_norm() < 1e-7);
}

#[test]
fn orbits_shrink_with_forcing() {
    let g = ball();
    let a_hat = estimate_poincare_i(&g).unwrap().value;
    let base = forcing(&g, 2.0, 10);
    let mut norms = Vec::new();
    for eps in [1.0, 0.5, 0.25, 0.0] {
        let mut m = map(&g, base.scaled(eps));
        let (u, _) = find_fixed_point(&mut m, &FixedPointOptions::default(), a_hat).unwrap();
        norms.push(u.l2_norm());
    }
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    assert_eq!(norms[3], 0.0);
}

#[test]
fn non_convergence_returns_best_iterate() {
    let g = ball();
    let mut m = map(&g, forcing(&g, 1.0, 10));
    let err = find_fixed_point(
        &mut m,
        &FixedPointOptions {
            tol: 1e-30,
            max_iter: 3,
            acceleration: Acceleration::Picard,
        },
        0.3,
    )
    .unwrap_err();
    assert!(matches!(err.error, Error::NotConverged { .. }));
    assert_eq!(err.report.residual_history.len(), 3);
    assert!(err.best.l2_norm() > 0.0);
}

#[test]
fn contraction_of_small_solutions() {
    let g = big_ball();
    let a_hat = estimate_poincare_i(&g).unwrap().value;
    let mut m = map(&g, forcing(&g, 1.0, 100));
    let (small, rep) = find_fixed_point(&mut m, &FixedPointOptions::default(), a_hat).unwrap();
    assert!(rep.certified_small);
    let same = contraction_test(&m, &small, &small, 5, a_hat).unwrap();
    assert!(same.norms.iter().all(|&v| v == 0.0));
    let other = random(&g, 7, 0.5);
    let r = contraction_test(&m, &small, &other, 100, a_hat).unwrap();
    assert!((r.per_step_bound - per_step_contraction(a_hat, 0.01, 1.0)).abs() < 1e-15);
    assert!(r.resolved_steps >= 100, "{}", r.resolved_steps);
    assert!(r.ratios_hold, "{:?}", r.ratios.iter().cloned().fold(0.0, f64::max));
    assert!(r.cumulative_holds);
    assert!(r.fitted_exponent.unwrap() <= 0.9 * r.exponent_bound);
    let big = random(&g, 8, 50.0);
    match contraction_test(&m, &big, &small, 5, a_hat) {
        Err(Error::SmallnessViolated { max_abs, beta0, .. }) => assert!(max_abs > beta0),
        other => panic!("expected SmallnessViolated, got {other:?}"),
    }
}

#[test]
fn uniqueness_of_small_orbit() {
    let g = ball();
    let a_hat = estimate_poincare_i(&g).unwrap().value;
    let mut m = map(&g, forcing(&g, 1.0, 10));
    let (fixed, _) = find_fixed_point(&mut m, &FixedPointOptions::default(), a_hat).unwrap();
    let rep = uniqueness_probe(&m, &fixed, 3, 1.0, 20, 1e-8, 5).unwrap();
    assert!(rep.divergent_starts.is_empty(), "{:?}", rep.final_distance);
    assert!(*rep.spread.last().unwrap() < 1e-8);
    assert!(rep.monotone_after_entry, "{:?}", rep.spread);
    let zero = map(&g, PeriodicForcing::zero(&g, 10).unwrap());
    let rep = uniqueness_probe(&zero, &VectorField::zeros(&g), 3, 1.0, 20, 1e-8, 6).unwrap();
    assert!(rep.divergent_starts.is_empty());
}
