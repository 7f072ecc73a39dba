use std::sync::Arc;

use chorin::harness::{
    convergence_study, error_series, refinement_cauchy_check, run_manufactured, step_distance, BoundaryTag,
    ConvergenceRow, ConvergenceTable, ManufacturedSolution, ManufacturedSpec, Scaling, Smoothness, StepTrajectory,
    StudyConfig, TaylorGreenTorus,
};
use chorin::stepper::{ForcingSpec, InitialSpec, SimConfig, SolverSettings, TimeStepRule};
use chorin::{DomainSpec, Grid, VectorField};

fn tg() -> ManufacturedSpec {
    ManufacturedSpec::TaylorGreen { amplitude: 1.0 }
}

/// Cell average over `x + [−h/2, h/2]³` with 3-point Gauss–Legendre per axis.
fn gauss3_average(f: impl Fn([f64; 3]) -> [f64; 3], x: [f64; 3], h: f64) -> [f64; 3] {
    let nodes = [-(0.6f64).sqrt() / 2.0, 0.0, (0.6f64).sqrt() / 2.0];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut acc = [0.0; 3];
    for (a, wa) in nodes.iter().zip(weights) {
        for (b, wb) in nodes.iter().zip(weights) {
            for (c, wc) in nodes.iter().zip(weights) {
                let v = f([x[0] + a * h, x[1] + b * h, x[2] + c * h]);
                for i in 0..3 {
                    acc[i] += wa * wb * wc * v[i];
                }
            }
        }
    }
    acc
}

#[test]
fn zero_steps_leave_only_sampling_error() {
    let ms = tg().build(&DomainSpec::Torus { n: 8 }).unwrap();
    let mut errs = Vec::new();
    for n in [8, 16] {
        let g = Arc::new(Grid::torus(n).unwrap());
        let (_, e) = run_manufactured::<f64>(&g, 1e-3, 1.0, SolverSettings::default(), &ms, 0).unwrap();
        assert_eq!(e.len(), 1);
        let h = g.h();
        let oracle: f64 = (0..g.len())
            .map(|k| {
                let x = g.position(k);
                let a = gauss3_average(|y| ms.velocity(0.0, y), x, h);
                let p = ms.velocity(0.0, x);
                (0..3).map(|i| (a[i] - p[i]).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            * h.powi(3);
        let oracle = oracle.sqrt();
        assert!((e.l2_u_tilde[0] - oracle).abs() <= 2e-2 * oracle, "{} vs {oracle}", e.l2_u_tilde[0]);
        errs.push(e.l2_u_tilde[0]);
    }
    let ratio = errs[0] / errs[1];
    assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
}

#[test]
fn series_maxima_are_pointwise_maxima() {
    let g = Arc::new(Grid::torus(8).unwrap());
    let ms = tg().build(g.domain()).unwrap();
    let (s, e) = run_manufactured::<f64>(&g, 1.0 / 64.0, 1.0, SolverSettings::default(), &ms, 6).unwrap();
    assert_eq!(e.len(), 7);
    assert_eq!(e.max_l2_u_tilde(), e.l2_u_tilde.iter().cloned().fold(f64::MIN, f64::max));
    assert_eq!(e.max_l2_u(), e.l2_u.iter().cloned().fold(f64::MIN, f64::max));
    let last = error_series(s.history(), ms.as_ref());
    assert_eq!(last.l2_u_tilde, vec![*e.l2_u_tilde.last().unwrap()]);
    for k in 0..e.len() {
        assert!(e.linf_u_tilde[k] * g.h().powf(1.5) <= e.l2_u_tilde[k] * (1.0 + 1e-12));
    }
}

struct Shifted(Arc<dyn ManufacturedSolution>, f64);

impl ManufacturedSolution for Shifted {
    fn name(&self) -> &'static str {
        "shifted"
    }
    fn boundary(&self) -> BoundaryTag {
        self.0.boundary()
    }
    fn smoothness(&self) -> Smoothness {
        self.0.smoothness()
    }
    fn period(&self) -> Option<f64> {
        self.0.period()
    }
    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self.0.velocity(t + self.1, x)
    }
    fn pressure(&self, t: f64, x: [f64; 3]) -> f64 {
        self.0.pressure(t + self.1, x)
    }
    fn velocity_dt(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self.0.velocity_dt(t + self.1, x)
    }
    fn velocity_jacobian(&self, t: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
        self.0.velocity_jacobian(t + self.1, x)
    }
    fn velocity_laplacian(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self.0.velocity_laplacian(t + self.1, x)
    }
    fn pressure_gradient(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self.0.pressure_gradient(t + self.1, x)
    }
}

#[test]
fn shifting_by_the_period_changes_nothing() {
    let g = Arc::new(Grid::torus(8).unwrap());
    let ms = tg().build(g.domain()).unwrap();
    let period = ms.period().unwrap();
    let shifted: Arc<dyn ManufacturedSolution> = Arc::new(Shifted(ms.clone(), period));
    let (_, a) = run_manufactured::<f64>(&g, 1.0 / 64.0, 1.0, SolverSettings::default(), &ms, 8).unwrap();
    let (_, b) = run_manufactured::<f64>(&g, 1.0 / 64.0, 1.0, SolverSettings::default(), &shifted, 8).unwrap();
    for (x, y) in a.l2_u_tilde.iter().zip(&b.l2_u_tilde) {
        assert!((x - y).abs() <= 1e-10 * x.max(1e-3), "{x} {y}");
    }
}

#[test]
fn torus_order_near_two() {
    // T is a whole number of steps at every level.
    let cfg = StudyConfig::torus(tg(), &[8, 12, 16], Scaling::ThetaH2 { theta: 1.0 }, 0.25);
    let tab = convergence_study(&cfg).unwrap();
    let fit = tab.fit("l2_final").unwrap();
    assert!(fit.order >= 1.8, "{}", tab.report());
    assert!(!fit.flagged);
    assert!(tab.rows.iter().all(|r| r.ledger_holds && r.max_stencil_residual <= 1e-9));
    assert!(tab.rows.windows(2).all(|w| w[0].h > w[1].h));
    let mut a = Vec::new();
    let mut b = Vec::new();
    tab.write_csv(&mut a).unwrap();
    convergence_study(&cfg).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dirichlet_errors_decrease_within_fitted_bound() {
    let cfg = StudyConfig {
        solution: ManufacturedSpec::Swirl {
            amplitude: 1.0,
            support: Some(0.5),
        },
        domain: DomainSpec::unit_ball(),
        levels: vec![0.12, 0.08, 0.053],
        scaling: Scaling::ThetaH34 { theta: 1.0 },
        t_final: 0.5,
        nu: 1.0,
        solver: SolverSettings::default(),
    };
    let tab = convergence_study(&cfg).unwrap();
    let b = tab.bound_check("l2_u_max", 0.25).unwrap();
    assert!(b.decreasing && b.holds, "{b:?}\n{}", tab.report());
}

#[test]
fn study_validation() {
    let mut cfg = StudyConfig::torus(tg(), &[8, 16], Scaling::ThetaH2 { theta: 1.0 }, 0.1);
    assert!(cfg.validate().is_err());
    cfg.levels = vec![1.0 / 8.0, 1.0 / 16.0, 0.3];
    assert!(cfg.validate().is_err());
    cfg.levels = vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    assert!(cfg.validate().is_ok());
    cfg.scaling = Scaling::Explicit { taus: vec![0.01, 0.005] };
    assert!(cfg.validate().is_err());
    cfg.domain = DomainSpec::unit_ball();
    assert!(cfg.validate().is_err());
    let json = r#"{"solution":{"kind":"taylor_green","amplitude":1},"domain":{"kind":"torus","n":8},
        "levels":[0.125,0.0625,0.03125],"scaling":{"rule":"theta_h2","theta":1},"typo":1}"#;
    assert!(serde_json::from_str::<StudyConfig>(json).is_err());
}

fn row(h: f64, e: f64) -> ConvergenceRow {
    ConvergenceRow {
        h,
        tau: h * h,
        steps: 1,
        points: 1,
        l2_final: e,
        l2_max: e,
        l2_u_max: e,
        linf_final: e,
        linf_max: e,
        momentum_iterations: 0,
        hodge_iterations: 0,
        max_stencil_residual: 0.0,
        ledger_holds: true,
    }
}

#[test]
fn poor_fits_are_flagged() {
    let clean = ConvergenceTable::new("t".into(), vec![row(0.25, 0.0625), row(0.5, 0.25), row(0.125, 0.015625)]);
    assert_eq!(clean.rows[0].h, 0.5);
    let f = clean.fit("l2_final").unwrap();
    assert!((f.order - 2.0).abs() < 1e-12 && !f.flagged);
    let noisy = ConvergenceTable::new("t".into(), vec![row(0.5, 0.25), row(0.25, 0.2), row(0.125, 0.01)]);
    assert!(noisy.fit("l2_final").unwrap().flagged);
    assert!(noisy.report().contains("FLAGGED"));
}

fn cauchy_base(initial: InitialSpec) -> SimConfig {
    let mut c = SimConfig::new(DomainSpec::Torus { n: 8 }, None, TimeStepRule::ThetaH34 { theta: 0.2 });
    c.initial = initial;
    c.forcing = ForcingSpec::Manufactured { solution: tg() };
    c.t_final = Some(0.25);
    c
}

#[test]
fn refinement_distances_shrink() {
    let levels = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let smooth = refinement_cauchy_check(&cauchy_base(InitialSpec::Manufactured { solution: tg() }), &levels).unwrap();
    assert!(smooth.monotone);
    assert!(smooth.ratios.iter().all(|&r| r >= 1.5), "{smooth:?}");
    let rough = refinement_cauchy_check(&cauchy_base(InitialSpec::ShearLayer { amplitude: 1.0 }), &levels).unwrap();
    assert!(rough.monotone, "{rough:?}");
}

#[test]
fn identical_levels_are_at_distance_zero() {
    let g = Arc::new(Grid::torus(8).unwrap());
    let u = VectorField::<f64>::from_fn(&g, |x| [x[1].sin(), x[2], 1.0]);
    let a = StepTrajectory {
        tau: 0.1,
        states: vec![u.clone(), u.scaled(0.5)],
    };
    assert_eq!(step_distance(&a, &a.clone(), 0.2), 0.0);
    let r = refinement_cauchy_check(&cauchy_base(InitialSpec::ShearLayer { amplitude: 1.0 }), &[0.125, 0.125]).unwrap();
    assert_eq!(r.distances, vec![0.0]);
}

/// Value of the step function of `u` at `x` on the unit torus.
fn step_value(u: &VectorField<f64>, n: i64, x: [f64; 3]) -> [f64; 3] {
    let z = x.map(|c| ((c * n as f64 + 0.5).floor() as i64).rem_euclid(n));
    u.at(u.grid().find(z).unwrap())
}

#[test]
fn cross_grid_distance_matches_fine_sampling() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let gc = Arc::new(Grid::torus(4).unwrap());
    let gf = Arc::new(Grid::torus(8).unwrap());
    let a = StepTrajectory {
        tau: 0.3,
        states: (0..3).map(|_| VectorField::random(&gc, &mut rng, chorin::SampleMode::All)).collect(),
    };
    let b = StepTrajectory {
        tau: 0.2,
        states: (0..4).map(|_| VectorField::random(&gf, &mut rng, chorin::SampleMode::All)).collect(),
    };
    let t_final = 0.7;
    // Every cell edge lies on the 1/64 lattice and every time break on the 0.1 lattice.
    let m = 64;
    let mut total = 0.0;
    for (t0, t1) in [(0.0, 0.1), (0.1, 0.2), (0.2, 0.3), (0.3, 0.4), (0.4, 0.5), (0.5, 0.6), (0.6, 0.7)] {
        let mid: f64 = 0.5 * (t0 + t1);
        let ua = &a.states[(mid / a.tau).floor() as usize];
        let ub = &b.states[(mid / b.tau).floor() as usize];
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let x = [i, j, k].map(|c| (c as f64 + 0.5) / m as f64);
                    let (p, q) = (step_value(ua, 4, x), step_value(ub, 8, x));
                    s += (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>();
                }
            }
        }
        total += (t1 - t0) * s / (m * m * m) as f64;
    }
    let oracle = total.sqrt();
    let d = step_distance(&a, &b, t_final);
    assert!((d - oracle).abs() <= 1e-10 * oracle, "{d} vs {oracle}");
}

#[test]
fn manufactured_spec_tags() {
    let ms = tg().build(&DomainSpec::Torus { n: 8 }).unwrap();
    assert_eq!(ms.boundary(), BoundaryTag::Torus);
    assert_eq!(ms.smoothness(), Smoothness::C5);
    let ball = DomainSpec::unit_ball();
    let sw = ManufacturedSpec::Swirl {
        amplitude: 1.0,
        support: None,
    }
    .build(&ball)
    .unwrap();
    assert_eq!(sw.boundary(), BoundaryTag::DirichletCompatible);
    assert!(ManufacturedSpec::Swirl {
        amplitude: 1.0,
        support: Some(1.5)
    }
    .build(&ball)
    .is_err());
    assert!(tg().build(&ball).is_err());
    let _ = TaylorGreenTorus::new(0.0);
}
