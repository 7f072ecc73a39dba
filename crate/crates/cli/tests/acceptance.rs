//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so
//! the timed criteria measure the work alone.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chorin::calculus::{divergence, summation_by_parts_residual};
use chorin::harness::{convergence_study, ManufacturedSpec, Scaling, StudyConfig};
use chorin::hodge::{core_margin, verify_estimates, HodgeSolver};
use chorin::periodic_orbit::{
    contraction_test, find_fixed_point, per_step_contraction, FixedPointOptions, PeriodicForcing, TimeOneMap,
};
use chorin::stepper::{
    estimate_poincare_i, estimate_poincare_ii, poincare_i_ratio, poincare_ii_ratio, r0_bound, run_with, ForcingSpec,
    InitialSpec, SimConfig, SolverSettings, Stepper, TimeStepRule,
};
use chorin::{DomainSpec, Grid, SampleMode, ScalarField, VectorField};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ball(h: f64) -> Arc<Grid> {
    Arc::new(Grid::dirichlet(&DomainSpec::unit_ball(), h).unwrap())
}

fn torus(n: usize) -> Arc<Grid> {
    Arc::new(Grid::torus(n).unwrap())
}

fn random_solenoidal(s: &Stepper<f64>, seed: u64, norm: f64) -> VectorField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = VectorField::random(s.grid(), &mut rng, SampleMode::InteriorOnly);
    u = s.hodge().project(&u, 1e-12).unwrap();
    let n = u.l2_norm();
    u.scale(norm / n);
    u
}

const AXES: [[i64; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

fn add(z: [i64; 3], d: [i64; 3], s: i64) -> [i64; 3] {
    [z[0] + s * d[0], z[1] + s * d[1], z[2] + s * d[2]]
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Dense LU of the full `(w, φ)` system: `𝒟·w = 0` on Ω_h with one mean row per
/// coupling component, `w + 𝒟φ = u` on the interior.
struct DenseHodge {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    ilist: Vec<usize>,
    offset: usize,
    rows: usize,
    n: usize,
}

impl DenseHodge {
    fn new(g: &Grid) -> Self {
        let n = g.len();
        let h = g.h();
        let pts = g.points();
        let interior: Vec<bool> = (0..n)
            .map(|k| {
                AXES.iter()
                    .all(|&e| g.find(add(pts[k], e, 1)).is_some() && g.find(add(pts[k], e, -1)).is_some())
            })
            .collect();
        let ilist: Vec<usize> = (0..n).filter(|&k| interior[k]).collect();
        let a = ilist.len();
        let mut widx = vec![usize::MAX; n];
        for (i, &k) in ilist.iter().enumerate() {
            widx[k] = i;
        }
        let size = 3 * a + n;
        let wcol = |k: usize, c: usize| c * a + widx[k];
        let pcol = |k: usize| 3 * a + k;
        let mut parent: Vec<usize> = (0..n).collect();
        for &m in &ilist {
            for &e in &AXES {
                let p = g.find(add(pts[m], e, -1)).unwrap();
                let q = g.find(add(pts[m], e, 1)).unwrap();
                let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                parent[rp] = rq;
            }
        }
        let roots: Vec<usize> = (0..n).map(|k| find(&mut parent, k)).collect();
        let mut mat = DMatrix::<f64>::zeros(size, size);
        let mut seen = vec![false; n];
        for x in 0..n {
            let r = roots[x];
            if !seen[r] {
                seen[r] = true;
                let members: Vec<usize> = (0..n).filter(|&k| roots[k] == r).collect();
                let core: Vec<usize> = members.iter().copied().filter(|&k| g.in_core(k)).collect();
                for &k in if core.is_empty() { &members } else { &core } {
                    mat[(x, pcol(k))] = 1.0;
                }
            } else {
                for (c, &e) in AXES.iter().enumerate() {
                    for s in [1i64, -1] {
                        if let Some(k) = g.find(add(pts[x], e, s)) {
                            if interior[k] {
                                mat[(x, wcol(k, c))] += s as f64 / (2.0 * h);
                            }
                        }
                    }
                }
            }
        }
        for (i, &m) in ilist.iter().enumerate() {
            for (c, &e) in AXES.iter().enumerate() {
                let row = n + 3 * i + c;
                mat[(row, wcol(m, c))] = 1.0;
                let p = g.find(add(pts[m], e, 1)).unwrap();
                let q = g.find(add(pts[m], e, -1)).unwrap();
                mat[(row, pcol(p))] += 1.0 / (2.0 * h);
                mat[(row, pcol(q))] -= 1.0 / (2.0 * h);
            }
        }
        DenseHodge {
            lu: mat.lu(),
            offset: 3 * a,
            ilist,
            rows: size,
            n,
        }
    }

    fn solve(&self, u: &VectorField<f64>) -> (Vec<[f64; 3]>, Vec<f64>) {
        let a = self.ilist.len();
        let mut rhs = DVector::<f64>::zeros(self.rows);
        for (i, &m) in self.ilist.iter().enumerate() {
            for c in 0..3 {
                rhs[self.n + 3 * i + c] = u.at(m)[c];
            }
        }
        let sol = self.lu.solve(&rhs).expect("dense system is nonsingular");
        let mut w = vec![[0.0; 3]; self.n];
        for (i, &k) in self.ilist.iter().enumerate() {
            for c in 0..3 {
                w[k][c] = sol[c * a + i];
            }
        }
        (w, (0..self.n).map(|k| sol[self.offset + k]).collect())
    }
}

fn hodge_exactness() -> Outcome {
    let start = Instant::now();
    let tol = 1e-12;
    let grids = [("ball 0.12", ball(0.12)), ("ball 0.08", ball(0.08)), ("torus 8", torus(8)), ("torus 16", torus(16))];
    let mut worst = [0.0f64; 4];
    let mut oracle_grids = 0;
    for (gi, (name, g)) in grids.iter().enumerate() {
        let hs = HodgeSolver::<f64>::new(g);
        let a_tilde = estimate_poincare_ii(g).map_err(|e| e.to_string())?.value;
        let dense = (g.len() <= 600).then(|| DenseHodge::new(g));
        oracle_grids += dense.is_some() as usize;
        let margin = core_margin(g);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + gi as u64);
        for i in 0..20 {
            let mut u = VectorField::<f64>::random(g, &mut rng, SampleMode::All);
            if i % 2 == 1 {
                // Supported in the core so every norm inequality applies.
                let vals: Vec<[f64; 3]> =
                    (0..g.len()).map(|k| if margin[k] { [0.0; 3] } else { u.at(k) }).collect();
                u = VectorField::from_values(g, vals);
            }
            let norm = u.l2_norm();
            let dec = hs.decompose(&u, tol).map_err(|e| format!("{name}: {e}"))?;
            let div = divergence(&dec.w).linf_norm();
            worst[0] = worst[0].max(div * g.h() / norm);
            ensure(div <= 1e-9 * norm / g.h(), format!("{name} field {i}: max|D·Pu| = {div:e}"))?;
            let again = hs.project(&dec.w, tol).map_err(|e| e.to_string())?;
            let idem = again.sub(&dec.w).unwrap().l2_norm();
            worst[1] = worst[1].max(idem / norm);
            ensure(idem <= 1e-8 * norm, format!("{name} field {i}: ‖P²u − Pu‖ = {idem:e}"))?;
            let est = verify_estimates(&u, &dec, a_tilde);
            ensure(est.all_hold(), format!("{name} field {i}: {:?}", est.checks))?;
            if let Some(d) = &dense {
                let (w, phi) = d.solve(&u);
                let scale = u.max_abs_component();
                let werr = (0..g.len())
                    .flat_map(|k| (0..3).map(move |c| (k, c)))
                    .fold(0.0f64, |m, (k, c)| m.max((dec.w.at(k)[c] - w[k][c]).abs()));
                let pscale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(scale * g.h());
                let perr = (0..g.len()).fold(0.0f64, |m, k| m.max((dec.phi.at(k) - phi[k]).abs()));
                worst[2] = worst[2].max(werr / scale);
                worst[3] = worst[3].max(perr / pscale);
                ensure(
                    werr <= 1e-8 * scale && perr <= 1e-8 * pscale,
                    format!("{name} field {i}: dense mismatch w {werr:e}, φ {perr:e}"),
                )?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= Duration::from_secs(120), format!("runtime {elapsed:.1?} > 2 min"))?;
    Ok(format!(
        "80 fields; max h|D·Pu|/‖u‖ {:.1e}, idempotence {:.1e}, dense w {:.1e} φ {:.1e} on {oracle_grids} grids; {elapsed:.1?}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn summation_by_parts() -> Outcome {
    let grids = [
        ball(0.12),
        ball(0.08),
        torus(8),
        torus(16),
        Arc::new(
            Grid::dirichlet(
                &DomainSpec::Ellipsoid {
                    center: [0.03, -0.02, 0.01],
                    semiaxes: [1.1, 0.9, 0.8],
                },
                0.1,
            )
            .unwrap(),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for g in &grids {
        for i in 0..50 {
            let mode = if i % 2 == 0 { SampleMode::All } else { SampleMode::InteriorOnly };
            let u = VectorField::<f64>::random(g, &mut rng, mode);
            let phi = ScalarField::<f64>::random(g, &mut rng);
            let r = summation_by_parts_residual(&u, &phi).map_err(|e| e.to_string())?.abs();
            let bound = 1e-12 * u.l2_norm() * phi.l2_norm() / g.h();
            worst = worst.max(r / bound);
            ensure(r <= bound, format!("{} points, pair {i}: residual {r:e} > {bound:e}", g.len()))?;
        }
    }
    Ok(format!("{} grids × 50 pairs; worst residual {worst:.2} of bound", grids.len()))
}

fn energy_ledger() -> Outcome {
    let mut parts = Vec::new();
    for ratio in [0.5, 5.0] {
        let mut cfg = SimConfig::new(DomainSpec::unit_ball(), Some(0.12), TimeStepRule::ThetaH2 { theta: ratio });
        cfg.steps = Some(200);
        let v0 = InitialSpec::RandomModes {
            seed: 11,
            amplitude: 3.0,
            modes: 8,
        }
        .build(&cfg.domain)
        .map_err(|e| e.to_string())?;
        let f = ForcingSpec::Trigonometric {
            amplitude: 5.0,
            wavenumber: 1.0,
        }
        .build(&cfg.domain, 1.0)
        .map_err(|e| e.to_string())?;
        let s = run_with(&cfg, v0.as_ref(), f.as_ref(), |_, _| Ok(())).map_err(|e| e.to_string())?;
        let l = s.ledger();
        ensure(l.steps.len() == 200, format!("τ/h² = {ratio}: {} steps", l.steps.len()))?;
        ensure(
            l.initial.map_or(false, |i| i.chain_holds),
            format!("τ/h² = {ratio}: initial chain fails"),
        )?;
        ensure(l.all_hold(), format!("τ/h² = {ratio}: {:?}", l.first_violation()))?;
        let r = l.max_stencil_residual();
        ensure(r <= 1e-9, format!("τ/h² = {ratio}: stencil residual {r:e}"))?;
        parts.push(format!("τ/h² = {ratio}: stencil {r:.1e}"));
    }
    Ok(format!("200 steps, every inequality holds; {}", parts.join(", ")))
}

fn time_global_bound() -> Outcome {
    let g = ball(0.12);
    let a_hat = estimate_poincare_i(&g).map_err(|e| e.to_string())?.value;
    let t1 = 10;
    let tau = 1.0 / t1 as f64;
    let shape = |t: f64, x: [f64; 3]| {
        let c = (2.0 * PI * t).cos();
        [c * x[1], -x[0], 1.0 + c]
    };
    let mut alpha2 = 0.0;
    for n in 0..t1 {
        let (f, _) = VectorField::<f64>::sample_space_time_average(
            &g,
            shape,
            n as f64 * tau,
            (n + 1) as f64 * tau,
            SampleMode::All,
        );
        alpha2 += f.l2_norm().powi(2) * tau;
    }
    let scale = 1.0 / (r0_bound(a_hat, 1.0) * alpha2.sqrt());
    let r0 = r0_bound(a_hat, scale * alpha2.sqrt());
    ensure((r0 - 1.0).abs() < 1e-12, format!("R₀ = {r0}"))?;
    let f = move |t: f64, x: [f64; 3]| shape(t, x).map(|v| v * scale);
    let mut worst = 0.0f64;
    for (seed, norm) in [(1, 0.5), (2, 1.0)] {
        let mut s = Stepper::<f64>::new(&g, tau, 1.0, SolverSettings::default()).map_err(|e| e.to_string())?;
        let u0 = random_solenoidal(&s, seed, norm);
        s.init_from_discrete(u0, None).map_err(|e| e.to_string())?;
        for m in 1..=5 {
            s.run_steps(t1, &f, |_, _| Ok(())).map_err(|e| e.to_string())?;
            let nt = s.state().u_tilde.l2_norm();
            worst = worst.max(nt);
            ensure(nt <= 1.05, format!("‖ũ⁰‖ = {norm}, m = {m}: ‖ũ‖ = {nt}"))?;
        }
    }
    Ok(format!("Â = {a_hat:.4}, max ‖ũ^(mT₁)‖ = {worst:.4} ≤ 1.05"))
}

fn periodic_forcing(grid: &Arc<Grid>, amplitude: f64, steps: usize) -> PeriodicForcing<f64> {
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

fn contraction() -> Outcome {
    let g = Arc::new(
        Grid::dirichlet(
            &DomainSpec::Ball {
                center: [0.0; 3],
                radius: 2.0,
            },
            0.24,
        )
        .unwrap(),
    );
    let a_hat = estimate_poincare_i(&g).map_err(|e| e.to_string())?.value;
    let mut m = TimeOneMap::new(&g, 1.0, SolverSettings::default(), periodic_forcing(&g, 1.0, 100))
        .map_err(|e| e.to_string())?;
    let (small, rep) = find_fixed_point(&mut m, &FixedPointOptions::default(), a_hat).map_err(|e| e.error.to_string())?;
    ensure(rep.certified_small, format!("max|ũ| = {} ≥ β₀ = {}", rep.max_abs, rep.beta0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut other = VectorField::random(&g, &mut rng, SampleMode::InteriorOnly);
    let n = other.l2_norm();
    other.scale(0.5 / n);
    let r = contraction_test(&m, &small, &other, 100, a_hat).map_err(|e| e.to_string())?;
    let bound = per_step_contraction(a_hat, m.tau(), 1.0) * 1.05;
    let max_ratio = r
        .norms
        .windows(2)
        .filter(|w| w[0] > r.noise_floor && w[1] > r.noise_floor)
        .map(|w| w[1] / w[0])
        .fold(0.0f64, f64::max);
    ensure(r.resolved_steps >= 100, format!("only {} resolved steps", r.resolved_steps))?;
    ensure(max_ratio <= bound, format!("ratio {max_ratio} > {bound}"))?;
    let fitted = r.fitted_exponent.ok_or("no exponent fit")?;
    let target = -0.5 / (a_hat * a_hat) * 0.9;
    ensure(fitted <= target, format!("fitted exponent {fitted} > {target}"))?;
    Ok(format!(
        "{} steps; max ratio {max_ratio:.5} ≤ {bound:.5}; exponent {fitted:.3} ≤ {target:.3}",
        r.resolved_steps
    ))
}

fn periodic_fixed_point() -> Outcome {
    let g = ball(0.12);
    let a_hat = estimate_poincare_i(&g).map_err(|e| e.to_string())?.value;
    let opts = FixedPointOptions::default();
    let mut m = TimeOneMap::new(&g, 1.0, SolverSettings::default(), periodic_forcing(&g, 1.0, 10))
        .map_err(|e| e.to_string())?;
    let (u0, rep) = find_fixed_point(&mut m, &opts, a_hat).map_err(|e| e.error.to_string())?;
    ensure(
        rep.residual <= 1e-8 && rep.iterations <= 200,
        format!("residual {:e} after {} iterations", rep.residual, rep.iterations),
    )?;
    let orbit = m.orbit(&u0, 2).map_err(|e| e.to_string())?;
    let gap = (0..=10).fold(0.0f64, |w, n| w.max(orbit[n + 10].sub(&orbit[n]).unwrap().l2_norm()));
    ensure(gap <= 2e-8, format!("orbit not periodic: {gap:e}"))?;
    let base = periodic_forcing(&g, 2.0, 10);
    let mut norms = Vec::new();
    for eps in [1.0, 0.5, 0.25] {
        let mut m = TimeOneMap::new(&g, 1.0, SolverSettings::default(), base.scaled(eps)).map_err(|e| e.to_string())?;
        let (u, rep) = find_fixed_point(&mut m, &opts, a_hat).map_err(|e| e.error.to_string())?;
        ensure(rep.residual <= 1e-8, format!("ε = {eps}: residual {:e}", rep.residual))?;
        norms.push(u.l2_norm());
    }
    ensure(norms.windows(2).all(|w| w[1] < w[0]), format!("norms not decreasing: {norms:?}"))?;
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    ensure(ratios.iter().all(|&r| r < 0.75), format!("no decay toward 0: ratios {ratios:?}"))?;
    Ok(format!(
        "{} iterations, residual {:.1e}, period gap {gap:.1e}; ε-orbit norms {:.3e} > {:.3e} > {:.3e}",
        rep.iterations, rep.residual, norms[0], norms[1], norms[2]
    ))
}

fn torus_convergence() -> Outcome {
    let start = Instant::now();
    let cfg = StudyConfig::torus(
        ManufacturedSpec::TaylorGreen { amplitude: 1.0 },
        &[8, 16, 32],
        Scaling::ThetaH2 { theta: 1.0 },
        0.25,
    );
    let table = convergence_study(&cfg).map_err(|e| e.to_string())?;
    let fit = table.fit("l2_final").ok_or("no l2_final fit")?;
    ensure(!fit.flagged, format!("fit flagged: {fit:?}"))?;
    ensure(fit.order >= 1.8, format!("L² order {:.3} < 1.8", fit.order))?;
    let linf = table.column("linf_final");
    ensure(linf[2] <= linf[0], format!("L∞ at N=32 {} > N=8 {}", linf[2], linf[0]))?;
    // ‖e‖_∞ ≤ h^{-3/2}‖e‖ ties the L∞ error to the L² rate, giving the √h chain.
    for r in &table.rows {
        ensure(
            r.linf_max * r.h.powf(1.5) <= r.l2_max * (1.0 + 1e-12),
            format!("h = {}: L∞ {} exceeds h^(-3/2)·L² {}", r.h, r.linf_max, r.l2_max / r.h.powf(1.5)),
        )?;
        ensure(r.ledger_holds, format!("h = {}: ledger violated", r.h))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= Duration::from_secs(900), format!("runtime {elapsed:.1?} > 15 min"))?;
    Ok(format!(
        "L² order {:.3} ± {:.3}; L∞ {:.2e} → {:.2e}; {elapsed:.1?}",
        fit.order, fit.stderr, linf[0], linf[2]
    ))
}

fn dirichlet_convergence() -> Outcome {
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
    let table = convergence_study(&cfg).map_err(|e| e.to_string())?;
    let b = table.bound_check("l2_u_max", 0.25).ok_or("no bound check")?;
    let e = table.column("l2_u_max");
    ensure(b.decreasing, format!("errors not strictly decreasing: {e:?}"))?;
    ensure(
        b.holds,
        format!("finest {} > β*h^(1/4) = {}", b.finest_error, b.finest_bound),
    )?;
    Ok(format!(
        "bound check (not an observed rate): errors {:.3} > {:.3} > {:.3}, β* = {:.3}, finest {:.3} ≤ {:.3}",
        e[0], e[1], e[2], b.beta_star, b.finest_error, b.finest_bound
    ))
}

fn poincare_constants() -> Outcome {
    let rod = Arc::new(
        Grid::dirichlet(
            &DomainSpec::RoundedBox {
                center: [0.0; 3],
                half_extents: [0.5, 0.2, 0.2],
                corner_radius: 0.05,
            },
            0.01,
        )
        .unwrap(),
    );
    let l_over_pi = 1.0 / PI;
    let a_rod = estimate_poincare_i(&rod).map_err(|e| e.to_string())?.value;
    let at_rod = estimate_poincare_ii(&rod).map_err(|e| e.to_string())?.value;
    for (name, v) in [("Â", a_rod), ("Ã", at_rod)] {
        ensure(
            (v / l_over_pi - 1.0).abs() <= 0.2,
            format!("slab {name} = {v} vs L/π = {l_over_pi}"),
        )?;
    }
    let g = ball(0.12);
    let a = estimate_poincare_i(&g).map_err(|e| e.to_string())?.value * 1.01;
    let at = estimate_poincare_ii(&g).map_err(|e| e.to_string())?.value * 1.01;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_i, mut worst_ii) = (0.0f64, 0.0f64);
    for i in 0..10_000 {
        let mut phi = ScalarField::<f64>::random(&g, &mut rng);
        if i % 10 == 0 {
            let (p, q) = (1.0 + (i % 7) as f64 * 0.3, (i % 3) as f64);
            phi = ScalarField::from_fn(&g, |x| (p * x[0] + q * x[1]).cos() * (1.0 - x[2] * x[2]));
        }
        for axis in 0..3 {
            let r = poincare_i_ratio(&phi, axis);
            worst_i = worst_i.max(r / (a * a));
            ensure(r <= a * a, format!("field {i} axis {axis}: Poincaré I violated"))?;
        }
        let r = poincare_ii_ratio(&phi);
        worst_ii = worst_ii.max(r / (at * at));
        ensure(r <= at * at, format!("field {i}: Poincaré II violated"))?;
    }
    Ok(format!(
        "slab Â/(L/π) = {:.3}, Ã/(L/π) = {:.3}; 10⁴ fields, max ratio {worst_i:.3} (I), {worst_ii:.3} (II) of 1.01× bound",
        a_rod / l_over_pi,
        at_rod / l_over_pi
    ))
}

fn chorin(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_chorin"))
        .args(args)
        .env_remove("CHORIN_GRID_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        o.status.success(),
        format!("chorin {args:?}: {}", String::from_utf8_lossy(&o.stderr)),
    )
}

fn csv_outputs(dir: &Path) -> Vec<(String, String)> {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .filter(|(p, _)| p.ends_with(".csv"))
        .collect()
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "schema_version": 1,
            "run": {
                "domain": {"kind": "ball", "center": [0.0, 0.0, 0.0], "radius": 1.0},
                "h": 0.1,
                "time_step": {"rule": "theta_h2", "theta": 2.0},
                "steps": 20,
                "output_every": 10,
                "initial": {"kind": "random_modes", "seed": 3, "amplitude": 2.0, "modes": 6},
                "forcing": {"kind": "trigonometric", "amplitude": 1.0, "wavenumber": 1.0}
            }
        })
        .to_string(),
    )
    .unwrap();
    let mut checked = 0;
    let cases: [(&str, Vec<String>); 2] = [
        ("run", vec!["--config".into(), s(&cfg), "run".into()]),
        (
            "convergence",
            vec!["convergence".into(), "--bc".into(), "torus".into(), "--levels".into(), "4,6,8".into(), "--t-final".into(), "0.05".into()],
        ),
    ];
    for (name, args) in cases {
        let first = tmp.path().join(format!("{name}-a"));
        let second = tmp.path().join(format!("{name}-b"));
        let mut a: Vec<String> = vec!["--out".into(), s(&first), "--threads".into(), "4".into()];
        a.extend(args);
        chorin(&a.iter().map(String::as_str).collect::<Vec<_>>())?;
        chorin(&["--out", &s(&second), "replay", &s(&first.join("manifest.json"))])?;
        let outputs = csv_outputs(&first);
        ensure(!outputs.is_empty(), format!("{name}: no CSV outputs"))?;
        for (path, _) in &outputs {
            let (x, y) = (std::fs::read(first.join(path)).unwrap(), std::fs::read(second.join(path)).unwrap());
            ensure(x == y, format!("{name}: {path} differs"))?;
            checked += 1;
        }
        ensure(csv_outputs(&second) == outputs, format!("{name}: manifest hashes differ"))?;
    }
    Ok(format!("run and convergence replayed sequentially; {checked} CSV files bitwise identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 hodge exactness", hodge_exactness),
        ("2 summation by parts", summation_by_parts),
        ("3 energy ledger", energy_ledger),
        ("4 time-global bound", time_global_bound),
        ("5 contraction", contraction),
        ("6 periodic fixed point", periodic_fixed_point),
        ("7 torus convergence", torus_convergence),
        ("8 dirichlet convergence", dirichlet_convergence),
        ("9 poincare constants", poincare_constants),
        ("10 reproducibility", reproducibility),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.1?}]", t.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{:.1?}]", t.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
