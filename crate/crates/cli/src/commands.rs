use std::sync::Arc;

use chorin::calculus::divergence;
use chorin::harness::{convergence_study, StudyConfig};
use chorin::hodge::{verify_estimates, HodgeSolver};
use chorin::io::{write_fields_csv, write_vtk, FieldRef};
use chorin::periodic_orbit::{find_fixed_point, PeriodicForcing, TimeOneMap};
use chorin::stepper::{estimate_poincare_i, estimate_poincare_ii, SimConfig, Stepper};
use chorin::{Grid, SampleMode, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{GridConfig, HodgeConfig, PeriodicConfig};
use crate::manifest::Recorder;
use crate::CliError;

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

fn json_bytes<S: Serialize>(v: &S) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

fn vtk_bytes(grid: &Grid, title: &str, fields: &[FieldRef<'_, f64>]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_vtk(&mut buf, grid, title, fields)?;
    Ok(buf)
}

pub fn run(cfg: &SimConfig, rec: &mut Recorder) -> Result<(), CliError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    rec.add_grid(&grid);
    rec.manifest.solver = Some(serde_json::to_value(cfg.solver).expect("serialisable"));
    let v0 = cfg.initial.build(&cfg.domain)?;
    let f = cfg.forcing.build(&cfg.domain, cfg.nu)?;
    let mut s = Stepper::<f64>::new(&grid, cfg.tau()?, cfg.nu, cfg.solver)?.with_history(cfg.keep_last);
    s.init(v0.as_ref())?;
    let mut dumps: Vec<(String, Vec<u8>)> = Vec::new();
    let every = cfg.output_every;
    let mut dump = |st: &chorin::stepper::SimState<f64>| -> chorin::Result<()> {
        let bytes = vtk_bytes(
            st.grid(),
            &format!("chorin run n={} t={}", st.n, st.t),
            &[FieldRef::Vector("u", &st.u), FieldRef::Vector("u_tilde", &st.u_tilde)],
        )
        .map_err(|e| chorin::Error::InvalidParameter {
            name: "output",
            reason: e.to_string(),
        })?;
        dumps.push((format!("fields_{:06}.vtk", st.n), bytes));
        Ok(())
    };
    if every > 0 {
        dump(s.state())?;
    }
    let outcome = s.run_steps(cfg.num_steps()?, f.as_ref(), |st, _| {
        if every > 0 && st.n % every == 0 {
            dump(st)?;
        }
        Ok(())
    });
    let ledger = csv_bytes(|b| s.ledger().write_csv(b))?;
    rec.write("ledger.csv", &ledger)?;
    for (name, bytes) in &dumps {
        rec.write(name, bytes)?;
    }
    let st = s.state();
    rec.write(
        "final.vtk",
        &vtk_bytes(
            &grid,
            &format!("chorin run n={} t={}", st.n, st.t),
            &[FieldRef::Vector("u", &st.u), FieldRef::Vector("u_tilde", &st.u_tilde)],
        )?,
    )?;
    outcome?;
    if let Some((n, check)) = s.ledger().first_violation() {
        return Err(CliError::Numerical(format!("energy ledger check '{check}' fails at step {n}")));
    }
    println!(
        "run: {} steps, ‖u‖ = {:e}, ledger holds",
        st.n,
        st.u.l2_norm()
    );
    Ok(())
}

#[derive(Serialize)]
struct PeriodicSummary<'a> {
    a_hat: f64,
    alpha: f64,
    tau: f64,
    report: &'a chorin::periodic_orbit::FixedPointReport,
}

pub fn periodic(cfg: &PeriodicConfig, rec: &mut Recorder) -> Result<(), CliError> {
    cfg.validate()?;
    let grid = Arc::new(cfg.grid().build()?);
    rec.add_grid(&grid);
    rec.manifest.solver = Some(serde_json::to_value(cfg.solver).expect("serialisable"));
    if grid.is_periodic() {
        return Err(CliError::Config(
            "periodic.domain: the smallness certificate needs a bounded domain".into(),
        ));
    }
    let a_hat = estimate_poincare_i(&grid)?.value;
    let f = cfg.forcing.build(&cfg.domain, cfg.nu)?;
    let forcing = PeriodicForcing::<f64>::new(&grid, f, cfg.steps_per_period)?.scaled(cfg.forcing_scale);
    let alpha = forcing.alpha();
    let mut map = TimeOneMap::new(&grid, cfg.nu, cfg.solver, forcing)?;
    let (u0, report) = match find_fixed_point(&mut map, &cfg.fixed_point, a_hat) {
        Ok(ok) => ok,
        Err(fail) => {
            let residuals = residual_csv(&fail.report.residual_history)?;
            rec.write("residuals.csv", &residuals)?;
            rec.write(
                "report.json",
                &json_bytes(&PeriodicSummary {
                    a_hat,
                    alpha,
                    tau: map.tau(),
                    report: &fail.report,
                }),
            )?;
            return Err(fail.error.into());
        }
    };
    let orbit = map.orbit(&u0, 1)?;
    let rows = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["n", "t", "norm_u_tilde", "max_abs"])?;
        for (n, u) in orbit.iter().enumerate() {
            let max_abs = u
                .values()
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
                .fold(0.0, f64::max);
            w.write_record([
                n.to_string(),
                (n as f64 * map.tau()).to_string(),
                u.l2_norm().to_string(),
                max_abs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    rec.write("orbit.csv", &rows)?;
    rec.write("residuals.csv", &residual_csv(&report.residual_history)?)?;
    rec.write("fixed_point.vtk", &vtk_bytes(&grid, "chorin periodic fixed point", &[FieldRef::Vector("u_tilde", &u0)])?)?;
    rec.write(
        "report.json",
        &json_bytes(&PeriodicSummary {
            a_hat,
            alpha,
            tau: map.tau(),
            report: &report,
        }),
    )?;
    println!(
        "periodic: {} iterations, residual {:e}, max|ũ| = {:e} {} β₀ = {:e}",
        report.iterations,
        report.residual,
        report.max_abs,
        if report.certified_small { "<" } else { "≥" },
        report.beta0
    );
    Ok(())
}

fn residual_csv(history: &[f64]) -> Result<Vec<u8>, CliError> {
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["iteration", "residual"])?;
        for (i, r) in history.iter().enumerate() {
            w.write_record([(i + 1).to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn hodge(cfg: &HodgeConfig, rec: &mut Recorder) -> Result<(), CliError> {
    if cfg.samples == 0 || !(cfg.tol > 0.0 && cfg.tol < 1.0) {
        return Err(CliError::Config("hodge: samples must be positive and tol in (0, 1)".into()));
    }
    let grid = Arc::new(cfg.grid().build()?);
    rec.add_grid(&grid);
    let a_tilde = estimate_poincare_ii(&grid)?.value;
    let hs = HodgeSolver::<f64>::new(&grid);
    let h = grid.h();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = Vec::new();
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "sample",
            "norm_u",
            "div_max",
            "div_bound",
            "idempotence",
            "idempotence_bound",
            "projection_norm_ratio",
            "gradient_norm_ratio",
            "potential_poincare_ratio",
            "ok",
        ])?;
        for i in 0..cfg.samples {
            let u = VectorField::<f64>::random(&grid, &mut rng, SampleMode::All);
            let nu = u.l2_norm();
            let (d, again) = match hs.decompose(&u, cfg.tol).and_then(|d| Ok((hs.project(&d.w, cfg.tol)?, d))) {
                Ok((again, d)) => (d, again),
                Err(e) => {
                    failures.push(format!("sample {i}: {e}"));
                    continue;
                }
            };
            let div_max = divergence(&d.w).linf_norm();
            let idem = again.sub(&d.w).expect("same grid").l2_norm();
            let est = verify_estimates(&u, &d, a_tilde);
            let ratio = |n: &str| est.get(n).map_or(f64::NAN, |c| c.ratio);
            let ok = div_max <= 1e-9 * nu / h && idem <= 1e-8 * nu && est.all_hold();
            if !ok {
                failures.push(format!("sample {i}"));
            }
            w.write_record([
                i.to_string(),
                nu.to_string(),
                div_max.to_string(),
                (1e-9 * nu / h).to_string(),
                idem.to_string(),
                (1e-8 * nu).to_string(),
                ratio("projection_norm").to_string(),
                ratio("gradient_norm").to_string(),
                ratio("potential_poincare").to_string(),
                ok.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    rec.write("hodge.csv", &bytes)?;
    if !failures.is_empty() {
        return Err(CliError::Numerical(format!(
            "Hodge decomposition checks fail: {}",
            failures.join("; ")
        )));
    }
    println!("hodge: {} samples on {} points, all checks hold", cfg.samples, grid.len());
    Ok(())
}

pub fn convergence(cfg: &StudyConfig, rec: &mut Recorder) -> Result<(), CliError> {
    cfg.validate()?;
    for l in 0..cfg.levels.len() {
        rec.add_grid(&*cfg.level_config(l)?.grid()?);
    }
    rec.manifest.solver = Some(serde_json::to_value(cfg.solver).expect("serialisable"));
    let table = convergence_study(cfg)?;
    rec.write("table.csv", &csv_bytes(|b| table.write_csv(b))?)?;
    rec.write("fits.csv", &csv_bytes(|b| table.write_fits_csv(b))?)?;
    let mut report = table.report();
    if !cfg.domain.is_torus() {
        if let Some(b) = table.bound_check("l2_u_max", 0.25) {
            report.push_str(&format!(
                "bound check (not an observed rate): max_n ‖uⁿ − v‖ ≤ β*h^(1/4) with β* = {:.4e} \
                 fitted on the coarsest two levels; finest {:.4e} vs {:.4e}: {}; decreasing: {}\n",
                b.beta_star,
                b.finest_error,
                b.finest_bound,
                if b.holds { "holds" } else { "fails" },
                b.decreasing
            ));
        }
    }
    rec.write("report.txt", report.as_bytes())?;
    print!("{report}");
    Ok(())
}

#[derive(Serialize)]
struct PoincareSummary {
    h: f64,
    points: usize,
    a_hat: Option<chorin::stepper::PoincareEstimate>,
    a_tilde: chorin::stepper::PoincareEstimate,
}

pub fn poincare(cfg: &GridConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let grid = cfg.build()?;
    rec.add_grid(&grid);
    let a_hat = if grid.is_periodic() {
        None
    } else {
        Some(estimate_poincare_i(&grid)?)
    };
    let a_tilde = estimate_poincare_ii(&grid)?;
    let s = PoincareSummary {
        h: grid.h(),
        points: grid.len(),
        a_hat,
        a_tilde,
    };
    rec.write("poincare.json", &json_bytes(&s))?;
    match &s.a_hat {
        Some(a) => println!("poincare: Â = {:.6e}, Ã = {:.6e}", a.value, s.a_tilde.value),
        None => println!("poincare: Ã = {:.6e} (Â is undefined on the torus)", s.a_tilde.value),
    }
    Ok(())
}

#[derive(Serialize)]
struct GridSummary {
    h: f64,
    points: usize,
    interior: usize,
    boundary: usize,
    core: usize,
    sublattice_sizes: Vec<usize>,
    gap: chorin::GapReport,
    gap_holds: bool,
}

pub fn grid(cfg: &GridConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let grid = Arc::new(cfg.build()?);
    rec.add_grid(&grid);
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    rec.write("grid.csv", &csv)?;
    rec.write("grid.vtk", &vtk_bytes(&grid, "chorin grid", &[])?)?;
    let mut pts = Vec::new();
    write_fields_csv::<f64, _>(&mut pts, &grid, &[])?;
    rec.write("points.csv", &pts)?;
    let gap = grid.boundary_gap_report();
    let s = GridSummary {
        h: grid.h(),
        points: grid.len(),
        interior: grid.interior().len(),
        boundary: grid.boundary().count(),
        core: grid.core_len(),
        sublattice_sizes: grid.sublattices().iter().map(|s| s.len()).collect(),
        gap,
        gap_holds: gap.holds(),
    };
    rec.write("grid.json", &json_bytes(&s))?;
    println!(
        "grid: {} points ({} interior, {} boundary, {} core); gap report {}",
        s.points,
        s.interior,
        s.boundary,
        s.core,
        if s.gap_holds { "holds" } else { "fails" }
    );
    if !s.gap_holds {
        return Err(CliError::Numerical("boundary gap report exceeds its bounds".into()));
    }
    Ok(())
}
