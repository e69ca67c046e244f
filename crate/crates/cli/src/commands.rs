//! The exact, simulate, solve-f, and sweep commands.

use std::io::BufReader;
use std::path::PathBuf;

use cpsdyn::estimator::{run_covariant, run_novel, run_sqc_twf, PopulationSeries};
use cpsdyn::propagator::{exact_population_matrix, propagator_angles, Hamiltonian2};
use cpsdyn::representations::{
    abel_solve_f, import_f_table, import_xi_table, residual_integral_equation, uniform_y_grid,
    validate_xi, IsomorphismRep, XiProfile,
};

use crate::config::{Method, RunConfig};
use crate::csvio;
use crate::CliError;

/// Rows of the solver output table.
const SOLVE_GRID: usize = 4096;

pub fn cmd_exact(cfg: &RunConfig) -> Result<(), CliError> {
    let h = cfg.hamiltonian()?;
    let (grid, t_max, dt) = cfg.time_grid()?;
    let comments = vec![format!("exact reference | {}", cfg.describe(t_max, dt, grid.len()))];
    let rows = grid.iter().map(|&t| {
        let p = exact_population_matrix(&h, t);
        let xi = propagator_angles(&h, t).xi;
        vec![t, p[0][0], p[0][1], p[1][0], p[1][1], xi]
    });
    let mut sink = csvio::open_sink(cfg.out.as_deref())?;
    csvio::write_table(&mut sink, &comments, &["t", "P11", "P12", "P21", "P22", "xi"], rows)
}

/// Build the representation selected by the configuration, if the method
/// needs one.
pub fn build_representation(cfg: &RunConfig) -> Result<Option<IsomorphismRep>, CliError> {
    Ok(Some(match cfg.method {
        Method::Sqz => IsomorphismRep::squeezed(),
        Method::Case1 => IsomorphismRep::case1(),
        Method::Case2 => IsomorphismRep::case2(),
        Method::SqcTwf | Method::Covariant => return Ok(None),
        Method::Custom => custom_representation(cfg)?,
    }))
}

fn custom_representation(cfg: &RunConfig) -> Result<IsomorphismRep, CliError> {
    if let Some(path) = &cfg.xi_table {
        let profile = load_xi_table(path)?;
        let report = validate_xi(&profile);
        if !report.passes() {
            return Err(CliError::Numerical(format!(
                "profile {} rejected:\n{report}",
                path.display()
            )));
        }
        return Ok(IsomorphismRep::from_xi(format!("custom({})", path.display()), profile)?);
    }
    if let Some(path) = &cfg.f_table {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let gen = import_f_table(BufReader::new(file))?;
        return Ok(IsomorphismRep::from_f_table(format!("custom({})", path.display()), gen)?);
    }
    Err(CliError::Usage("method custom requires --xi-table or --f-table".into()))
}

fn load_xi_table(path: &PathBuf) -> Result<XiProfile, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(import_xi_table(BufReader::new(file))?)
}

pub fn run_series(cfg: &RunConfig, h: &Hamiltonian2, grid: Vec<f64>) -> Result<PopulationSeries, CliError> {
    let ens = cpsdyn::estimator::EnsembleConfig::new(cfg.n_traj, cfg.seed, cfg.gamma, grid)?;
    Ok(match cfg.method {
        Method::SqcTwf => run_sqc_twf(h, &ens)?,
        Method::Covariant => run_covariant(h, cfg.gamma, &ens)?,
        _ => {
            let rep = build_representation(cfg)?.expect("window methods carry a representation");
            run_novel(h, &rep, &ens)?
        }
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let h = cfg.hamiltonian()?;
    let (grid, t_max, dt) = cfg.time_grid()?;
    let series = run_series(cfg, &h, grid)?;
    let comments = vec![format!("simulation | {}", cfg.describe(t_max, dt, series.len()))];
    let rows = series.entries.iter().map(|e| {
        let exact = exact_population_matrix(&h, e.time);
        let est = &e.estimate;
        vec![
            e.time,
            est.pop[0][0],
            est.pop[0][1],
            est.pop[0][0] - est.pop[0][1],
            exact[0][0],
            exact[1][0],
            est.stderr[0][0],
            est.cbar[0],
            e.xi,
        ]
    });
    let mut sink = csvio::open_sink(cfg.out.as_deref())?;
    csvio::write_table(
        &mut sink,
        &comments,
        &["t", "P1", "P2", "P1mP2", "P1_exact", "P2_exact", "stderr_P1", "cbar", "xi"],
        rows,
    )
}

pub fn cmd_solve_f(cfg: &RunConfig) -> Result<(), CliError> {
    // The profile source: an explicit table, or the built-in named by the
    // method (the custom method requires a table).
    let profile = match (&cfg.xi_table, cfg.method) {
        (Some(path), _) => load_xi_table(path)?,
        (None, Method::Sqz) => XiProfile::squeezed(),
        (None, Method::Case1) => XiProfile::case1(),
        (None, Method::Case2) => XiProfile::case2(),
        (None, m) => {
            return Err(CliError::Usage(format!(
                "solve-f needs --xi-table or a profile-carrying method, got {}",
                m.name()
            )))
        }
    };
    let report = validate_xi(&profile);
    if !report.passes() {
        return Err(CliError::Numerical(format!("profile rejected:\n{report}")));
    }
    let f = abel_solve_f(&profile, &uniform_y_grid(SOLVE_GRID), 64)?;

    // Record the pairing residual of the solved table against the profile.
    let rep = IsomorphismRep::new("solved", f, profile)?;
    let mut max_residual = 0.0_f64;
    for k in 1..=32 {
        let angle = std::f64::consts::FRAC_PI_2 * k as f64 / 33.0;
        max_residual = max_residual.max(residual_integral_equation(&rep, angle));
    }

    let (ys, fs) = rep.f().table().expect("solver output is tabulated");
    let comments = vec![
        format!("solved weight generator | method={} rows={}", cfg.method.name(), ys.len()),
        format!("max_pairing_residual_32point_grid = {:.3e}", max_residual),
    ];
    let rows = ys.iter().zip(fs).map(|(&y, &fv)| vec![y, fv]);
    let mut sink = csvio::open_sink(cfg.out.as_deref())?;
    csvio::write_table(&mut sink, &comments, &["y", "f"], rows)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.lambdas.is_empty() {
        return Err(CliError::Usage("sweep needs a non-empty --lambdas list".into()));
    }
    if cfg.methods.is_empty() {
        return Err(CliError::Usage("sweep needs a non-empty --methods list".into()));
    }
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep_out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;

    let mut summary: Vec<(f64, Method, Result<f64, String>)> = Vec::new();
    for &lambda in &cfg.lambdas {
        for &method in &cfg.methods {
            let mut sub = cfg.clone();
            sub.h12_re = lambda;
            sub.h12_im = 0.0;
            sub.method = method;
            sub.out = Some(dir.join(format!("sim_{}_lambda{}.csv", method.name(), lambda)));
            let outcome = sweep_one(&sub);
            summary.push((lambda, method, outcome));
        }
    }

    let summary_path = dir.join("summary.csv");
    let mut sink = csvio::open_sink(Some(&summary_path))?;
    use std::io::Write;
    writeln!(sink, "# sweep summary | max |P1mP2 - exact| per coupling and method")?;
    writeln!(sink, "lambda,method,max_abs_dev,status")?;
    let mut failures = 0;
    for (lambda, method, outcome) in &summary {
        match outcome {
            Ok(dev) => writeln!(sink, "{},{},{},ok", lambda, method.name(), csvio::fmt(*dev))?,
            Err(msg) => {
                failures += 1;
                writeln!(sink, "{},{},nan,{}", lambda, method.name(), msg.replace(',', ";"))?;
            }
        }
    }
    sink.flush()?;
    if failures > 0 {
        return Err(CliError::Numerical(format!(
            "{failures} of {} sweep runs failed; see {}",
            summary.len(),
            summary_path.display()
        )));
    }
    Ok(())
}

/// One sweep cell: write its CSV and return the max deviation from exact.
fn sweep_one(cfg: &RunConfig) -> Result<f64, String> {
    let inner = || -> Result<f64, CliError> {
        let h = cfg.hamiltonian()?;
        let (grid, t_max, dt) = cfg.time_grid()?;
        let series = run_series(cfg, &h, grid)?;
        let comments = vec![format!("simulation | {}", cfg.describe(t_max, dt, series.len()))];
        let mut max_dev = 0.0_f64;
        let rows: Vec<Vec<f64>> = series
            .entries
            .iter()
            .map(|e| {
                let exact = exact_population_matrix(&h, e.time);
                let est = &e.estimate;
                let diff = est.pop[0][0] - est.pop[0][1];
                let exact_diff = exact[0][0] - exact[1][0];
                max_dev = max_dev.max((diff - exact_diff).abs());
                vec![
                    e.time,
                    est.pop[0][0],
                    est.pop[0][1],
                    diff,
                    exact[0][0],
                    exact[1][0],
                    est.stderr[0][0],
                    est.cbar[0],
                    e.xi,
                ]
            })
            .collect();
        let mut sink = csvio::open_sink(cfg.out.as_deref())?;
        csvio::write_table(
            &mut sink,
            &comments,
            &["t", "P1", "P2", "P1mP2", "P1_exact", "P2_exact", "stderr_P1", "cbar", "xi"],
            rows.into_iter(),
        )?;
        Ok(max_dev)
    };
    inner().map_err(|e| e.message().to_string())
}
