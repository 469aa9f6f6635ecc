use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use memostrange::cell_problem::solve_cell_radial;
use memostrange::cell_problem::{effective_coefficient, w_exact};
use memostrange::cli_io::{emit_plot_script, load_config, write_field_dump, write_json, write_series_csv, write_table, RunConfig};
use memostrange::memory_term::MemoryScheme;
use memostrange::scalar::format_exact;
use memostrange::solver::run_simulation;
use memostrange::verification::{
    cell_check, comparison_trial, convergence_study, convolution_samples, kernel_dt_levels, kernel_equivalence_study,
    kernel_trace, mms_config, KernelInput, Regime, StudyKind,
};
use memostrange::{derive_params, ConvergenceReport, Error, ModelParams};

#[derive(Parser)]
#[command(name = "memostrange", version, about = "Coupled diffusion and memory solver with verification studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write series.csv plus a gnuplot script
    Solve(Common),
    /// Solve the radial cell problem and compare with the closed form
    Cell(Common),
    /// Compare the stepped memory equation with its convolution form
    Kernel(Common),
    /// Manufactured-solution convergence in space and time
    Mms(Common),
    /// Seeded sign-preservation trials with nonpositive data
    Compare(Common),
    /// Convergence of the cell constant as eps shrinks
    #[command(name = "cell-sweep")]
    CellSweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
}

type Config = RunConfig<f64>;

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParams(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("acceptance check failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MEMOSTRANGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("MEMOSTRANGE_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(command: Command) -> Result<bool, Failure> {
    let (common, run): (Common, fn(&Config, &Path) -> Result<bool, Failure>) = match command {
        Command::Solve(c) => (c, solve),
        Command::Cell(c) => (c, cell),
        Command::Kernel(c) => (c, kernel),
        Command::Mms(c) => (c, mms),
        Command::Compare(c) => (c, compare),
        Command::CellSweep(c) => (c, cell_sweep),
    };
    let config: Config = load_config(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
    run(&config, &out)
}

fn params_of(config: &Config) -> Result<ModelParams<f64>, Failure> {
    let p = config.params;
    Ok(derive_params(p.n, p.c0, p.lambda, p.alpha, p.beta)?)
}

fn report_rows(reports: &[ConvergenceReport<f64>]) -> Vec<Vec<String>> {
    reports
        .iter()
        .flat_map(|r| {
            r.resolutions
                .iter()
                .zip(&r.errors)
                .map(|(h, e)| vec![r.label.clone(), format_exact(*h), format_exact(*e)])
        })
        .collect()
}

#[derive(Serialize)]
struct ReportSet<'a> {
    reports: &'a [ConvergenceReport<f64>],
    pass: bool,
}

fn write_reports(out: &Path, stem: &str, reports: &[ConvergenceReport<f64>], pass: bool) -> Result<(), Failure> {
    write_json(&ReportSet { reports, pass }, out.join(format!("{stem}.json")))?;
    write_table(&["study", "resolution", "error"], &report_rows(reports), out.join(format!("{stem}.csv")))?;
    for r in reports {
        println!(
            "{:<32} order {:>7.3}  {}",
            r.label,
            r.fitted_order,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(())
}

fn solve(config: &Config, out: &Path) -> Result<bool, Failure> {
    let result = run_simulation(config)?;
    let csv = out.join("series.csv");
    write_series_csv(&result.series, &csv)?;
    emit_plot_script(&csv, out.join("series.gp"))?;
    if config.dump_fields {
        for s in &result.snapshots {
            write_field_dump(&s.u, s.t, out.join(format!("field_{}.csv", s.step_index)))?;
        }
    }
    #[derive(Serialize)]
    struct Summary {
        steps: usize,
        final_time: f64,
        cg_iterations: usize,
    }
    write_json(
        &Summary {
            steps: result.final_state.step_index,
            final_time: result.final_state.t,
            cg_iterations: result.total_cg_iterations,
        },
        out.join("summary.json"),
    )?;
    println!(
        "{} steps to t = {}, {} recorded rows",
        result.final_state.step_index,
        result.final_state.t,
        result.series.len()
    );
    Ok(true)
}

fn cell(config: &Config, out: &Path) -> Result<bool, Failure> {
    let params = params_of(config)?;
    let points = config.study.mesh_points;
    let checks = config
        .study
        .eps
        .iter()
        .map(|&eps| cell_check(&params, eps, points))
        .collect::<Result<Vec<_>, _>>()?;
    let eps = config.study.eps.first().copied().unwrap_or(0.1);
    let sol = solve_cell_radial(eps, &params, points)?;
    let mut rows = Vec::with_capacity(sol.r_samples.len());
    for (&r, &w) in sol.r_samples.iter().zip(&sol.w_values) {
        rows.push(vec![format_exact(r), format_exact(w), format_exact(w_exact(r, eps, &params)?)]);
    }
    write_table(&["r", "w_num", "w_exact"], &rows, out.join("cell.csv"))?;
    let pass = checks.iter().all(|c| c.pass);
    #[derive(Serialize)]
    struct Summary<'a> {
        mesh_points: usize,
        a_eps: f64,
        alpha_eps: f64,
        flux_inner: f64,
        flux_outer: f64,
        checks: &'a [memostrange::verification::CellCheck<f64>],
        pass: bool,
    }
    write_json(
        &Summary {
            mesh_points: points,
            a_eps: sol.a_eps,
            alpha_eps: sol.alpha_eps,
            flux_inner: sol.flux_inner,
            flux_outer: sol.flux_outer,
            checks: &checks,
            pass,
        },
        out.join("cell.json"),
    )?;
    for c in &checks {
        println!(
            "eps {:<8} max |w - w_exact| {:.3e}  flux rel {:.3e} / {:.3e}  {}",
            c.eps,
            c.max_error,
            c.flux_inner_rel,
            c.flux_outer_rel,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(pass)
}

fn kernel(config: &Config, out: &Path) -> Result<bool, Failure> {
    let params = params_of(config)?;
    if params.beta == 0.0 {
        return Err(Failure::Usage("the kernel study needs beta > 0".into()));
    }
    let jobs: Vec<(KernelInput, MemoryScheme)> = KernelInput::ALL
        .iter()
        .flat_map(|&i| [MemoryScheme::BackwardEuler, MemoryScheme::Trapezoid].map(|s| (i, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(input, scheme)| kernel_equivalence_study(input, scheme, &kernel_dt_levels(scheme), &params))
        .collect::<Result<Vec<_>, _>>()?;
    let finest_ok = reports
        .iter()
        .all(|r| r.errors.last().is_some_and(|&e| e <= 1e-6));
    let pass = finest_ok && reports.iter().all(|r| r.pass);
    write_reports(out, "kernel_report", &reports, pass)?;

    // trace of the coarsest trapezoid level for the sinusoid
    let dt = kernel_dt_levels::<f64>(MemoryScheme::Trapezoid)[0];
    let reference = convolution_samples(KernelInput::Sinusoid, &params, dt, 64, 1.0)?;
    let rows: Vec<Vec<String>> = kernel_trace(KernelInput::Sinusoid, MemoryScheme::Trapezoid, dt, &params, &reference, dt)?
        .iter()
        .map(|r| r.iter().map(|&v| format_exact(v)).collect())
        .collect();
    write_table(&["t", "v_ode", "v_conv", "abs_diff"], &rows, out.join("kernel.csv"))?;
    Ok(pass)
}

fn mms(config: &Config, out: &Path) -> Result<bool, Failure> {
    let regime = Regime::of(&config.params);
    let levels = config.study.levels.max(3);
    let cells = config.grid.cells_per_axis;
    let mut space = mms_config(regime, config.params, cells, config.dt, config.t_final)?;
    space.solver = config.solver;
    space.scheme = config.scheme;
    let mut time = space.clone();
    time.grid.cells_per_axis = cells << (levels - 1);
    let reports = vec![
        convergence_study(StudyKind::Space, levels, &space)?,
        convergence_study(StudyKind::Time, levels, &time)?,
    ];
    let pass = reports.iter().all(|r| r.pass);
    write_reports(out, "mms", &reports, pass)?;
    Ok(pass)
}

fn compare(config: &Config, out: &Path) -> Result<bool, Failure> {
    let trials = config.study.trials;
    let jobs: Vec<(u64, Regime)> = (0..trials as u64)
        .flat_map(|i| Regime::ALL.map(|r| (config.seed + i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, case)| comparison_trial(seed, case, config).map(|m| (seed, case, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let threshold = 1e-10;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(seed, case, (mu, mv))| vec![seed.to_string(), case.name().to_string(), format_exact(*mu), format_exact(*mv)])
        .collect();
    write_table(&["seed", "case", "max_u", "max_v"], &rows, out.join("compare.csv"))?;
    let max_u = results.iter().map(|r| r.2 .0).fold(f64::NEG_INFINITY, f64::max);
    let max_v = results.iter().map(|r| r.2 .1).fold(f64::NEG_INFINITY, f64::max);
    let pass = max_u <= threshold && max_v <= threshold;
    #[derive(Serialize)]
    struct Summary {
        trials: usize,
        cases: usize,
        max_u: f64,
        max_v: f64,
        threshold: f64,
        pass: bool,
    }
    write_json(
        &Summary { trials, cases: Regime::ALL.len(), max_u, max_v, threshold, pass },
        out.join("compare.json"),
    )?;
    println!("{} runs, max u {max_u:.3e}, max v {max_v:.3e}  {}", results.len(), if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn cell_sweep(config: &Config, out: &Path) -> Result<bool, Failure> {
    let params = params_of(config)?;
    let levels = config.study.eps.len().max(config.study.levels).max(3);
    let report = convergence_study(StudyKind::CellEps, levels, config)?;
    let identity_ok = report.resolutions.iter().all(|&eps| {
        effective_coefficient(eps, &params)
            .map(|c| {
                let alpha = memostrange::cell_problem::alpha_eps(eps, &params).unwrap_or(f64::NAN);
                ((c * (1.0 - alpha) - params.a_strange) / params.a_strange).abs() <= 1e-12
            })
            .unwrap_or(false)
    });
    let pass = report.pass && identity_ok;
    write_reports(out, "cell_sweep", std::slice::from_ref(&report), pass)?;
    Ok(pass)
}
