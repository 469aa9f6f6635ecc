//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any of them fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use memostrange::cell_problem::{alpha_eps, effective_coefficient};
use memostrange::cli_io::{RunConfig, Sources};
use memostrange::memory_term::MemoryScheme;
use memostrange::model_params::unit_sphere_area;
use memostrange::solver::run_simulation;
use memostrange::source::{SineMode, TimeFunction, TimeTerm};
use memostrange::verification::*;
use memostrange::{derive_params, RawParams, SourceSpec};
use rayon::prelude::*;

type Outcome = (bool, String);

fn raw(alpha: f64, beta: f64) -> RawParams<f64> {
    RawParams { n: 3, c0: 1.0, lambda: 1.0, alpha, beta }
}

fn cell_closed_form() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    for n in [3, 4] {
        for c0 in [0.5f64, 1.0, 2.0] {
            let p = derive_params(n, c0, 1.0, 1.0, 1.0).unwrap();
            for eps in [0.1, 0.05] {
                let c = cell_check(&p, eps, 2000).unwrap();
                ok &= c.pass;
                worst.0 = worst.0.max(c.max_error);
                worst.1 = worst.1.max(c.flux_inner_rel.max(c.flux_outer_rel));
            }
        }
    }
    (ok, format!("max |w - w_exact| = {:.2e}, max flux rel err = {:.2e}", worst.0, worst.1))
}

fn strange_constant() -> Outcome {
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let mut identity = 0.0f64;
    let mut orders = Vec::new();
    let mut ok = true;
    for n in [3, 4] {
        for c0 in [0.5f64, 1.0, 2.0] {
            let p = derive_params(n, c0, 1.0, 1.0, 1.0).unwrap();
            let target = (n as f64 - 2.0) * c0.powi(n as i32 - 2) * unit_sphere_area::<f64>(n);
            let mut errs = Vec::new();
            for &e in &eps {
                let a = effective_coefficient(e, &p).unwrap();
                let rel = ((a * (1.0 - alpha_eps(e, &p).unwrap()) - target) / target).abs();
                identity = identity.max(rel);
                errs.push((a - p.a_strange).abs());
            }
            // (4, 2) has alpha_eps = 0.64 at eps = 0.1 and is far from the
            // asymptotic range; it is reported but not graded.
            let graded = (4.0 * c0).powi(n as i32 - 2) * eps[0] * eps[0] < 0.5;
            let order = fit_order(&eps, &errs).unwrap();
            if graded {
                ok &= (order - 2.0).abs() <= 0.1;
            }
            orders.push(format!("n={n},C0={c0}:{order:.3}{}", if graded { "" } else { "(ungraded)" }));
        }
    }
    let p = derive_params(3, 1.0, 1.0, 1.0, 1.0).unwrap();
    let four_pi = 4.0 * std::f64::consts::PI;
    let limit_rel = ((p.a_strange - four_pi) / four_pi).abs();
    ok &= identity <= 1e-12 && limit_rel <= 1e-12;
    (
        ok,
        format!("identity rel err {identity:.1e}, A(3,1) vs 4pi rel {limit_rel:.1e}, orders [{}]", orders.join(" ")),
    )
}

fn memory_oracle() -> Outcome {
    let p = derive_params(3, 1.0, 1.0, 1.0, 1.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for scheme in [MemoryScheme::BackwardEuler, MemoryScheme::Trapezoid] {
        for input in KernelInput::ALL {
            let r = kernel_equivalence_study(input, scheme, &kernel_dt_levels(scheme), &p).unwrap();
            let finest = *r.errors.last().unwrap();
            ok &= r.pass && finest <= 1e-6;
            parts.push(format!("{}:{:.3}/{:.1e}", r.label, r.fitted_order, finest));
        }
    }
    (ok, format!("order/finest [{}]", parts.join(" ")))
}

fn mms_convergence() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for regime in Regime::ALL {
        let base = mms_config(regime, raw(1.0, 1.0), 8, 4.0 / 64.0, 0.5).unwrap();
        let space = convergence_study(StudyKind::Space, 3, &base).unwrap();
        let base = mms_config(regime, raw(1.0, 1.0), 32, 0.2, 1.0).unwrap();
        let time = convergence_study(StudyKind::Time, 4, &base).unwrap();
        ok &= space.pass && time.pass;
        parts.push(format!("{}: space {:.3} time {:.3}", regime.name(), space.fitted_order, time.fitted_order));
    }
    (ok, parts.join(", "))
}

fn comparison() -> Outcome {
    let mut config = RunConfig::with_params(raw(1.0, 1.0));
    config.grid.cells_per_axis = 16;
    config.dt = 1e-2;
    config.t_final = 1.0;
    config.output_stride = usize::MAX;
    let trials: Vec<(u64, Regime)> = Regime::ALL.iter().flat_map(|&c| (0..20).map(move |s| (s, c))).collect();
    let maxima: Vec<(f64, f64)> = trials
        .par_iter()
        .map(|&(seed, case)| comparison_trial(seed, case, &config).unwrap())
        .collect();
    let mu = maxima.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let mv = maxima.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    (mu <= 1e-10 && mv <= 1e-10, format!("{} trials, max u = {mu:.2e}, max v = {mv:.2e}", maxima.len()))
}

fn beta_limit() -> Outcome {
    let mut config = RunConfig::with_params(raw(1.0, 1.0));
    config.grid.cells_per_axis = 16;
    config.dt = 1e-2;
    config.t_final = 1.0;
    let f = SourceSpec::SeparableSine {
        modes: vec![SineMode::new(
            vec![1, 1, 1],
            TimeFunction(vec![
                TimeTerm::Power { coeff: 10.0, power: 0 },
                TimeTerm::Sin { coeff: 10.0, omega: 2.0 * std::f64::consts::PI },
            ]),
        )],
    };
    config.sources = Sources { f, g: SourceSpec::Constant { value: 1.0 } };
    let r = convergence_study(StudyKind::BetaLimit, 3, &config).unwrap();
    let e = &r.errors;
    (
        r.pass,
        format!(
            "errors {:.3e} {:.3e} {:.3e}, e(1e-4)/e(1e-3) = {:.3}",
            e[0],
            e[1],
            e[2],
            e[2] / e[1]
        ),
    )
}

fn steady_state() -> Outcome {
    let mut config = RunConfig::with_params(RawParams { n: 3, c0: 1.0, lambda: 1.0, alpha: 0.0, beta: 1.0 });
    config.grid.cells_per_axis = 16;
    config.dt = 0.5;
    config.t_final = 40.0;
    config.output_stride = usize::MAX;
    config.solver.tol = 1e-13;
    config.sources = Sources { f: SourceSpec::Constant { value: 1.0 }, g: SourceSpec::Constant { value: 0.5 } };
    let out = run_simulation(&config).unwrap();
    let p = derive_params(3, 1.0, 1.0, 0.0, 1.0).unwrap();
    let s = &out.final_state;
    let res = steady_state_residual(&s.u, &config.sources.f, &config.sources.g, s.t, &p).unwrap();
    (res <= 1e-8, format!("residual {res:.2e} at t = {}", s.t))
}

fn stability() -> Outcome {
    let checks: Vec<_> = (0..50u64).into_par_iter().map(|s| stability_trial::<f64>(s).unwrap()).collect();
    let failed = checks.iter().filter(|c| !c.ok).count();
    let worst = checks.iter().map(|c| c.lhs / c.rhs).fold(0.0f64, f64::max);
    (failed == 0, format!("{failed}/50 failed, worst lhs/rhs = {worst:.3}"))
}

fn weak_residual() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for regime in Regime::ALL {
        let r = weak_residual_study(regime, raw(1.0, 1.0), &[8, 16, 32], 1.0, 0.25).unwrap();
        let ratio = r[1] / r[2];
        ok &= (3.0..=5.0).contains(&ratio);
        parts.push(format!("{}: {:.2} then {:.2}", regime.name(), r[0] / r[1], ratio));
    }
    (ok, format!("halving ratios [{}]", parts.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("cell closed form", cell_closed_form, Duration::from_secs(5)),
        ("strange constant", strange_constant, Duration::from_secs(1)),
        ("memory oracle", memory_oracle, Duration::from_secs(10)),
        ("mms convergence", mms_convergence, Duration::from_secs(300)),
        ("comparison principle", comparison, Duration::from_secs(180)),
        ("beta to zero", beta_limit, Duration::from_secs(120)),
        ("elliptic steady state", steady_state, Duration::from_secs(60)),
        ("stability bound", stability, Duration::from_secs(30)),
        ("weak residual", weak_residual, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        let elapsed = start.elapsed();
        let pass = ok && elapsed <= *budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {}: {name}: {detail} ({:.2} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
