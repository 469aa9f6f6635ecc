//! Convergence studies, comparison-principle trials and oracle checks.
//!
//! Each study returns a [`ConvergenceReport`]: a sequence of resolutions, the
//! measured errors and the least-squares slope of `log error` against
//! `log resolution`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_problem::{boundary_fluxes, effective_coefficient, solve_cell_radial, w_exact};
use crate::cli_io::{GridSpec, RunConfig, Sources};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::memory_term::{
    stability_bound_check, step_memory, ConvolutionAccumulator, MemoryScheme, MemoryState, StabilityCheck,
};
use crate::model_params::{derive_params, ModelParams, RawParams};
use crate::operator::assemble_operator;
use crate::scalar::{lit, Scalar};
use crate::solver::{run_simulation, step_count, weak_residual, CoupledSolver, CoupledState};
use crate::source::{modes_field, SineMode, SourceSpec, TimeFunction, TimeTerm, TrigMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "Linf")]
    Linf,
    #[serde(rename = "L2-space")]
    L2Space,
    #[serde(rename = "L2-spacetime")]
    L2Spacetime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport<T> {
    pub label: String,
    pub resolutions: Vec<T>,
    pub errors: Vec<T>,
    pub fitted_order: T,
    pub norm_kind: NormKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_order: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<T>,
    pub pass: bool,
}

impl<T: Scalar> ConvergenceReport<T> {
    /// Fits the order and, when an expectation is given, checks it.
    pub fn new(
        label: impl Into<String>,
        resolutions: Vec<T>,
        errors: Vec<T>,
        norm_kind: NormKind,
        expected: Option<(T, T)>,
    ) -> Result<Self> {
        if resolutions.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("resolutions must be strictly decreasing".into()));
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidInput("errors must be finite".into()));
        }
        let fitted_order = fit_order(&resolutions, &errors)?;
        let pass = match expected {
            Some((order, tol)) => (fitted_order - order).abs() <= tol,
            None => true,
        };
        Ok(ConvergenceReport {
            label: label.into(),
            resolutions,
            errors,
            fitted_order,
            norm_kind,
            expected_order: expected.map(|e| e.0),
            tolerance: expected.map(|e| e.1),
            pass,
        })
    }
}

/// Least-squares slope of `log(errors)` against `log(resolutions)`.
pub fn fit_order<T: Scalar>(resolutions: &[T], errors: &[T]) -> Result<T> {
    if resolutions.len() != errors.len() {
        return Err(Error::ShapeMismatch {
            expected: resolutions.len(),
            found: errors.len(),
        });
    }
    if resolutions.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "an order fit needs at least 3 points, got {}",
            resolutions.len()
        )));
    }
    if resolutions.iter().chain(errors).any(|&v| !(v > T::zero())) {
        return Err(Error::InvalidInput("order fit needs positive resolutions and errors".into()));
    }
    let n = T::from_usize_lossy(resolutions.len());
    let xs: Vec<T> = resolutions.iter().map(|r| r.ln()).collect();
    let ys: Vec<T> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

/// The three admissible choices of time weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `alpha, beta > 0`
    AlphaBeta,
    /// `alpha > 0, beta = 0`
    AlphaOnly,
    /// `alpha = 0, beta > 0`
    BetaOnly,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::AlphaBeta, Regime::BetaOnly, Regime::AlphaOnly];

    pub fn weights<T: Scalar>(self) -> (T, T) {
        match self {
            Regime::AlphaBeta => (T::one(), T::one()),
            Regime::AlphaOnly => (T::one(), T::zero()),
            Regime::BetaOnly => (T::zero(), T::one()),
        }
    }

    pub fn of<T: Scalar>(params: &RawParams<T>) -> Regime {
        match (params.alpha > T::zero(), params.beta > T::zero()) {
            (true, true) => Regime::AlphaBeta,
            (true, false) => Regime::AlphaOnly,
            _ => Regime::BetaOnly,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::AlphaBeta => "alpha-beta",
            Regime::AlphaOnly => "alpha-only",
            Regime::BetaOnly => "beta-only",
        }
    }
}

fn sine_modes<T: Scalar>(spec: &SourceSpec<T>, what: &str) -> Result<Vec<SineMode<T>>> {
    match spec {
        SourceSpec::SeparableSine { modes } => Ok(modes.clone()),
        SourceSpec::Constant { value } if *value == T::zero() => Ok(Vec::new()),
        _ => Err(Error::InvalidInput(format!(
            "{what} must be a sum of sine modes (separable-sine) or zero"
        ))),
    }
}

/// Largest `|sum of time profiles at t = 0|` over groups of modes sharing a
/// spatial factor.
fn initial_trace<T: Scalar>(modes: &[SineMode<T>]) -> T {
    let mut groups: Vec<(&[u32], T)> = Vec::new();
    for m in modes {
        let v = m.time.eval(T::zero());
        match groups.iter_mut().find(|g| g.0 == m.wavenumbers.as_slice()) {
            Some(g) => g.1 += v,
            None => groups.push((&m.wavenumbers, v)),
        }
    }
    groups.iter().fold(T::zero(), |acc, g| acc.max(g.1.abs()))
}

/// Sources `f`, `g` for which the given sine-mode pair is an exact solution:
/// `f = alpha u_t - Delta u + A (u - v)` and
/// `g = beta v_t + mu v - kappa u`.
pub fn manufacture_sources<T: Scalar>(
    u_exact: &SourceSpec<T>,
    v_exact: &SourceSpec<T>,
    params: &ModelParams<T>,
) -> Result<(SourceSpec<T>, SourceSpec<T>)> {
    let u = sine_modes(u_exact, "u_exact")?;
    let v = sine_modes(v_exact, "v_exact")?;
    if u.iter().chain(&v).any(|m| m.wavenumbers.len() != params.n || m.wavenumbers.contains(&0)) {
        return Err(Error::InvalidInput(format!(
            "exact modes need {} positive wave numbers each",
            params.n
        )));
    }
    let tiny = lit::<T>(1e-12);
    if params.alpha > T::zero() && initial_trace(&u) > tiny {
        return Err(Error::InvalidInput("u_exact must vanish at t = 0 when alpha > 0".into()));
    }
    if params.beta > T::zero() && initial_trace(&v) > tiny {
        return Err(Error::InvalidInput("v_exact must vanish at t = 0 when beta > 0".into()));
    }
    let a = params.a_strange;
    let kappa = params.capture_rate();
    let mut f_modes = Vec::new();
    let mut g_modes = Vec::new();
    for m in &u {
        let time = m
            .time
            .derivative()
            .scaled(params.alpha)
            .plus(&m.time.scaled(m.laplace_eigenvalue() + a));
        f_modes.push(SineMode::new(m.wavenumbers.clone(), time));
        g_modes.push(SineMode::new(m.wavenumbers.clone(), m.time.scaled(-kappa)));
    }
    for m in &v {
        f_modes.push(SineMode::new(m.wavenumbers.clone(), m.time.scaled(-a)));
        let time = m.time.derivative().scaled(params.beta).plus(&m.time.scaled(params.mu));
        g_modes.push(SineMode::new(m.wavenumbers.clone(), time));
    }
    let wrap = |modes| SourceSpec::Manufactured {
        modes,
        u_exact: u.clone(),
        v_exact: v.clone(),
    };
    Ok((wrap(f_modes), wrap(g_modes)))
}

/// Exact pair used by the convergence studies, chosen to respect the
/// initial conditions of each regime.
pub fn default_exact_pair<T: Scalar>(regime: Regime, dim: usize) -> (SourceSpec<T>, SourceSpec<T>) {
    let k = vec![1u32; dim];
    let w = lit::<T>(5.0);
    let sin = |c: f64| TimeTerm::Sin { coeff: lit(c), omega: w };
    let cos = |c: f64| TimeTerm::Cos { coeff: lit(c), omega: w };
    let one = |c: f64| TimeTerm::Power { coeff: lit(c), power: 0 };
    let (a, b) = match regime {
        Regime::AlphaBeta => (vec![sin(1.0)], vec![one(1.0), cos(-1.0)]),
        Regime::BetaOnly => (vec![one(1.0), sin(1.0)], vec![one(1.0), cos(-1.0)]),
        Regime::AlphaOnly => (vec![sin(1.0)], vec![cos(0.5)]),
    };
    let spec = |terms| SourceSpec::SeparableSine {
        modes: vec![SineMode::new(k.clone(), TimeFunction(terms))],
    };
    (spec(a), spec(b))
}

/// Manufactured-solution configuration on the unit cube.
pub fn mms_config<T: Scalar>(regime: Regime, base: RawParams<T>, cells: usize, dt: T, t_final: T) -> Result<RunConfig<T>> {
    let (alpha, beta) = regime.weights::<T>();
    let raw = RawParams { alpha, beta, ..base };
    let params = derive_params(raw.n, raw.c0, raw.lambda, raw.alpha, raw.beta)?;
    let (u, v) = default_exact_pair(regime, raw.n);
    let (f, g) = manufacture_sources(&u, &v, &params)?;
    let mut config = RunConfig::with_params(raw);
    config.grid = GridSpec::cube(cells);
    config.dt = dt;
    config.t_final = t_final;
    config.sources = Sources { f, g };
    config.output_stride = usize::MAX;
    Ok(config)
}

/// Errors of a manufactured run against its exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmsErrors<T> {
    /// Grid `L2` error of `u` at the final time.
    pub final_u: T,
    pub final_v: T,
    /// `L2` in space, trapezoid rule over the steps in time.
    pub spacetime_u: T,
}

pub fn manufactured_errors<T: Scalar>(config: &RunConfig<T>) -> Result<MmsErrors<T>> {
    let (u_modes, v_modes) = config
        .sources
        .f
        .exact_pair()
        .ok_or_else(|| Error::InvalidInput("f is not a manufactured source".into()))?;
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let p = config.params;
    let params = derive_params(p.n, p.c0, p.lambda, p.alpha, p.beta)?;
    let grid = config.grid.build(p.n)?;
    let solver = CoupledSolver::new(
        &grid,
        params,
        config.sources.f.clone(),
        config.sources.g.clone(),
        config.scheme,
        config.solver,
    )?;
    let u_error = |s: &CoupledState<T>| -> T {
        let ue = modes_field(u_modes, &grid, s.t);
        s.u.zip_map(&ue, |a, b| a - b).map(|e| e.l2_norm()).unwrap_or(T::nan())
    };
    let steps = step_count(config.t_final, config.dt)?;
    let mut state = solver.initial_state()?;
    let mut sq = Vec::with_capacity(steps + 1);
    sq.push(u_error(&state).powi(2));
    solver.run(&mut state, config.dt, steps, |s| sq.push(u_error(s).powi(2)))?;
    let half = lit::<T>(0.5);
    let total = sq.iter().copied().sum::<T>() - half * (sq[0] + sq[sq.len() - 1]);
    let ve = modes_field(v_modes, &grid, state.t);
    Ok(MmsErrors {
        final_u: sq[sq.len() - 1].sqrt(),
        final_v: state.v().zip_map(&ve, |a, b| a - b)?.l2_norm(),
        spacetime_u: (total * config.dt).sqrt(),
    })
}

/// Exact manufactured states at `t = k dt`, `k = 0..=steps`.
pub fn manufactured_trajectory<T: Scalar>(
    source: &SourceSpec<T>,
    grid: &Grid<T>,
    dt: T,
    steps: usize,
) -> Result<Vec<CoupledState<T>>> {
    let (u_modes, v_modes) = source
        .exact_pair()
        .ok_or_else(|| Error::InvalidInput("not a manufactured source".into()))?;
    (0..=steps)
        .map(|k| {
            let t = dt * T::from_usize_lossy(k);
            CoupledState::from_fields(modes_field(u_modes, grid, t), modes_field(v_modes, grid, t), t, k)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Space,
    Time,
    BetaLimit,
    CellEps,
}

/// Runs one refinement study starting from `base`.
///
/// * `Space`: cells double and `dt` drops by 4 per level; `base.sources`
///   must be manufactured. Error is the space-time `L2` error of `u`.
/// * `Time`: `dt` halves on the fixed base grid, same error.
/// * `BetaLimit`: `beta = 10^-(2 + level)` against the `beta = 0` run, final
///   time `L2` distance of `(u, v)`.
/// * `CellEps`: `eps` halves from `base.study.eps[0]`; error is
///   `effective_coefficient - A`.
pub fn convergence_study<T: Scalar>(kind: StudyKind, levels: usize, base: &RunConfig<T>) -> Result<ConvergenceReport<T>> {
    if levels < 3 {
        return Err(Error::InvalidInput(format!("a study needs at least 3 levels, got {levels}")));
    }
    let tag = |level: usize| move |e: Error| Error::LevelFailed { level, source: Box::new(e) };
    let two = lit::<T>(2.0);
    match kind {
        StudyKind::Space | StudyKind::Time => {
            let configs: Vec<RunConfig<T>> = (0..levels)
                .map(|l| {
                    let mut c = base.clone();
                    let scale = two.powi(l as i32);
                    if kind == StudyKind::Space {
                        c.grid.cells_per_axis = base.grid.cells_per_axis << l;
                        c.dt = base.dt / (scale * scale);
                    } else {
                        c.dt = base.dt / scale;
                    }
                    c
                })
                .collect();
            let errors = configs
                .par_iter()
                .enumerate()
                .map(|(l, c)| manufactured_errors(c).map(|e| e.spacetime_u).map_err(tag(l)))
                .collect::<Result<Vec<T>>>()?;
            let (resolutions, expected, label) = if kind == StudyKind::Space {
                let h = configs.iter().map(|c| T::one() / T::from_usize_lossy(c.grid.cells_per_axis)).collect();
                (h, (two, lit(0.2)), "space")
            } else {
                (configs.iter().map(|c| c.dt).collect(), (T::one(), lit(0.2)), "time")
            };
            ConvergenceReport::new(label, resolutions, errors, NormKind::L2Spacetime, Some(expected))
        }
        StudyKind::BetaLimit => {
            let betas: Vec<T> = (0..levels).map(|l| lit::<T>(10.0).powi(-(2 + l as i32))).collect();
            let run_final = |beta: T| -> Result<CoupledState<T>> {
                let mut c = base.clone();
                c.params.beta = beta;
                c.output_stride = usize::MAX;
                Ok(run_simulation(&c)?.final_state)
            };
            let reference = run_final(T::zero()).map_err(tag(levels))?;
            let errors = betas
                .par_iter()
                .enumerate()
                .map(|(l, &b)| {
                    let s = run_final(b).map_err(tag(l))?;
                    let du = s.u.zip_map(&reference.u, |a, b| a - b)?.l2_norm();
                    let dv = s.v().zip_map(reference.v(), |a, b| a - b)?.l2_norm();
                    Ok((du * du + dv * dv).sqrt())
                })
                .collect::<Result<Vec<T>>>()?;
            let mut report = ConvergenceReport::new("beta-limit", betas, errors, NormKind::L2Space, None)?;
            let e = &report.errors;
            let monotone = e.windows(2).all(|w| w[1] < w[0]);
            let last_ok = lit::<T>(10.0) * e[e.len() - 2] > e[e.len() - 1];
            report.pass = monotone && last_ok;
            Ok(report)
        }
        StudyKind::CellEps => {
            let p = base.params;
            let params = derive_params(p.n, p.c0, p.lambda, p.alpha, p.beta)?;
            let eps0 = base.study.eps.first().copied().unwrap_or(lit(0.1));
            let eps: Vec<T> = (0..levels).map(|l| eps0 / two.powi(l as i32)).collect();
            let errors = eps
                .iter()
                .enumerate()
                .map(|(l, &e)| effective_coefficient(e, &params).map(|c| (c - params.a_strange).abs()).map_err(tag(l)))
                .collect::<Result<Vec<T>>>()?;
            ConvergenceReport::new("cell-eps", eps, errors, NormKind::Linf, Some((two, lit(0.1))))
        }
    }
}

/// Accuracy of the numerical cell solution against the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCheck<T> {
    pub n: usize,
    pub c0: T,
    pub eps: T,
    pub max_error: T,
    pub flux_inner_rel: T,
    pub flux_outer_rel: T,
    pub pass: bool,
}

/// Solves the cell problem on `mesh_points` nodes and compares with the
/// closed form (tolerances 1e-6 on values, 1e-4 relative on fluxes).
pub fn cell_check<T: Scalar>(params: &ModelParams<T>, eps: T, mesh_points: usize) -> Result<CellCheck<T>> {
    let sol = solve_cell_radial(eps, params, mesh_points)?;
    let mut max_error = T::zero();
    for (&r, &w) in sol.r_samples.iter().zip(&sol.w_values) {
        max_error = max_error.max((w - w_exact(r, eps, params)?).abs());
    }
    let (fi, fo) = boundary_fluxes(eps, params)?;
    let flux_inner_rel = ((sol.flux_inner - fi) / fi).abs();
    let flux_outer_rel = ((sol.flux_outer - fo) / fo).abs();
    Ok(CellCheck {
        n: params.n,
        c0: params.c0,
        eps,
        max_error,
        flux_inner_rel,
        flux_outer_rel,
        pass: max_error <= lit(1e-6) && flux_inner_rel <= lit(1e-4) && flux_outer_rel <= lit(1e-4),
    })
}

/// Random nonpositive `(f, g)`, reproducible from `seed`.
pub fn random_nonpositive_sources<T: Scalar>(seed: u64, dim: usize) -> (SourceSpec<T>, SourceSpec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = |count: usize, max_amp: f64| -> SourceSpec<T> {
        let tau = std::f64::consts::TAU;
        let modes = (0..count)
            .map(|_| TrigMode {
                amplitude: lit(rng.gen_range(0.1..max_amp)),
                wave: (0..dim).map(|_| lit(rng.gen_range(0.0..3.0 * std::f64::consts::PI))).collect(),
                phase: (0..dim).map(|_| lit(rng.gen_range(0.0..tau))).collect(),
                omega: lit(rng.gen_range(0.0..4.0)),
                time_phase: lit(rng.gen_range(0.0..tau)),
            })
            .collect();
        SourceSpec::NonPositiveModes { modes }
    };
    let f = modes(3, 3.0);
    let g = modes(2, 1.5);
    (f, g)
}

/// Largest values of `u` and `v` over every step of a run.
pub fn trajectory_maxima<T: Scalar>(config: &RunConfig<T>) -> Result<(T, T)> {
    let p = config.params;
    let params = derive_params(p.n, p.c0, p.lambda, p.alpha, p.beta)?;
    let grid = config.grid.build(p.n)?;
    let solver = CoupledSolver::new(
        &grid,
        params,
        config.sources.f.clone(),
        config.sources.g.clone(),
        config.scheme,
        config.solver,
    )?;
    let mut state = solver.initial_state()?;
    let mut max_u = state.u.max();
    let mut max_v = state.v().max();
    let steps = step_count(config.t_final, config.dt)?;
    solver.run(&mut state, config.dt, steps, |s| {
        max_u = max_u.max(s.u.max());
        max_v = max_v.max(s.v().max());
    })?;
    Ok((max_u, max_v))
}

/// One seeded comparison-principle trial: random nonpositive data, weights
/// set by `case`, everything else from `config`.
pub fn comparison_trial<T: Scalar>(seed: u64, case: Regime, config: &RunConfig<T>) -> Result<(T, T)> {
    let mut c = config.clone();
    let (alpha, beta) = case.weights();
    c.params.alpha = alpha;
    c.params.beta = beta;
    let (f, g) = random_nonpositive_sources(seed, c.params.n);
    c.sources = Sources { f, g };
    trajectory_maxima(&c)
}

/// `|| -Delta_h u + A (u - v_inf) - f ||` with `mu v_inf = kappa u + g`,
/// the residual of the steady problem without time derivatives.
pub fn steady_state_residual<T: Scalar>(
    u: &Field<T>,
    f: &SourceSpec<T>,
    g: &SourceSpec<T>,
    t: T,
    params: &ModelParams<T>,
) -> Result<T> {
    let grid = u.grid();
    let fv = f.eval_field(grid, t)?;
    let gv = g.eval_field(grid, t)?;
    let lu = assemble_operator(grid).apply_field(u)?;
    let kappa = params.capture_rate();
    let mut r = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let v_inf = (kappa * u[i] + gv[i]) / params.mu;
        r.push(lu[i] + params.a_strange * (u[i] - v_inf) - fv[i]);
    }
    Ok(Field::from_values(grid, r)?.l2_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelInput {
    Constant,
    Ramp,
    Sinusoid,
}

impl KernelInput {
    pub const ALL: [KernelInput; 3] = [KernelInput::Constant, KernelInput::Ramp, KernelInput::Sinusoid];

    /// The bulk value driving the memory equation; the surface source is zero.
    pub fn value<T: Scalar>(self, t: T) -> T {
        match self {
            KernelInput::Constant => T::one(),
            KernelInput::Ramp => t,
            KernelInput::Sinusoid => (T::TAU() * t).sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelInput::Constant => "constant",
            KernelInput::Ramp => "ramp",
            KernelInput::Sinusoid => "sinusoid",
        }
    }
}

fn integer_ratio<T: Scalar>(num: T, den: T) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if (r - k).abs() > lit::<T>(1e-9) * r.max(T::one()) || k < T::one() {
        return Err(Error::InvalidInput(format!("{num} is not an integer multiple of {den}")));
    }
    Ok(k.to_usize().unwrap_or(0))
}

/// Memory variable on `[0, t_final]` from the convolution representation,
/// sampled every `sample_dt` and integrated with sub-step `sample_dt / refine`.
pub fn convolution_samples<T: Scalar>(
    input: KernelInput,
    params: &ModelParams<T>,
    sample_dt: T,
    refine: usize,
    t_final: T,
) -> Result<Vec<T>> {
    let samples = integer_ratio(t_final, sample_dt)?;
    let h = sample_dt / T::from_usize_lossy(refine);
    let kappa = params.capture_rate();
    let mut acc = ConvolutionAccumulator::new(params, h, vec![kappa * input.value(T::zero())])?;
    let mut out = Vec::with_capacity(samples + 1);
    out.push(T::zero());
    for k in 0..samples {
        for j in 1..=refine {
            let t = (T::from_usize_lossy(k * refine + j)) * h;
            acc.push(&[kappa * input.value(t)]);
        }
        out.push(acc.value()[0]);
    }
    Ok(out)
}

/// `(t, v from step_memory, v from the convolution, |difference|)` rows.
pub fn kernel_trace<T: Scalar>(
    input: KernelInput,
    scheme: MemoryScheme,
    dt: T,
    params: &ModelParams<T>,
    reference: &[T],
    reference_dt: T,
) -> Result<Vec<[T; 4]>> {
    let stride = integer_ratio(dt, reference_dt)?;
    let steps = (reference.len() - 1) / stride;
    let grid = Grid::unit(1, 2)?;
    let mut state = MemoryState::new(&grid);
    let mut u = Field::constant(&grid, input.value(T::zero()));
    let g = Field::zeros(&grid);
    state.prime(&u, &g, params)?;
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push([T::zero(), T::zero(), reference[0], reference[0].abs()]);
    for k in 1..=steps {
        let t = dt * T::from_usize_lossy(k);
        u[0] = input.value(t);
        step_memory(&mut state, &u, &g, dt, params, scheme)?;
        let v = state.v[0];
        let r = reference[k * stride];
        rows.push([t, v, r, (v - r).abs()]);
    }
    Ok(rows)
}

/// Maximum-in-time discrepancy between the stepped memory equation and the
/// convolution form on `[0, 1]`, for each `dt` in `dt_levels`.
pub fn kernel_equivalence_study<T: Scalar>(
    input: KernelInput,
    scheme: MemoryScheme,
    dt_levels: &[T],
    params: &ModelParams<T>,
) -> Result<ConvergenceReport<T>> {
    if params.beta == T::zero() {
        return Err(Error::Regime("the kernel study needs beta > 0".into()));
    }
    let finest = dt_levels
        .iter()
        .copied()
        .fold(T::infinity(), T::min);
    let reference = convolution_samples(input, params, finest, 8, T::one())?;
    let errors = dt_levels
        .par_iter()
        .map(|&dt| {
            let rows = kernel_trace(input, scheme, dt, params, &reference, finest)?;
            Ok(rows.iter().fold(T::zero(), |m, r| m.max(r[3])))
        })
        .collect::<Result<Vec<T>>>()?;
    let order = match scheme {
        MemoryScheme::BackwardEuler => T::one(),
        MemoryScheme::Trapezoid => lit(2.0),
    };
    let label = format!(
        "kernel-{}-{}",
        input.name(),
        match scheme {
            MemoryScheme::BackwardEuler => "backward-euler",
            MemoryScheme::Trapezoid => "trapezoid",
        }
    );
    ConvergenceReport::new(label, dt_levels.to_vec(), errors, NormKind::Linf, Some((order, lit(0.2))))
}

/// Default time steps of the kernel study: four halvings, small enough that
/// the finest backward Euler level is within `1e-6` of the convolution.
pub fn kernel_dt_levels<T: Scalar>(scheme: MemoryScheme) -> Vec<T> {
    let first = match scheme {
        MemoryScheme::BackwardEuler => 16,
        MemoryScheme::Trapezoid => 7,
    };
    (first..first + 5).map(|k| lit::<T>(2.0).powi(-k)).collect()
}

/// Weak residual of the exact manufactured trajectory on each grid, with
/// `dt = dt_factor h^2` and final time `t_final`.
pub fn weak_residual_study<T: Scalar>(
    regime: Regime,
    base: RawParams<T>,
    cells: &[usize],
    dt_factor: T,
    t_final: T,
) -> Result<Vec<T>> {
    cells
        .par_iter()
        .map(|&c| {
            let h = T::one() / T::from_usize_lossy(c);
            let dt = dt_factor * h * h;
            let config = mms_config(regime, base, c, dt, t_final)?;
            let p = config.params;
            let params = derive_params(p.n, p.c0, p.lambda, p.alpha, p.beta)?;
            let grid = config.grid.build(p.n)?;
            let steps = step_count(t_final, dt)?;
            let traj = manufactured_trajectory(&config.sources.f, &grid, dt, steps)?;
            weak_residual(&traj, &config.sources.f, &params)
        })
        .collect()
}

/// Stability check on a random smooth `(phi, g)` history.
pub fn stability_trial<T: Scalar>(seed: u64) -> Result<StabilityCheck<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.01..3.0) };
    let params = derive_params(
        3,
        lit(rng.gen_range(0.3..2.0)),
        lit(rng.gen_range(0.0..3.0)),
        T::one(),
        lit(beta),
    )?;
    let grid = Grid::unit(3, 6)?;
    let mut random_modes = |count: usize, amp: f64| -> Vec<SineMode<T>> {
        (0..count)
            .map(|_| {
                let k = (0..3).map(|_| rng.gen_range(1..4)).collect();
                let time = TimeFunction(vec![
                    TimeTerm::Power { coeff: lit(rng.gen_range(-amp..amp)), power: 0 },
                    TimeTerm::Sin { coeff: lit(rng.gen_range(-amp..amp)), omega: lit(rng.gen_range(0.5..8.0)) },
                    TimeTerm::Power { coeff: lit(rng.gen_range(-amp..amp)), power: 2 },
                ]);
                SineMode::new(k, time)
            })
            .collect()
    };
    let phi = random_modes(3, 2.0);
    let g = random_modes(2, 1.0);
    let dt = lit::<T>(0.02);
    let steps = 50;
    let times: Vec<T> = (0..=steps).map(|k| dt * T::from_usize_lossy(k)).collect();
    let phi_hist: Vec<Field<T>> = times.iter().map(|&t| modes_field(&phi, &grid, t)).collect();
    let g_hist: Vec<Field<T>> = times.iter().map(|&t| modes_field(&g, &grid, t)).collect();
    stability_bound_check(&phi_hist, &g_hist, dt, &params)
}
