//! Time integration of the coupled system
//!
//! ```text
//! alpha du/dt - Delta u + A (u - v) = f,
//! beta  dv/dt + mu v = kappa u + g,
//! ```
//!
//! on a box with `u = 0` on the boundary. Each step is backward Euler in `u`;
//! the memory update is solved for `v` and substituted into the bulk equation,
//! leaving one symmetric positive definite solve per step with diagonal shift
//! `alpha/dt + A (1 - kappa * gain)`, where `gain` is the weight of the new
//! forcing in the memory update. That shift is never negative, and the
//! resulting matrix is an M-matrix, so nonpositive data give nonpositive
//! solutions.

use serde::{Deserialize, Serialize};

use crate::cli_io::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::memory_term::{MemoryScheme, MemoryState, StepCoefficients};
use crate::model_params::{derive_params, ModelParams};
use crate::operator::{assemble_operator, conjugate_gradient, ShiftedLaplacian, SolveStats};
use crate::scalar::{lit, Scalar};
use crate::source::SourceSpec;

/// Linear solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct SolverSettings<T> {
    #[serde(default = "default_tol")]
    pub tol: T,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol<T: Scalar>() -> T {
    lit(1e-10)
}

fn default_max_iter() -> usize {
    10_000
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Bulk value, memory variable and clock at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState<T> {
    pub u: Field<T>,
    pub memory: MemoryState<T>,
    pub t: T,
    pub step_index: usize,
}

impl<T: Scalar> CoupledState<T> {
    pub fn v(&self) -> &Field<T> {
        &self.memory.v
    }

    /// `H = u - v`.
    pub fn h(&self) -> Field<T> {
        self.u
            .zip_map(&self.memory.v, |u, v| u - v)
            .expect("u and v share a grid")
    }

    pub fn grid(&self) -> &Grid<T> {
        self.u.grid()
    }

    /// State assembled from given fields, e.g. an exact solution sampled on
    /// the grid.
    pub fn from_fields(u: Field<T>, v: Field<T>, t: T, step_index: usize) -> Result<Self> {
        u.check_same_grid(&v)?;
        Ok(CoupledState {
            u,
            memory: MemoryState::from_parts(v, t),
            t,
            step_index,
        })
    }
}

/// Integrator for one parameter set, grid and pair of sources.
#[derive(Debug, Clone)]
pub struct CoupledSolver<T> {
    grid: Grid<T>,
    params: ModelParams<T>,
    f: SourceSpec<T>,
    g: SourceSpec<T>,
    scheme: MemoryScheme,
    settings: SolverSettings<T>,
}

impl<T: Scalar> CoupledSolver<T> {
    pub fn new(
        grid: &Grid<T>,
        params: ModelParams<T>,
        f: SourceSpec<T>,
        g: SourceSpec<T>,
        scheme: MemoryScheme,
        settings: SolverSettings<T>,
    ) -> Result<Self> {
        f.check_grid(grid)?;
        g.check_grid(grid)?;
        Ok(CoupledSolver {
            grid: grid.clone(),
            params,
            f,
            g,
            scheme,
            settings,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn sources(&self) -> (&SourceSpec<T>, &SourceSpec<T>) {
        (&self.f, &self.g)
    }

    /// State at `t = 0`.
    ///
    /// With `alpha > 0` the bulk value starts at zero. With `alpha = 0` no
    /// initial value is prescribed, so `u(0)` solves the elliptic problem
    /// with the initial memory. For `beta = 0` the memory is algebraic in `u`.
    pub fn initial_state(&self) -> Result<CoupledState<T>> {
        let zero = T::zero();
        let u0 = if self.params.alpha > zero {
            Field::zeros(&self.grid)
        } else {
            // alpha = 0 forces beta > 0, so v(0) = 0
            let rhs = self.f.eval_field(&self.grid, zero)?;
            let op = ShiftedLaplacian::new(&self.grid, self.params.a_strange);
            let mut x = vec![zero; self.grid.len()];
            conjugate_gradient(&op, rhs.values(), &mut x, self.settings.tol, self.settings.max_iter)?;
            Field::from_values(&self.grid, x)?
        };
        self.state_from_u(u0)
    }

    /// State at `t = 0` with a prescribed bulk value. The memory starts at
    /// zero, or at its algebraic value when `beta = 0`.
    pub fn state_from_u(&self, u0: Field<T>) -> Result<CoupledState<T>> {
        u0.check_same_grid(&Field::zeros(&self.grid))?;
        let g0 = self.g.eval_field(&self.grid, T::zero())?;
        let v0 = if self.params.beta == T::zero() {
            u0.zip_map(&g0, |u, g| crate::memory_term::v_algebraic(u, g, &self.params))?
        } else {
            Field::zeros(&self.grid)
        };
        let mut memory = MemoryState::from_parts(v0, T::zero());
        memory.prime(&u0, &g0, &self.params)?;
        Ok(CoupledState {
            u: u0,
            memory,
            t: T::zero(),
            step_index: 0,
        })
    }

    /// One fully implicit step of length `dt`.
    pub fn advance(&self, state: &mut CoupledState<T>, dt: T) -> Result<SolveStats<T>> {
        let t_next = state.t + dt;
        self.advance_to(state, dt, t_next)
    }

    /// Step of length `dt` landing at `t_next`; lets fixed-step runs compute
    /// times as `t0 + k dt` instead of accumulating them.
    pub(crate) fn advance_to(&self, state: &mut CoupledState<T>, dt: T, t_next: T) -> Result<SolveStats<T>> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        state.u.check_same_grid(&Field::zeros(&self.grid))?;
        let p = &self.params;
        let f_next = self.f.eval_field(&self.grid, t_next)?;
        let g_next = self.g.eval_field(&self.grid, t_next)?;
        let kappa = p.capture_rate();
        let c = StepCoefficients::new(p, dt, self.scheme);

        let prev_forcing: Vec<T> = match state.memory.forcing() {
            Some(f) => f.to_vec(),
            None if c.gain_prev != T::zero() => {
                let g_now = self.g.eval_field(&self.grid, state.t)?;
                state.u.values().iter().zip(g_now.values()).map(|(&u, &g)| kappa * u + g).collect()
            }
            None => Vec::new(),
        };

        let inertia = p.alpha / dt;
        let shift = inertia + p.a_strange * (T::one() - c.gain_next * kappa);
        let op = ShiftedLaplacian::new(&self.grid, shift);

        let n = self.grid.len();
        let mut rhs = Vec::with_capacity(n);
        for i in 0..n {
            let mut memory_part = c.keep * state.memory.v[i] + c.gain_next * g_next[i];
            if c.gain_prev != T::zero() {
                memory_part += c.gain_prev * prev_forcing[i];
            }
            rhs.push(f_next[i] + inertia * state.u[i] + p.a_strange * memory_part);
        }

        let mut x = state.u.values().to_vec();
        let stats = conjugate_gradient(&op, &rhs, &mut x, self.settings.tol, self.settings.max_iter)?;

        let mut forcing_next = Vec::with_capacity(n);
        for (i, &u_new) in x.iter().enumerate() {
            let fnext = kappa * u_new + g_next[i];
            let mut v_new = c.keep * state.memory.v[i] + c.gain_next * fnext;
            if c.gain_prev != T::zero() {
                v_new += c.gain_prev * prev_forcing[i];
            }
            state.memory.v[i] = v_new;
            forcing_next.push(fnext);
        }
        state.memory.set_forcing(forcing_next);
        state.memory.t = t_next;
        state.u = Field::from_values(&self.grid, x)?;
        state.t = t_next;
        state.step_index += 1;
        Ok(stats)
    }

    /// Steps from `state` for `steps` steps, calling `observe` after each one.
    pub fn run(
        &self,
        state: &mut CoupledState<T>,
        dt: T,
        steps: usize,
        mut observe: impl FnMut(&CoupledState<T>),
    ) -> Result<()> {
        let t0 = state.t;
        for k in 1..=steps {
            let step = state.step_index + 1;
            let t_next = t0 + dt * T::from_usize_lossy(k);
            self.advance_to(state, dt, t_next).map_err(|e| Error::StepFailed {
                step,
                source: Box::new(e),
            })?;
            observe(state);
        }
        Ok(())
    }
}

/// One coupled step, as a free function over explicit inputs.
pub fn advance<T: Scalar>(
    state: &CoupledState<T>,
    dt: T,
    sources: (&SourceSpec<T>, &SourceSpec<T>),
    params: &ModelParams<T>,
    scheme: MemoryScheme,
    settings: SolverSettings<T>,
) -> Result<CoupledState<T>> {
    let solver = CoupledSolver::new(state.grid(), *params, sources.0.clone(), sources.1.clone(), scheme, settings)?;
    let mut next = state.clone();
    solver.advance(&mut next, dt)?;
    Ok(next)
}

/// Which component a probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
    H,
}

impl Component {
    fn name(self) -> &'static str {
        match self {
            Component::U => "u",
            Component::V => "v",
            Component::H => "h",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    L2,
    Max,
    Min,
}

/// A scalar diagnostic recorded along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Probe<T> {
    /// Multilinear interpolation of a component at a point.
    Point {
        field: Component,
        at: Vec<T>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Norm {
        field: Component,
        reduce: Reduction,
    },
}

impl<T: Scalar> Probe<T> {
    pub fn label(&self, index: usize) -> String {
        match self {
            Probe::Point { name: Some(n), .. } => n.clone(),
            Probe::Point { field, .. } => format!("{}_p{index}", field.name()),
            Probe::Norm { field, reduce } => {
                let r = match reduce {
                    Reduction::L2 => "l2",
                    Reduction::Max => "max",
                    Reduction::Min => "min",
                };
                format!("{}_{r}", field.name())
            }
        }
    }

    pub fn measure(&self, state: &CoupledState<T>) -> Result<T> {
        let pick = |c: Component| -> Field<T> {
            match c {
                Component::U => state.u.clone(),
                Component::V => state.memory.v.clone(),
                Component::H => state.h(),
            }
        };
        match self {
            Probe::Point { field, at, .. } => pick(*field).interpolate(at),
            Probe::Norm { field, reduce } => {
                let f = pick(*field);
                Ok(match reduce {
                    Reduction::L2 => f.l2_norm(),
                    Reduction::Max => f.max(),
                    Reduction::Min => f.min(),
                })
            }
        }
    }

    /// L2 norms, maxima and minima of `u`, `v` and `H`.
    pub fn defaults() -> Vec<Probe<T>> {
        let mut out = Vec::new();
        for reduce in [Reduction::L2, Reduction::Max, Reduction::Min] {
            for field in [Component::U, Component::V, Component::H] {
                out.push(Probe::Norm { field, reduce });
            }
        }
        out
    }
}

/// Probe values over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series<T> {
    pub names: Vec<String>,
    pub times: Vec<T>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Scalar> Series<T> {
    pub fn new(names: Vec<String>) -> Self {
        Series {
            names,
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: T, row: Vec<T>) {
        self.times.push(t);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput<T> {
    pub series: Series<T>,
    /// States at `t = 0` and every `output_stride` steps (plus the last step).
    pub snapshots: Vec<CoupledState<T>>,
    pub final_state: CoupledState<T>,
    pub total_cg_iterations: usize,
}

/// Number of steps of size `dt` that cover `[0, t_final]`.
pub fn step_count<T: Scalar>(t_final: T, dt: T) -> Result<usize> {
    if t_final == T::zero() {
        return Ok(0);
    }
    let ratio = t_final / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > lit::<T>(1e-6) * ratio.max(T::one()) || steps < T::one() {
        return Err(Error::InvalidInput(format!(
            "T = {t_final} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps.to_usize().unwrap_or(0))
}

/// Runs a validated configuration from `t = 0` to `T`.
pub fn run_simulation<T: Scalar>(config: &RunConfig<T>) -> Result<SimulationOutput<T>> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let p = config.params;
    let params = derive_params(p.n, p.c0, p.lambda, p.alpha, p.beta)?;
    let grid = config.grid.build(params.n)?;
    let solver = CoupledSolver::new(
        &grid,
        params,
        config.sources.f.clone(),
        config.sources.g.clone(),
        config.scheme,
        config.solver,
    )?;
    let probes = if config.probes.is_empty() {
        Probe::defaults()
    } else {
        config.probes.clone()
    };
    let names = probes.iter().enumerate().map(|(i, p)| p.label(i)).collect();
    let mut series = Series::new(names);
    let record = |series: &mut Series<T>, s: &CoupledState<T>| -> Result<()> {
        let row = probes.iter().map(|p| p.measure(s)).collect::<Result<Vec<_>>>()?;
        series.push(s.t, row);
        Ok(())
    };

    let steps = step_count(config.t_final, config.dt)?;
    let mut state = solver.initial_state().map_err(|e| Error::StepFailed {
        step: 0,
        source: Box::new(e),
    })?;
    record(&mut series, &state)?;
    let mut snapshots = vec![state.clone()];
    let stride = config.output_stride.max(1);
    let mut cg = 0;
    for k in 1..=steps {
        let t_next = config.dt * T::from_usize_lossy(k);
        let stats = solver.advance_to(&mut state, config.dt, t_next).map_err(|e| Error::StepFailed {
            step: k,
            source: Box::new(e),
        })?;
        cg += stats.iterations;
        if k % stride == 0 || k == steps {
            record(&mut series, &state)?;
            snapshots.push(state.clone());
        }
    }
    Ok(SimulationOutput {
        series,
        snapshots,
        final_state: state,
        total_cg_iterations: cg,
    })
}

/// Discrete weak residual of a trajectory stored at consecutive steps of a
/// uniform `dt`.
///
/// For each test function `psi(x) eta(t)` it evaluates
/// `sum_k dt eta(t_k) < alpha (u^k - u^{k-1})/dt - Delta_h u^k + A (u^k - v^k) - f^k, psi >`
/// and returns the largest magnitude. `psi` ranges over low sine modes and a
/// polynomial bump; `eta` over `1, t/T, (t/T)^2`.
pub fn weak_residual<T: Scalar>(
    history: &[CoupledState<T>],
    f: &SourceSpec<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    if history.len() < 2 {
        return Ok(T::zero());
    }
    let grid = history[0].grid().clone();
    let dt = history[1].t - history[0].t;
    let t_end = history[history.len() - 1].t;
    let lap = assemble_operator(&grid);
    let tests = test_functions(&grid);
    let etas = 3;
    let mut totals = vec![T::zero(); tests.len() * etas];
    for pair in history.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let fk = f.eval_field(&grid, cur.t)?;
        let lu = lap.apply_field(&cur.u)?;
        let mut r = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let inertia = params.alpha * (cur.u[i] - prev.u[i]) / dt;
            r.push(inertia + lu[i] + params.a_strange * (cur.u[i] - cur.memory.v[i]) - fk[i]);
        }
        let r = Field::from_values(&grid, r)?;
        let s = cur.t / t_end;
        for (j, psi) in tests.iter().enumerate() {
            let proj = r.dot(psi)? * dt;
            let mut eta = T::one();
            for e in 0..etas {
                totals[j * etas + e] += eta * proj;
                eta *= s;
            }
        }
    }
    Ok(totals.iter().fold(T::zero(), |m, &v| m.max(v.abs())))
}

fn test_functions<T: Scalar>(grid: &Grid<T>) -> Vec<Field<T>> {
    let dim = grid.dim();
    let mut wave_sets = vec![vec![1u32; dim]];
    for axis in 0..dim.min(2) {
        let mut k = vec![1u32; dim];
        k[axis] = 2;
        wave_sets.push(k);
    }
    let mut out: Vec<Field<T>> = wave_sets
        .into_iter()
        .map(|k| {
            Field::from_fn(grid, |x| {
                (0..dim).fold(T::one(), |acc, a| {
                    let (lo, hi) = grid.extent(a);
                    let s = (x[a] - lo) / (hi - lo);
                    acc * (T::from_u32(k[a]).unwrap() * T::PI() * s).sin()
                })
            })
        })
        .collect();
    out.push(Field::from_fn(grid, |x| {
        (0..dim).fold(T::one(), |acc, a| {
            let (lo, hi) = grid.extent(a);
            let s = (x[a] - lo) / (hi - lo);
            let b = lit::<T>(4.0) * s * (T::one() - s);
            acc * b * b
        })
    }));
    out
}
