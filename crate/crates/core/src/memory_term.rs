//! The memory variable `v = u - H` and the strange term it carries.
//!
//! Pointwise in space, `v` obeys the linear relaxation
//!
//! ```text
//! beta dv/dt + mu v = kappa u + g,   beta v(0) = 0,
//! ```
//!
//! with `kappa = (n - 2) / C0` and `mu = kappa + lambda`. For `beta > 0` this
//! is the exponential-kernel convolution
//! `v(t) = (1/beta) int_0^t (kappa u + g)(s) exp(-mu (t - s) / beta) ds`;
//! for `beta = 0` it collapses to the algebraic relation `mu v = kappa u + g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model_params::ModelParams;
use crate::scalar::{lit, Scalar};

/// Time discretization of the memory relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryScheme {
    #[default]
    BackwardEuler,
    Trapezoid,
}

/// One-step update `v' = keep v + gain_next F(t') + gain_prev F(t)`, where
/// `F = kappa u + g` is the forcing of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients<T> {
    pub keep: T,
    pub gain_next: T,
    pub gain_prev: T,
}

impl<T: Scalar> StepCoefficients<T> {
    /// Coefficients for step `dt`. With `beta = 0` both schemes reduce to the
    /// algebraic branch `v' = F(t') / mu`.
    pub fn new(params: &ModelParams<T>, dt: T, scheme: MemoryScheme) -> Self {
        let beta = params.beta;
        let mu = params.mu;
        if beta == T::zero() {
            return StepCoefficients {
                keep: T::zero(),
                gain_next: mu.recip(),
                gain_prev: T::zero(),
            };
        }
        match scheme {
            MemoryScheme::BackwardEuler => {
                let denom = beta + mu * dt;
                StepCoefficients {
                    keep: beta / denom,
                    gain_next: dt / denom,
                    gain_prev: T::zero(),
                }
            }
            MemoryScheme::Trapezoid => {
                let half = dt / lit(2.0);
                let denom = beta + mu * half;
                StepCoefficients {
                    keep: (beta - mu * half) / denom,
                    gain_next: half / denom,
                    gain_prev: half / denom,
                }
            }
        }
    }

    /// Whether the update maps nonnegative data to nonnegative values.
    pub fn is_positive(&self) -> bool {
        self.keep >= T::zero() && self.gain_next >= T::zero() && self.gain_prev >= T::zero()
    }
}

/// Memory variable on a grid together with the forcing it last saw.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState<T> {
    pub v: Field<T>,
    pub t: T,
    /// `kappa u + g` at time `t`; the trapezoid scheme needs it.
    forcing: Option<Vec<T>>,
}

impl<T: Scalar> MemoryState<T> {
    /// Homogeneous initial state `v = 0` at `t = 0`.
    pub fn new(grid: &crate::grid::Grid<T>) -> Self {
        MemoryState {
            v: Field::zeros(grid),
            t: T::zero(),
            forcing: None,
        }
    }

    pub fn from_parts(v: Field<T>, t: T) -> Self {
        MemoryState { v, t, forcing: None }
    }

    /// Records the inputs at the current time so the trapezoid scheme can start.
    pub fn prime(&mut self, u: &Field<T>, g: &Field<T>, params: &ModelParams<T>) -> Result<()> {
        self.forcing = Some(forcing(u, g, params)?);
        Ok(())
    }

    pub fn forcing(&self) -> Option<&[T]> {
        self.forcing.as_deref()
    }

    pub(crate) fn set_forcing(&mut self, f: Vec<T>) {
        self.forcing = Some(f);
    }
}

fn forcing<T: Scalar>(u: &Field<T>, g: &Field<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    u.check_same_grid(g)?;
    let kappa = params.capture_rate();
    Ok(u.values().iter().zip(g.values()).map(|(&u, &g)| kappa * u + g).collect())
}

/// Algebraic strange-term density for `beta = 0`: `H = (lambda u - g) / mu`.
pub fn h_algebraic<T: Scalar>(u: T, g: T, params: &ModelParams<T>) -> Result<T> {
    if params.beta != T::zero() {
        return Err(Error::Regime(
            "the algebraic strange term requires beta = 0".into(),
        ));
    }
    Ok((params.lambda * u - g) / params.mu)
}

/// Memory value in the `beta = 0` branch, `v = (kappa u + g) / mu`.
pub fn v_algebraic<T: Scalar>(u: T, g: T, params: &ModelParams<T>) -> T {
    (params.capture_rate() * u + g) / params.mu
}

/// Advances the memory variable by `dt` given the bulk value and surface
/// source at the new time level.
pub fn step_memory<T: Scalar>(
    state: &mut MemoryState<T>,
    u_next: &Field<T>,
    g_next: &Field<T>,
    dt: T,
    params: &ModelParams<T>,
    scheme: MemoryScheme,
) -> Result<()> {
    if params.beta == T::zero() {
        return Err(Error::Regime(
            "beta = 0 has no memory dynamics; use the algebraic branch".into(),
        ));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    state.v.check_same_grid(u_next)?;
    let next = forcing(u_next, g_next, params)?;
    let c = StepCoefficients::new(params, dt, scheme);
    match (scheme, state.forcing.as_ref()) {
        (MemoryScheme::BackwardEuler, _) => {
            for (v, &f) in state.v.values_mut().iter_mut().zip(&next) {
                *v = c.keep * *v + c.gain_next * f;
            }
        }
        (MemoryScheme::Trapezoid, Some(prev)) => {
            for ((v, &f), &fp) in state.v.values_mut().iter_mut().zip(&next).zip(prev) {
                *v = c.keep * *v + c.gain_next * f + c.gain_prev * fp;
            }
        }
        (MemoryScheme::Trapezoid, None) => {
            return Err(Error::InvalidInput(
                "trapezoid step needs the forcing at the current time; call MemoryState::prime".into(),
            ))
        }
    }
    state.forcing = Some(next);
    state.t += dt;
    Ok(())
}

/// Strange-term density `H = u - v`.
pub fn h_from_state<T: Scalar>(u: &Field<T>, state: &MemoryState<T>) -> Result<Field<T>> {
    u.zip_map(&state.v, |u, v| u - v)
}

/// Per-interval weights for exact integration of a piecewise linear forcing
/// against the kernel `exp(-rate (t - s)) / beta`.
#[derive(Debug, Clone, Copy)]
pub struct KernelWeights<T> {
    pub decay: T,
    pub w_start: T,
    pub w_end: T,
}

impl<T: Scalar> KernelWeights<T> {
    pub fn new(params: &ModelParams<T>, step: T) -> Result<Self> {
        if params.beta == T::zero() {
            return Err(Error::Regime("the memory kernel needs beta > 0".into()));
        }
        let rate = params.mu / params.beta;
        let x = rate * step;
        let decay = (-x).exp();
        // int_0^h e^{-r(h-s)} ds = h (1 - e^{-x}) / x
        // int_0^h (s/h) e^{-r(h-s)} ds = h (x - 1 + e^{-x}) / x^2
        let (total, end) = if x < lit(1e-2) {
            let mut total = T::zero();
            let mut end = T::zero();
            // alternating series, terms to x^7
            let mut term = T::one();
            for k in 0..8 {
                let sign = if k % 2 == 0 { T::one() } else { -T::one() };
                total += sign * term / T::from_usize_lossy(factorial(k + 1));
                end += sign * term / T::from_usize_lossy(factorial(k + 2));
                term *= x;
            }
            (total, end)
        } else {
            let one_minus = -(-x).exp_m1();
            (one_minus / x, (x - one_minus) / (x * x))
        };
        let scale = step / params.beta;
        Ok(KernelWeights {
            decay,
            w_start: scale * (total - end),
            w_end: scale * end,
        })
    }
}

fn factorial(k: usize) -> usize {
    (1..=k).product()
}

/// Running exponential-kernel convolution with O(1) state per point:
/// `I_{k+1} = decay I_k + w_start F_k + w_end F_{k+1}`.
#[derive(Debug, Clone)]
pub struct ConvolutionAccumulator<T> {
    weights: KernelWeights<T>,
    value: Vec<T>,
    last: Vec<T>,
}

impl<T: Scalar> ConvolutionAccumulator<T> {
    /// Starts at zero with the forcing `initial` at time zero.
    pub fn new(params: &ModelParams<T>, step: T, initial: Vec<T>) -> Result<Self> {
        Ok(ConvolutionAccumulator {
            weights: KernelWeights::new(params, step)?,
            value: vec![T::zero(); initial.len()],
            last: initial,
        })
    }

    /// Adds one interval ending at forcing `next`.
    pub fn push(&mut self, next: &[T]) {
        let w = self.weights;
        for ((acc, last), &f) in self.value.iter_mut().zip(self.last.iter_mut()).zip(next) {
            *acc = w.decay * *acc + w.w_start * *last + w.w_end * f;
            *last = f;
        }
    }

    pub fn value(&self) -> &[T] {
        &self.value
    }
}

/// Memory variable at time `t` evaluated directly from the convolution
/// representation, given input histories sampled uniformly on `[0, t]`.
///
/// The forcing is interpolated linearly between samples and integrated
/// exactly against the kernel, so the result is exact for inputs linear in
/// time and second order otherwise.
pub fn convolution_reference<T: Scalar>(
    u_history: &[Field<T>],
    g_history: &[Field<T>],
    t: T,
    params: &ModelParams<T>,
) -> Result<Field<T>> {
    if params.beta == T::zero() {
        return Err(Error::Regime("the convolution form requires beta > 0".into()));
    }
    if u_history.is_empty() || u_history.len() != g_history.len() {
        return Err(Error::InvalidInput(format!(
            "histories must be nonempty and of equal length (u: {}, g: {})",
            u_history.len(),
            g_history.len()
        )));
    }
    let grid = u_history[0].grid();
    if u_history.len() == 1 {
        if t != T::zero() {
            return Err(Error::InvalidInput("a single sample only covers t = 0".into()));
        }
        return Ok(Field::zeros(grid));
    }
    let step = t / T::from_usize_lossy(u_history.len() - 1);
    let mut acc = ConvolutionAccumulator::new(params, step, forcing(&u_history[0], &g_history[0], params)?)?;
    for (u, g) in u_history.iter().zip(g_history).skip(1) {
        acc.push(&forcing(u, g, params)?);
    }
    Field::from_values(grid, acc.value)
}

/// Outcome of [`stability_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCheck<T> {
    pub lhs: T,
    pub rhs: T,
    /// Constant multiplying the data norms; chosen as `4 max(1, 1/mu, beta/mu)`.
    pub constant: T,
    pub ok: bool,
}

/// Strange-term density `H_phi` for a test history `phi`, i.e. `phi - w`
/// where `w` relaxes towards `kappa phi + g` from zero.
pub fn h_phi_history<T: Scalar>(
    phi_history: &[Field<T>],
    g_history: &[Field<T>],
    dt: T,
    params: &ModelParams<T>,
) -> Result<Vec<Field<T>>> {
    if phi_history.len() != g_history.len() {
        return Err(Error::InvalidInput("phi and g histories differ in length".into()));
    }
    if phi_history.is_empty() {
        return Ok(Vec::new());
    }
    if params.beta == T::zero() {
        return phi_history
            .iter()
            .zip(g_history)
            .map(|(phi, g)| phi.zip_map(g, |p, g| (params.lambda * p - g) / params.mu))
            .collect();
    }
    let mut acc = ConvolutionAccumulator::new(params, dt, forcing(&phi_history[0], &g_history[0], params)?)?;
    let mut out = Vec::with_capacity(phi_history.len());
    out.push(phi_history[0].clone());
    for (phi, g) in phi_history.iter().zip(g_history).skip(1) {
        acc.push(&forcing(phi, g, params)?);
        let w = Field::from_values(phi.grid(), acc.value().to_vec())?;
        out.push(phi.zip_map(&w, |p, w| p - w)?);
    }
    Ok(out)
}

/// Discrete `L^2(Q^T)` norm of a history sampled every `dt`, trapezoid rule in time.
pub fn spacetime_l2<T: Scalar>(history: &[Field<T>], dt: T) -> T {
    let n = history.len();
    if n < 2 {
        return T::zero();
    }
    let half = lit::<T>(0.5);
    let total = history.iter().enumerate().fold(T::zero(), |acc, (k, f)| {
        let w = if k == 0 || k == n - 1 { half } else { T::one() };
        acc + w * f.l2_norm().powi(2)
    });
    (total * dt).sqrt()
}

/// Compares `||H_phi||_{L2(Q^T)}` against
/// `C (||phi(0)|| + ||phi|| + ||d phi/dt|| + ||g||)` on sampled histories.
pub fn stability_bound_check<T: Scalar>(
    phi_history: &[Field<T>],
    g_history: &[Field<T>],
    dt: T,
    params: &ModelParams<T>,
) -> Result<StabilityCheck<T>> {
    let h = h_phi_history(phi_history, g_history, dt, params)?;
    let lhs = spacetime_l2(&h, dt);
    let one = T::one();
    let constant = lit::<T>(4.0) * one.max(params.mu.recip()).max(params.beta / params.mu);
    if phi_history.is_empty() {
        return Ok(StabilityCheck {
            lhs,
            rhs: T::zero(),
            constant,
            ok: true,
        });
    }
    let phi0 = phi_history[0].l2_norm();
    let phi_norm = spacetime_l2(phi_history, dt);
    let g_norm = spacetime_l2(g_history, dt);
    let mut dphi = T::zero();
    for pair in phi_history.windows(2) {
        let diff = pair[1].zip_map(&pair[0], |b, a| (b - a) / dt)?;
        dphi += diff.l2_norm().powi(2) * dt;
    }
    let rhs = constant * (phi0 + phi_norm + dphi.sqrt() + g_norm);
    Ok(StabilityCheck {
        lhs,
        rhs,
        constant,
        ok: lhs <= rhs,
    })
}
