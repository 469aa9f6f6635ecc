//! Radial capacity problem around a single particle.
//!
//! In the annulus `a_eps < r < eps/4` the capacity potential is harmonic,
//! equal to one on the particle and zero on the outer sphere. Radial symmetry
//! reduces it to `(r^(n-1) w')' = 0`, solved here on a mesh that is uniform in
//! `s = ln r`, where the equation reads `w_ss + (n - 2) w_s = 0`.
//!
//! Normal derivatives follow the radial direction pointing away from the
//! particle centre on both spheres, so both fluxes are negative for `n >= 3`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model_params::{particle_radius, ModelParams};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSolution<T> {
    pub eps: T,
    pub a_eps: T,
    pub r_out: T,
    pub r_samples: Vec<T>,
    pub w_values: Vec<T>,
    pub flux_inner: T,
    pub flux_outer: T,
    pub alpha_eps: T,
}

struct Annulus<T> {
    a: T,
    outer: T,
    k: i32,
}

fn annulus<T: Scalar>(eps: T, params: &ModelParams<T>) -> Result<Annulus<T>> {
    let a = particle_radius(params, eps)?;
    Ok(Annulus {
        a,
        outer: eps / lit(4.0),
        k: params.n as i32 - 2,
    })
}

/// `alpha_eps = (4 a_eps / eps)^(n-2)`, the capacity ratio of the two spheres.
pub fn alpha_eps<T: Scalar>(eps: T, params: &ModelParams<T>) -> Result<T> {
    let ring = annulus(eps, params)?;
    Ok((lit::<T>(4.0) * ring.a / eps).powi(ring.k))
}

/// Closed-form capacity potential at radius `r`.
pub fn w_exact<T: Scalar>(r: T, eps: T, params: &ModelParams<T>) -> Result<T> {
    let ring = annulus(eps, params)?;
    if !(r >= ring.a && r <= ring.outer) {
        return Err(Error::Domain(format!(
            "radius {r} outside the annulus [{}, {}]",
            ring.a, ring.outer
        )));
    }
    let e = -ring.k;
    let far = ring.outer.powi(e);
    Ok((r.powi(e) - far) / (ring.a.powi(e) - far))
}

/// Analytic normal derivatives `(inner, outer)` of the capacity potential.
pub fn boundary_fluxes<T: Scalar>(eps: T, params: &ModelParams<T>) -> Result<(T, T)> {
    let alpha = alpha_eps(eps, params)?;
    let nm2 = T::from_usize_lossy(params.n - 2);
    let denom = T::one() - alpha;
    let inner = -(nm2 / params.c0) * eps.powf(-params.gamma) / denom;
    let outer = -nm2 * params.c0.powi(params.n as i32 - 2) * lit::<T>(4.0).powi(params.n as i32 - 1) * eps / denom;
    Ok((inner, outer))
}

/// Outer-sphere flux aggregated over one sphere and divided by the cell
/// volume `eps^n`. Tends to `A_strange` as `eps -> 0`; equals
/// `A_strange / (1 - alpha_eps)` for every admissible `eps`.
pub fn effective_coefficient<T: Scalar>(eps: T, params: &ModelParams<T>) -> Result<T> {
    let (_, outer) = boundary_fluxes(eps, params)?;
    let n = params.n as i32;
    let sphere = params.omega_n * (eps / lit(4.0)).powi(n - 1);
    Ok(eps.powi(-n) * sphere * outer.abs())
}

/// Finite-difference solution of the radial capacity problem with
/// `mesh_points` nodes, including both end points.
///
/// Central differences in `s = ln r` are second order. The mesh must be fine
/// enough that `(n - 2) ds < 2`, otherwise the discrete problem loses its
/// maximum principle and the call fails.
pub fn solve_cell_radial<T: Scalar>(eps: T, params: &ModelParams<T>, mesh_points: usize) -> Result<CellSolution<T>> {
    if mesh_points < 3 {
        return Err(Error::InvalidInput(format!(
            "cell mesh needs at least 3 points, got {mesh_points}"
        )));
    }
    let ring = annulus(eps, params)?;
    let alpha = alpha_eps(eps, params)?;
    let s0 = ring.a.ln();
    let s1 = ring.outer.ln();
    let intervals = T::from_usize_lossy(mesh_points - 1);
    let ds = (s1 - s0) / intervals;
    let k = T::from_i32(ring.k).unwrap();
    let half_drift = k * ds / lit(2.0);
    if half_drift >= T::one() {
        return Err(Error::InvalidInput(format!(
            "cell mesh of {mesh_points} points is too coarse for a monotone solution"
        )));
    }

    let mut r_samples: Vec<T> = (0..mesh_points)
        .map(|i| (s0 + T::from_usize_lossy(i) * ds).exp())
        .collect();
    r_samples[0] = ring.a;
    r_samples[mesh_points - 1] = ring.outer;

    // Rows scaled by ds^2: (1 - k ds/2) w_{i-1} - 2 w_i + (1 + k ds/2) w_{i+1} = 0.
    let lower = T::one() - half_drift;
    let upper = T::one() + half_drift;
    let m = mesh_points - 2;
    let mut rhs = vec![T::zero(); m];
    if m > 0 {
        rhs[0] = -lower;
    }
    let interior = solve_tridiagonal_constant(lower, lit(-2.0), upper, &rhs)?;

    let mut w_values = Vec::with_capacity(mesh_points);
    w_values.push(T::one());
    w_values.extend(interior);
    w_values.push(T::zero());

    let (flux_inner, flux_outer) = one_sided_fluxes(&w_values, &r_samples, ds);

    Ok(CellSolution {
        eps,
        a_eps: ring.a,
        r_out: ring.outer,
        r_samples,
        w_values,
        flux_inner,
        flux_outer,
        alpha_eps: alpha,
    })
}

fn one_sided_fluxes<T: Scalar>(w: &[T], r: &[T], ds: T) -> (T, T) {
    let two = lit::<T>(2.0);
    let three = lit::<T>(3.0);
    let four = lit::<T>(4.0);
    let last = w.len() - 1;
    let ws_inner = (-three * w[0] + four * w[1] - w[2]) / (two * ds);
    let ws_outer = (three * w[last] - four * w[last - 1] + w[last - 2]) / (two * ds);
    (ws_inner / r[0], ws_outer / r[last])
}

/// Thomas algorithm for a tridiagonal system with constant bands.
fn solve_tridiagonal_constant<T: Scalar>(lower: T, diag: T, upper: T, rhs: &[T]) -> Result<Vec<T>> {
    let m = rhs.len();
    let mut c = vec![T::zero(); m];
    let mut d = vec![T::zero(); m];
    let mut denom = diag;
    for i in 0..m {
        if i > 0 {
            denom = diag - lower * c[i - 1];
        }
        if denom == T::zero() || !denom.is_finite() {
            return Err(Error::InvalidInput("singular tridiagonal system".into()));
        }
        c[i] = upper / denom;
        let prev = if i > 0 { lower * d[i - 1] } else { T::zero() };
        d[i] = (rhs[i] - prev) / denom;
    }
    let mut x = vec![T::zero(); m];
    for i in (0..m).rev() {
        x[i] = if i + 1 < m { d[i] - c[i] * x[i + 1] } else { d[i] };
    }
    Ok(x)
}
