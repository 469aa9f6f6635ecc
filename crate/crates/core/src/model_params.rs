//! Physical constants of the homogenized model and the quantities derived from them.
//!
//! Particles of radius `a_eps = C0 * eps^gamma` with the critical exponent
//! `gamma = n / (n - 2)` produce, in the limit, a zeroth-order reaction
//! coefficient `A = (n - 2) * C0^(n-2) * omega_n` acting on `u - v`, where `v`
//! relaxes towards `((n - 2) / C0) u + g` at rate `mu = (n - 2) / C0 + lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Raw, user-supplied model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams<T> {
    pub n: usize,
    #[serde(rename = "C0")]
    pub c0: T,
    pub lambda: T,
    pub alpha: T,
    pub beta: T,
}

/// Validated model constants together with their derived quantities.
///
/// Serializes as a flat JSON object. Derived fields are recomputed on load, so
/// a document may carry them or omit them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr<T>", bound = "T: Scalar")]
pub struct ModelParams<T> {
    pub n: usize,
    #[serde(rename = "C0")]
    pub c0: T,
    pub lambda: T,
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub omega_n: T,
    #[serde(rename = "A_strange")]
    pub a_strange: T,
    pub mu: T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct ParamsRepr<T> {
    n: usize,
    #[serde(rename = "C0")]
    c0: T,
    lambda: T,
    alpha: T,
    beta: T,
    #[serde(default, rename = "gamma")]
    _gamma: Option<T>,
    #[serde(default, rename = "omega_n")]
    _omega_n: Option<T>,
    #[serde(default, rename = "A_strange")]
    _a_strange: Option<T>,
    #[serde(default, rename = "mu")]
    _mu: Option<T>,
}

impl<T: Scalar> TryFrom<ParamsRepr<T>> for ModelParams<T> {
    type Error = Error;

    fn try_from(r: ParamsRepr<T>) -> Result<Self> {
        derive_params(r.n, r.c0, r.lambda, r.alpha, r.beta)
    }
}

/// Returns every violated invariant as a readable message. Empty means valid.
pub fn validate_raw<T: Scalar>(raw: &RawParams<T>) -> Vec<String> {
    let mut out = Vec::new();
    if raw.n < 3 {
        out.push("n must be ≥ 3".to_string());
    }
    if !(raw.c0 > T::zero()) || !raw.c0.is_finite() {
        out.push("C0 must be > 0".to_string());
    }
    for (name, value) in [("lambda", raw.lambda), ("alpha", raw.alpha), ("beta", raw.beta)] {
        if !(value >= T::zero()) || !value.is_finite() {
            out.push(format!("{name} must be ≥ 0"));
        }
    }
    if raw.alpha == T::zero() && raw.beta == T::zero() {
        out.push("alpha and beta cannot both vanish".to_string());
    }
    out
}

/// Diagnostics for an already constructed parameter set, including the
/// consistency of its derived fields.
pub fn validate_params<T: Scalar>(params: &ModelParams<T>) -> Vec<String> {
    let mut out = validate_raw(&params.raw());
    if !out.is_empty() {
        return out;
    }
    let fresh = derive_unchecked(params.raw());
    let tol = lit::<T>(1e-12);
    let derived = [
        ("gamma", params.gamma, fresh.gamma),
        ("omega_n", params.omega_n, fresh.omega_n),
        ("A_strange", params.a_strange, fresh.a_strange),
        ("mu", params.mu, fresh.mu),
    ];
    for (name, have, want) in derived {
        if (have - want).abs() > tol * want.abs() {
            out.push(format!("{name} is inconsistent with the raw fields ({have} vs {want})"));
        }
    }
    out
}

/// Validates the raw constants and fills in the derived ones.
pub fn derive_params<T: Scalar>(n: usize, c0: T, lambda: T, alpha: T, beta: T) -> Result<ModelParams<T>> {
    let raw = RawParams {
        n,
        c0,
        lambda,
        alpha,
        beta,
    };
    let problems = validate_raw(&raw);
    if !problems.is_empty() {
        return Err(Error::InvalidParams(problems));
    }
    Ok(derive_unchecked(raw))
}

fn derive_unchecked<T: Scalar>(raw: RawParams<T>) -> ModelParams<T> {
    let n = raw.n;
    let nm2 = T::from_usize_lossy(n - 2);
    let omega_n = unit_sphere_area::<T>(n);
    let capture = nm2 / raw.c0;
    ModelParams {
        n,
        c0: raw.c0,
        lambda: raw.lambda,
        alpha: raw.alpha,
        beta: raw.beta,
        gamma: T::from_usize_lossy(n) / nm2,
        omega_n,
        a_strange: nm2 * raw.c0.powi((n - 2) as i32) * omega_n,
        mu: capture + raw.lambda,
    }
}

/// Surface area of the unit sphere in `R^n`, `2 pi^(n/2) / Gamma(n/2)`.
///
/// `Gamma(n/2)` is evaluated by the recursion `Gamma(x + 1) = x Gamma(x)` from
/// `Gamma(1) = 1` or `Gamma(1/2) = sqrt(pi)`.
pub fn unit_sphere_area<T: Scalar>(n: usize) -> T {
    assert!(n >= 1, "dimension must be positive");
    let pi = T::PI();
    let half = lit::<T>(0.5);
    // pi^(n/2) and Gamma(n/2) share the sqrt(pi) factor for odd n; it is kept
    // in both so the recursion stays literal.
    let (pi_pow, gamma) = if n.is_multiple_of(2) {
        let k = n / 2;
        let mut g = T::one();
        for j in 1..k {
            g *= T::from_usize_lossy(j);
        }
        (pi.powi(k as i32), g)
    } else {
        let k = (n - 1) / 2;
        let mut g = pi.sqrt();
        for j in 0..k {
            g *= T::from_usize_lossy(j) + half;
        }
        (pi.powi(k as i32) * pi.sqrt(), g)
    };
    lit::<T>(2.0) * pi_pow / gamma
}

impl<T: Scalar> ModelParams<T> {
    pub fn raw(&self) -> RawParams<T> {
        RawParams {
            n: self.n,
            c0: self.c0,
            lambda: self.lambda,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// `(n - 2) / C0`: rate at which the bulk value feeds the memory variable.
    pub fn capture_rate(&self) -> T {
        T::from_usize_lossy(self.n - 2) / self.c0
    }

    /// Copy with `alpha` and `beta` replaced.
    pub fn with_time_weights(&self, alpha: T, beta: T) -> Result<Self> {
        derive_params(self.n, self.c0, self.lambda, alpha, beta)
    }

    /// Particle radius `a_eps = C0 eps^gamma` at cell period `eps`.
    pub fn particle_radius(&self, eps: T) -> Result<T> {
        particle_radius(self, eps)
    }
}

/// `a_eps = C0 * eps^gamma`. Fails unless the particle fits strictly inside
/// the ball of radius `eps / 4` around its cell centre.
pub fn particle_radius<T: Scalar>(params: &ModelParams<T>, eps: T) -> Result<T> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::Geometry(format!("eps must be positive, got {eps}")));
    }
    let a = params.c0 * eps.powf(params.gamma);
    let outer = eps / lit(4.0);
    if a >= outer {
        return Err(Error::Geometry(format!(
            "particle radius {a} is not smaller than eps/4 = {outer}"
        )));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn three_dimensional_unit_constants() {
        let p = derive_params(3, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.gamma, 3.0);
        assert!(rel(p.omega_n, 4.0 * PI) <= 1e-14);
        assert!(rel(p.a_strange, 4.0 * PI) <= 1e-14);
        assert_eq!(p.mu, 2.0);
    }

    #[test]
    fn four_dimensional_constants() {
        let p = derive_params(4, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(p.gamma, 2.0);
        assert!(rel(p.omega_n, 2.0 * PI * PI) <= 1e-14);
        assert!(rel(p.a_strange, 39.478_417_604_357_43) <= 1e-14);
        assert_eq!(p.mu, 2.0);
    }

    #[test]
    fn sphere_areas_match_known_values() {
        // omega_1 = 2, omega_2 = 2 pi, omega_5 = 8 pi^2 / 3, omega_6 = pi^3
        assert!(rel(unit_sphere_area::<f64>(1), 2.0) < 1e-15);
        assert!(rel(unit_sphere_area::<f64>(2), 2.0 * PI) < 1e-15);
        assert!(rel(unit_sphere_area::<f64>(5), 8.0 * PI * PI / 3.0) < 1e-14);
        assert!(rel(unit_sphere_area::<f64>(6), PI.powi(3)) < 1e-14);
        assert!((unit_sphere_area::<f32>(3) - 4.0 * std::f32::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn rejects_low_dimension() {
        let err = derive_params(2, 1.0, 1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("n must be ≥ 3"), "{err}");
    }

    #[test]
    fn rejects_bad_signs_all_at_once() {
        let err = derive_params(3, 0.0, -1.0, -2.0, 1.0).unwrap_err();
        match err {
            Error::InvalidParams(list) => {
                assert!(list.contains(&"C0 must be > 0".to_string()));
                assert!(list.contains(&"lambda must be ≥ 0".to_string()));
                assert!(list.contains(&"alpha must be ≥ 0".to_string()));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn diagnostics() {
        let ok = derive_params(3, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(validate_params(&ok).is_empty());

        let mut bad = ok;
        bad.lambda = -1.0;
        assert_eq!(validate_params(&bad), vec!["lambda must be ≥ 0".to_string()]);

        let mut frozen = ok;
        frozen.alpha = 0.0;
        frozen.beta = 0.0;
        assert_eq!(
            validate_params(&frozen),
            vec!["alpha and beta cannot both vanish".to_string()]
        );

        let mut stale = ok;
        stale.mu = 3.0;
        assert_eq!(validate_params(&stale).len(), 1);
    }

    #[test]
    fn radius_examples() {
        let p3 = derive_params(3, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(rel(particle_radius(&p3, 0.1).unwrap(), 1e-3) < 1e-14);
        assert!(matches!(particle_radius(&p3, 0.5), Err(Error::Geometry(_))));
        assert!(particle_radius(&p3, -0.1).is_err());

        let p4 = derive_params(4, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(rel(particle_radius(&p4, 0.1).unwrap(), 0.02) < 1e-14);
    }

    #[test]
    fn json_is_flat_and_reloads() {
        let p = derive_params(3, 1.0, 0.5, 1.0, 0.0).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        for key in ["\"n\"", "\"C0\"", "\"lambda\"", "\"alpha\"", "\"beta\"", "\"gamma\"", "\"omega_n\"", "\"A_strange\"", "\"mu\""] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        let back: ModelParams<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let raw_only: ModelParams<f64> =
            serde_json::from_str(r#"{"n":4,"C0":2,"lambda":0,"alpha":1,"beta":1}"#).unwrap();
        assert_eq!(raw_only.gamma, 2.0);
        assert!(serde_json::from_str::<ModelParams<f64>>(r#"{"n":2,"C0":1,"lambda":0,"alpha":1,"beta":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn derived_identities(n in 3usize..8, c0 in 0.05f64..5.0, lambda in 0.0f64..10.0,
                                  alpha in 0.0f64..3.0, beta in 0.01f64..3.0) {
                let p = derive_params(n, c0, lambda, alpha, beta).unwrap();
                let nm2 = (n - 2) as f64;
                prop_assert!(rel(p.gamma * nm2, n as f64) <= 1e-14);
                prop_assert!(rel(p.a_strange, nm2 * c0.powi(n as i32 - 2) * p.omega_n) <= 1e-14);
                prop_assert_eq!(p.mu, nm2 / c0 + lambda);
                prop_assert!(p.a_strange > 0.0 && p.mu > 0.0);
            }

            #[test]
            fn radius_monotone(c0 in 0.1f64..1.0, e1 in 0.01f64..0.2, de in 1e-4f64..0.05, dc in 1e-3f64..0.5) {
                let p = derive_params(3, c0, 1.0, 1.0, 1.0).unwrap();
                let q = derive_params(3, c0 + dc, 1.0, 1.0, 1.0).unwrap();
                let a1 = particle_radius(&p, e1).unwrap();
                let a2 = particle_radius(&p, e1 + de).unwrap();
                prop_assert!(a2 > a1);
                prop_assert!(particle_radius(&q, e1).unwrap() > a1);
            }
        }
    }
}
