//! Space-time source terms `f` and `g` and the closed-form profiles used to
//! manufacture exact solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::{lit, Scalar};

/// One term of a [`TimeFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeTerm<T> {
    /// `coeff * t^power`
    Power { coeff: T, power: u32 },
    /// `coeff * exp(rate t)`
    Exp { coeff: T, rate: T },
    /// `coeff * sin(omega t)`
    Sin { coeff: T, omega: T },
    /// `coeff * cos(omega t)`
    Cos { coeff: T, omega: T },
}

/// Finite sum of powers, exponentials and sinusoids in `t`; closed under
/// differentiation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeFunction<T>(pub Vec<TimeTerm<T>>);

impl<T: Scalar> TimeFunction<T> {
    pub fn constant(c: T) -> Self {
        TimeFunction(vec![TimeTerm::Power { coeff: c, power: 0 }])
    }

    pub fn monomial(coeff: T, power: u32) -> Self {
        TimeFunction(vec![TimeTerm::Power { coeff, power }])
    }

    pub fn eval(&self, t: T) -> T {
        self.0.iter().fold(T::zero(), |acc, term| {
            acc + match *term {
                TimeTerm::Power { coeff, power } => coeff * t.powi(power as i32),
                TimeTerm::Exp { coeff, rate } => coeff * (rate * t).exp(),
                TimeTerm::Sin { coeff, omega } => coeff * (omega * t).sin(),
                TimeTerm::Cos { coeff, omega } => coeff * (omega * t).cos(),
            }
        })
    }

    pub fn derivative(&self) -> Self {
        let terms = self
            .0
            .iter()
            .filter_map(|term| match *term {
                TimeTerm::Power { power: 0, .. } => None,
                TimeTerm::Power { coeff, power } => Some(TimeTerm::Power {
                    coeff: coeff * T::from_u32(power).unwrap(),
                    power: power - 1,
                }),
                TimeTerm::Exp { coeff, rate } => Some(TimeTerm::Exp { coeff: coeff * rate, rate }),
                TimeTerm::Sin { coeff, omega } => Some(TimeTerm::Cos { coeff: coeff * omega, omega }),
                TimeTerm::Cos { coeff, omega } => Some(TimeTerm::Sin { coeff: -coeff * omega, omega }),
            })
            .collect();
        TimeFunction(terms)
    }

    pub fn scaled(&self, factor: T) -> Self {
        let terms = self
            .0
            .iter()
            .map(|term| match *term {
                TimeTerm::Power { coeff, power } => TimeTerm::Power { coeff: coeff * factor, power },
                TimeTerm::Exp { coeff, rate } => TimeTerm::Exp { coeff: coeff * factor, rate },
                TimeTerm::Sin { coeff, omega } => TimeTerm::Sin { coeff: coeff * factor, omega },
                TimeTerm::Cos { coeff, omega } => TimeTerm::Cos { coeff: coeff * factor, omega },
            })
            .collect();
        TimeFunction(terms)
    }

    pub fn plus(mut self, other: &TimeFunction<T>) -> Self {
        self.0.extend(other.0.iter().cloned());
        self
    }
}

/// Product `prod_a sin(k_a pi x_a)` times a time profile. On boxes with
/// integer corner coordinates it vanishes on the boundary and is an exact
/// eigenfunction of `-Delta` with eigenvalue `pi^2 |k|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineMode<T> {
    pub wavenumbers: Vec<u32>,
    pub time: TimeFunction<T>,
}

impl<T: Scalar> SineMode<T> {
    pub fn new(wavenumbers: Vec<u32>, time: TimeFunction<T>) -> Self {
        SineMode { wavenumbers, time }
    }

    pub fn spatial(&self, x: &[T]) -> T {
        self.wavenumbers
            .iter()
            .zip(x)
            .fold(T::one(), |acc, (&k, &xi)| acc * (T::from_u32(k).unwrap() * T::PI() * xi).sin())
    }

    /// Eigenvalue of `-Delta` for the spatial factor.
    pub fn laplace_eigenvalue(&self) -> T {
        let pi2 = T::PI() * T::PI();
        self.wavenumbers
            .iter()
            .fold(T::zero(), |acc, &k| acc + pi2 * T::from_u32(k * k).unwrap())
    }

    pub fn eval(&self, x: &[T], t: T) -> T {
        self.spatial(x) * self.time.eval(t)
    }
}

/// `-(amplitude prod_a cos(wave_a x_a + phase_a) cos(omega t + time_phase))^2`;
/// a sum of these is smooth and nonpositive everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigMode<T> {
    pub amplitude: T,
    pub wave: Vec<T>,
    pub phase: Vec<T>,
    pub omega: T,
    pub time_phase: T,
}

impl<T: Scalar> TrigMode<T> {
    fn value(&self, x: &[T], t: T) -> T {
        let s = self
            .wave
            .iter()
            .zip(&self.phase)
            .zip(x)
            .fold(self.amplitude, |acc, ((&w, &p), &xi)| acc * (w * xi + p).cos());
        let s = s * (self.omega * t + self.time_phase).cos();
        -(s * s)
    }
}

/// A source term `f(x, t)` or `g(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec<T> {
    Constant {
        value: T,
    },
    /// Sum of sine modes.
    SeparableSine {
        modes: Vec<SineMode<T>>,
    },
    /// Spatially uniform polynomial `sum_j c_j t^j`.
    PolynomialTime {
        coefficients: Vec<T>,
    },
    /// Source generated from an exact pair `(u, v)`; evaluates like
    /// `SeparableSine` over `modes`.
    Manufactured {
        modes: Vec<SineMode<T>>,
        u_exact: Vec<SineMode<T>>,
        v_exact: Vec<SineMode<T>>,
    },
    /// Samples at increasing `times`, linear in between and held constant
    /// outside. Each row has one value (uniform in space) or one per node.
    Tabulated {
        times: Vec<T>,
        values: Vec<Vec<T>>,
    },
    /// Sum of squared trigonometric modes with a negative sign.
    NonPositiveModes {
        modes: Vec<TrigMode<T>>,
    },
}

impl<T: Scalar> Default for SourceSpec<T> {
    fn default() -> Self {
        SourceSpec::Constant { value: T::zero() }
    }
}

impl<T: Scalar> SourceSpec<T> {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Structural problems, independent of any grid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            SourceSpec::Tabulated { times, values } => {
                if times.is_empty() {
                    out.push("tabulated source needs at least one time".into());
                }
                if times.len() != values.len() {
                    out.push(format!(
                        "tabulated source has {} times but {} value rows",
                        times.len(),
                        values.len()
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("tabulated times must be strictly increasing".into());
                }
            }
            SourceSpec::NonPositiveModes { modes } if modes.iter().any(|m| m.wave.len() != m.phase.len()) => {
                out.push("trigonometric modes need one phase per wave number".into());
            }
            _ => {}
        }
        out
    }

    /// Problems that only show up against a particular grid.
    pub fn check_grid(&self, grid: &Grid<T>) -> Result<()> {
        let dim = grid.dim();
        let modes_ok = |modes: &[SineMode<T>]| modes.iter().all(|m| m.wavenumbers.len() == dim);
        let ok = match self {
            SourceSpec::SeparableSine { modes } => modes_ok(modes),
            SourceSpec::Manufactured { modes, u_exact, v_exact } => {
                modes_ok(modes) && modes_ok(u_exact) && modes_ok(v_exact)
            }
            SourceSpec::NonPositiveModes { modes } => modes.iter().all(|m| m.wave.len() == dim),
            SourceSpec::Tabulated { values, .. } => {
                if let Some(row) = values.iter().find(|r| r.len() != 1 && r.len() != grid.len()) {
                    return Err(Error::ShapeMismatch {
                        expected: grid.len(),
                        found: row.len(),
                    });
                }
                true
            }
            _ => true,
        };
        if !ok {
            return Err(Error::InvalidInput(format!(
                "source modes do not match the {dim}-dimensional grid"
            )));
        }
        Ok(())
    }

    /// Pointwise value; tabulated sources must use [`SourceSpec::eval_field`].
    pub fn eval(&self, x: &[T], t: T) -> T {
        match self {
            SourceSpec::Constant { value } => *value,
            SourceSpec::SeparableSine { modes } | SourceSpec::Manufactured { modes, .. } => {
                modes.iter().fold(T::zero(), |acc, m| acc + m.eval(x, t))
            }
            SourceSpec::PolynomialTime { coefficients } => {
                coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * t + c)
            }
            SourceSpec::NonPositiveModes { modes } => modes.iter().fold(T::zero(), |acc, m| acc + m.value(x, t)),
            SourceSpec::Tabulated { times, values } => {
                let (i, w) = bracket(times, t);
                let row = |k: usize| values[k][0];
                if w == T::zero() {
                    row(i)
                } else {
                    (T::one() - w) * row(i) + w * row(i + 1)
                }
            }
        }
    }

    /// Values on the interior nodes of `grid` at time `t`.
    pub fn eval_field(&self, grid: &Grid<T>, t: T) -> Result<Field<T>> {
        self.check_grid(grid)?;
        match self {
            SourceSpec::Tabulated { times, values } => {
                let (i, w) = bracket(times, t);
                let at = |k: usize, node: usize| {
                    let row = &values[k];
                    if row.len() == 1 {
                        row[0]
                    } else {
                        row[node]
                    }
                };
                let vals = (0..grid.len())
                    .map(|node| {
                        if w == T::zero() {
                            at(i, node)
                        } else {
                            (T::one() - w) * at(i, node) + w * at(i + 1, node)
                        }
                    })
                    .collect();
                Field::from_values(grid, vals)
            }
            SourceSpec::Constant { value } => Ok(Field::constant(grid, *value)),
            _ => Ok(Field::from_fn(grid, |x| self.eval(x, t))),
        }
    }

    /// The exact `(u, v)` pair carried by a manufactured source.
    pub fn exact_pair(&self) -> Option<(&[SineMode<T>], &[SineMode<T>])> {
        match self {
            SourceSpec::Manufactured { u_exact, v_exact, .. } => Some((u_exact, v_exact)),
            _ => None,
        }
    }
}

/// Sum of sine modes sampled on a grid.
pub fn modes_field<T: Scalar>(modes: &[SineMode<T>], grid: &Grid<T>, t: T) -> Field<T> {
    Field::from_fn(grid, |x| modes.iter().fold(T::zero(), |acc, m| acc + m.eval(x, t)))
}

/// Index `i` and weight `w` such that `t ~ (1 - w) times[i] + w times[i + 1]`.
fn bracket<T: Scalar>(times: &[T], t: T) -> (usize, T) {
    let last = times.len() - 1;
    if t <= times[0] {
        return (0, T::zero());
    }
    if t >= times[last] {
        return (last, T::zero());
    }
    let i = times.partition_point(|&s| s <= t) - 1;
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    (i, w.max(T::zero()).min(T::one()))
}

/// Whether every grid corner coordinate is an integer, so that sine modes
/// vanish on the boundary.
pub fn has_integer_corners<T: Scalar>(grid: &Grid<T>) -> bool {
    (0..grid.dim()).all(|a| {
        let (lo, hi) = grid.extent(a);
        lo == lo.round() && hi == hi.round()
    })
}

/// Central difference helper for tests of time derivatives.
pub fn central_difference<T: Scalar>(f: impl Fn(T) -> T, t: T, h: T) -> T {
    (f(t + h) - f(t - h)) / (lit::<T>(2.0) * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_function_derivatives_match_finite_differences() {
        let f = TimeFunction(vec![
            TimeTerm::Power { coeff: 2.0, power: 3 },
            TimeTerm::Exp { coeff: -1.5, rate: -0.7 },
            TimeTerm::Sin { coeff: 0.3, omega: 5.0 },
            TimeTerm::Cos { coeff: 1.1, omega: 2.0 },
            TimeTerm::Power { coeff: 4.0, power: 0 },
        ]);
        let d = f.derivative();
        for t in [0.0f64, 0.3, 1.7] {
            let fd = central_difference(|s| f.eval(s), t, 1e-5);
            assert!((d.eval(t) - fd).abs() < 1e-7, "t={t}");
        }
        assert_eq!(TimeFunction::constant(3.0).derivative().eval(1.0), 0.0);
    }

    #[test]
    fn sine_mode_eigenvalue() {
        let m = SineMode::new(vec![1, 2, 1], TimeFunction::constant(1.0));
        let g = Grid::<f64>::unit(3, 64).unwrap();
        let field = modes_field(std::slice::from_ref(&m), &g, 0.0);
        let lap = crate::operator::assemble_operator(&g).apply_field(&field).unwrap();
        let lambda = m.laplace_eigenvalue();
        assert!((lambda - 6.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        // sine modes are exact eigenvectors of the discrete operator too
        let h = g.spacing(0);
        let discrete: f64 = m
            .wavenumbers
            .iter()
            .map(|&k| 4.0 / (h * h) * (k as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2))
            .sum();
        for i in (0..g.len()).step_by(997) {
            if field[i].abs() > 1e-3 {
                assert!((lap[i] / field[i] - discrete).abs() < 1e-8 * discrete);
            }
        }
        assert!((discrete - lambda).abs() / lambda < 1e-3);
    }

    #[test]
    fn tabulated_interpolation() {
        let g = Grid::<f64>::unit(1, 3).unwrap();
        let src = SourceSpec::Tabulated {
            times: vec![0.0, 1.0, 3.0],
            values: vec![vec![0.0], vec![2.0, 4.0], vec![6.0]],
        };
        assert!(src.validate().is_empty());
        let f = src.eval_field(&g, 0.5).unwrap();
        assert_eq!(f.values(), &[1.0, 2.0]);
        let f = src.eval_field(&g, 2.0).unwrap();
        assert_eq!(f.values(), &[4.0, 5.0]);
        let f = src.eval_field(&g, 10.0).unwrap();
        assert_eq!(f.values(), &[6.0, 6.0]);

        let bad = SourceSpec::Tabulated {
            times: vec![0.0, 0.0],
            values: vec![vec![1.0]],
        };
        assert_eq!(bad.validate().len(), 2);
        let wrong_len = SourceSpec::Tabulated {
            times: vec![0.0],
            values: vec![vec![1.0, 2.0, 3.0]],
        };
        assert!(wrong_len.eval_field(&g, 0.0).is_err());
    }

    #[test]
    fn polynomial_and_constant() {
        let p = SourceSpec::PolynomialTime { coefficients: vec![1.0, 0.0, 2.0] };
        assert_eq!(p.eval(&[0.5], 3.0), 19.0);
        assert_eq!(SourceSpec::Constant { value: -1.0 }.eval(&[0.1, 0.2], 9.0), -1.0);
    }

    #[test]
    fn nonpositive_modes_are_nonpositive() {
        let src = SourceSpec::NonPositiveModes {
            modes: vec![
                TrigMode { amplitude: 1.3, wave: vec![2.0, 3.0], phase: vec![0.1, 0.5], omega: 4.0, time_phase: 0.2 },
                TrigMode { amplitude: 0.4, wave: vec![7.0, 1.0], phase: vec![1.0, 0.0], omega: 0.0, time_phase: 0.0 },
            ],
        };
        let g = Grid::<f64>::unit(2, 12).unwrap();
        for t in [0.0, 0.4, 1.0] {
            assert!(src.eval_field(&g, t).unwrap().max() <= 0.0);
        }
        assert!(src.eval_field(&Grid::unit(3, 4).unwrap(), 0.0).is_err());
    }

    #[test]
    fn json_shape() {
        let src: SourceSpec<f64> = serde_json::from_str(
            r#"{"kind":"separable-sine","modes":[{"wavenumbers":[1,1,1],"time":[{"kind":"power","coeff":1.0,"power":1}]}]}"#,
        )
        .unwrap();
        assert_eq!(src.eval(&[0.5, 0.5, 0.5], 2.0), 2.0);
        let err = serde_json::from_str::<SourceSpec<f64>>(r#"{"kind":"constant","valeu":1}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }
}
