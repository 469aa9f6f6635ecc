//! Matrix-free discrete operators and the conjugate-gradient solver.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Scalar;

/// Square linear map on interior unknowns.
pub trait LinearOperator<T: Scalar>: Sync {
    fn len(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[T], y: &mut [T]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `shift I - Delta_h` with the standard `(2 dim + 1)`-point stencil and
/// homogeneous Dirichlet data eliminated. Symmetric positive definite for
/// every `shift >= 0`.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian<T> {
    grid: Grid<T>,
    shift: T,
    inv_h2: Vec<T>,
}

impl<T: Scalar> ShiftedLaplacian<T> {
    pub fn new(grid: &Grid<T>, shift: T) -> Self {
        let inv_h2 = (0..grid.dim()).map(|a| grid.spacing(a).powi(-2)).collect();
        ShiftedLaplacian {
            grid: grid.clone(),
            shift,
            inv_h2,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn shift(&self) -> T {
        self.shift
    }

    /// Diagonal entry, identical on every row.
    pub fn diagonal(&self) -> T {
        let two = T::one() + T::one();
        self.shift + self.inv_h2.iter().fold(T::zero(), |acc, &c| acc + two * c)
    }

    pub fn apply_field(&self, x: &Field<T>) -> Result<Field<T>> {
        if x.grid() != &self.grid {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.len()];
        self.apply(x.values(), &mut y);
        Field::from_values(&self.grid, y)
    }
}

/// The `-Delta_h` operator on `grid`.
pub fn assemble_operator<T: Scalar>(grid: &Grid<T>) -> ShiftedLaplacian<T> {
    ShiftedLaplacian::new(grid, T::zero())
}

impl<T: Scalar> LinearOperator<T> for ShiftedLaplacian<T> {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let m = self.grid.points_per_axis();
        let dim = self.grid.dim();
        let diag = self.diagonal();
        let strides: Vec<usize> = (0..dim).map(|a| self.grid.stride(a)).collect();
        // Rows along the last axis are contiguous; each worker owns whole rows.
        y.par_chunks_mut(m).enumerate().for_each(|(row, out)| {
            let base = row * m;
            // coordinates of the row along all but the last axis
            let mut rest = row;
            let mut coord = vec![0usize; dim];
            for axis in (0..dim.saturating_sub(1)).rev() {
                coord[axis] = rest % m;
                rest /= m;
            }
            for (j, yj) in out.iter_mut().enumerate() {
                let i = base + j;
                let mut acc = diag * x[i];
                for axis in 0..dim {
                    let c = if axis == dim - 1 { j } else { coord[axis] };
                    let s = strides[axis];
                    let mut nb = T::zero();
                    if c > 0 {
                        nb += x[i - s];
                    }
                    if c + 1 < m {
                        nb += x[i + s];
                    }
                    acc -= self.inv_h2[axis] * nb;
                }
                *yj = acc;
            }
        });
    }
}

/// Identity map, used in tests and as a trivial operator.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl<T: Scalar> LinearOperator<T> for Identity {
    fn len(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||` (zero for a zero right-hand side).
    pub relative_residual: T,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Conjugate gradients for symmetric positive definite `op`, starting from
/// `x` (used as the initial guess and overwritten with the solution).
///
/// Reductions run sequentially in index order so results are reproducible
/// regardless of the thread count.
pub fn conjugate_gradient<T: Scalar, A: LinearOperator<T>>(
    op: &A,
    rhs: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<SolveStats<T>> {
    let n = op.len();
    if rhs.len() != n || x.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: rhs.len().min(x.len()),
        });
    }
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let mut ap = vec![T::zero(); n];
    op.apply(x, &mut ap);
    let mut r: Vec<T> = rhs.iter().zip(&ap).map(|(&b, &a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * b_norm;
    let mut iterations = 0;
    while rr.sqrt() > target {
        if iterations == max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual: (rr.sqrt() / b_norm).as_f64(),
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::InvalidInput(
                "operator is not positive definite along a search direction".into(),
            ));
        }
        let step = rr / pap;
        for ((xi, ri), (&pi, &api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += step * pi;
            *ri -= step * api;
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
        iterations += 1;
    }
    Ok(SolveStats {
        iterations,
        relative_residual: rr.sqrt() / b_norm,
    })
}

/// Solves `op x = rhs` from a zero initial guess.
pub fn solve_linear<T: Scalar>(
    op: &ShiftedLaplacian<T>,
    rhs: &Field<T>,
    tol: T,
    max_iter: usize,
) -> Result<(Field<T>, SolveStats<T>)> {
    let mut x = vec![T::zero(); op.len()];
    let stats = conjugate_gradient(op, rhs.values(), &mut x, tol, max_iter)?;
    Ok((Field::from_values(op.grid(), x)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn second_difference_is_exact_on_quadratics() {
        let g = Grid::<f64>::unit(1, 16).unwrap();
        let u = Field::from_fn(&g, |x| x[0] * (1.0 - x[0]));
        let lap = assemble_operator(&g).apply_field(&u).unwrap();
        for &v in lap.values() {
            assert!((v - 2.0).abs() < 1e-11, "{v}");
        }
    }

    #[test]
    fn constant_field_on_small_cube() {
        // 3 cells per axis: 2^3 interior nodes, every node touches three
        // boundary faces, so each row sees 6 - 3 interior neighbours.
        let g = Grid::<f64>::unit(3, 3).unwrap();
        let out = assemble_operator(&g).apply_field(&Field::constant(&g, 1.0)).unwrap();
        let h2 = 9.0;
        for &v in out.values() {
            assert!((v - 3.0 * h2).abs() < 1e-12);
        }
        // 4 cells per axis: centre node has all 6 neighbours inside
        let g = Grid::<f64>::unit(3, 4).unwrap();
        let out = assemble_operator(&g).apply_field(&Field::constant(&g, 1.0)).unwrap();
        let h2 = 16.0;
        for flat in 0..g.len() {
            let idx = g.multi_index(flat);
            let interior_neighbours: usize = idx
                .iter()
                .map(|&c| usize::from(c > 0) + usize::from(c < 2))
                .sum();
            let expected = (6.0 - interior_neighbours as f64) * h2;
            assert!((out[flat] - expected).abs() < 1e-12, "node {idx:?}");
        }
    }

    #[test]
    fn stencil_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (dim, cells) in [(1, 20), (2, 9), (3, 6), (4, 4)] {
            let g = Grid::<f64>::unit(dim, cells).unwrap();
            let op = ShiftedLaplacian::new(&g, 0.3);
            let x = Field::from_fn(&g, |_| rng.gen_range(-1.0..1.0));
            let y = Field::from_fn(&g, |_| rng.gen_range(-1.0..1.0));
            let axy = op.apply_field(&x).unwrap().dot(&y).unwrap();
            let xay = x.dot(&op.apply_field(&y).unwrap()).unwrap();
            assert!((axy - xay).abs() <= 1e-12 * axy.abs().max(1.0));
        }
    }

    #[test]
    fn identity_solve() {
        let b = vec![1.0, -2.0, 3.5];
        let mut x = vec![0.0; 3];
        let stats = conjugate_gradient(&Identity(3), &b, &mut x, 1e-12, 10).unwrap();
        assert_eq!(x, b);
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn one_dimensional_poisson_recovers_parabola() {
        let g = Grid::<f64>::unit(1, 32).unwrap();
        let (u, _) = solve_linear(&assemble_operator(&g), &Field::constant(&g, 2.0), 1e-14, 1000).unwrap();
        for i in 0..g.len() {
            let x = g.coords(i)[0];
            assert!((u[i] - x * (1.0 - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_contract_on_large_cube() {
        let g = Grid::<f64>::unit(3, 32).unwrap();
        let op = assemble_operator(&g);
        let rhs = Field::from_fn(&g, |x| (x[0] * 7.0).sin() + x[1] * x[2]);
        let (u, stats) = solve_linear(&op, &rhs, 1e-10, 2000).unwrap();
        let au = op.apply_field(&u).unwrap();
        let r = au.zip_map(&rhs, |a, b| b - a).unwrap();
        let rel = (r.sum_squares() / rhs.sum_squares()).sqrt();
        assert!(rel <= 1e-10, "{rel}");
        assert!(stats.relative_residual <= 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        let g = Grid::<f64>::unit(2, 16).unwrap();
        let rhs = Field::constant(&g, 1.0);
        match solve_linear(&assemble_operator(&g), &rhs, 1e-12, 3) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = Grid::<f32>::unit(2, 8).unwrap();
        let (u, stats) = solve_linear(&assemble_operator(&g), &Field::zeros(&g), 1e-6, 10).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn single_precision_cg() {
        let g = Grid::<f32>::unit(2, 16).unwrap();
        let op = ShiftedLaplacian::new(&g, 1.0f32);
        let (u, _) = solve_linear(&op, &Field::constant(&g, 1.0), 1e-5, 500).unwrap();
        assert!(u.min() > 0.0);
    }
}
