//! Uniform box grids with homogeneous Dirichlet boundaries and scalar fields
//! stored on their interior nodes.
//!
//! Interior nodes are ordered lexicographically with the last axis fastest.
//! Boundary values are never stored; they are zero by construction.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    lower: Vec<T>,
    upper: Vec<T>,
    cells_per_axis: usize,
}

impl<T: Scalar> Grid<T> {
    /// Unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize, cells_per_axis: usize) -> Result<Self> {
        Self::new(vec![(T::zero(), T::one()); dim], cells_per_axis)
    }

    pub fn new(extent: Vec<(T, T)>, cells_per_axis: usize) -> Result<Self> {
        if extent.is_empty() {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        if cells_per_axis < 2 {
            return Err(Error::InvalidInput(format!(
                "cells_per_axis must be ≥ 2, got {cells_per_axis}"
            )));
        }
        for (axis, &(lo, hi)) in extent.iter().enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "axis {axis} has an empty extent [{lo}, {hi}]"
                )));
            }
        }
        Ok(Grid {
            dim: extent.len(),
            lower: extent.iter().map(|e| e.0).collect(),
            upper: extent.iter().map(|e| e.1).collect(),
            cells_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    /// Interior nodes along one axis.
    pub fn points_per_axis(&self) -> usize {
        self.cells_per_axis - 1
    }

    /// Total number of unknowns, `(cells_per_axis - 1)^dim`.
    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self, axis: usize) -> (T, T) {
        (self.lower[axis], self.upper[axis])
    }

    pub fn spacing(&self, axis: usize) -> T {
        (self.upper[axis] - self.lower[axis]) / T::from_usize_lossy(self.cells_per_axis)
    }

    /// Volume of one grid cell, the quadrature weight of each node.
    pub fn cell_volume(&self) -> T {
        (0..self.dim).map(|a| self.spacing(a)).fold(T::one(), |acc, h| acc * h)
    }

    /// Index stride of `axis` in the flattened interior ordering.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow((self.dim - 1 - axis) as u32)
    }

    /// Interior multi-index (each entry in `0..points_per_axis`) of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let m = self.points_per_axis();
        let mut idx = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % m;
            flat /= m;
        }
        idx
    }

    /// Physical coordinates of the interior node with flat index `flat`.
    pub fn coords(&self, flat: usize) -> Vec<T> {
        self.multi_index(flat)
            .into_iter()
            .enumerate()
            .map(|(axis, i)| self.lower[axis] + T::from_usize_lossy(i + 1) * self.spacing(axis))
            .collect()
    }

    /// Whether a point lies in the closed box.
    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim && x.iter().enumerate().all(|(a, &xi)| xi >= self.lower[a] && xi <= self.upper[a])
    }
}

/// Scalar values on the interior nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn constant(grid: &Grid<T>, value: T) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_grid(&self, other: &Field<T>) -> Result<()> {
        if self.grid != other.grid || self.values.len() != other.values.len() {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Result<Field<T>> {
        self.check_same_grid(other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&a| f(a)).collect(),
        }
    }

    /// Discrete `L^2(Omega)` norm with the cell volume as quadrature weight.
    pub fn l2_norm(&self) -> T {
        (self.sum_squares() * self.grid.cell_volume()).sqrt()
    }

    pub fn sum_squares(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// Weighted inner product, summed in index order.
    pub fn dot(&self, other: &Field<T>) -> Result<T> {
        self.check_same_grid(other)?;
        let s = self.values.iter().zip(&other.values).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        Ok(s * self.grid.cell_volume())
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Multilinear interpolation at `x`, with zero boundary values.
    pub fn interpolate(&self, x: &[T]) -> Result<T> {
        let g = &self.grid;
        if !g.contains(x) {
            return Err(Error::Domain(format!("point {x:?} lies outside the grid")));
        }
        let m = g.points_per_axis();
        let cells = g.cells_per_axis();
        // lower node index in full (boundary-inclusive) numbering and weight
        let mut base = Vec::with_capacity(g.dim);
        let mut frac = Vec::with_capacity(g.dim);
        for (axis, &xi) in x.iter().enumerate() {
            let t = (xi - g.lower[axis]) / g.spacing(axis);
            let mut i = t.floor().to_usize().unwrap_or(0);
            if i >= cells {
                i = cells - 1;
            }
            base.push(i);
            frac.push(t - T::from_usize_lossy(i));
        }
        let mut total = T::zero();
        for corner in 0..(1usize << g.dim) {
            let mut weight = T::one();
            let mut flat = 0usize;
            let mut on_boundary = false;
            for axis in 0..g.dim {
                let up = (corner >> axis) & 1 == 1;
                let node = base[axis] + usize::from(up);
                weight *= if up { frac[axis] } else { T::one() - frac[axis] };
                if node == 0 || node == cells {
                    on_boundary = true;
                } else {
                    flat = flat * m + (node - 1);
                }
            }
            if !on_boundary && weight != T::zero() {
                total += weight * self.values[flat];
            }
        }
        Ok(total)
    }
}

impl<T> Index<usize> for Field<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T> IndexMut<usize> for Field<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.values[i]
    }
}
