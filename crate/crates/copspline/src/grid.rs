use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equally spaced knot grid on `[0,1]^d`.
///
/// Dimension `i` has `m_i` cells of width `h_i = 1/m_i` and `m_i + 1` knots
/// `{0, h_i, 2 h_i, ..., 1}`. The tensor basis carries one hat function per
/// knot, so the total basis count is `k = prod_i (m_i + 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnotGrid {
    cells: Vec<usize>,
}

impl KnotGrid {
    /// Build a grid from per-dimension cell counts `m_i = 1/h_i`.
    pub fn new(cells: Vec<usize>) -> Result<Self> {
        if cells.len() < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 dimensions, got {}",
                cells.len()
            )));
        }
        if cells.contains(&0) {
            return Err(Error::Config("every dimension needs at least 1 cell".into()));
        }
        Ok(Self { cells })
    }

    pub fn dims(&self) -> usize {
        self.cells.len()
    }

    /// Cell counts `m_i` per dimension.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Knot spacing `h_i = 1/m_i`.
    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.cells[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.cells.iter().map(|&m| 1.0 / m as f64).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        1.0 / *self.cells.iter().max().expect("nonempty") as f64
    }

    /// Knots (basis functions) along `axis`: `m_i + 1`.
    pub fn knots(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    /// Total number of tensor basis functions `k = prod (m_i + 1)`.
    pub fn basis_count(&self) -> usize {
        self.cells.iter().map(|&m| m + 1).product()
    }

    /// Objective weight `beta = 1 / prod h_i = prod m_i`.
    pub fn beta(&self) -> f64 {
        self.cells.iter().map(|&m| m as f64).product()
    }

    /// Flatten a multi-index `(j_1, ..., j_d)` with `0 <= j_i <= m_i`.
    ///
    /// Dimension 1 varies fastest: `t = j_1 + (m_1+1)(j_2 + (m_2+1)(j_3 + ...))`.
    /// Flat indices are 0-based.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dims());
        let mut t = 0;
        for axis in (0..self.dims()).rev() {
            debug_assert!(multi[axis] <= self.cells[axis]);
            t = t * (self.cells[axis] + 1) + multi[axis];
        }
        t
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn multi_index(&self, mut t: usize) -> Vec<usize> {
        debug_assert!(t < self.basis_count());
        let mut multi = Vec::with_capacity(self.dims());
        for &m in &self.cells {
            multi.push(t % (m + 1));
            t /= m + 1;
        }
        multi
    }

    /// Knot index along one axis of a flat basis index, without materializing
    /// the full multi-index.
    pub fn axis_index(&self, t: usize, axis: usize) -> usize {
        let mut rest = t;
        for &m in &self.cells[..axis] {
            rest /= m + 1;
        }
        rest % (self.cells[axis] + 1)
    }
}
