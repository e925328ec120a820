//! Tensor-product linear B-spline ("hat function") basis on an equally
//! spaced knot grid over `[0,1]^d`, with closed-form integral algebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::KnotGrid;

/// 1D hat function centered at knot `j*h` (`h = 1/m`), evaluated at `x`.
///
/// Piecewise linear, 1 at its own knot, 0 at the adjacent knots, supported on
/// the two neighboring cells. The hat at knot `m` takes the value 1 at `x = 1`.
pub fn eval_hat_1d(knot_index: usize, x: f64, m: usize) -> Result<f64> {
    if knot_index > m {
        return Err(Error::Domain(format!(
            "knot index {knot_index} out of range 0..={m}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0,1]")));
    }
    let h = 1.0 / m as f64;
    let dist = (x - knot_index as f64 * h).abs();
    Ok((1.0 - dist / h).max(0.0))
}

/// Exact 1D Gram matrix `int_0^1 phi_i phi_j dx` for hats on `m` cells.
///
/// Tridiagonal: diagonal `h/3` at the two boundary knots, `2h/3` at interior
/// knots, off-diagonal `h/6`.
pub fn gram_1d(m: usize) -> DMatrix<f64> {
    let h = 1.0 / m as f64;
    let n = m + 1;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = if i == 0 || i == m { h / 3.0 } else { 2.0 * h / 3.0 };
        if i + 1 < n {
            g[(i, i + 1)] = h / 6.0;
            g[(i + 1, i)] = h / 6.0;
        }
    }
    g
}

/// Exact 1D integrals `int_0^1 phi_j dx`: `h/2` at the boundary knots,
/// `h` at interior knots.
pub fn integral_1d(m: usize) -> DVector<f64> {
    let h = 1.0 / m as f64;
    DVector::from_fn(m + 1, |j, _| if j == 0 || j == m { h / 2.0 } else { h })
}

/// Tensor-product hat basis `B_t(u) = prod_j phi_{t_j}(u_j)` over a
/// [`KnotGrid`], with cached 1D Gram matrices and integral weights.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    grid: KnotGrid,
    gram1: Vec<DMatrix<f64>>,
    integ1: Vec<DVector<f64>>,
}

impl TensorBasis {
    pub fn new(grid: KnotGrid) -> Self {
        let gram1 = grid.cells().iter().map(|&m| gram_1d(m)).collect();
        let integ1 = grid.cells().iter().map(|&m| integral_1d(m)).collect();
        Self { grid, gram1, integ1 }
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    /// Number of basis functions `k`.
    pub fn len(&self) -> usize {
        self.grid.basis_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cached 1D Gram factor for `axis`.
    pub fn gram_factor(&self, axis: usize) -> &DMatrix<f64> {
        &self.gram1[axis]
    }

    /// Cached 1D integral weights for `axis`.
    pub fn integral_weights(&self, axis: usize) -> &DVector<f64> {
        &self.integ1[axis]
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid.dims() {
            return Err(Error::Dimension {
                expected: self.grid.dims(),
                got: u.len(),
            });
        }
        for &x in u {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("coordinate {x} outside [0,1]")));
            }
        }
        Ok(())
    }

    /// Evaluate one basis function `B_t(u)`.
    pub fn eval_basis(&self, t: usize, u: &[f64]) -> Result<f64> {
        if t >= self.len() {
            return Err(Error::Domain(format!("basis index {t} out of range")));
        }
        self.check_point(u)?;
        let mut value = 1.0;
        for (axis, &x) in u.iter().enumerate() {
            let j = self.grid.axis_index(t, axis);
            value *= eval_hat_1d(j, x, self.grid.cells()[axis])?;
            if value == 0.0 {
                break;
            }
        }
        Ok(value)
    }

    /// Locate the cell containing `x` along `axis` and the weight of the
    /// right-hand knot; `x = 1` belongs to the last cell.
    fn locate(&self, axis: usize, x: f64) -> (usize, f64) {
        let m = self.grid.cells()[axis];
        let scaled = x * m as f64;
        let cell = (scaled as usize).min(m - 1);
        (cell, scaled - cell as f64)
    }

    /// Evaluate `sum_t alpha_t B_t(u)` using only the `2^d` corners of the
    /// cell containing `u`.
    pub fn eval_expansion(&self, alpha: &[f64], u: &[f64]) -> Result<f64> {
        if alpha.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: alpha.len(),
            });
        }
        self.check_point(u)?;
        let d = self.grid.dims();
        let mut cells = Vec::with_capacity(d);
        let mut fracs = Vec::with_capacity(d);
        for (axis, &x) in u.iter().enumerate() {
            let (cell, frac) = self.locate(axis, x);
            cells.push(cell);
            fracs.push(frac);
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut multi = Vec::with_capacity(d);
            for axis in 0..d {
                let right = (corner >> axis) & 1 == 1;
                weight *= if right { fracs[axis] } else { 1.0 - fracs[axis] };
                multi.push(cells[axis] + right as usize);
            }
            if weight != 0.0 {
                total += weight * alpha[self.grid.flat_index(&multi)];
            }
        }
        Ok(total)
    }

    /// Dense Gram matrix `P[s][t] = int B_s B_t du`, the Kronecker product of
    /// the 1D Gram factors under the flat-index ordering.
    pub fn gram_tensor(&self) -> DMatrix<f64> {
        let k = self.len();
        let d = self.grid.dims();
        DMatrix::from_fn(k, k, |s, t| {
            let mut entry = 1.0;
            for axis in 0..d {
                entry *= self.gram1[axis][(
                    self.grid.axis_index(s, axis),
                    self.grid.axis_index(t, axis),
                )];
            }
            entry
        })
    }

    /// Integral `int B_t du`, a product of 1D integral weights.
    pub fn basis_integral(&self, t: usize) -> f64 {
        (0..self.grid.dims())
            .map(|axis| self.integ1[axis][self.grid.axis_index(t, axis)])
            .product()
    }

    /// Product of 1D integral weights over all axes except those in `skip`.
    pub fn weight_product_except(&self, t: usize, skip: &[usize]) -> f64 {
        (0..self.grid.dims())
            .filter(|axis| !skip.contains(axis))
            .map(|axis| self.integ1[axis][self.grid.axis_index(t, axis)])
            .product()
    }

    /// Coefficients of the 1D marginal of `alpha^T B` along `axis`:
    /// integrating out every other coordinate leaves a linear spline
    /// `sum_j beta_j phi_j(u_axis)` with
    /// `beta_j = sum_{t: t_axis = j} alpha_t * prod_{s != axis} w_{t,s}`.
    pub fn marginal_1d_coeffs(&self, alpha: &[f64], axis: usize) -> Result<DVector<f64>> {
        if axis >= self.grid.dims() {
            return Err(Error::Domain(format!("axis {axis} out of range")));
        }
        if alpha.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: alpha.len(),
            });
        }
        let mut beta = DVector::zeros(self.grid.knots(axis));
        for (t, &a) in alpha.iter().enumerate() {
            beta[self.grid.axis_index(t, axis)] += a * self.weight_product_except(t, &[axis]);
        }
        Ok(beta)
    }

    /// Coefficient matrix of the bivariate marginal of `alpha^T B` on axes
    /// `(i, j)`, `i < j`: a 2D tensor linear spline with
    /// `gamma[a][b] = sum_{t: t_i=a, t_j=b} alpha_t * prod_{s not in {i,j}} w_{t,s}`.
    ///
    /// For `d = 2` this is just `alpha` reshaped.
    pub fn bivariate_marginal_coeffs(
        &self,
        alpha: &[f64],
        axes: (usize, usize),
    ) -> Result<DMatrix<f64>> {
        let (i, j) = axes;
        if i >= j || j >= self.grid.dims() {
            return Err(Error::Domain(format!("invalid axis pair ({i}, {j})")));
        }
        if alpha.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: alpha.len(),
            });
        }
        let mut gamma = DMatrix::zeros(self.grid.knots(i), self.grid.knots(j));
        for (t, &a) in alpha.iter().enumerate() {
            let w = self.weight_product_except(t, &[i, j]);
            gamma[(self.grid.axis_index(t, i), self.grid.axis_index(t, j))] += a * w;
        }
        Ok(gamma)
    }
}
