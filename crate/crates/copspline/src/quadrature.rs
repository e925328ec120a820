//! Composite tensor Gauss-Legendre quadrature on `[0,1]^d`.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre polynomial (standard Golub-Welsch-free construction; fine for the
/// small orders used here).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P_n'(x) by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(n);
    (
        nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights.iter().map(|w| 0.5 * w).collect(),
    )
}

/// Per-cell Gauss-Legendre rule for tensor integration over `[0,1]^d`.
///
/// Each axis is split into equal cells with `nodes_per_cell` Gauss points per
/// cell; nodes are strictly interior, so integrands with boundary
/// singularities are never evaluated at 0 or 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes_per_cell: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(nodes_per_cell: usize) -> Self {
        let (nodes, weights) = gauss_legendre_01(nodes_per_cell);
        Self {
            nodes_per_cell,
            nodes,
            weights,
        }
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.nodes_per_cell
    }

    /// Composite nodes and weights on `[0,1]` split into `cells` cells.
    pub fn axis_points(&self, cells: usize) -> Vec<(f64, f64)> {
        let h = 1.0 / cells as f64;
        let mut pts = Vec::with_capacity(cells * self.nodes_per_cell);
        for cell in 0..cells {
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                pts.push((cell as f64 * h + x * h, w * h));
            }
        }
        pts
    }

    /// Integrate `f` over `[0,1]^d` with `cells_per_axis[i]` cells on axis `i`.
    pub fn integrate<F>(&self, cells_per_axis: &[usize], mut f: F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let d = cells_per_axis.len();
        let axes: Vec<Vec<(f64, f64)>> =
            cells_per_axis.iter().map(|&c| self.axis_points(c)).collect();
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for axis in 0..d {
                let (x, wx) = axes[axis][idx[axis]];
                point[axis] = x;
                w *= wx;
            }
            let v = f(&point)?;
            if !v.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite integrand value at {point:?}"
                )));
            }
            total += w * v;
            // advance the multi-index, axis 0 fastest
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < axes[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == d {
                    return Ok(total);
                }
            }
        }
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::new(5)
    }
}
