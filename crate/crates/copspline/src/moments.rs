//! Pseudo-observations via empirical CDFs and the basis moment estimates.

use nalgebra::DVector;

use crate::basis::TensorBasis;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Raw observations, `n` rows by `d` columns, stored row-major.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl SampleMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "sample matrix shape {rows}x{cols} does not match {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sample matrix contains non-finite values".into()));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Samples mapped through their column empirical CDFs; values lie in `(0, 1]`
/// on the grid `{1/n, ..., 1}`.
#[derive(Debug, Clone)]
pub struct PseudoObservations {
    data: SampleMatrix,
}

impl PseudoObservations {
    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn as_samples(&self) -> &SampleMatrix {
        &self.data
    }
}

/// Empirical CDF of `column` at `x`: `(1/n) * #{i : X_i <= x}`.
pub fn ecdf_column(column: &[f64], x: f64) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::Domain("empty column in ecdf".into()));
    }
    let count = column.iter().filter(|&&v| v <= x).count();
    Ok(count as f64 / column.len() as f64)
}

/// Apply each column's empirical CDF to its own entries.
///
/// Ties share the indicator-sum value (the maximal rank), per the ecdf
/// definition; with no ties each column is a permutation of `{1/n, ..., 1}`.
pub fn pseudo_observations(data: &SampleMatrix) -> PseudoObservations {
    let n = data.nrows();
    let d = data.ncols();
    let mut out = vec![0.0; n * d];
    for j in 0..d {
        let mut sorted = data.column(j);
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        for i in 0..n {
            let x = data.row(i)[j];
            // #{v : v <= x} via binary search on the sorted column
            let count = sorted.partition_point(|&v| v <= x);
            out[i * d + j] = count as f64 / n as f64;
        }
    }
    PseudoObservations {
        data: SampleMatrix::new(out, n, d).expect("pseudo-observations are finite"),
    }
}

/// Role tag for a moment vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// Sample average of basis values at pseudo-observations.
    Empirical,
    /// Integrals of a known density against the basis.
    Population,
}

/// Moments of a copula density against the tensor basis, length `k`.
#[derive(Debug, Clone)]
pub struct MomentVector {
    pub values: DVector<f64>,
    pub kind: MomentKind,
}

/// Moment estimates `M_hat_t = (1/n) sum_i B_t(pseudo row i)`.
///
/// The entries sum to 1 by partition of unity.
pub fn moment_vector(pseudo: &PseudoObservations, basis: &TensorBasis) -> Result<MomentVector> {
    if pseudo.ncols() != basis.grid().dims() {
        return Err(Error::Dimension {
            expected: basis.grid().dims(),
            got: pseudo.ncols(),
        });
    }
    let n = pseudo.nrows();
    let mut values = DVector::zeros(basis.len());
    // accumulate per row through the 2^d active corners, fixed row order
    let grid = basis.grid();
    let d = grid.dims();
    for i in 0..n {
        let u = pseudo.row(i);
        let mut cells = Vec::with_capacity(d);
        let mut fracs = Vec::with_capacity(d);
        for (axis, &x) in u.iter().enumerate() {
            let m = grid.cells()[axis];
            let scaled = x * m as f64;
            let cell = (scaled as usize).min(m - 1);
            cells.push(cell);
            fracs.push(scaled - cell as f64);
        }
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut multi = Vec::with_capacity(d);
            for axis in 0..d {
                let right = (corner >> axis) & 1 == 1;
                weight *= if right { fracs[axis] } else { 1.0 - fracs[axis] };
                multi.push(cells[axis] + right as usize);
            }
            if weight != 0.0 {
                values[grid.flat_index(&multi)] += weight;
            }
        }
    }
    values /= n as f64;
    Ok(MomentVector {
        values,
        kind: MomentKind::Empirical,
    })
}

/// Population moments `M_t = int c(u) B_t(u) du` by per-cell tensor
/// Gauss-Legendre quadrature on the basis's own knot cells.
pub fn population_moments<F>(
    density: F,
    basis: &TensorBasis,
    rule: &QuadratureRule,
) -> Result<MomentVector>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let k = basis.len();
    let mut values = DVector::zeros(k);
    for t in 0..k {
        values[t] = rule.integrate(basis.grid().cells(), |u| {
            Ok(density(u)? * basis.eval_basis(t, u)?)
        })?;
    }
    Ok(MomentVector {
        values,
        kind: MomentKind::Population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::integral_1d;
    use crate::copulas::{sample, Copula, Fgm};
    use crate::grid::KnotGrid;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ecdf_values() {
        let col = [3.0, 1.0, 2.0];
        assert_abs_diff_eq!(ecdf_column(&col, 2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(ecdf_column(&col, 0.5).unwrap(), 0.0);
        assert_eq!(ecdf_column(&col, 3.0).unwrap(), 1.0);
        assert!(ecdf_column(&[], 0.0).is_err());
    }

    #[test]
    fn pseudo_obs_ranks() {
        let data = SampleMatrix::new(vec![10.0, 20.0, 30.0], 3, 1).unwrap();
        let p = pseudo_observations(&data);
        assert_abs_diff_eq!(p.row(0)[0], 1.0 / 3.0);
        assert_abs_diff_eq!(p.row(1)[0], 2.0 / 3.0);
        assert_abs_diff_eq!(p.row(2)[0], 1.0);

        // n = 1 gives all entries 1
        let data = SampleMatrix::new(vec![0.3, -5.0], 1, 2).unwrap();
        let p = pseudo_observations(&data);
        assert_eq!(p.row(0), &[1.0, 1.0]);

        // ties share the max rank
        let data = SampleMatrix::new(vec![5.0, 5.0], 2, 1).unwrap();
        let p = pseudo_observations(&data);
        assert_eq!(p.row(0)[0], 1.0);
        assert_eq!(p.row(1)[0], 1.0);
    }

    #[test]
    fn pseudo_obs_rank_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..40).map(|_| rng.gen::<f64>() * 10.0 - 5.0).collect();
        let data = SampleMatrix::new(raw.clone(), 20, 2).unwrap();
        // strictly increasing transform on column 0
        let transformed: Vec<f64> = raw
            .chunks(2)
            .flat_map(|row| [row[0].exp(), row[1]])
            .collect();
        let data2 = SampleMatrix::new(transformed, 20, 2).unwrap();
        let p1 = pseudo_observations(&data);
        let p2 = pseudo_observations(&data2);
        for i in 0..20 {
            assert_eq!(p1.row(i), p2.row(i));
        }
    }

    #[test]
    fn moment_vector_one_hot_and_sum() {
        let basis = TensorBasis::new(KnotGrid::new(vec![1, 1]).unwrap());
        let data = SampleMatrix::new(vec![0.4, 0.9], 1, 2).unwrap();
        let p = pseudo_observations(&data); // row = (1, 1)
        let m = moment_vector(&p, &basis).unwrap();
        let top = basis.grid().flat_index(&[1, 1]);
        for t in 0..basis.len() {
            assert_eq!(m.values[t], if t == top { 1.0 } else { 0.0 });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let data = SampleMatrix::new(raw, 100, 2).unwrap();
        let basis = TensorBasis::new(KnotGrid::new(vec![2, 2]).unwrap());
        let m = moment_vector(&pseudo_observations(&data), &basis).unwrap();
        assert_abs_diff_eq!(m.values.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn moment_vector_matches_brute_force() {
        let basis = TensorBasis::new(KnotGrid::new(vec![2, 3]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
        let data = SampleMatrix::new(raw, 30, 2).unwrap();
        let p = pseudo_observations(&data);
        let m = moment_vector(&p, &basis).unwrap();
        for t in 0..basis.len() {
            let brute: f64 = (0..30)
                .map(|i| basis.eval_basis(t, p.row(i)).unwrap())
                .sum::<f64>()
                / 30.0;
            assert_abs_diff_eq!(m.values[t], brute, epsilon = 1e-13);
        }
    }

    #[test]
    fn moments_approach_population_under_independence() {
        let basis = TensorBasis::new(KnotGrid::new(vec![2, 2]).unwrap());
        let model = crate::copulas::Independence::new(2);
        let n = 100_000;
        let data = sample(&model, n, 11).unwrap();
        let m = moment_vector(&pseudo_observations(&data), &basis).unwrap();
        let w0 = integral_1d(2);
        for t in 0..basis.len() {
            let pop = w0[basis.grid().axis_index(t, 0)] * w0[basis.grid().axis_index(t, 1)];
            // Var(B_t) <= E B_t = pop, so 3 standard errors is conservative
            let se = (pop / n as f64).sqrt();
            assert!(
                (m.values[t] - pop).abs() < 3.0 * se + 1e-3,
                "moment {t}: {} vs {pop}",
                m.values[t]
            );
        }
    }

    #[test]
    fn population_moments_constant_density() {
        let basis = TensorBasis::new(KnotGrid::new(vec![2, 2]).unwrap());
        let rule = QuadratureRule::new(5);
        let m = population_moments(|_| Ok(1.0), &basis, &rule).unwrap();
        let corner = basis.grid().flat_index(&[0, 0]);
        assert_abs_diff_eq!(m.values[corner], 1.0 / 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.values.sum(), 1.0, epsilon = 1e-12);
        for t in 0..basis.len() {
            assert_abs_diff_eq!(m.values[t], basis.basis_integral(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn population_moments_fgm_riemann_oracle() {
        let basis = TensorBasis::new(KnotGrid::new(vec![1, 1]).unwrap());
        let model = Fgm::new(1.0).unwrap();
        let rule = QuadratureRule::new(5);
        let m = population_moments(|u| model.density(u), &basis, &rule).unwrap();
        // midpoint Riemann oracle on a 1000x1000 grid
        let cells = 1000usize;
        for t in 0..4 {
            let mut oracle = 0.0;
            for a in 0..cells {
                for b in 0..cells {
                    let u = [
                        (a as f64 + 0.5) / cells as f64,
                        (b as f64 + 0.5) / cells as f64,
                    ];
                    oracle += model.density(&u).unwrap() * basis.eval_basis(t, &u).unwrap();
                }
            }
            oracle /= (cells * cells) as f64;
            assert_abs_diff_eq!(m.values[t], oracle, epsilon = 1e-6);
        }
    }
}
