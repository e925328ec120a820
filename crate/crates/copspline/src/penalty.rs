//! The bivariate-marginal penalty as an explicit quadratic form in the
//! spline coefficients.
//!
//! For each pair of axes the penalty integrates the squared difference
//! between the known bivariate marginal density and the bivariate marginal
//! of the spline expansion. Expanding the square gives
//! `Pen(c, alpha) = alpha^T Q alpha - 2 q^T alpha + c0`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::basis::{eval_hat_1d, TensorBasis};
use crate::copulas::Copula;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Known bivariate marginal for one axis pair: either an analytic 2D copula
/// model or a uniform grid of density values with midpoint convention.
pub enum BivariateMarginalSpec {
    Analytic(Box<dyn Copula>),
    Grid(MarginalGrid),
}

/// `r x r` grid of density values on `(0,1)^2`, row-major; the value at
/// `(a, b)` covers the cell `[a/r, (a+1)/r) x [b/r, (b+1)/r)` and is read at
/// the cell midpoint.
pub struct MarginalGrid {
    resolution: usize,
    values: Vec<f64>,
}

impl MarginalGrid {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution == 0 || values.len() != resolution * resolution {
            return Err(Error::Validation(format!(
                "marginal grid needs {0}x{0} values, got {1}",
                resolution,
                values.len()
            )));
        }
        if values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Validation(
                "marginal grid values must be finite and nonnegative".into(),
            ));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if (mean - 1.0).abs() > 1e-2 {
            return Err(Error::Validation(format!(
                "marginal grid average {mean} is not a density normalization (expected 1 +- 0.01)"
            )));
        }
        Ok(Self { resolution, values })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.resolution + b]
    }

    /// Tabulate an analytic density at cell midpoints.
    pub fn from_density(model: &dyn Copula, resolution: usize) -> Result<Self> {
        let r = resolution;
        let mut values = Vec::with_capacity(r * r);
        for a in 0..r {
            for b in 0..r {
                let u = [(a as f64 + 0.5) / r as f64, (b as f64 + 0.5) / r as f64];
                values.push(model.density(&u)?);
            }
        }
        Self::new(r, values)
    }
}

/// How the pair sum in the penalty is counted. The default counts each
/// unordered pair `i < j` once; `Ordered` doubles every contribution for
/// sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairCounting {
    #[default]
    Unordered,
    Ordered,
}

/// One marginal spec per unordered axis pair `i < j` (0-based axes).
#[derive(Default)]
pub struct MarginalSet {
    specs: BTreeMap<(usize, usize), BivariateMarginalSpec>,
}

impl MarginalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: usize, j: usize, spec: BivariateMarginalSpec) -> Result<()> {
        if i >= j {
            return Err(Error::Config(format!("marginal pair needs i < j, got ({i}, {j})")));
        }
        self.specs.insert((i, j), spec);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&BivariateMarginalSpec> {
        self.specs.get(&(i, j))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.specs.keys().copied()
    }

    /// Derive every pair's marginal from one full model.
    pub fn from_model(model: &dyn Copula) -> Result<Self> {
        let mut set = Self::new();
        let d = model.dims();
        for i in 0..d {
            for j in (i + 1)..d {
                set.insert(i, j, BivariateMarginalSpec::Analytic(model.bivariate_marginal(i, j)?))?;
            }
        }
        Ok(set)
    }
}

/// The penalty as `alpha^T Q alpha - 2 q^T alpha + c0` with `Q` symmetric PSD.
#[derive(Debug, Clone)]
pub struct PenaltyForm {
    pub q_matrix: DMatrix<f64>,
    pub q_vector: DVector<f64>,
    pub constant: f64,
}

/// Assemble the penalty form for the basis from the known marginals.
///
/// The quadratic part is exact (closed-form 2D Gram algebra of the bivariate
/// marginal coefficients); the linear part integrates the known marginal
/// against each 2D hat by per-cell Gauss-Legendre quadrature (analytic specs)
/// or by midpoint Riemann sums at the grid's own resolution (grid specs).
pub fn assemble_penalty(
    basis: &TensorBasis,
    marginals: &MarginalSet,
    rule: &QuadratureRule,
    counting: PairCounting,
) -> Result<PenaltyForm> {
    let grid = basis.grid();
    let d = grid.dims();
    let k = basis.len();
    for i in 0..d {
        for j in (i + 1)..d {
            if marginals.get(i, j).is_none() {
                return Err(Error::Config(format!(
                    "no bivariate marginal supplied for axis pair ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let factor = match counting {
        PairCounting::Unordered => 1.0,
        PairCounting::Ordered => 2.0,
    };

    let mut q_matrix = DMatrix::zeros(k, k);
    let mut q_vector = DVector::zeros(k);
    let mut constant = 0.0;

    for (i, j) in marginals.pairs() {
        if j >= d {
            return Err(Error::Config(format!(
                "marginal pair ({}, {}) is outside the {d}-dimensional grid",
                i + 1,
                j + 1
            )));
        }
        let spec = marginals.get(i, j).expect("pair just iterated");
        let gi = basis.gram_factor(i);
        let gj = basis.gram_factor(j);

        // quadratic part: exact Gram algebra of the marginal coefficients
        let weights: Vec<f64> = (0..k).map(|t| basis.weight_product_except(t, &[i, j])).collect();
        for s in 0..k {
            let (si, sj) = (grid.axis_index(s, i), grid.axis_index(s, j));
            for t in 0..k {
                let (ti, tj) = (grid.axis_index(t, i), grid.axis_index(t, j));
                q_matrix[(s, t)] +=
                    factor * weights[s] * weights[t] * gi[(si, ti)] * gj[(sj, tj)];
            }
        }

        // linear part and constant
        let (cross, sq_mass) = match spec {
            BivariateMarginalSpec::Analytic(model) => {
                if model.dims() != 2 {
                    return Err(Error::Config("analytic marginal spec must be 2-dimensional".into()));
                }
                cross_moments_analytic(model.as_ref(), grid.cells()[i], grid.cells()[j], rule)?
            }
            BivariateMarginalSpec::Grid(g) => {
                cross_moments_grid(g, grid.cells()[i], grid.cells()[j])?
            }
        };
        for t in 0..k {
            q_vector[t] +=
                factor * weights[t] * cross[(grid.axis_index(t, i), grid.axis_index(t, j))];
        }
        constant += factor * sq_mass;
    }

    // numerical symmetry cleanup
    let q_matrix = (&q_matrix + q_matrix.transpose()) * 0.5;
    Ok(PenaltyForm {
        q_matrix,
        q_vector,
        constant,
    })
}

/// `cross[a][b] = int int Hc(u,v) phi_a(u) phi_b(v)` and `int int (Hc)^2`
/// for an analytic marginal, by composite Gauss-Legendre on the pair's cells.
fn cross_moments_analytic(
    model: &dyn Copula,
    mi: usize,
    mj: usize,
    rule: &QuadratureRule,
) -> Result<(DMatrix<f64>, f64)> {
    let mut cross = DMatrix::zeros(mi + 1, mj + 1);
    let mut sq_mass = 0.0;
    let pts_u = rule.axis_points(mi);
    let pts_v = rule.axis_points(mj);
    for &(u, wu) in &pts_u {
        for &(v, wv) in &pts_v {
            let c = model.density(&[u, v])?;
            let w = wu * wv;
            sq_mass += w * c * c;
            for a in hat_support(u, mi) {
                let pa = eval_hat_1d(a, u, mi)?;
                for b in hat_support(v, mj) {
                    cross[(a, b)] += w * c * pa * eval_hat_1d(b, v, mj)?;
                }
            }
        }
    }
    Ok((cross, sq_mass))
}

/// Same moments from a tabulated grid, midpoint Riemann at its own resolution.
fn cross_moments_grid(grid: &MarginalGrid, mi: usize, mj: usize) -> Result<(DMatrix<f64>, f64)> {
    let r = grid.resolution();
    let cell = 1.0 / (r * r) as f64;
    let mut cross = DMatrix::zeros(mi + 1, mj + 1);
    let mut sq_mass = 0.0;
    for ga in 0..r {
        let u = (ga as f64 + 0.5) / r as f64;
        for gb in 0..r {
            let v = (gb as f64 + 0.5) / r as f64;
            let c = grid.value(ga, gb);
            sq_mass += cell * c * c;
            for a in hat_support(u, mi) {
                let pa = eval_hat_1d(a, u, mi)?;
                for b in hat_support(v, mj) {
                    cross[(a, b)] += cell * c * pa * eval_hat_1d(b, v, mj)?;
                }
            }
        }
    }
    Ok((cross, sq_mass))
}

/// Knot indices of the (at most two) hats that are nonzero at `x`.
fn hat_support(x: f64, m: usize) -> impl Iterator<Item = usize> {
    let cell = ((x * m as f64) as usize).min(m - 1);
    cell..=(cell + 1)
}

/// Evaluate `alpha^T Q alpha - 2 q^T alpha + c0`, clamping tiny negative
/// round-off to zero.
pub fn eval_penalty(form: &PenaltyForm, alpha: &[f64]) -> Result<f64> {
    let k = form.q_vector.len();
    if alpha.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: alpha.len(),
        });
    }
    let a = DVector::from_column_slice(alpha);
    let value = a.dot(&(&form.q_matrix * &a)) - 2.0 * form.q_vector.dot(&a) + form.constant;
    Ok(if value > -1e-12 && value < 0.0 { 0.0 } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::{Fgm, Gaussian, Independence};
    use crate::grid::KnotGrid;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assemble_d2(model: Box<dyn Copula>, cells: Vec<usize>) -> (TensorBasis, PenaltyForm) {
        let basis = TensorBasis::new(KnotGrid::new(cells).unwrap());
        let mut set = MarginalSet::new();
        set.insert(0, 1, BivariateMarginalSpec::Analytic(model)).unwrap();
        let form =
            assemble_penalty(&basis, &set, &QuadratureRule::new(5), PairCounting::Unordered)
                .unwrap();
        (basis, form)
    }

    #[test]
    fn independence_all_ones_is_zero() {
        let (basis, form) = assemble_d2(Box::new(Independence::new(2)), vec![2, 2]);
        let ones = vec![1.0; basis.len()];
        let pen = eval_penalty(&form, &ones).unwrap();
        assert!(pen.abs() <= 1e-10, "penalty {pen}");
        // alpha = 0 returns the squared mass of the marginal
        let zero = vec![0.0; basis.len()];
        assert_abs_diff_eq!(eval_penalty(&form, &zero).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fgm_all_ones_closed_form() {
        // d=2: Pen is the squared L2 distance between c and alpha^T B;
        // for FGM theta=1 and the constant 1, that's (1/3)^2 = 1/9
        let (basis, form) = assemble_d2(Box::new(Fgm::new(1.0).unwrap()), vec![2, 2]);
        let ones = vec![1.0; basis.len()];
        assert_abs_diff_eq!(eval_penalty(&form, &ones).unwrap(), 1.0 / 9.0, epsilon = 1e-8);
    }

    /// Brute-force midpoint Riemann quadrature of the defining integral.
    fn riemann_penalty(basis: &TensorBasis, model: &dyn Copula, alpha: &[f64], cells: usize) -> f64 {
        let mut total = 0.0;
        for a in 0..cells {
            for b in 0..cells {
                let u = [
                    (a as f64 + 0.5) / cells as f64,
                    (b as f64 + 0.5) / cells as f64,
                ];
                let diff = model.density(&u).unwrap() - basis.eval_expansion(alpha, &u).unwrap();
                total += diff * diff;
            }
        }
        total / (cells * cells) as f64
    }

    #[test]
    fn quadratic_form_matches_riemann_oracle() {
        let model = Fgm::new(1.0).unwrap();
        let (basis, form) = assemble_d2(Box::new(model.clone()), vec![1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let alpha: Vec<f64> = (0..basis.len()).map(|_| rng.gen::<f64>() * 2.0).collect();
            let form_value = eval_penalty(&form, &alpha).unwrap();
            let oracle = riemann_penalty(&basis, &model, &alpha, 500);
            assert!(
                (form_value - oracle).abs() <= 1e-5 * oracle.max(1.0),
                "form {form_value} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn penalty_nonnegative_on_random_alpha() {
        let (basis, form) = assemble_d2(Box::new(Fgm::new(-0.7).unwrap()), vec![2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let alpha: Vec<f64> = (0..basis.len()).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            assert!(eval_penalty(&form, &alpha).unwrap() >= 0.0);
        }
    }

    #[test]
    fn three_dimensional_pairs() {
        let corr = nalgebra::DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.4, 0.1, 0.4, 1.0, 0.2, 0.1, 0.2, 1.0],
        );
        let model = Gaussian::new(corr).unwrap();
        let basis = TensorBasis::new(KnotGrid::new(vec![2, 2, 2]).unwrap());
        let set = MarginalSet::from_model(&model).unwrap();
        let form =
            assemble_penalty(&basis, &set, &QuadratureRule::new(5), PairCounting::Unordered)
                .unwrap();
        // independence coefficients pay a positive price against a correlated model
        let ones = vec![1.0; basis.len()];
        assert!(eval_penalty(&form, &ones).unwrap() > 1e-4);

        // missing pair is a configuration error
        let mut partial = MarginalSet::new();
        partial
            .insert(0, 1, BivariateMarginalSpec::Analytic(model.bivariate_marginal(0, 1).unwrap()))
            .unwrap();
        assert!(assemble_penalty(
            &basis,
            &partial,
            &QuadratureRule::new(5),
            PairCounting::Unordered
        )
        .is_err());
    }

    #[test]
    fn ordered_counting_doubles() {
        let (basis, unordered) = assemble_d2(Box::new(Fgm::new(0.5).unwrap()), vec![2, 2]);
        let mut set = MarginalSet::new();
        set.insert(0, 1, BivariateMarginalSpec::Analytic(Box::new(Fgm::new(0.5).unwrap())))
            .unwrap();
        let ordered =
            assemble_penalty(&basis, &set, &QuadratureRule::new(5), PairCounting::Ordered).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let alpha: Vec<f64> = (0..basis.len()).map(|_| rng.gen::<f64>()).collect();
        assert_abs_diff_eq!(
            eval_penalty(&ordered, &alpha).unwrap(),
            2.0 * eval_penalty(&unordered, &alpha).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_spec_matches_analytic() {
        let model = Fgm::new(1.0).unwrap();
        let basis = TensorBasis::new(KnotGrid::new(vec![2, 2]).unwrap());
        let grid = MarginalGrid::from_density(&model, 200).unwrap();
        let mut set = MarginalSet::new();
        set.insert(0, 1, BivariateMarginalSpec::Grid(grid)).unwrap();
        let form_grid =
            assemble_penalty(&basis, &set, &QuadratureRule::new(5), PairCounting::Unordered)
                .unwrap();
        let (_, form_exact) = assemble_d2(Box::new(model), vec![2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..5 {
            let alpha: Vec<f64> = (0..basis.len()).map(|_| rng.gen::<f64>() * 2.0).collect();
            let a = eval_penalty(&form_grid, &alpha).unwrap();
            let b = eval_penalty(&form_exact, &alpha).unwrap();
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn grid_validation() {
        assert!(MarginalGrid::new(2, vec![1.0; 3]).is_err());
        assert!(MarginalGrid::new(2, vec![-0.1, 1.0, 1.0, 1.0]).is_err());
        assert!(MarginalGrid::new(2, vec![2.0; 4]).is_err());
        assert!(MarginalGrid::new(2, vec![1.0; 4]).is_ok());
    }
}
