//! End-to-end fitting pipeline: pseudo-observations, moment estimates, the
//! penalized least-squares objective, marginal constraints, and the QP solve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::TensorBasis;
use crate::copulas::{l2_error, Copula};
use crate::error::{Error, Result};
use crate::grid::KnotGrid;
use crate::moments::{moment_vector, pseudo_observations, SampleMatrix};
use crate::penalty::{assemble_penalty, eval_penalty, MarginalSet, PairCounting, PenaltyForm};
use crate::qp::{solve, KktReport, QpStatus, QuadraticProgram, SolveOptions};
use crate::quadrature::QuadratureRule;

/// Configuration of one fit.
pub struct FitConfig {
    pub grid: KnotGrid,
    /// Penalty weight, `>= 0`.
    pub lambda: f64,
    /// Known bivariate marginals; required whenever `lambda > 0`.
    pub marginals: Option<MarginalSet>,
    pub solver_tol: f64,
    /// 0 means the solver default `50 k`.
    pub solver_max_iter: usize,
    /// Gauss-Legendre nodes per cell for penalty assembly.
    pub quad_nodes: usize,
    pub pair_counting: PairCounting,
}

impl FitConfig {
    pub fn new(grid: KnotGrid) -> Self {
        Self {
            grid,
            lambda: 1.0,
            marginals: None,
            solver_tol: 1e-8,
            solver_max_iter: 0,
            quad_nodes: 5,
            pair_counting: PairCounting::Unordered,
        }
    }

    /// Rule-of-thumb cell count `m = ceil(n^{1/(d+4)})` per dimension.
    ///
    /// A heuristic default only; it shrinks the spacing slowly with `n`.
    pub fn default_cells(n: usize, d: usize) -> usize {
        (n as f64).powf(1.0 / (d as f64 + 4.0)).ceil() as usize
    }
}

/// Fit diagnostics stored alongside the coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub penalty_value: Option<f64>,
    pub kkt: KktReport,
    pub constraint_residual: f64,
    pub min_alpha: f64,
    pub iterations: usize,
    pub lambda: f64,
    pub beta: f64,
    pub n: usize,
}

/// The fitted copula density `c_hat = alpha^T B` with its grid and
/// diagnostics. Serializes to the versioned estimate JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopulaDensityEstimate {
    pub schema_version: u32,
    pub grid: KnotGrid,
    pub alpha: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl CopulaDensityEstimate {
    pub fn basis(&self) -> TensorBasis {
        TensorBasis::new(self.grid.clone())
    }

    /// Density value at one point.
    pub fn density(&self, basis: &TensorBasis, u: &[f64]) -> Result<f64> {
        basis.eval_expansion(&self.alpha, u)
    }
}

/// Uniform-marginal constraint system `E alpha = 1`.
///
/// For each dimension `i` and knot `j` one row pins the marginal spline
/// coefficient to 1: `sum_{t: t_i = j} (prod_{s != i} w_{t,s}) alpha_t = 1`.
/// For a linear spline that is equivalent to the marginal being identically
/// one. Rows within a dimension are linearly dependent across dimensions
/// through the total-mass constraint, so `rank(E) = sum_i (m_i + 1) - (d - 1)`.
pub fn build_constraints(basis: &TensorBasis) -> (DMatrix<f64>, DVector<f64>) {
    let grid = basis.grid();
    let d = grid.dims();
    let k = basis.len();
    let rows: usize = (0..d).map(|i| grid.knots(i)).sum();
    let mut e_mat = DMatrix::zeros(rows, k);
    let mut row = 0;
    for i in 0..d {
        for j in 0..grid.knots(i) {
            for t in 0..k {
                if grid.axis_index(t, i) == j {
                    e_mat[(row, t)] = basis.weight_product_except(t, &[i]);
                }
            }
            row += 1;
        }
    }
    let e_rhs = DVector::from_element(rows, 1.0);
    (e_mat, e_rhs)
}

/// Run the full pipeline on raw samples. Deterministic given data and config.
pub fn fit(data: &SampleMatrix, config: &FitConfig) -> Result<CopulaDensityEstimate> {
    let d = config.grid.dims();
    if data.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: data.ncols(),
        });
    }
    // rejects NaN as well as negatives
    if config.lambda.is_nan() || config.lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be >= 0, got {}", config.lambda)));
    }
    if config.lambda > 0.0 && config.marginals.is_none() {
        return Err(Error::Config(
            "lambda > 0 requires bivariate marginal specifications".into(),
        ));
    }

    let basis = TensorBasis::new(config.grid.clone());
    let k = basis.len();
    let pseudo = pseudo_observations(data);
    let moments = moment_vector(&pseudo, &basis)?;
    let p_mat = basis.gram_tensor();
    let beta = config.grid.beta();

    let penalty_form: Option<PenaltyForm> = match (&config.marginals, config.lambda > 0.0) {
        (Some(marginals), true) => Some(assemble_penalty(
            &basis,
            marginals,
            &QuadratureRule::new(config.quad_nodes),
            config.pair_counting,
        )?),
        _ => None,
    };

    let mut quad = beta * (p_mat.transpose() * &p_mat);
    let mut linear = beta * (p_mat.transpose() * &moments.values);
    if let Some(form) = &penalty_form {
        quad += config.lambda * &form.q_matrix;
        linear += config.lambda * &form.q_vector;
    }
    let quad = (&quad + quad.transpose()) * 0.5;

    let (e_mat, e_rhs) = build_constraints(&basis);
    let qp = QuadraticProgram {
        quad,
        linear,
        eq_matrix: Some(e_mat.clone()),
        eq_rhs: Some(e_rhs.clone()),
        nonneg: true,
    };
    let opts = SolveOptions {
        tol: config.solver_tol,
        max_iter: config.solver_max_iter,
        // the independence density is always feasible
        initial: Some(DVector::from_element(k, 1.0)),
    };
    let solution = solve(&qp, &opts)?;
    if solution.status != QpStatus::Converged {
        return Err(Error::Solver(format!(
            "QP did not converge (status {:?}, {} iterations, residuals {:?})",
            solution.status, solution.iterations, solution.kkt
        )));
    }

    let alpha: Vec<f64> = solution.alpha.iter().copied().collect();
    let penalty_value = penalty_form
        .as_ref()
        .map(|form| eval_penalty(form, &alpha))
        .transpose()?;
    let constraint_residual = (&e_mat * &solution.alpha - &e_rhs).amax();
    let min_alpha = solution.alpha.min();
    Ok(CopulaDensityEstimate {
        schema_version: 1,
        grid: config.grid.clone(),
        diagnostics: FitDiagnostics {
            objective: solution.objective,
            penalty_value,
            kkt: solution.kkt,
            constraint_residual,
            min_alpha,
            iterations: solution.iterations,
            lambda: config.lambda,
            beta,
            n: data.nrows(),
        },
        alpha,
    })
}

/// Evaluate the fitted density at a list of points.
pub fn evaluate(estimate: &CopulaDensityEstimate, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let basis = estimate.basis();
    points
        .iter()
        .map(|u| basis.eval_expansion(&estimate.alpha, u))
        .collect()
}

/// Cells per axis for error quadrature: the estimate's own cells, refined to
/// at least `min_cells` while keeping the spline's kinks on cell boundaries.
fn refined_cells(grid: &KnotGrid, min_cells: usize) -> Vec<usize> {
    grid.cells()
        .iter()
        .map(|&m| m * min_cells.div_ceil(m).max(1))
        .collect()
}

/// L2 distance between the fitted density and a reference model.
pub fn error_report(
    estimate: &CopulaDensityEstimate,
    truth: &dyn Copula,
    rule: &QuadratureRule,
) -> Result<f64> {
    if truth.dims() != estimate.grid.dims() {
        return Err(Error::Dimension {
            expected: estimate.grid.dims(),
            got: truth.dims(),
        });
    }
    let basis = estimate.basis();
    let cells = refined_cells(&estimate.grid, 16);
    l2_error(
        &cells,
        rule,
        |u| basis.eval_expansion(&estimate.alpha, u),
        |u| truth.density(u),
    )
}
