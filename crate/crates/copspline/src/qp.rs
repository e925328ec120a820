//! Dense convex quadratic programming with equality constraints and
//! nonnegativity bounds, solved by a primal active-set method with a
//! certified KKT solution.
//!
//! Problem form: minimize `a^T G a - 2 g^T a` subject to `E a = e` and
//! (optionally) `a >= 0`, with `G` symmetric positive semidefinite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A convex QP instance.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    /// Symmetric PSD quadratic part `G`.
    pub quad: DMatrix<f64>,
    /// Linear part `g`; the objective is `a^T G a - 2 g^T a`.
    pub linear: DVector<f64>,
    /// Equality constraint matrix, `p x k`; rows may be linearly dependent.
    pub eq_matrix: Option<DMatrix<f64>>,
    pub eq_rhs: Option<DVector<f64>>,
    /// Enforce `a >= 0` elementwise.
    pub nonneg: bool,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    /// 0 means the default `50 * k`.
    pub max_iter: usize,
    /// Feasible warm start, used when it satisfies the constraints.
    pub initial: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QpStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct KktReport {
    /// `||2 G a - 2 g + E^T nu - mu||_inf` with `mu >= 0`.
    pub stationarity: f64,
    /// `||E a - e||_inf` over the full (unreduced) equality rows.
    pub primal_eq: f64,
    /// `max(0, -min_j a_j)` when bounds are active.
    pub primal_nonneg: f64,
    /// `max_j |mu_j a_j|`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_nonneg)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub alpha: DVector<f64>,
    pub objective: f64,
    pub kkt: KktReport,
    pub iterations: usize,
    pub status: QpStatus,
}

/// Select a maximal linearly independent subset of equality rows by modified
/// Gram-Schmidt with a relative threshold of `1e-10 * ||E||`.
fn reduce_equalities(e_mat: &DMatrix<f64>, e_rhs: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let scale = e_mat.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let threshold = 1e-10 * scale;
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for r in 0..e_mat.nrows() {
        let mut row: DVector<f64> = e_mat.row(r).transpose();
        for q in &ortho {
            let proj = row.dot(q);
            row -= q * proj;
        }
        let norm = row.norm();
        if norm > threshold {
            ortho.push(row / norm);
            kept.push(r);
        }
    }
    let reduced = DMatrix::from_fn(kept.len(), e_mat.ncols(), |i, j| e_mat[(kept[i], j)]);
    let rhs = DVector::from_fn(kept.len(), |i, _| e_rhs[kept[i]]);
    (reduced, rhs)
}

struct ActiveSetOutcome {
    alpha: DVector<f64>,
    nu: DVector<f64>,
    mu: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// Primal active-set iteration on the nonnegativity bounds.
///
/// `alpha` must be feasible on entry (`E a = e`, masked entries `>= 0`).
/// Each iteration solves the equality-constrained KKT subproblem on the
/// free variables; blocking bounds enter the working set, and bounds with
/// the most negative multiplier leave it (lowest index on ties).
#[allow(clippy::too_many_arguments)]
fn active_set(
    g_mat: &DMatrix<f64>,
    g_vec: &DVector<f64>,
    e_mat: &DMatrix<f64>,
    e_rhs: &DVector<f64>,
    mask: &[bool],
    mut alpha: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<ActiveSetOutcome> {
    let k = g_mat.nrows();
    let p = e_mat.nrows();
    let mut working: Vec<bool> = (0..k)
        .map(|j| {
            if mask[j] && alpha[j] <= tol {
                alpha[j] = 0.0;
                true
            } else {
                false
            }
        })
        .collect();
    let mut nu = DVector::zeros(p);
    let mut mu = DVector::zeros(k);

    for iter in 1..=max_iter {
        let free: Vec<usize> = (0..k).filter(|&j| !working[j]).collect();
        let nf = free.len();
        // KKT system of the subproblem with working-set variables pinned at 0
        let dim = nf + p;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                kkt[(a, b)] = 2.0 * g_mat[(ja, jb)];
            }
            for r in 0..p {
                kkt[(a, nf + r)] = e_mat[(r, ja)];
                kkt[(nf + r, a)] = e_mat[(r, ja)];
            }
            rhs[a] = 2.0 * g_vec[ja];
        }
        for r in 0..p {
            rhs[nf + r] = e_rhs[r];
        }
        let sol = if dim == 0 {
            DVector::zeros(0)
        } else {
            kkt.full_piv_lu().solve(&rhs).ok_or_else(|| {
                Error::Solver(
                    "singular KKT subproblem: objective is unbounded or degenerate along a feasible direction"
                        .into(),
                )
            })?
        };
        nu = DVector::from_fn(p, |r, _| sol[nf + r]);

        // direction toward the subproblem optimum
        let mut step_norm = 0.0f64;
        for (a, &j) in free.iter().enumerate() {
            step_norm = step_norm.max((sol[a] - alpha[j]).abs());
        }
        if step_norm <= 1e-13 * (1.0 + alpha.amax()) {
            // at the subproblem optimum; inspect bound multipliers
            let grad = 2.0 * (g_mat * &alpha) - 2.0 * g_vec + e_mat.transpose() * &nu;
            mu.fill(0.0);
            let mut worst = (0usize, 0.0f64);
            for j in 0..k {
                if working[j] {
                    mu[j] = grad[j];
                    if mu[j] < worst.1 {
                        worst = (j, mu[j]);
                    }
                }
            }
            if worst.1 >= -tol {
                return Ok(ActiveSetOutcome {
                    alpha,
                    nu,
                    mu,
                    iterations: iter,
                    converged: true,
                });
            }
            working[worst.0] = false;
            continue;
        }

        // ratio test against the bounds of the free masked variables
        let mut step = 1.0f64;
        let mut blocker: Option<usize> = None;
        for (a, &j) in free.iter().enumerate() {
            let dir = sol[a] - alpha[j];
            if mask[j] && dir < -1e-14 {
                let ratio = alpha[j] / (-dir);
                if ratio < step {
                    step = ratio;
                    blocker = Some(j);
                }
            }
        }
        for (a, &j) in free.iter().enumerate() {
            alpha[j] += step * (sol[a] - alpha[j]);
        }
        if let Some(j) = blocker {
            alpha[j] = 0.0;
            working[j] = true;
        }
    }

    Ok(ActiveSetOutcome {
        alpha,
        nu,
        mu,
        iterations: max_iter,
        converged: false,
    })
}

fn residual_report(
    qp: &QuadraticProgram,
    alpha: &DVector<f64>,
    e_reduced: &DMatrix<f64>,
    nu: &DVector<f64>,
    mu: &DVector<f64>,
) -> KktReport {
    let mu_clamped = mu.map(|v| v.max(0.0));
    let mut stat = 2.0 * (&qp.quad * alpha) - 2.0 * &qp.linear - &mu_clamped;
    if e_reduced.nrows() > 0 {
        stat += e_reduced.transpose() * nu;
    }
    let primal_eq = match (&qp.eq_matrix, &qp.eq_rhs) {
        (Some(e), Some(rhs)) => (e * alpha - rhs).amax(),
        _ => 0.0,
    };
    let primal_nonneg = if qp.nonneg {
        (-alpha.min()).max(0.0)
    } else {
        0.0
    };
    let complementarity = (0..alpha.len())
        .map(|j| (mu_clamped[j] * alpha[j]).abs())
        .fold(0.0f64, f64::max);
    KktReport {
        stationarity: stat.amax(),
        primal_eq,
        primal_nonneg,
        complementarity,
    }
}

fn validate(qp: &QuadraticProgram) -> Result<()> {
    let k = qp.quad.nrows();
    if qp.quad.ncols() != k || qp.linear.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: qp.linear.len(),
        });
    }
    let scale = qp.quad.amax().max(1e-300);
    let asym = (&qp.quad - qp.quad.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::Validation(format!(
            "quadratic part is not symmetric (asymmetry {asym})"
        )));
    }
    let min_eig = qp
        .quad
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .min();
    if min_eig < -1e-8 * scale {
        return Err(Error::Validation(format!(
            "quadratic part is not positive semidefinite (eigenvalue {min_eig})"
        )));
    }
    match (&qp.eq_matrix, &qp.eq_rhs) {
        (Some(e), Some(rhs)) => {
            if e.ncols() != k || e.nrows() != rhs.len() {
                return Err(Error::Dimension {
                    expected: k,
                    got: e.ncols(),
                });
            }
        }
        (None, None) => {}
        _ => {
            return Err(Error::Validation(
                "equality matrix and right-hand side must be supplied together".into(),
            ))
        }
    }
    Ok(())
}

/// Find a feasible starting point, running a phase-1 problem if the
/// least-norm equality solution violates the bounds.
fn feasible_start(
    qp: &QuadraticProgram,
    e_reduced: &DMatrix<f64>,
    e_rhs: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<std::result::Result<DVector<f64>, ()>> {
    let k = qp.quad.nrows();
    let p = e_reduced.nrows();
    let feas_tol = 1e-8 * (1.0 + e_rhs.amax());

    if let Some(init) = &opts.initial {
        if init.len() == k {
            let mut a = init.clone();
            if qp.nonneg {
                for v in a.iter_mut() {
                    if *v < 0.0 && *v > -1e-12 {
                        *v = 0.0;
                    }
                }
            }
            let eq_ok = p == 0 || (e_reduced * &a - e_rhs).amax() <= feas_tol;
            let bound_ok = !qp.nonneg || a.min() >= 0.0;
            if eq_ok && bound_ok {
                return Ok(Ok(a));
            }
        }
    }

    if p == 0 {
        return Ok(Ok(DVector::zeros(k)));
    }

    // least-norm solution of the reduced equalities
    let gram = e_reduced * e_reduced.transpose();
    let y = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("equality constraint reduction failed".into()))?
        .solve(e_rhs);
    let least_norm = e_reduced.transpose() * y;
    if !qp.nonneg || least_norm.min() >= 0.0 {
        return Ok(Ok(least_norm));
    }

    // phase 1: minimize eps*|a|^2 + |s|^2 subject to E a + s = e, a >= 0,
    // starting from the trivially feasible (a, s) = (0, e)
    let dim = k + p;
    let mut g_mat = DMatrix::zeros(dim, dim);
    for j in 0..k {
        g_mat[(j, j)] = 1e-10;
    }
    for r in 0..p {
        g_mat[(k + r, k + r)] = 1.0;
    }
    let g_vec = DVector::zeros(dim);
    let mut e_ext = DMatrix::zeros(p, dim);
    e_ext.view_mut((0, 0), (p, k)).copy_from(e_reduced);
    for r in 0..p {
        e_ext[(r, k + r)] = 1.0;
    }
    let mut mask = vec![true; k];
    mask.extend(std::iter::repeat_n(false, p));
    let mut start = DVector::zeros(dim);
    start.rows_mut(k, p).copy_from(e_rhs);
    let out = active_set(
        &g_mat,
        &g_vec,
        &e_ext,
        e_rhs,
        &mask,
        start,
        1e-12,
        50 * dim.max(1),
    )?;
    let slack = out.alpha.rows(k, p).amax();
    if slack > feas_tol {
        return Ok(Err(()));
    }
    let mut a = DVector::from_fn(k, |j, _| out.alpha[j].max(0.0));
    // re-project onto the equalities and clear round-off negatives
    let resid = e_rhs - e_reduced * &a;
    let y = gram
        .cholesky()
        .ok_or_else(|| Error::Solver("equality constraint reduction failed".into()))?
        .solve(&resid);
    a += e_reduced.transpose() * y;
    for v in a.iter_mut() {
        if *v < 0.0 && *v > -1e-10 {
            *v = 0.0;
        }
    }
    if a.min() < 0.0 {
        return Ok(Err(()));
    }
    Ok(Ok(a))
}

/// Solve the QP; deterministic given inputs.
pub fn solve(qp: &QuadraticProgram, opts: &SolveOptions) -> Result<QpSolution> {
    validate(qp)?;
    let k = qp.quad.nrows();
    let max_iter = if opts.max_iter == 0 { 50 * k } else { opts.max_iter };
    let tol = opts.tol;

    let (e_reduced, e_rhs) = match (&qp.eq_matrix, &qp.eq_rhs) {
        (Some(e), Some(rhs)) => reduce_equalities(e, rhs),
        _ => (DMatrix::zeros(0, k), DVector::zeros(0)),
    };

    let start = match feasible_start(qp, &e_reduced, &e_rhs, opts)? {
        Ok(a) => a,
        Err(()) => {
            let alpha = DVector::zeros(k);
            let kkt = residual_report(qp, &alpha, &e_reduced, &DVector::zeros(e_reduced.nrows()), &DVector::zeros(k));
            return Ok(QpSolution {
                objective: 0.0,
                alpha,
                kkt,
                iterations: 0,
                status: QpStatus::Infeasible,
            });
        }
    };

    // dropped (dependent) equality rows must still be consistent
    if let (Some(e), Some(rhs)) = (&qp.eq_matrix, &qp.eq_rhs) {
        if (e * &start - rhs).amax() > 1e-7 * (1.0 + rhs.amax()) {
            let kkt = residual_report(qp, &start, &e_reduced, &DVector::zeros(e_reduced.nrows()), &DVector::zeros(k));
            return Ok(QpSolution {
                objective: objective_value(qp, &start),
                alpha: start,
                kkt,
                iterations: 0,
                status: QpStatus::Infeasible,
            });
        }
    }

    let mask = vec![qp.nonneg; k];
    let out = active_set(&qp.quad, &qp.linear, &e_reduced, &e_rhs, &mask, start, tol, max_iter)?;
    let kkt = residual_report(qp, &out.alpha, &e_reduced, &out.nu, &out.mu);
    Ok(QpSolution {
        objective: objective_value(qp, &out.alpha),
        alpha: out.alpha,
        kkt,
        iterations: out.iterations,
        status: if out.converged {
            QpStatus::Converged
        } else {
            QpStatus::MaxIter
        },
    })
}

pub fn objective_value(qp: &QuadraticProgram, alpha: &DVector<f64>) -> f64 {
    alpha.dot(&(&qp.quad * alpha)) - 2.0 * qp.linear.dot(alpha)
}

/// Recompute the KKT residuals of an arbitrary point, recovering multipliers
/// by least squares on the active constraints. Pure function.
pub fn check_kkt(qp: &QuadraticProgram, alpha: &DVector<f64>, tol: f64) -> Result<KktReport> {
    validate(qp)?;
    let k = qp.quad.nrows();
    if alpha.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: alpha.len(),
        });
    }
    let (e_reduced, _) = match (&qp.eq_matrix, &qp.eq_rhs) {
        (Some(e), Some(rhs)) => reduce_equalities(e, rhs),
        _ => (DMatrix::zeros(0, k), DVector::zeros(0)),
    };
    let p = e_reduced.nrows();
    let active: Vec<usize> = if qp.nonneg {
        (0..k).filter(|&j| alpha[j].abs() <= tol.max(1e-10)).collect()
    } else {
        Vec::new()
    };
    // least squares for [nu; mu_active] in 2Ga - 2g + E^T nu - mu = 0
    let cols = p + active.len();
    let target = -(2.0 * (&qp.quad * alpha) - 2.0 * &qp.linear);
    let (nu, mu) = if cols == 0 {
        (DVector::zeros(0), DVector::zeros(k))
    } else {
        let mut m = DMatrix::zeros(k, cols);
        for r in 0..p {
            for j in 0..k {
                m[(j, r)] = e_reduced[(r, j)];
            }
        }
        for (c, &j) in active.iter().enumerate() {
            m[(j, p + c)] = -1.0;
        }
        let svd = m.svd(true, true);
        let x = svd
            .solve(&target, 1e-12)
            .map_err(|e| Error::Solver(format!("multiplier recovery failed: {e}")))?;
        let nu = DVector::from_fn(p, |r, _| x[r]);
        let mut mu = DVector::zeros(k);
        for (c, &j) in active.iter().enumerate() {
            mu[j] = x[p + c];
        }
        (nu, mu)
    };
    Ok(residual_report(qp, alpha, &e_reduced, &nu, &mu))
}
