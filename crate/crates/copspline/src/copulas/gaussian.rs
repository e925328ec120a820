use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::independence::{check_open_cube, check_pair};
use super::normal::{norm_cdf, norm_inv};
use super::{Copula, CopulaSpec};
use crate::error::{Error, Result};

/// Gaussian copula for d = 2 or 3 with a full correlation matrix.
///
/// Density: `|R|^{-1/2} exp(-z^T (R^{-1} - I) z / 2)` with `z_i = Phi^{-1}(u_i)`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    corr: DMatrix<f64>,
    inv: DMatrix<f64>,
    chol: DMatrix<f64>,
    sqrt_det: f64,
}

impl Gaussian {
    pub fn new(corr: DMatrix<f64>) -> Result<Self> {
        let d = corr.nrows();
        if corr.ncols() != d || !(2..=3).contains(&d) {
            return Err(Error::Validation(format!(
                "Gaussian copula needs a square correlation matrix with d in {{2, 3}}, got {}x{}",
                corr.nrows(),
                corr.ncols()
            )));
        }
        for i in 0..d {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation("correlation matrix must have unit diagonal".into()));
            }
            for j in 0..d {
                if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Validation("correlation matrix must be symmetric".into()));
                }
            }
        }
        let chol = corr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Validation("correlation matrix is not positive definite".into()))?;
        let det = chol.l().diagonal().iter().map(|v| v * v).product::<f64>();
        let inv = chol.inverse();
        Ok(Self {
            corr,
            inv,
            chol: chol.l(),
            sqrt_det: det.sqrt(),
        })
    }

    /// Convenience constructor for d = 2 with correlation `rho`.
    pub fn bivariate(rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.corr
    }
}

pub(super) fn build(spec: &CopulaSpec) -> Result<Box<dyn Copula>> {
    let rows = spec
        .rho
        .as_ref()
        .ok_or_else(|| Error::Validation("Gaussian model needs a rho correlation matrix".into()))?;
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Validation("rho must be a square matrix".into()));
    }
    if let Some(sd) = spec.d {
        if sd != d {
            return Err(Error::Validation(format!(
                "d = {sd} disagrees with the {d}x{d} rho matrix"
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Box::new(Gaussian::new(DMatrix::from_row_slice(d, d, &flat))?))
}

impl Copula for Gaussian {
    fn family(&self) -> &'static str {
        "gaussian"
    }

    fn dims(&self) -> usize {
        self.corr.nrows()
    }

    fn density(&self, u: &[f64]) -> Result<f64> {
        let d = self.dims();
        check_open_cube(u, d)?;
        let z = nalgebra::DVector::from_iterator(d, u.iter().map(|&x| norm_inv(x)));
        let quad = z.dot(&(&self.inv * &z)) - z.dot(&z);
        Ok((-0.5 * quad).exp() / self.sqrt_det)
    }

    /// Correlated standard normals through the Cholesky factor, mapped back
    /// to the cube by the normal CDF.
    fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let d = self.dims();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for (i, slot) in out.iter_mut().enumerate() {
            let x: f64 = z
                .iter()
                .take(i + 1)
                .enumerate()
                .map(|(j, &zj)| self.chol[(i, j)] * zj)
                .sum();
            *slot = norm_cdf(x).clamp(f64::MIN_POSITIVE, 1.0);
        }
    }

    fn bivariate_marginal(&self, i: usize, j: usize) -> Result<Box<dyn Copula>> {
        check_pair(i, j, self.dims())?;
        Ok(Box::new(Gaussian::bivariate(self.corr[(i, j)])?))
    }

    fn spec(&self) -> CopulaSpec {
        let d = self.dims();
        let rows = (0..d)
            .map(|i| (0..d).map(|j| self.corr[(i, j)]).collect())
            .collect();
        CopulaSpec {
            family: "gaussian".into(),
            theta: None,
            rho: Some(rows),
            d: Some(d),
        }
    }
}
