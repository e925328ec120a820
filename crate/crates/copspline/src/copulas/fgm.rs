use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::independence::{check_cube, check_pair};
use super::{Copula, CopulaSpec};
use crate::error::{Error, Result};

/// Farlie-Gumbel-Morgenstern copula on `[0,1]^2`:
/// `c(u, v) = 1 + theta (1 - 2u)(1 - 2v)`, `theta` in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Fgm {
    theta: f64,
}

impl Fgm {
    pub fn new(theta: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&theta) {
            return Err(Error::Validation(format!(
                "FGM theta must lie in [-1, 1], got {theta}"
            )));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

pub(super) fn build(spec: &CopulaSpec) -> Result<Box<dyn Copula>> {
    let theta = spec
        .theta
        .ok_or_else(|| Error::Validation("FGM model needs a theta parameter".into()))?;
    if let Some(d) = spec.d {
        if d != 2 {
            return Err(Error::Unsupported("FGM is only available for d = 2".into()));
        }
    }
    Ok(Box::new(Fgm::new(theta)?))
}

impl Copula for Fgm {
    fn family(&self) -> &'static str {
        "fgm"
    }

    fn dims(&self) -> usize {
        2
    }

    fn density(&self, u: &[f64]) -> Result<f64> {
        check_cube(u, 2)?;
        Ok(1.0 + self.theta * (1.0 - 2.0 * u[0]) * (1.0 - 2.0 * u[1]))
    }

    /// Conditional-inverse sampling: draw `u` uniform, then invert the
    /// conditional CDF `C(v | u) = (1 + a) v - a v^2` with `a = theta (1 - 2u)`.
    fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let u: f64 = rng.gen();
        let p: f64 = rng.gen();
        let a = self.theta * (1.0 - 2.0 * u);
        let v = if a.abs() < 1e-12 {
            p
        } else {
            let disc = (1.0 + a) * (1.0 + a) - 4.0 * a * p;
            ((1.0 + a) - disc.max(0.0).sqrt()) / (2.0 * a)
        };
        out[0] = u;
        out[1] = v.clamp(0.0, 1.0);
    }

    fn bivariate_marginal(&self, i: usize, j: usize) -> Result<Box<dyn Copula>> {
        check_pair(i, j, 2)?;
        Ok(Box::new(self.clone()))
    }

    fn spec(&self) -> CopulaSpec {
        CopulaSpec {
            family: "fgm".into(),
            theta: Some(self.theta),
            rho: None,
            d: Some(2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_values() {
        let c = Fgm::new(1.0).unwrap();
        assert_abs_diff_eq!(c.density(&[0.0, 0.0]).unwrap(), 2.0);
        let c = Fgm::new(0.5).unwrap();
        assert_abs_diff_eq!(c.density(&[0.25, 0.75]).unwrap(), 0.875);
    }

    #[test]
    fn theta_range_enforced() {
        assert!(Fgm::new(1.5).is_err());
        assert!(Fgm::new(-1.0).is_ok());
    }

    #[test]
    fn conditional_inverse_hits_endpoints() {
        // the quadratic root maps p=0 to v=0 and p=1 to v=1 for any u
        let c = Fgm::new(0.8).unwrap();
        for &u in &[0.1, 0.5, 0.9] {
            let a = c.theta * (1.0 - 2.0 * u);
            if a.abs() > 1e-12 {
                let v0 = ((1.0 + a) - ((1.0 + a) * (1.0 + a)).sqrt()) / (2.0 * a);
                let v1 = ((1.0 + a) - ((1.0 - a) * (1.0 - a)).sqrt()) / (2.0 * a);
                assert_abs_diff_eq!(v0, 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(v1, 1.0, epsilon = 1e-12);
            }
        }
    }
}
