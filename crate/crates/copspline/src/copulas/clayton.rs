use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::independence::{check_open_cube, check_pair};
use super::{Copula, CopulaSpec};
use crate::error::{Error, Result};

/// Clayton copula on `(0,1)^2` with lower tail dependence:
/// `c(u, v) = (1 + theta) (u v)^{-(1+theta)} (u^{-theta} + v^{-theta} - 1)^{-(2 + 1/theta)}`,
/// `theta > 0`. The density is singular on the boundary.
#[derive(Debug, Clone)]
pub struct Clayton {
    theta: f64,
}

impl Clayton {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Validation(format!(
                "Clayton theta must be positive, got {theta}"
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
        .ok_or_else(|| Error::Validation("Clayton model needs a theta parameter".into()))?;
    if let Some(d) = spec.d {
        if d != 2 {
            return Err(Error::Unsupported("Clayton is only available for d = 2".into()));
        }
    }
    Ok(Box::new(Clayton::new(theta)?))
}

impl Copula for Clayton {
    fn family(&self) -> &'static str {
        "clayton"
    }

    fn dims(&self) -> usize {
        2
    }

    fn density(&self, u: &[f64]) -> Result<f64> {
        check_open_cube(u, 2)?;
        let t = self.theta;
        let (a, b) = (u[0], u[1]);
        let core = a.powf(-t) + b.powf(-t) - 1.0;
        Ok((1.0 + t) * (a * b).powf(-(1.0 + t)) * core.powf(-(2.0 + 1.0 / t)))
    }

    /// Conditional-inverse sampling: `v = ((p^{-theta/(1+theta)} - 1) u^{-theta} + 1)^{-1/theta}`.
    fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let t = self.theta;
        // keep u, p away from exact 0 where powers blow up
        let u: f64 = rng.gen::<f64>().max(1e-16);
        let p: f64 = rng.gen::<f64>().max(1e-16);
        let v = ((p.powf(-t / (1.0 + t)) - 1.0) * u.powf(-t) + 1.0).powf(-1.0 / t);
        out[0] = u;
        out[1] = v.clamp(0.0, 1.0);
    }

    fn bivariate_marginal(&self, i: usize, j: usize) -> Result<Box<dyn Copula>> {
        check_pair(i, j, 2)?;
        Ok(Box::new(self.clone()))
    }

    fn spec(&self) -> CopulaSpec {
        CopulaSpec {
            family: "clayton".into(),
            theta: Some(self.theta),
            rho: None,
            d: Some(2),
        }
    }
}
