use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Copula, CopulaSpec};
use crate::error::{Error, Result};

/// Independence copula in any dimension: density identically 1.
#[derive(Debug, Clone)]
pub struct Independence {
    dims: usize,
}

impl Independence {
    pub fn new(dims: usize) -> Self {
        Self { dims }
    }
}

pub(super) fn build(spec: &CopulaSpec) -> Result<Box<dyn Copula>> {
    let d = spec.d.unwrap_or(2);
    if d < 2 {
        return Err(Error::Validation("independence copula needs d >= 2".into()));
    }
    Ok(Box::new(Independence::new(d)))
}

impl Copula for Independence {
    fn family(&self) -> &'static str {
        "independence"
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn density(&self, u: &[f64]) -> Result<f64> {
        check_cube(u, self.dims)?;
        Ok(1.0)
    }

    fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.gen();
        }
    }

    fn bivariate_marginal(&self, i: usize, j: usize) -> Result<Box<dyn Copula>> {
        check_pair(i, j, self.dims)?;
        Ok(Box::new(Independence::new(2)))
    }

    fn spec(&self) -> CopulaSpec {
        CopulaSpec {
            family: "independence".into(),
            theta: None,
            rho: None,
            d: Some(self.dims),
        }
    }
}

pub(super) fn check_cube(u: &[f64], dims: usize) -> Result<()> {
    if u.len() != dims {
        return Err(Error::Dimension {
            expected: dims,
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

pub(super) fn check_open_cube(u: &[f64], dims: usize) -> Result<()> {
    check_cube(u, dims)?;
    for &x in u {
        if x == 0.0 || x == 1.0 {
            return Err(Error::Domain(
                "density has a boundary singularity; evaluate strictly inside (0,1)^d".into(),
            ));
        }
    }
    Ok(())
}

pub(super) fn check_pair(i: usize, j: usize, dims: usize) -> Result<()> {
    if i >= j || j >= dims {
        return Err(Error::Domain(format!(
            "invalid axis pair ({i}, {j}) for d = {dims}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_is_one() {
        let c = Independence::new(3);
        assert_eq!(c.density(&[0.1, 0.5, 1.0]).unwrap(), 1.0);
        assert!(c.density(&[0.1, 0.5]).is_err());
        assert!(c.density(&[0.1, 0.5, 1.5]).is_err());
    }

    #[test]
    fn marginal_is_independence() {
        let c = Independence::new(3);
        let m = c.bivariate_marginal(0, 2).unwrap();
        assert_eq!(m.family(), "independence");
        assert_eq!(m.dims(), 2);
        assert!(c.bivariate_marginal(2, 1).is_err());
    }
}
