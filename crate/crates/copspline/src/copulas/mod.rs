//! Analytic copula families behind a common [`Copula`] trait, registered by
//! family name and built from a JSON model spec at runtime.
//!
//! These serve both as the "known bivariate marginals" input to the penalty
//! and as simulation ground truth.

mod clayton;
mod fgm;
mod gaussian;
mod independence;
pub mod normal;

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::SampleMatrix;
use crate::quadrature::QuadratureRule;

pub use clayton::Clayton;
pub use fgm::Fgm;
pub use gaussian::Gaussian;
pub use independence::Independence;

/// A copula density with a sampler and closed-form bivariate marginals.
///
/// Implementations are immutable; samplers take an explicit RNG state.
pub trait Copula: Send + Sync {
    /// Registry name of the family.
    fn family(&self) -> &'static str;

    fn dims(&self) -> usize;

    /// Density at `u`. Families with boundary singularities reject points on
    /// the boundary of the cube with a domain error.
    fn density(&self, u: &[f64]) -> Result<f64>;

    /// Draw one point of the copula into `out` (length `dims`).
    fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);

    /// The 2D copula of coordinates `(i, j)`, `i < j`, 0-based.
    fn bivariate_marginal(&self, i: usize, j: usize) -> Result<Box<dyn Copula>>;

    /// Parameters serialized back into a model spec.
    fn spec(&self) -> CopulaSpec;
}

/// JSON model specification: `{"family": "...", "theta": ..., "rho": [[...]], "d": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

type Builder = fn(&CopulaSpec) -> Result<Box<dyn Copula>>;

static REGISTRY: LazyLock<BTreeMap<&'static str, Builder>> = LazyLock::new(|| {
    let mut map: BTreeMap<&'static str, Builder> = BTreeMap::new();
    map.insert("independence", independence::build);
    map.insert("fgm", fgm::build);
    map.insert("clayton", clayton::build);
    map.insert("gaussian", gaussian::build);
    map
});

/// Registered family names.
pub fn family_names() -> Vec<&'static str> {
    REGISTRY.keys().copied().collect()
}

/// Build a copula model from a spec, dispatching on the family name.
pub fn build_copula(spec: &CopulaSpec) -> Result<Box<dyn Copula>> {
    let builder = REGISTRY.get(spec.family.as_str()).ok_or_else(|| {
        Error::Validation(format!(
            "unknown copula family '{}' (known: {})",
            spec.family,
            family_names().join(", ")
        ))
    })?;
    builder(spec)
}

/// Draw `n` i.i.d. rows from the model; deterministic given `seed`.
///
/// The stream comes from ChaCha8 seeded with `seed`, one generator for the
/// whole matrix, rows filled in order.
pub fn sample(model: &dyn Copula, n: usize, seed: u64) -> Result<SampleMatrix> {
    use rand::SeedableRng;
    if n == 0 {
        return Err(Error::Validation("sample size must be at least 1".into()));
    }
    let d = model.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * d];
    for i in 0..n {
        model.sample_row(&mut rng, &mut data[i * d..(i + 1) * d]);
    }
    SampleMatrix::new(data, n, d)
}

/// L2 distance `sqrt(int (a - b)^2 du)` over `[0,1]^d` by tensor quadrature
/// on `cells_per_axis` cells.
pub fn l2_error<A, B>(
    cells_per_axis: &[usize],
    rule: &QuadratureRule,
    a: A,
    b: B,
) -> Result<f64>
where
    A: Fn(&[f64]) -> Result<f64>,
    B: Fn(&[f64]) -> Result<f64>,
{
    let sq = rule.integrate(cells_per_axis, |u| {
        let diff = a(u)? - b(u)?;
        Ok(diff * diff)
    })?;
    Ok(sq.max(0.0).sqrt())
}
