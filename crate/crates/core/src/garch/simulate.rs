use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::GarchParams;
use crate::error::{Error, Result};

const BURN_IN: usize = 500;

/// Draws `n` returns from the model with standard normal innovations.
///
/// The recursion starts at the unconditional variance and the first 500
/// draws are discarded. Deterministic for a given `seed`.
pub fn simulate(params: &GarchParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let uncond = params
        .unconditional_variance()
        .ok_or_else(|| Error::InvalidParameter(format!("non-stationary: persistence {}", params.persistence())))?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let (q, p) = (params.alpha.len(), params.beta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Most recent lag first.
    let mut eps2 = vec![uncond; q];
    let mut sigma2 = vec![uncond; p];
    let mut out = Vec::with_capacity(n);
    for t in 0..BURN_IN + n {
        let mut s2 = params.omega;
        for i in 0..q {
            s2 += params.alpha[i] * eps2[i];
        }
        for j in 0..p {
            s2 += params.beta[j] * sigma2[j];
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = s2.sqrt() * z;
        if q > 0 {
            eps2.rotate_right(1);
            eps2[0] = e * e;
        }
        if p > 0 {
            sigma2.rotate_right(1);
            sigma2[0] = s2;
        }
        if t >= BURN_IN {
            out.push(params.mean + e);
        }
    }
    Ok(out)
}
