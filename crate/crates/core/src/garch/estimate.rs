use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_variance, GarchFit, GarchParams, LikelihoodWorkspace, RETURN_SCALE};
use crate::error::{Error, Result};
use crate::optim::NelderMead;

const MIN_OBS: usize = 50;
const MAX_ORDER: usize = 8;

/// Quasi maximum likelihood estimator.
///
/// The optimizer works on unconstrained coordinates
/// `θ = (μ, ln ω, x_1..x_q, y_1..y_p)` mapped to
///
/// ```text
/// α_i = s(x_i) / (1 + S),  β_j = s(y_j) / (1 + S),  S = Σ s(x) + Σ s(y)
/// ```
///
/// with `s` the softplus, so every candidate is positive and stationary.
/// Each start (a moment-matched guess, an optional caller-supplied guess and
/// `restarts` random draws) gets a short screening run; the best one is then
/// refined until the simplex shrinks below `xtol` or `max_iter` runs out.
#[derive(Debug, Clone)]
pub struct GarchEstimator {
    pub restarts: usize,
    pub max_iter: usize,
    pub xtol: f64,
    /// Iteration budget for each screening run.
    pub screen_iter: usize,
    pub seed: u64,
    /// Returns are multiplied by this before estimation.
    pub scale: f64,
}

impl Default for GarchEstimator {
    fn default() -> Self {
        GarchEstimator { restarts: 5, max_iter: 2000, xtol: 1e-8, screen_iter: 60, seed: 0, scale: RETURN_SCALE }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(s: f64) -> f64 {
    if s > 30.0 {
        s
    } else {
        s + (-(-s).exp_m1()).ln()
    }
}

fn decode(theta: &[f64], p: usize, q: usize, params: &mut GarchParams) {
    params.mean = theta[0];
    params.omega = theta[1].exp();
    let s: f64 = theta[2..2 + q + p].iter().map(|x| softplus(*x)).sum();
    let denom = 1.0 + s;
    params.alpha.clear();
    params.alpha.extend(theta[2..2 + q].iter().map(|x| softplus(*x) / denom));
    params.beta.clear();
    params.beta.extend(theta[2 + q..2 + q + p].iter().map(|y| softplus(*y) / denom));
}

fn encode(params: &GarchParams) -> Vec<f64> {
    let floor = 1e-6;
    let coeffs: Vec<f64> = params.alpha.iter().chain(&params.beta).map(|c| c.max(floor)).collect();
    let total: f64 = coeffs.iter().sum();
    // Keep a little room below the unit-persistence boundary.
    let shrink = if total >= 0.9995 { 0.9995 / total } else { 1.0 };
    let total = total * shrink;
    let mut theta = vec![params.mean, params.omega.ln()];
    theta.extend(coeffs.iter().map(|c| softplus_inv(c * shrink / (1.0 - total))));
    theta
}

/// Spreads `total` over `n` lags with geometrically decaying weights.
fn split(total: f64, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
    let sum: f64 = w.iter().sum();
    w.iter().map(|v| total * v / sum).collect()
}

impl GarchEstimator {
    pub fn with_seed(seed: u64) -> Self {
        GarchEstimator { seed, ..Default::default() }
    }

    fn validate(&self, returns: &[f64], p: usize, q: usize) -> Result<()> {
        if p > MAX_ORDER || q > MAX_ORDER || p + q == 0 {
            return Err(Error::InvalidParameter(format!(
                "order (p={p}, q={q}) must satisfy p, q <= {MAX_ORDER} and p + q >= 1"
            )));
        }
        if returns.len() < MIN_OBS {
            return Err(Error::TooShort { needed: MIN_OBS, actual: returns.len() });
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("returns contain NaN or infinity".into()));
        }
        if returns.iter().all(|r| *r == returns[0]) {
            return Err(Error::Degenerate("returns are constant".into()));
        }
        Ok(())
    }

    fn moment_start(&self, scaled: &[f64], p: usize, q: usize) -> GarchParams {
        let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
        let var = sample_variance(scaled);
        let (a_tot, b_tot) = match (p, q) {
            (0, _) => (0.3, 0.0),
            (_, 0) => (0.0, 0.5),
            _ => (0.1, 0.8),
        };
        GarchParams { omega: var * (1.0 - a_tot - b_tot), alpha: split(a_tot, q), beta: split(b_tot, p), mean }
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, scaled: &[f64], p: usize, q: usize) -> GarchParams {
        let n = scaled.len() as f64;
        let mean = scaled.iter().sum::<f64>() / n;
        let var = sample_variance(scaled);
        let persistence: f64 = rng.random_range(0.3..0.98);
        let arch_share: f64 = match (p, q) {
            (0, _) => 1.0,
            (_, 0) => 0.0,
            _ => rng.random_range(0.05..0.5),
        };
        let mut draw = |total: f64, k: usize| -> Vec<f64> {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| total * v / s).collect()
        };
        let alpha = draw(persistence * arch_share, q);
        let beta = draw(persistence * (1.0 - arch_share), p);
        let jitter = rng.random_range(-0.5..0.5) * (var / n).sqrt();
        GarchParams { omega: var * (1.0 - persistence), alpha, beta, mean: mean + jitter }
    }

    /// Fits a GARCH(p, q): `p` GARCH lags, `q` ARCH lags.
    pub fn fit(&self, returns: &[f64], p: usize, q: usize) -> Result<GarchFit> {
        self.fit_from(returns, p, q, None)
    }

    /// As [`GarchEstimator::fit`], with an extra starting point in scaled
    /// units (e.g. the previous estimate in a walk-forward refit).
    pub fn fit_from(&self, returns: &[f64], p: usize, q: usize, guess: Option<&GarchParams>) -> Result<GarchFit> {
        self.validate(returns, p, q)?;
        let scaled: Vec<f64> = returns.iter().map(|r| r * self.scale).collect();
        let backcast = sample_variance(&scaled);

        let mut starts = vec![self.moment_start(&scaled, p, q)];
        if let Some(g) = guess.filter(|g| g.order() == (p, q)) {
            starts.push(g.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ((p as u64) << 32 | q as u64));
        for _ in 0..self.restarts {
            starts.push(self.random_start(&mut rng, &scaled, p, q));
        }

        let mut ws = LikelihoodWorkspace::default();
        let mut scratch = GarchParams { omega: 1.0, alpha: Vec::new(), beta: Vec::new(), mean: 0.0 };
        let mut objective = |theta: &[f64]| {
            decode(theta, p, q, &mut scratch);
            ws.neg_loglik(&scratch, &scaled, backcast)
        };

        let dim = 2 + p + q;
        let sd = backcast.sqrt();
        let mut step = vec![0.2; dim];
        step[0] = sd / (scaled.len() as f64).sqrt();
        let screen = NelderMead::new(self.screen_iter, self.xtol, step.clone());

        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in &starts {
            let m = screen.minimize(&mut objective, &encode(start));
            if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
                best = Some((m.x, m.value));
            }
        }
        let (x0, _) = best.expect("at least one start");

        let refine = NelderMead::new(self.max_iter, self.xtol, step.iter().map(|s| s * 0.25).collect());
        let m = refine.minimize(&mut objective, &x0);
        if !m.value.is_finite() {
            return Err(Error::NonFinite(format!("GARCH({p},{q}) likelihood is not finite at any start")));
        }
        let mut params = GarchParams { omega: 1.0, alpha: Vec::new(), beta: Vec::new(), mean: 0.0 };
        decode(&m.x, p, q, &mut params);
        if !m.converged {
            log::debug!("GARCH({p},{q}) stopped after {} iterations without meeting xtol", m.iterations);
        }
        Ok(GarchFit::from_params(params, -m.value, m.converged, returns.len(), self.scale))
    }

    /// Fits every order in `0..=p_max × 0..=q_max` except (0, 0) and returns
    /// the converged fit with the lowest AIC. Ties go to the smaller `k`,
    /// then to the lexicographically smaller `(p, q)`.
    pub fn select_order(&self, returns: &[f64], p_max: usize, q_max: usize) -> Result<GarchFit> {
        Ok(self.select_order_all(returns, p_max, q_max)?.0)
    }

    /// [`GarchEstimator::select_order`] plus every candidate fit, in
    /// `(p, q)` order.
    pub fn select_order_all(&self, returns: &[f64], p_max: usize, q_max: usize) -> Result<(GarchFit, Vec<GarchFit>)> {
        if p_max + q_max == 0 {
            return Err(Error::InvalidParameter("p_max and q_max cannot both be 0".into()));
        }
        let mut fits: Vec<GarchFit> = Vec::new();
        for p in 0..=p_max {
            for q in 0..=q_max {
                if p + q == 0 {
                    continue;
                }
                let guess = nested_guess(&fits, p, q);
                fits.push(self.fit_from(returns, p, q, guess.as_ref())?);
            }
        }
        let best = fits
            .iter()
            .filter(|f| f.converged)
            .min_by(|a, b| a.aic.total_cmp(&b.aic).then(a.k.cmp(&b.k)).then(a.order.cmp(&b.order)))
            .cloned()
            .ok_or(Error::NoConvergedCandidate)?;
        Ok((best, fits))
    }
}

/// Extends the best already-fitted sub-model by one small coefficient.
fn nested_guess(fits: &[GarchFit], p: usize, q: usize) -> Option<GarchParams> {
    let from_q = fits.iter().find(|f| f.order == (p, q.wrapping_sub(1)));
    let from_p = fits.iter().find(|f| f.order == (p.wrapping_sub(1), q));
    let base = match (from_q, from_p) {
        (Some(a), Some(b)) => {
            if a.loglik >= b.loglik {
                a
            } else {
                b
            }
        }
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return None,
    };
    let mut params = base.params.clone();
    if params.alpha.len() < q {
        params.alpha.push(0.01);
    }
    if params.beta.len() < p {
        params.beta.push(0.01);
    }
    Some(params)
}

/// Fits with the default estimator.
pub fn fit(returns: &[f64], p: usize, q: usize) -> Result<GarchFit> {
    GarchEstimator::default().fit(returns, p, q)
}

/// Order search with the default estimator.
pub fn select_order(returns: &[f64], p_max: usize, q_max: usize) -> Result<GarchFit> {
    GarchEstimator::default().select_order(returns, p_max, q_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garch::{neg_loglik, simulate};
    use approx::assert_abs_diff_eq;

    #[test]
    fn transform_round_trip() {
        let params = GarchParams { omega: 0.3, alpha: vec![0.1, 0.05], beta: vec![0.7], mean: 0.02 };
        let mut back = params.clone();
        decode(&encode(&params), 1, 2, &mut back);
        assert_abs_diff_eq!(back.omega, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(back.alpha[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(back.alpha[1], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(back.beta[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(back.mean, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn decoded_params_are_always_stationary() {
        let mut params = GarchParams { omega: 1.0, alpha: vec![], beta: vec![], mean: 0.0 };
        for theta in [[0.0, 0.0, 40.0, 40.0], [0.0, -5.0, -40.0, 3.0], [1.0, 2.0, 0.0, 0.0]] {
            decode(&theta, 1, 1, &mut params);
            assert!(params.validate().is_ok());
            assert!(params.is_stationary());
        }
    }

    #[test]
    fn rejects_bad_orders_and_inputs() {
        let r: Vec<f64> = (0..100).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        assert!(fit(&r, 0, 0).is_err());
        assert!(fit(&r, 9, 1).is_err());
        assert!(matches!(fit(&r[..10], 1, 1), Err(Error::TooShort { .. })));
        assert!(matches!(fit(&[0.01; 100], 1, 1), Err(Error::Degenerate(_))));
        assert!(select_order(&r, 0, 0).is_err());
    }

    #[test]
    fn reported_loglik_matches_likelihood_at_estimate() {
        let truth = GarchParams::new(0.1e-4, vec![0.1], vec![0.8], 0.0).unwrap();
        let r = simulate(&truth, 2000, 3).unwrap();
        let f = GarchEstimator::with_seed(1).fit(&r, 1, 1).unwrap();
        let scaled: Vec<f64> = r.iter().map(|x| x * f.scale).collect();
        assert_abs_diff_eq!(-neg_loglik(&f.params, &scaled).unwrap(), f.loglik, epsilon = 1e-9);
        assert_eq!(f.aic, 2.0 * f.k as f64 - 2.0 * f.loglik);
    }
}
