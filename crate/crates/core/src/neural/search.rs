use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, LayerSpec, LossKind, NetworkConfig};
use super::lstm::LstmNetwork;
use super::train::{train, Dataset};
use crate::error::{Error, Result};

/// Discrete hyperparameter grid sampled uniformly, one axis at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub layers: Vec<usize>,
    pub units: Vec<usize>,
    pub activations: Vec<Activation>,
    pub dropouts: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub losses: Vec<LossKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            layers: vec![1, 2, 3],
            units: vec![32, 64, 128],
            activations: vec![Activation::Tanh, Activation::Relu],
            dropouts: vec![0.0, 0.1, 0.2, 0.3],
            learning_rates: vec![0.01, 0.001, 0.0001],
            losses: vec![LossKind::Mse, LossKind::Mae],
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        let empty = self.layers.is_empty()
            || self.units.is_empty()
            || self.activations.is_empty()
            || self.dropouts.is_empty()
            || self.learning_rates.is_empty()
            || self.losses.is_empty();
        if empty {
            return Err(Error::InvalidParameter("every search axis needs at least one value".into()));
        }
        Ok(())
    }

    /// Draws one configuration; fields not covered by the space come from
    /// `base`.
    pub fn sample(&self, base: &NetworkConfig, rng: &mut ChaCha8Rng) -> NetworkConfig {
        let layers = *self.layers.choose(rng).expect("validated");
        let units = *self.units.choose(rng).expect("validated");
        let activation = *self.activations.choose(rng).expect("validated");
        let dropout = *self.dropouts.choose(rng).expect("validated");
        let mut c = base.clone();
        c.layers = vec![LayerSpec { units, activation, dropout }; layers];
        c.learning_rate = *self.learning_rates.choose(rng).expect("validated");
        c.loss = *self.losses.choose(rng).expect("validated");
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub config: NetworkConfig,
    /// Mean best-epoch validation MSE over the executions; `None` if any
    /// execution diverged.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: NetworkConfig,
    pub best_score: f64,
    pub trials: Vec<TrialResult>,
}

/// Random search over `space`.
///
/// Every trial is trained `executions` times with different seeds and
/// scored by the validation MSE of its best epoch, averaged. Scoring always
/// uses MSE so trials trained under different losses stay comparable. The
/// lowest score wins, the earlier trial on ties.
pub fn random_search(
    space: &SearchSpace,
    base: &NetworkConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    trials: usize,
    executions: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    if trials == 0 || executions == 0 {
        return Err(Error::InvalidParameter("trials and executions must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(trials);
    for trial in 0..trials {
        let config = space.sample(base, &mut rng);
        let mut total = 0.0;
        let mut ok = true;
        for exec in 0..executions {
            let mut c = config.clone();
            c.seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((trial * executions + exec) as u64 + 1);
            let score = LstmNetwork::new(c, train_set.width())
                .and_then(|mut net| {
                    train(&mut net, train_set, val_set)?;
                    net.evaluate(val_set, LossKind::Mse)
                })
                .ok()
                .filter(|s| s.is_finite());
            match score {
                Some(s) => total += s,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        let score = ok.then(|| total / executions as f64);
        log::debug!("trial {trial}: {:?}", score);
        results.push(TrialResult { config, score });
    }
    let (best_idx, best_score) = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.score.map(|s| (i, s)))
        .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
            Some((_, bs)) if bs <= s => acc,
            _ => Some((i, s)),
        })
        .ok_or(Error::AllTrialsDiverged(trials))?;
    Ok(SearchOutcome { best: results[best_idx].config.clone(), best_score, trials: results })
}
