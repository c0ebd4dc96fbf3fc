use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::lstm::{Cache, Gradients, LstmNetwork};
use crate::error::{Error, Result};

/// Fixed-length sequences with scalar targets. Sample `i` occupies
/// `x[i·L·W .. (i+1)·L·W]`, row-major by time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    lookback: usize,
    width: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, lookback: usize, width: usize) -> Result<Self> {
        if lookback == 0 || width == 0 {
            return Err(Error::InvalidParameter("lookback and width must be positive".into()));
        }
        if x.len() != y.len() * lookback * width {
            return Err(Error::DimensionMismatch { expected: y.len() * lookback * width, actual: x.len() });
        }
        Ok(Dataset { x, y, lookback, width })
    }

    /// Builds a dataset from per-sample `lookback × width` row lists.
    pub fn from_rows(samples: &[Vec<Vec<f64>>], targets: &[f64]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("dataset"))?;
        let lookback = first.len();
        let width = first.first().map_or(0, Vec::len);
        let mut x = Vec::with_capacity(samples.len() * lookback * width);
        for s in samples {
            if s.len() != lookback {
                return Err(Error::DimensionMismatch { expected: lookback, actual: s.len() });
            }
            for row in s {
                if row.len() != width {
                    return Err(Error::DimensionMismatch { expected: width, actual: row.len() });
                }
                x.extend_from_slice(row);
            }
        }
        Self::new(x, targets.to_vec(), lookback, width)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        let n = self.lookback * self.width;
        &self.x[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// Copy of samples `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        let n = self.lookback * self.width;
        Dataset {
            x: self.x[range.start * n..range.end * n].to_vec(),
            y: self.y[range].to_vec(),
            lookback: self.lookback,
            width: self.width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss per epoch, with dropout active.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.val_loss.len()
    }
}

/// Mini-batch Adam training with early stopping on the validation loss.
///
/// Samples are reshuffled every epoch. After each epoch the validation loss
/// is computed with dropout off; training stops once it has failed to
/// improve for `patience` consecutive epochs (at the first failure when
/// `patience` is 0). The network is left holding the parameters of the best
/// validation epoch.
///
/// Initialization, shuffling and dropout use separate streams derived from
/// `config.seed`, so a run is reproducible bit for bit.
pub fn train(net: &mut LstmNetwork, train: &Dataset, val: &Dataset) -> Result<TrainHistory> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training or validation set"));
    }
    net.config.validate()?;
    for d in [train, val] {
        if d.width() != net.input_width() {
            return Err(Error::DimensionMismatch { expected: net.input_width(), actual: d.width() });
        }
    }
    let cfg = net.config.clone();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut adam = Adam::new(net);
    let mut grads = Gradients::zeros_like(net);
    let mut cache = Cache::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut best: Option<LstmNetwork> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let l = net
                .batch_gradients(train, batch, cfg.loss, Some(&mut dropout_rng), &mut cache, &mut grads)
                .map_err(|e| match e {
                    Error::NonFinite(what) => {
                        log::warn!("epoch {epoch}: non-finite {what}");
                        Error::Diverged { epoch }
                    }
                    other => other,
                })?;
            if !l.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += l * batch.len() as f64;
            adam.step(net, &grads, cfg.learning_rate);
        }
        history.train_loss.push(total / train.len() as f64);

        let v = net.evaluate(val, cfg.loss).map_err(|_| Error::Diverged { epoch })?;
        if !v.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.val_loss.push(v);
        if v < history.best_val_loss {
            history.best_val_loss = v;
            history.best_epoch = epoch;
            best = Some(net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience.max(1) {
                history.stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    if let Some(b) = best {
        *net = b;
    }
    Ok(history)
}
