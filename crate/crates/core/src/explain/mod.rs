//! Local explanations of a single forecast.
//!
//! The lookback window is flattened into named tabular features
//! (`t{offset} {feature}`, offset 0 the oldest row). Each feature is cut into
//! quartile bins from training windows, the instance is perturbed bin by bin,
//! and a proximity-weighted ridge surrogate is fitted on the bin-match
//! indicators. The top coefficients become signed interval conditions.
//!
//! ```
//! use volcast::explain::{discretize_stats, explain_instance, flatten_names, ExplainerConfig};
//!
//! let names = flatten_names(&["a".to_string(), "b".to_string()], 3);
//! let train: Vec<Vec<f64>> = (0..50).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 11) as f64).collect()).collect();
//! let stats = discretize_stats(&train, &names).unwrap();
//! let model = |w: &[f64]| -> volcast::Result<f64> { Ok(2.0 * w[5]) };
//! let cfg = ExplainerConfig { num_samples: 500, num_features: 2, ..ExplainerConfig::default() };
//! let e = explain_instance(&model, &train[4], &stats, &cfg).unwrap();
//! assert_eq!(e.conditions[0].feature, "t2 b");
//! assert!(e.conditions[0].weight > 0.0);
//! ```

mod discretize;
mod surrogate;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use discretize::{discretize_stats, DiscretizeStats, FeatureBins};
pub use surrogate::{fit_surrogate, Surrogate, RIDGE_LAMBDA};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerConfig {
    pub num_samples: usize,
    /// `None` means `0.75·√(flattened features)`.
    pub kernel_width: Option<f64>,
    /// Conditions reported (K).
    pub num_features: usize,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self { num_samples: 5000, kernel_width: None, num_features: 10, seed: 0 }
    }
}

impl ExplainerConfig {
    pub fn validate(&self, total_features: usize) -> Result<()> {
        if self.num_samples < 10 {
            return Err(Error::InvalidParameter(format!("num_samples must be at least 10 (got {})", self.num_samples)));
        }
        if self.num_features == 0 || self.num_features > total_features {
            return Err(Error::InvalidParameter(format!(
                "num_features must be in 1..={total_features} (got {})",
                self.num_features
            )));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("kernel_width must be positive (got {w})")));
            }
        }
        Ok(())
    }

    pub fn width_for(&self, total_features: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (total_features as f64).sqrt())
    }
}

/// Names of a flattened `lookback × features` window, row-major.
pub fn flatten_names(features: &[String], lookback: usize) -> Vec<String> {
    (0..lookback).flat_map(|t| features.iter().map(move |f| format!("t{t} {f}"))).collect()
}

/// Row-major flattening of a window.
pub fn flatten<R: AsRef<[f64]>>(window: &[R]) -> Vec<f64> {
    window.iter().flat_map(|r| r.as_ref().iter().copied()).collect()
}

pub fn unflatten(flat: &[f64], width: usize) -> Result<Vec<Vec<f64>>> {
    if width == 0 || flat.len() % width != 0 {
        return Err(Error::DimensionMismatch { expected: width, actual: flat.len() });
    }
    Ok(flat.chunks(width).map(<[f64]>::to_vec).collect())
}

/// Proximity weight `exp(-d²/width²)`.
pub fn kernel(distance: f64, width: f64) -> f64 {
    (-(distance * distance) / (width * width)).exp()
}

/// Perturbed instances and their bin-match indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Row 0 is the instance itself.
    pub samples: Vec<Vec<f64>>,
    /// 1 where the sample stayed in the instance's bin.
    pub binary: Vec<Vec<f64>>,
}

/// `n` perturbations of `x` (row 0 included).
///
/// Per feature a bin is drawn uniformly; the same bin keeps the value,
/// another replaces it by a uniform draw from that bin's training range.
/// Uninformative features are never changed.
pub fn perturb(x: &[f64], stats: &DiscretizeStats, n: usize, seed: u64) -> Result<Perturbation> {
    if n == 0 {
        return Err(Error::InvalidParameter("perturbation count must be at least 1".into()));
    }
    if x.len() != stats.len() {
        return Err(Error::DimensionMismatch { expected: stats.len(), actual: x.len() });
    }
    let own: Vec<usize> = stats.bins.iter().zip(x).map(|(b, &v)| b.bin(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut binary = Vec::with_capacity(n);
    samples.push(x.to_vec());
    binary.push(vec![1.0; x.len()]);
    for _ in 1..n {
        let mut s = x.to_vec();
        let mut z = vec![1.0; x.len()];
        for (j, bins) in stats.bins.iter().enumerate() {
            let k = rng.random_range(0..4usize);
            if !bins.is_informative() || k == own[j] {
                continue;
            }
            s[j] = bins.sample(k, &mut rng);
            z[j] = 0.0;
        }
        samples.push(s);
        binary.push(z);
    }
    Ok(Perturbation { samples, binary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    /// Flattened feature name, e.g. `t21 lagged_volatility`.
    pub feature: String,
    pub index: usize,
    /// Interval predicate holding for the instance.
    pub predicate: String,
    pub weight: f64,
    /// The instance's raw value.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub predicted_value: f64,
    /// Lowest and highest black-box output over the perturbation set.
    pub local_range: (f64, f64),
    /// K conditions by decreasing `|weight|`.
    pub conditions: Vec<Condition>,
    pub intercept: f64,
    pub r2: f64,
    pub kernel_width: f64,
    pub num_samples: usize,
}

/// Explain `model` at the flattened window `x`.
///
/// `model` receives flattened windows in raw feature units and must apply
/// its own scaling.
pub fn explain_instance<F>(model: &F, x: &[f64], stats: &DiscretizeStats, cfg: &ExplainerConfig) -> Result<Explanation>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let f = stats.len();
    cfg.validate(f)?;
    if x.len() != f {
        return Err(Error::DimensionMismatch { expected: f, actual: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("instance to explain".into()));
    }
    let p = perturb(x, stats, cfg.num_samples, cfg.seed)?;
    let mut outputs = Vec::with_capacity(p.samples.len());
    for (index, s) in p.samples.iter().enumerate() {
        let y = model(s).map_err(|e| Error::ModelFailure { index, source: Box::new(e) })?;
        if !y.is_finite() {
            return Err(Error::ModelFailure { index, source: Box::new(Error::NonFinite(format!("model output {y}"))) });
        }
        outputs.push(y);
    }
    let width = cfg.width_for(f);
    let weights: Vec<f64> =
        p.binary.iter().map(|z| kernel(z.iter().map(|v| (1.0 - v) * (1.0 - v)).sum::<f64>().sqrt(), width)).collect();

    let informative: Vec<usize> = (0..f).filter(|&j| stats.bins[j].is_informative()).collect();
    let fit = fit_surrogate(&p.binary, &outputs, &weights, &informative, cfg.num_features)?;

    let mut ranked = fit.coefficients.clone();
    // Pad with excluded features at weight zero so K conditions are reported.
    for j in 0..f {
        if ranked.len() == cfg.num_features {
            break;
        }
        if !ranked.iter().any(|&(i, _)| i == j) {
            ranked.push((j, 0.0));
        }
    }
    let conditions = ranked
        .into_iter()
        .map(|(j, weight)| {
            let bins = &stats.bins[j];
            Condition {
                feature: stats.names[j].clone(),
                index: j,
                predicate: bins.predicate(bins.bin(x[j]), &stats.names[j]),
                weight,
                value: x[j],
            }
        })
        .collect();
    let lo = outputs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Explanation {
        predicted_value: outputs[0],
        local_range: (lo, hi),
        conditions,
        intercept: fit.intercept,
        r2: fit.r2,
        kernel_width: width,
        num_samples: cfg.num_samples,
    })
}

impl Explanation {
    /// Predicted value, signed conditions, and the instance's feature values.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let w = self.conditions.iter().map(|c| c.predicate.len().max(c.feature.len())).max().unwrap_or(10);
        let _ = writeln!(s, "Predicted value");
        let _ = writeln!(
            s,
            "  {:.6e}  (local min {:.6e}, max {:.6e})",
            self.predicted_value, self.local_range.0, self.local_range.1
        );
        let _ = writeln!(s, "\nNegative and positive conditions");
        for c in &self.conditions {
            let _ = writeln!(s, "  {:<w$}  {:>+12.4e}", c.predicate, c.weight);
        }
        let _ = writeln!(
            s,
            "  (surrogate R² {:.3}, intercept {:.4e}, {} samples)",
            self.r2, self.intercept, self.num_samples
        );
        let _ = writeln!(s, "\nFeature values");
        for c in &self.conditions {
            let _ = writeln!(s, "  {:<w$}  {:>12.6e}", c.feature, c.value);
        }
        s
    }

    /// One row per reported quantity, tagged by section.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["section", "name", "value"])?;
        w.write_record(["prediction", "predicted_value", &self.predicted_value.to_string()])?;
        w.write_record(["prediction", "local_min", &self.local_range.0.to_string()])?;
        w.write_record(["prediction", "local_max", &self.local_range.1.to_string()])?;
        for c in &self.conditions {
            w.write_record(["condition", &c.predicate, &c.weight.to_string()])?;
        }
        for c in &self.conditions {
            w.write_record(["feature_value", &c.feature, &c.value.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
