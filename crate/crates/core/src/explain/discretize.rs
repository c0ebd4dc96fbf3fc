use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::timeseries::quantile_sorted;

/// Quartile bins of one flattened feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    pub min: f64,
    /// Lower quartile, median, upper quartile.
    pub boundaries: [f64; 3],
    pub max: f64,
}

impl FeatureBins {
    /// All boundaries coincide, so every interval predicate is degenerate.
    pub fn is_informative(&self) -> bool {
        self.boundaries[0] < self.boundaries[2]
    }

    /// Bin 0..=3 of `v`: the number of boundaries strictly below it.
    pub fn bin(&self, v: f64) -> usize {
        self.boundaries.iter().filter(|&&b| b < v).count()
    }

    /// Training range of bin `k`.
    pub fn range(&self, k: usize) -> (f64, f64) {
        let b = &self.boundaries;
        match k {
            0 => (self.min, b[0]),
            1 => (b[0], b[1]),
            2 => (b[1], b[2]),
            _ => (b[2], self.max),
        }
    }

    /// Interval predicate for bin `k` of feature `name`.
    pub fn predicate(&self, k: usize, name: &str) -> String {
        let b = &self.boundaries;
        if !self.is_informative() {
            return format!("{name} = {}", fmt_bound(b[0]));
        }
        match k {
            0 => format!("{name} <= {}", fmt_bound(b[0])),
            1 | 2 => format!("{} < {name} <= {}", fmt_bound(b[k - 1]), fmt_bound(b[k])),
            _ => format!("{name} > {}", fmt_bound(b[2])),
        }
    }

    pub(crate) fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.range(k);
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    }
}

fn fmt_bound(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

/// Per-feature quartile bins from the training distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizeStats {
    pub names: Vec<String>,
    pub bins: Vec<FeatureBins>,
}

impl DiscretizeStats {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Quartile bins of every flattened feature over `windows` (each already
/// flattened, all of length `names.len()`).
pub fn discretize_stats<W: AsRef<[f64]>>(windows: &[W], names: &[String]) -> Result<DiscretizeStats> {
    if windows.len() < 4 {
        return Err(Error::TooShort { needed: 4, actual: windows.len() });
    }
    let f = names.len();
    if f == 0 {
        return Err(Error::Empty("feature names"));
    }
    let mut bins = Vec::with_capacity(f);
    let mut column = Vec::with_capacity(windows.len());
    for j in 0..f {
        column.clear();
        for w in windows {
            let w = w.as_ref();
            if w.len() != f {
                return Err(Error::DimensionMismatch { expected: f, actual: w.len() });
            }
            if !w[j].is_finite() {
                return Err(Error::NonFinite(format!("training value of {}", names[j])));
            }
            column.push(w[j]);
        }
        column.sort_by(f64::total_cmp);
        bins.push(FeatureBins {
            min: column[0],
            boundaries: [0.25, 0.5, 0.75].map(|p| quantile_sorted(&column, p)),
            max: column[column.len() - 1],
        });
    }
    Ok(DiscretizeStats { names: names.to_vec(), bins })
}
