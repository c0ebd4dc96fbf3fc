use crate::error::{Error, Result};

/// Location, dispersion and shape of a sample.
///
/// `std` uses the N-1 denominator. `skewness` and `kurtosis` are the
/// standardized third and fourth central moments (plain kurtosis, so a
/// normal sample is near 3); both are `None` when the sample has no spread.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

/// Quantile of already sorted data with linear interpolation between order
/// statistics (position `(n-1)p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn descriptive_stats(x: &[f64]) -> Result<Summary> {
    if x.is_empty() {
        return Err(Error::Empty("descriptive_stats"));
    }
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 2, actual: x.len() });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (n - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skewness, kurtosis) = if m2 > 0.0 { (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2))) } else { (None, None) };

    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: x.len(),
        mean,
        std,
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        skewness,
        kurtosis,
    })
}
