//! Forecast error metrics and model comparison.
//!
//! All comparisons are on paired forecasts: the same dates, different
//! models. Quartiles always refer to the *actual* volatility over the test
//! period.

mod mann_whitney;
mod report;

use std::fmt;

pub use mann_whitney::{mann_whitney_exact, mann_whitney_normal, mann_whitney_u, TestResult, EXACT_LIMIT};
pub use report::{compare, Comparison, DIRECTIONAL_HORIZONS};

use crate::error::{Error, Result};
use crate::pipeline::WalkForwardRun;

fn check_pair(preds: &[f64], actuals: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Empty("forecasts"));
    }
    if preds.len() != actuals.len() {
        return Err(Error::DimensionMismatch { expected: actuals.len(), actual: preds.len() });
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    check_pair(preds, actuals)?;
    Ok(preds.iter().zip(actuals).map(|(p, a)| (p - a).abs()).sum::<f64>() / preds.len() as f64)
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    check_pair(preds, actuals)?;
    Ok((preds.iter().zip(actuals).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / preds.len() as f64).sqrt())
}

pub fn absolute_errors(preds: &[f64], actuals: &[f64]) -> Result<Vec<f64>> {
    check_pair(preds, actuals)?;
    Ok(preds.iter().zip(actuals).map(|(p, a)| (p - a).abs()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    Full,
    /// Quartile of actual volatility, 1 = lowest.
    Q(u8),
}

impl Segment {
    pub const ALL: [Segment; 5] = [Segment::Full, Segment::Q(1), Segment::Q(2), Segment::Q(3), Segment::Q(4)];

    pub fn label(self) -> &'static str {
        match self {
            Segment::Full => "full",
            Segment::Q(1) => "Q1",
            Segment::Q(2) => "Q2",
            Segment::Q(3) => "Q3",
            Segment::Q(_) => "Q4",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Segment::Full => "Full period",
            Segment::Q(1) => "Lowest",
            Segment::Q(2) => "Low-Medium",
            Segment::Q(3) => "Medium-High",
            Segment::Q(_) => "Highest",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMetrics {
    pub segment: Segment,
    pub mae: f64,
    pub rmse: f64,
    pub count: usize,
}

/// Error metrics of one model over the full period and each quartile.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub label: String,
    pub segments: Vec<SegmentMetrics>,
}

impl MetricReport {
    pub fn get(&self, segment: Segment) -> Option<&SegmentMetrics> {
        self.segments.iter().find(|s| s.segment == segment)
    }

    pub fn full(&self) -> &SegmentMetrics {
        self.get(Segment::Full).expect("every report has a full segment")
    }
}

/// Quartile (1..=4) of each observation by rank of `actuals`.
///
/// Observations are ordered by value, ties by position, and the `k`-th of
/// `n` goes to quartile `1 + ⌊4k/n⌋`. Quartile sizes therefore differ by at
/// most one, and tied values straddling a boundary fall on the lower side
/// first.
pub fn quartile_assignment(actuals: &[f64]) -> Result<Vec<u8>> {
    if actuals.len() < 4 {
        return Err(Error::TooShort { needed: 4, actual: actuals.len() });
    }
    if actuals.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("actual volatility".into()));
    }
    let n = actuals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| actuals[i].total_cmp(&actuals[j]).then(i.cmp(&j)));
    let mut q = vec![0u8; n];
    for (k, &i) in order.iter().enumerate() {
        q[i] = 1 + (4 * k / n) as u8;
    }
    Ok(q)
}

/// Full-period and per-quartile MAE and RMSE.
pub fn metric_report(label: impl Into<String>, preds: &[f64], actuals: &[f64]) -> Result<MetricReport> {
    check_pair(preds, actuals)?;
    let quartile = quartile_assignment(actuals)?;
    let mut segments = vec![SegmentMetrics {
        segment: Segment::Full,
        mae: mae(preds, actuals)?,
        rmse: rmse(preds, actuals)?,
        count: preds.len(),
    }];
    for k in 1..=4u8 {
        let (p, a): (Vec<f64>, Vec<f64>) =
            (0..preds.len()).filter(|&i| quartile[i] == k).map(|i| (preds[i], actuals[i])).unzip();
        segments.push(SegmentMetrics {
            segment: Segment::Q(k),
            mae: mae(&p, &a)?,
            rmse: rmse(&p, &a)?,
            count: p.len(),
        });
    }
    Ok(MetricReport { label: label.into(), segments })
}

/// [`metric_report`] of a walk-forward run.
pub fn quartile_metrics(run: &WalkForwardRun) -> Result<MetricReport> {
    metric_report(run.variant.as_str(), &run.predictions(), &run.actuals())
}

/// Percentage of dates whose predicted move matches the realized move.
///
/// Moves are measured from the actual value `horizon` days earlier:
/// `sign(pred_t - actual_{t-h}) == sign(actual_t - actual_{t-h})`. A flat
/// move matches only a flat prediction.
pub fn directional_accuracy(preds: &[f64], actuals: &[f64], horizon: usize) -> Result<f64> {
    check_pair(preds, actuals)?;
    if horizon == 0 || preds.len() <= horizon {
        return Err(Error::TooShort { needed: horizon.max(1) + 1, actual: preds.len() });
    }
    let sign = |x: f64| (x > 0.0) as i8 - (x < 0.0) as i8;
    let hits = (horizon..preds.len())
        .filter(|&t| sign(preds[t] - actuals[t - horizon]) == sign(actuals[t] - actuals[t - horizon]))
        .count();
    Ok(100.0 * hits as f64 / (preds.len() - horizon) as f64)
}

/// `100 · (base - challenger) / base`; positive when the challenger's error
/// is lower.
pub fn improvement(base: f64, challenger: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::Degenerate("improvement over a zero base metric".into()));
    }
    Ok(100.0 * (base - challenger) / base)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub segment: Segment,
    pub mae_pct: f64,
    pub rmse_pct: f64,
}

/// [`improvement`] for every segment the two reports share.
pub fn improvement_table(base: &MetricReport, challenger: &MetricReport) -> Result<Vec<Improvement>> {
    base.segments
        .iter()
        .map(|b| {
            let c = challenger.get(b.segment).ok_or_else(|| {
                Error::MissingInput(format!("segment {} absent from {}", b.segment, challenger.label))
            })?;
            Ok(Improvement {
                segment: b.segment,
                mae_pct: improvement(b.mae, c.mae)?,
                rmse_pct: improvement(b.rmse, c.rmse)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
        assert!((rmse(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quartiles_of_eight() {
        let a = [8.0, 1.0, 7.0, 2.0, 6.0, 3.0, 5.0, 4.0];
        assert_eq!(quartile_assignment(&a).unwrap(), vec![4, 1, 4, 1, 3, 2, 3, 2]);
        assert!(quartile_assignment(&a[..3]).is_err());
    }

    #[test]
    fn quartile_sizes_are_balanced() {
        for n in 4..40 {
            let a: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
            let q = quartile_assignment(&a).unwrap();
            let counts: Vec<usize> = (1..=4).map(|k| q.iter().filter(|&&x| x == k).count()).collect();
            assert_eq!(counts.iter().sum::<usize>(), n);
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "{n}: {counts:?}");
        }
    }

    #[test]
    fn uniform_error_in_every_quartile() {
        let actual: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let pred: Vec<f64> =
            actual.iter().enumerate().map(|(i, a)| if i % 2 == 0 { a + 0.3 } else { a - 0.3 }).collect();
        let r = metric_report("m", &pred, &actual).unwrap();
        for s in &r.segments {
            assert!((s.mae - 0.3).abs() < 1e-12);
            assert!((s.rmse - 0.3).abs() < 1e-12);
        }
        assert_eq!(r.full().count, 20);
    }

    #[test]
    fn directional_examples() {
        let a = [1.0, 2.0, 1.5, 3.0, 2.5, 2.7, 1.0];
        for h in [1, 2, 5] {
            assert_eq!(directional_accuracy(&a, &a, h).unwrap(), 100.0);
        }
        // Reflect every move about the level h days earlier.
        for h in [1, 2] {
            let mut p = a.to_vec();
            for t in h..a.len() {
                p[t] = 2.0 * a[t - h] - a[t];
            }
            assert_eq!(directional_accuracy(&p, &a, h).unwrap(), 0.0);
        }
        assert!(directional_accuracy(&a, &a, 7).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(improvement(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(improvement(2.0, 1.0).unwrap(), 50.0);
        assert!((improvement(1.56e-3, 1.02e-3).unwrap() - 34.615).abs() < 1e-3);
        assert!(improvement(0.0, 1.0).is_err());
        let r = metric_report("x", &[1.0, 2.0, 3.0, 4.0], &[1.5, 2.5, 2.0, 4.5]).unwrap();
        assert!(improvement_table(&r, &r).unwrap().iter().all(|i| i.mae_pct == 0.0 && i.rmse_pct == 0.0));
    }
}
