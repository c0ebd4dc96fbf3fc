//! Price ingestion, return and volatility construction, and Min-Max scaling.
//!
//! Everything here is indexed by trading day. Calendar dates are carried for
//! alignment and reporting only; no calendar arithmetic is performed.

mod ingest;
mod scaler;
mod stats;

use chrono::NaiveDate;

pub use ingest::{ingest_csv, ColumnMap, Ingested, SkippedRow};
pub use scaler::MinMaxScaler;
pub use stats::{descriptive_stats, quantile_sorted, Summary};

use crate::error::{Error, Result};

/// Trading days per year, used for the optional annualization of volatility.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Dated closing prices for one instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series, checking that dates strictly increase and every
    /// close is finite and positive.
    pub fn new(dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        if dates.len() != close.len() {
            return Err(Error::DimensionMismatch { expected: dates.len(), actual: close.len() });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!("dates must strictly increase ({} then {})", w[0], w[1])));
        }
        if let Some((i, c)) = close.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidParameter(format!("close[{i}] = {c} is not positive")));
        }
        Ok(Self { dates, close })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    /// Restricts the series to `start..=end` (either bound optional).
    pub fn between(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> PriceSeries {
        let keep = |d: &NaiveDate| start.is_none_or(|s| *d >= s) && end.is_none_or(|e| *d <= e);
        let (dates, close) = self.dates.iter().zip(&self.close).filter(|(d, _)| keep(d)).map(|(d, c)| (*d, *c)).unzip();
        PriceSeries { dates, close }
    }

    /// Keeps only the first `n` observations.
    pub fn truncated(&self, n: usize) -> PriceSeries {
        let n = n.min(self.len());
        PriceSeries { dates: self.dates[..n].to_vec(), close: self.close[..n].to_vec() }
    }

    /// Copy with one close replaced; used by perturbation probes.
    pub fn with_close(&self, index: usize, value: f64) -> Result<PriceSeries> {
        let mut close = self.close.clone();
        *close
            .get_mut(index)
            .ok_or_else(|| Error::OutOfRange(format!("index {index} beyond {} rows", self.len())))? = value;
        PriceSeries::new(self.dates.clone(), close)
    }
}

/// How consecutive closes are turned into returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReturnKind {
    /// `ln(c_t / c_{t-1})`
    Log,
    /// `(c_t - c_{t-1}) / c_{t-1}`
    Pct,
}

impl ReturnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReturnKind::Log => "log",
            ReturnKind::Pct => "pct",
        }
    }
}

impl std::str::FromStr for ReturnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log" => Ok(ReturnKind::Log),
            "pct" | "percent" | "pct_change" => Ok(ReturnKind::Pct),
            other => Err(Error::Parse(format!("unknown return kind `{other}`"))),
        }
    }
}

/// A value per trading date. Shared shape for returns, volatility and any
/// derived column.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: dates.len(), actual: values.len() });
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value dated `date`, if present.
    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }
}

impl From<PriceSeries> for DatedSeries {
    fn from(p: PriceSeries) -> Self {
        DatedSeries { dates: p.dates, values: p.close }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub kind: ReturnKind,
}

/// Rolling dispersion of returns; `values[i]` is dated `dates[i]` and covers
/// the `window` returns ending on that date.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilitySeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub window: usize,
}

impl VolatilitySeries {
    /// Multiplies by `sqrt(periods_per_year)`.
    pub fn annualized(&self, periods_per_year: f64) -> VolatilitySeries {
        let f = periods_per_year.sqrt();
        VolatilitySeries {
            dates: self.dates.clone(),
            values: self.values.iter().map(|v| v * f).collect(),
            window: self.window,
        }
    }
}

impl From<VolatilitySeries> for DatedSeries {
    fn from(v: VolatilitySeries) -> Self {
        DatedSeries { dates: v.dates, values: v.values }
    }
}

fn require_len(p: &PriceSeries, needed: usize) -> Result<()> {
    if p.len() < needed {
        return Err(Error::TooShort { needed, actual: p.len() });
    }
    Ok(())
}

/// `ln(close[t] / close[t-1])`, dated at `t`.
pub fn log_returns(p: &PriceSeries) -> Result<ReturnSeries> {
    require_len(p, 2)?;
    Ok(ReturnSeries {
        dates: p.dates[1..].to_vec(),
        values: p.close.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
        kind: ReturnKind::Log,
    })
}

/// Simple arithmetic return `(close[t] - close[t-1]) / close[t-1]`.
pub fn pct_change(p: &PriceSeries) -> Result<ReturnSeries> {
    require_len(p, 2)?;
    Ok(ReturnSeries {
        dates: p.dates[1..].to_vec(),
        values: p.close.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect(),
        kind: ReturnKind::Pct,
    })
}

pub fn returns(p: &PriceSeries, kind: ReturnKind) -> Result<ReturnSeries> {
    match kind {
        ReturnKind::Log => log_returns(p),
        ReturnKind::Pct => pct_change(p),
    }
}

/// Sample standard deviation (N-1 denominator) over each full window of
/// `window` returns. The first value is dated at the window's last return.
pub fn rolling_volatility(r: &ReturnSeries, window: usize) -> Result<VolatilitySeries> {
    if window < 2 {
        return Err(Error::InvalidParameter(format!("volatility window must be >= 2, got {window}")));
    }
    if r.values.len() < window {
        return Err(Error::TooShort { needed: window, actual: r.values.len() });
    }
    let n = window as f64;
    let values = r
        .values
        .windows(window)
        .map(|w| {
            let mean = w.iter().sum::<f64>() / n;
            let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(VolatilitySeries { dates: r.dates[window - 1..].to_vec(), values, window })
}

/// Shifts values forward by `k` positions: the output at date `t` holds the
/// input at `t - k`. The first `k` dates have no predecessor and are dropped.
pub fn lag(s: &VolatilitySeries, k: usize) -> Result<VolatilitySeries> {
    if k >= s.values.len() {
        return Err(Error::TooShort { needed: k + 1, actual: s.values.len() });
    }
    Ok(VolatilitySeries {
        dates: s.dates[k..].to_vec(),
        values: s.values[..s.values.len() - k].to_vec(),
        window: s.window,
    })
}

/// Inner join of two price series on date.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub dates: Vec<NaiveDate>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Rows present in only one of the inputs.
    pub dropped: usize,
}

pub fn inner_join(left: &DatedSeries, right: &DatedSeries) -> Aligned {
    let (mut i, mut j) = (0, 0);
    let mut out = Aligned { dates: Vec::new(), left: Vec::new(), right: Vec::new(), dropped: 0 };
    while i < left.len() && j < right.len() {
        match left.dates[i].cmp(&right.dates[j]) {
            std::cmp::Ordering::Less => {
                out.dropped += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.dropped += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.dates.push(left.dates[i]);
                out.left.push(left.values[i]);
                out.right.push(right.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    out.dropped += (left.len() - i) + (right.len() - j);
    out
}
