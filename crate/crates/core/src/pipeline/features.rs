use std::path::Path;

use chrono::NaiveDate;

use super::{ModelVariant, PipelineConfig};
use crate::error::{Error, Result};
use crate::garch::{GarchEstimator, GarchFit};
use crate::timeseries::{self, lag, log_returns, rolling_volatility, DatedSeries, PriceSeries, TRADING_DAYS_PER_YEAR};

/// Raw inputs of a backtest.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub sp500: PriceSeries,
    pub vix: Option<PriceSeries>,
}

/// How the GARCH forecast column is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GarchFeatureConfig {
    /// GARCH lags.
    pub p: usize,
    /// ARCH lags.
    pub q: usize,
    /// Returns before the first forecast.
    pub warmup: usize,
    /// Forecasts between refits; 1 refits every day.
    pub refit_stride: usize,
    /// Random restarts per refit.
    pub restarts: usize,
}

impl GarchFeatureConfig {
    pub fn paper() -> Self {
        GarchFeatureConfig { p: 2, q: 2, warmup: 504, refit_stride: 1, restarts: 5 }
    }

    pub fn desk() -> Self {
        GarchFeatureConfig { refit_stride: 21, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p + self.q == 0 || self.refit_stride == 0 {
            return Err(Error::InvalidParameter("GARCH order must be non-empty and refit_stride >= 1".into()));
        }
        if self.warmup < 50 {
            return Err(Error::InvalidParameter(format!("GARCH warmup {} below 50 returns", self.warmup)));
        }
        Ok(())
    }
}

/// One-step GARCH volatility forecasts with the fits that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchForecasts {
    /// Forecast for each date, in raw return units.
    pub series: DatedSeries,
    /// `(index into series, fit)` for every refit.
    pub fits: Vec<(usize, GarchFit)>,
}

/// Expanding-window GARCH forecasts over `returns`.
///
/// The forecast for return `t` conditions on returns `..t` only. The model
/// is refit on `..t` every `refit_stride` forecasts, starting from the
/// previous estimate.
pub fn garch_walk_forward(returns: &DatedSeries, cfg: &GarchFeatureConfig) -> Result<GarchForecasts> {
    cfg.validate()?;
    if returns.len() <= cfg.warmup {
        return Err(Error::TooShort { needed: cfg.warmup + 1, actual: returns.len() });
    }
    let est = GarchEstimator { restarts: cfg.restarts, ..GarchEstimator::default() };
    let mut fit: Option<GarchFit> = None;
    let mut fits = Vec::new();
    let mut dates = Vec::with_capacity(returns.len() - cfg.warmup);
    let mut values = Vec::with_capacity(returns.len() - cfg.warmup);
    for t in cfg.warmup..returns.len() {
        let k = t - cfg.warmup;
        let history = &returns.values[..t];
        if k % cfg.refit_stride == 0 {
            let f = est.fit_from(history, cfg.p, cfg.q, fit.as_ref().map(|f| &f.params))?;
            log::debug!("GARCH refit at {}: aic {:.3}", returns.dates[t], f.aic);
            fits.push((k, f.clone()));
            fit = Some(f);
        }
        let f = fit.as_ref().expect("fitted at k = 0");
        dates.push(returns.dates[t]);
        values.push(f.forecast_one_step(history)?);
    }
    Ok(GarchForecasts { series: DatedSeries { dates, values }, fits })
}

/// Joined per-date inputs for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub variant: ModelVariant,
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// One row per date, `names.len()` values each.
    pub rows: Vec<Vec<f64>>,
    /// Rolling volatility of log returns at each date.
    pub target: Vec<f64>,
    /// Dates lost in the inner join.
    pub join_dropped: usize,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Keeps only rows whose date is in `keep` (sorted).
    pub fn restrict_to(&self, keep: &[NaiveDate]) -> FeatureTable {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep.binary_search(&self.dates[i]).is_ok()).collect();
        FeatureTable {
            variant: self.variant,
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            join_dropped: self.join_dropped + self.len() - idx.len(),
        }
    }

    /// `date`, one column per feature, then `target`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.dates[i].to_string()];
            rec.extend(self.rows[i].iter().map(|v| v.to_string()));
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a table written by [`FeatureTable::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>, variant: ModelVariant) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[0] != "date" || header[header.len() - 1] != "target" {
            return Err(Error::Parse(format!("{}: expected `date, features..., target` header", path.display())));
        }
        let names = header[1..header.len() - 1].to_vec();
        let mut t = FeatureTable { variant, dates: vec![], names, rows: vec![], target: vec![], join_dropped: 0 };
        for (n, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse(format!("{} row {}: bad {what}", path.display(), n + 2));
            t.dates.push(NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| bad("date"))?);
            let vals = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| bad("number")))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != header.len() - 1 {
                return Err(bad("field count"));
            }
            t.target.push(vals[vals.len() - 1]);
            t.rows.push(vals[..vals.len() - 1].to_vec());
        }
        if t.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse(format!("{}: dates must strictly increase", path.display())));
        }
        Ok(t)
    }

    /// First `n` rows.
    pub fn truncated(&self, n: usize) -> FeatureTable {
        let n = n.min(self.len());
        FeatureTable {
            variant: self.variant,
            dates: self.dates[..n].to_vec(),
            names: self.names.clone(),
            rows: self.rows[..n].to_vec(),
            target: self.target[..n].to_vec(),
            join_dropped: self.join_dropped,
        }
    }
}

/// Inner-joins `series` onto the current date grid, keeping existing columns
/// aligned. Returns how many dates inside the grid's span were lost on
/// either side.
fn join_column(dates: &mut Vec<NaiveDate>, cols: &mut Vec<Vec<f64>>, series: &DatedSeries) -> usize {
    let (Some(&lo), Some(&hi)) = (dates.first(), dates.last()) else {
        return 0;
    };
    let in_span: Vec<usize> = (0..series.len()).filter(|&i| series.dates[i] >= lo && series.dates[i] <= hi).collect();
    let right = DatedSeries {
        dates: in_span.iter().map(|&i| series.dates[i]).collect(),
        values: in_span.iter().map(|&i| series.values[i]).collect(),
    };
    let base = DatedSeries { dates: dates.clone(), values: vec![0.0; dates.len()] };
    let aligned = timeseries::inner_join(&base, &right);
    for c in cols.iter_mut() {
        let mut keep = dates.iter().map(|d| aligned.dates.binary_search(d).is_ok());
        c.retain(|_| keep.next().unwrap());
    }
    *dates = aligned.dates;
    cols.push(aligned.right);
    aligned.dropped
}

/// Builds the feature table of `variant`.
///
/// Columns are drawn from S&P returns (log or percent),
/// volatility lagged by one day, the GARCH forecast for the row's date and
/// the VIX close. Everything is inner-joined on date. The target is always
/// the rolling volatility of log returns.
pub fn build_features(
    variant: ModelVariant,
    data: &MarketData,
    garch: Option<&DatedSeries>,
    cfg: &PipelineConfig,
) -> Result<FeatureTable> {
    if variant.needs_vix() && data.vix.is_none() {
        return Err(Error::MissingInput(format!("{variant} needs a VIX series")));
    }
    if variant.needs_garch() && garch.is_none() {
        return Err(Error::MissingInput(format!("{variant} needs GARCH forecasts")));
    }
    let logr = log_returns(&data.sp500)?;
    let input = timeseries::returns(&data.sp500, cfg.return_kind)?;
    let mut vol = rolling_volatility(&logr, cfg.vol_window)?;
    if cfg.annualize {
        vol = vol.annualized(TRADING_DAYS_PER_YEAR);
    }
    let lagged = lag(&vol, 1)?;

    // Base grid: dates with a lagged volatility (and hence a target).
    let target = DatedSeries { dates: vol.dates.clone(), values: vol.values.clone() };
    let ret = DatedSeries { dates: input.dates.clone(), values: input.values.clone() };
    let mut dates = lagged.dates.clone();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;

    for name in variant.feature_names(cfg.return_kind) {
        let series = match name {
            "log_returns" | "pct_change" => ret.clone(),
            "lagged_volatility" => DatedSeries { dates: lagged.dates.clone(), values: lagged.values.clone() },
            "garch_forecast" => {
                let g = garch.expect("checked above");
                let f = if cfg.annualize { TRADING_DAYS_PER_YEAR.sqrt() } else { 1.0 };
                DatedSeries { dates: g.dates.clone(), values: g.values.iter().map(|v| v * f).collect() }
            }
            "vix_close" => {
                let v = data.vix.as_ref().expect("checked above");
                DatedSeries { dates: v.dates().to_vec(), values: v.close().to_vec() }
            }
            other => unreachable!("unknown feature {other}"),
        };
        dropped += join_column(&mut dates, &mut cols, &series);
    }
    if dates.is_empty() {
        return Err(Error::Empty("joined feature table"));
    }
    let base = DatedSeries { dates: dates.clone(), values: vec![0.0; dates.len()] };
    let target = timeseries::inner_join(&base, &target).right;
    let rows: Vec<Vec<f64>> = (0..dates.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let names = variant.feature_names(cfg.return_kind).iter().map(|s| s.to_string()).collect();
    Ok(FeatureTable { variant, dates, names, rows, target, join_dropped: dropped })
}
