use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;

use super::features::{build_features, garch_walk_forward, FeatureTable, MarketData};
use super::{ModelVariant, PipelineConfig, WalkForwardConfig};
use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::neural::{random_search, train, Dataset, LstmNetwork, SearchOutcome, SearchSpace, TrainHistory};
use crate::timeseries::{log_returns, DatedSeries, MinMaxScaler};

/// Target-row ranges of one walk-forward window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub index: usize,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
    /// The test block was cut short by the end of the data.
    pub truncated: bool,
}

/// Splits `rows` table rows into walk-forward windows.
///
/// Training targets start at row `lookback`, the first row with a full
/// history. Test blocks tile `initial_train + initial_val .. rows`.
pub fn window_plan(rows: usize, lookback: usize, wf: &WalkForwardConfig) -> Result<Vec<WindowPlan>> {
    wf.validate()?;
    let first = wf.first_test_index();
    if rows <= first {
        return Err(Error::TooShort { needed: first + 1, actual: rows });
    }
    if wf.initial_train <= lookback {
        return Err(Error::InvalidParameter(format!(
            "initial_train {} leaves no training sample with lookback {lookback}",
            wf.initial_train
        )));
    }
    let mut plans = Vec::new();
    let mut start = first;
    while start < rows {
        let end = (start + wf.refit_stride).min(rows);
        let val_start = start - wf.initial_val;
        plans.push(WindowPlan {
            index: plans.len(),
            train: lookback..val_start,
            val: val_start..start,
            test: start..end,
            truncated: end - start < wf.refit_stride,
        });
        start = end;
    }
    Ok(plans)
}

/// Network plus the scalers fitted on its training segment.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowModel {
    pub net: LstmNetwork,
    pub feature_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
}

impl WindowModel {
    /// Prediction in raw volatility units for one unscaled
    /// `lookback × width` window, rows oldest first.
    pub fn predict_raw(&self, window: &[f64]) -> Result<f64> {
        let w = self.feature_scaler.width();
        if window.len() % w != 0 {
            return Err(Error::DimensionMismatch { expected: w, actual: window.len() % w });
        }
        let scaled: Vec<f64> = window.iter().enumerate().map(|(k, v)| self.feature_scaler.scale(k % w, *v)).collect();
        let y = self.net.predict(&scaled)?;
        Ok(self.target_scaler.unscale(0, y).max(0.0))
    }

    pub fn to_record(&self) -> KvRecord {
        let mut r = self.net.to_record();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        r.set("scaler.feature.min", join(self.feature_scaler.min()));
        r.set("scaler.feature.max", join(self.feature_scaler.max()));
        r.set("scaler.target.min", join(self.target_scaler.min()));
        r.set("scaler.target.max", join(self.target_scaler.max()));
        r
    }

    pub fn from_record(r: &KvRecord) -> Result<Self> {
        let split = |key: &str| -> Result<Vec<f64>> {
            r.require(key)?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("`{key}`: {e}"))))
                .collect()
        };
        Ok(WindowModel {
            net: LstmNetwork::from_record(r)?,
            feature_scaler: MinMaxScaler::from_bounds(split("scaler.feature.min")?, split("scaler.feature.max")?)?,
            target_scaler: MinMaxScaler::from_bounds(split("scaler.target.min")?, split("scaler.target.max")?)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = format!("# walk-forward window model\n{}", self.to_record());
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_record(&KvRecord::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowInfo {
    pub plan: WindowPlan,
    /// Absent for the GARCH variant.
    pub model: Option<WindowModel>,
    pub history: Option<TrainHistory>,
    pub seed: u64,
}

/// One forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub date: NaiveDate,
    pub actual: f64,
    pub prediction: f64,
    pub window: usize,
}

/// Out-of-sample forecasts of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkForwardRun {
    pub variant: ModelVariant,
    pub seed: u64,
    pub lookback: usize,
    pub feature_names: Vec<String>,
    /// Ordered by date.
    pub rows: Vec<RunRow>,
    /// Empty when the run was read back from CSV.
    pub windows: Vec<WindowInfo>,
}

impl WalkForwardRun {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.prediction).collect()
    }

    pub fn actuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.actual).collect()
    }

    /// Drops rows whose date is not in `keep` (sorted).
    pub fn restrict_to(&mut self, keep: &[NaiveDate]) {
        self.rows.retain(|r| keep.binary_search(&r.date).is_ok());
    }

    /// Window whose test block produced `date`.
    pub fn window_for(&self, date: NaiveDate) -> Option<&WindowInfo> {
        let row = self.rows.iter().find(|r| r.date == date)?;
        self.windows.iter().find(|w| w.plan.index == row.window)
    }

    /// `date,actual,prediction,window_index`, values in shortest
    /// round-trip form.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["date", "actual", "prediction", "window_index"])?;
        for r in &self.rows {
            w.write_record([r.date.to_string(), r.actual.to_string(), r.prediction.to_string(), r.window.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read_csv(path: impl AsRef<Path>, variant: ModelVariant) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path.as_ref())?;
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("short row: {rec:?}")));
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|e| Error::Parse(format!("{}: {e}", field(i).unwrap_or(""))))
            };
            rows.push(RunRow {
                date: field(0)?.parse().map_err(|e| Error::Parse(format!("date: {e}")))?,
                actual: num(1)?,
                prediction: num(2)?,
                window: field(3)?.parse().map_err(|e| Error::Parse(format!("window_index: {e}")))?,
            });
        }
        if rows.windows(2).any(|w| w[0].date >= w[1].date) {
            return Err(Error::Parse("run dates must strictly increase".into()));
        }
        Ok(WalkForwardRun { variant, seed: 0, lookback: 0, feature_names: Vec::new(), rows, windows: Vec::new() })
    }

    /// Per-run metadata: variant, seed, span and one block per window.
    pub fn manifest(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("variant", self.variant);
        r.set("seed", self.seed);
        r.set("lookback", self.lookback);
        r.set("features", self.feature_names.join(","));
        r.set("predictions", self.rows.len());
        if let (Some(a), Some(b)) = (self.rows.first(), self.rows.last()) {
            r.set("first_date", a.date);
            r.set("last_date", b.date);
        }
        r.set("windows", self.windows.len());
        for w in &self.windows {
            let p = &w.plan;
            let k = p.index;
            r.set(format!("window.{k}.train"), format!("{}..{}", p.train.start, p.train.end));
            r.set(format!("window.{k}.val"), format!("{}..{}", p.val.start, p.val.end));
            r.set(format!("window.{k}.test"), format!("{}..{}", p.test.start, p.test.end));
            r.set(format!("window.{k}.truncated"), p.truncated);
            r.set(format!("window.{k}.seed"), w.seed);
            if let Some(h) = &w.history {
                r.set(format!("window.{k}.epochs_run"), h.epochs_run());
                r.set(format!("window.{k}.best_epoch"), h.best_epoch);
                r.set(format!("window.{k}.best_val_loss"), h.best_val_loss);
                r.set(format!("window.{k}.stopped_early"), h.stopped_early);
            }
            if let Some(m) = &w.model {
                r.set(format!("window.{k}.scaler.feature.min"), fmt_list(m.feature_scaler.min()));
                r.set(format!("window.{k}.scaler.feature.max"), fmt_list(m.feature_scaler.max()));
                r.set(format!("window.{k}.scaler.target.min"), fmt_list(m.target_scaler.min()));
                r.set(format!("window.{k}.scaler.target.max"), fmt_list(m.target_scaler.max()));
            }
        }
        r
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Deterministic child seed; distinct streams give unrelated values.
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scaled training and validation sets of one window.
struct WindowData {
    feature_scaler: MinMaxScaler,
    target_scaler: MinMaxScaler,
    /// Scaled feature rows `0 .. test.end`.
    scaled: Vec<Vec<f64>>,
    train: Dataset,
    val: Dataset,
}

fn samples(scaled: &[Vec<f64>], targets: &[f64], rows: Range<usize>, lookback: usize, width: usize) -> Result<Dataset> {
    let mut x = Vec::with_capacity(rows.len() * lookback * width);
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        for row in &scaled[r - lookback..r] {
            x.extend_from_slice(row);
        }
        y.push(targets[r]);
    }
    Dataset::new(x, y, lookback, width)
}

fn window_data(table: &FeatureTable, plan: &WindowPlan, lookback: usize) -> Result<WindowData> {
    // Fitted on rows strictly before the validation block.
    let feature_scaler = MinMaxScaler::fit(&table.rows[..plan.val.start])?;
    let train_targets: Vec<[f64; 1]> = table.target[plan.train.clone()].iter().map(|v| [*v]).collect();
    let target_scaler = MinMaxScaler::fit(&train_targets)?;
    let scaled = feature_scaler.transform(&table.rows[..plan.test.end])?;
    let targets: Vec<f64> = table.target[..plan.test.end].iter().map(|v| target_scaler.scale(0, *v)).collect();
    let width = table.width();
    Ok(WindowData {
        train: samples(&scaled, &targets, plan.train.clone(), lookback, width)?,
        val: samples(&scaled, &targets, plan.val.clone(), lookback, width)?,
        feature_scaler,
        target_scaler,
        scaled,
    })
}

/// Walk-forward backtest of one variant on a prepared feature table.
///
/// Neural variants refit every window: scalers are fitted on the rows
/// before the validation block, the network is trained (continuing from the
/// previous window's weights) and the test block is predicted one day at a
/// time and mapped back to raw units. The GARCH variant reads its forecasts
/// from the `garch_forecast` column.
pub fn walk_forward(table: &FeatureTable, cfg: &PipelineConfig, seed: u64) -> Result<WalkForwardRun> {
    cfg.validate()?;
    let plans = window_plan(table.len(), cfg.lookback, &cfg.walk_forward)?;
    let mut run = WalkForwardRun {
        variant: table.variant,
        seed,
        lookback: cfg.lookback,
        feature_names: table.names.clone(),
        rows: Vec::new(),
        windows: Vec::new(),
    };

    if !table.variant.is_neural() {
        let g = table.column("garch_forecast").ok_or_else(|| Error::MissingColumn("garch_forecast".into()))?;
        for plan in plans {
            for r in plan.test.clone() {
                run.rows.push(RunRow {
                    date: table.dates[r],
                    actual: table.target[r],
                    prediction: g[r],
                    window: plan.index,
                });
            }
            run.windows.push(WindowInfo { plan, model: None, history: None, seed });
        }
        return Ok(run);
    }

    let mut net: Option<LstmNetwork> = None;
    for plan in plans {
        let w = plan.index;
        let wrap = |e: Error| Error::Window { window: w, source: Box::new(e) };
        let data = window_data(table, &plan, cfg.lookback).map_err(wrap)?;
        let window_seed = derive_seed(seed, w as u64);
        let mut model = match net.take() {
            Some(prev) => prev,
            None => {
                let mut c = cfg.network.clone();
                c.seed = window_seed;
                LstmNetwork::new(c, table.width()).map_err(wrap)?
            }
        };
        model.config.seed = window_seed;
        let history = train(&mut model, &data.train, &data.val).map_err(wrap)?;
        log::info!(
            "{} window {w}: {} epochs, best val loss {:.3e}",
            table.variant,
            history.epochs_run(),
            history.best_val_loss
        );
        let lb = cfg.lookback;
        let width = table.width();
        let mut seq = Vec::with_capacity(lb * width);
        for r in plan.test.clone() {
            seq.clear();
            for row in &data.scaled[r - lb..r] {
                seq.extend_from_slice(row);
            }
            let y = model.predict(&seq).map_err(wrap)?;
            let prediction = data.target_scaler.unscale(0, y).max(0.0);
            run.rows.push(RunRow { date: table.dates[r], actual: table.target[r], prediction, window: w });
        }
        run.windows.push(WindowInfo {
            plan,
            model: Some(WindowModel {
                net: model.clone(),
                feature_scaler: data.feature_scaler,
                target_scaler: data.target_scaler,
            }),
            history: Some(history),
            seed: window_seed,
        });
        net = Some(model);
    }
    Ok(run)
}

/// Random search on the first window's training and validation sets.
pub fn tune(
    table: &FeatureTable,
    cfg: &PipelineConfig,
    space: &SearchSpace,
    trials: usize,
    executions: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    let plans = window_plan(table.len(), cfg.lookback, &cfg.walk_forward)?;
    let data = window_data(table, &plans[0], cfg.lookback)?;
    random_search(space, &cfg.network, &data.train, &data.val, trials, executions, seed)
}

/// Seed of one variant's walk-forward run under a master seed.
pub fn variant_seed(master: u64, v: ModelVariant) -> u64 {
    derive_seed(master, 1000 + ModelVariant::ALL.iter().position(|x| *x == v).expect("listed") as u64)
}

/// Feature tables of every variant on a shared date grid.
///
/// GARCH forecasts are computed once (unless supplied) and shared by the
/// hybrid variants. Tables that could be built are restricted to the dates
/// they all have, so their rows line up one to one.
pub fn build_tables(
    variants: &[ModelVariant],
    data: &MarketData,
    garch: Option<&DatedSeries>,
    cfg: &PipelineConfig,
) -> BTreeMap<ModelVariant, Result<FeatureTable>> {
    let mut out = BTreeMap::new();
    let computed;
    let mut garch_err: Option<String> = None;
    let garch = match garch {
        Some(g) => Some(g),
        None if variants.iter().any(|v| v.needs_garch()) => {
            let returns = log_returns(&data.sp500).map(|r| DatedSeries { dates: r.dates, values: r.values });
            match returns.and_then(|r| garch_walk_forward(&r, &cfg.garch)) {
                Ok(f) => {
                    computed = f.series;
                    Some(&computed)
                }
                Err(e) => {
                    garch_err = Some(e.to_string());
                    None
                }
            }
        }
        None => None,
    };

    let mut tables = BTreeMap::new();
    for &v in variants {
        let t = match (&garch_err, v.needs_garch()) {
            (Some(msg), true) => Err(Error::MissingInput(format!("GARCH forecasts unavailable: {msg}"))),
            _ => build_features(v, data, garch, cfg),
        };
        match t {
            Ok(t) => {
                tables.insert(v, t);
            }
            Err(e) => {
                log::warn!("{v}: {e}");
                out.insert(v, Err(e));
            }
        }
    }
    let mut common: Option<Vec<NaiveDate>> = None;
    for t in tables.values() {
        common = Some(match common {
            None => t.dates.clone(),
            Some(c) => c.into_iter().filter(|d| t.dates.binary_search(d).is_ok()).collect(),
        });
    }
    let common = common.unwrap_or_default();
    for (v, t) in tables {
        out.insert(v, Ok(t.restrict_to(&common)));
    }
    out
}

/// Trims successful runs to the forecast dates they all share.
pub fn align_runs(runs: &mut BTreeMap<ModelVariant, Result<WalkForwardRun>>) {
    let mut shared: Option<Vec<NaiveDate>> = None;
    for r in runs.values().flatten() {
        let d = r.dates();
        shared = Some(match shared {
            None => d,
            Some(s) => s.into_iter().filter(|x| d.binary_search(x).is_ok()).collect(),
        });
    }
    if let Some(s) = shared {
        for r in runs.values_mut().flatten() {
            r.restrict_to(&s);
        }
    }
}

/// Runs every variant on a shared date grid.
///
/// See [`build_tables`] for how the inputs are aligned. A variant that
/// cannot be built or fails during training is reported in its slot; the
/// others still run and end up forecasting the same dates.
pub fn run_all(
    variants: &[ModelVariant],
    data: &MarketData,
    garch: Option<&DatedSeries>,
    cfg: &PipelineConfig,
    seed: u64,
) -> BTreeMap<ModelVariant, Result<WalkForwardRun>> {
    let mut out: BTreeMap<ModelVariant, Result<WalkForwardRun>> = build_tables(variants, data, garch, cfg)
        .into_iter()
        .map(|(v, t)| (v, t.and_then(|t| walk_forward(&t, cfg, variant_seed(seed, v)))))
        .collect();
    // Training failures can drop a variant; the rest already share dates.
    align_runs(&mut out);
    out
}
