//! Experiment configuration files and sensitivity sweeps.
//!
//! A configuration is a sectioned key-value file (see [`crate::kv`]):
//!
//! ```text
//! seed = 7
//!
//! [data]
//! sp500 = sp500.csv          # relative to the config file
//! vix = vix.csv
//! start = 2000-01-01
//! end = 2016-12-31
//!
//! [run]
//! variants = GARCH, LSTM_GARCH   # or `all`
//! profile = desk
//!
//! [pipeline]                 # overrides on top of the profile
//! lookback = 22
//! network.epochs = 30
//!
//! [tuner]
//! trials = 0                 # 0 disables the random search
//!
//! [sweep]
//! variant = LSTM_GARCH_VIX
//! builtin = sensitivity      # the seven standard scenarios
//! short_lookback = lookback=10
//! ```
//!
//! Every sweep scenario changes exactly one pipeline key.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::pipeline::{run_all, MarketData, ModelVariant, PipelineConfig, WalkForwardRun};
use crate::timeseries::{ingest_csv, ColumnMap, DatedSeries, SkippedRow};

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub sp500: PathBuf,
    pub vix: Option<PathBuf>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub close_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            sp500: PathBuf::from("sp500.csv"),
            vix: None,
            start: None,
            end: None,
            close_column: "Close".into(),
        }
    }
}

/// Loaded prices plus what ingestion skipped.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub market: MarketData,
    pub skipped_sp500: Vec<SkippedRow>,
    pub skipped_vix: Vec<SkippedRow>,
}

impl DataConfig {
    pub fn load(&self) -> Result<LoadedData> {
        let columns = ColumnMap { close: self.close_column.clone(), ..ColumnMap::default() };
        let sp = ingest_csv(&self.sp500, &columns)?;
        let sp500 = sp.series.between(self.start, self.end);
        if sp500.is_empty() {
            return Err(Error::NoValidRows(format!("{} within the configured dates", self.sp500.display())));
        }
        let (vix, skipped_vix) = match &self.vix {
            Some(path) => {
                let v = ingest_csv(path, &ColumnMap::default())?;
                (Some(v.series.between(self.start, self.end)), v.skipped)
            }
            None => (None, Vec::new()),
        };
        Ok(LoadedData { market: MarketData { sp500, vix }, skipped_sp500: sp.skipped, skipped_vix })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunerConfig {
    /// 0 disables tuning.
    pub trials: usize,
    pub executions: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig { trials: 0, executions: 1 }
    }
}

/// One-key override of the base pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub label: String,
    /// Pipeline key, e.g. `network.loss`.
    pub key: String,
    pub value: String,
}

impl Scenario {
    pub fn new(label: &str, key: &str, value: &str) -> Self {
        Scenario { label: label.into(), key: key.into(), value: value.into() }
    }

    /// Parses `key=value`.
    pub fn parse(label: &str, spec: &str) -> Result<Self> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("sweep `{label}`: expected `key=value`, got `{spec}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() || v.contains('=') {
            return Err(Error::Parse(format!("sweep `{label}` must override exactly one key: `{spec}`")));
        }
        Ok(Scenario::new(label, k, v))
    }
}

/// Loss, input, lookback, depth and activation alternatives to the base
/// setup.
pub fn sensitivity_scenarios() -> Vec<Scenario> {
    vec![
        Scenario::new("mae_loss", "network.loss", "mae"),
        Scenario::new("pct_input", "return_kind", "pct"),
        Scenario::new("lookback_5", "lookback", "5"),
        Scenario::new("lookback_66", "lookback", "66"),
        Scenario::new("one_layer", "network.layers", "1"),
        Scenario::new("three_layers", "network.layers", "3"),
        Scenario::new("relu_relu", "network.activation", "relu"),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub variants: Vec<ModelVariant>,
    pub profile: String,
    /// `[pipeline]` entries, applied over the profile.
    pub overrides: KvRecord,
    pub pipeline: PipelineConfig,
    pub tuner: TunerConfig,
    pub sweep_variant: ModelVariant,
    pub sweep: Vec<Scenario>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            data: DataConfig::default(),
            variants: ModelVariant::ALL.to_vec(),
            profile: "paper".into(),
            overrides: KvRecord::new(),
            pipeline: PipelineConfig::paper(),
            tuner: TunerConfig::default(),
            sweep_variant: ModelVariant::LstmGarchVix,
            sweep: Vec::new(),
        }
    }
}

fn parse_variants(raw: &str) -> Result<Vec<ModelVariant>> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelVariant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v: ModelVariant = part.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("run.variants lists no variant".into()));
    }
    Ok(out)
}

fn parse_date(key: &str, raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| Error::Parse(format!("{key} `{raw}`: {e}")))
}

impl ExperimentConfig {
    /// Parses a configuration; relative data paths are resolved against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let r = KvRecord::parse(text)?;
        let mut c = ExperimentConfig::default();
        let mut profile = None;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p
            }
        };
        let mut builtin = false;
        for (k, v) in r.iter() {
            if let Some(rest) = k.strip_prefix("pipeline.") {
                c.overrides.set(rest, v);
                continue;
            }
            if let Some(label) = k.strip_prefix("sweep.") {
                match label {
                    "variant" => c.sweep_variant = v.parse()?,
                    "builtin" => match v {
                        "sensitivity" => builtin = true,
                        "none" => {}
                        other => return Err(Error::Parse(format!("unknown sweep.builtin `{other}`"))),
                    },
                    _ => c.sweep.push(Scenario::parse(label, v)?),
                }
                continue;
            }
            match k {
                "seed" => c.seed = v.parse().map_err(|_| Error::Parse(format!("bad seed `{v}`")))?,
                "data.sp500" => c.data.sp500 = resolve(v),
                "data.vix" => c.data.vix = Some(resolve(v)),
                "data.start" => c.data.start = Some(parse_date(k, v)?),
                "data.end" => c.data.end = Some(parse_date(k, v)?),
                "data.close_column" => c.data.close_column = v.to_string(),
                "run.variants" | "run.variant" => c.variants = parse_variants(v)?,
                "run.profile" => profile = Some(v.to_string()),
                "tuner.trials" => {
                    c.tuner.trials = v.parse().map_err(|_| Error::Parse(format!("bad tuner.trials `{v}`")))?
                }
                "tuner.executions" => {
                    c.tuner.executions = v.parse().map_err(|_| Error::Parse(format!("bad tuner.executions `{v}`")))?
                }
                _ => return Err(Error::Parse(format!("unknown configuration key `{k}`"))),
            }
        }
        if builtin {
            let mut all = sensitivity_scenarios();
            all.append(&mut c.sweep);
            c.sweep = all;
        }
        c.set_profile(profile.as_deref().unwrap_or("paper"))?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Rebuilds the pipeline from a named profile plus the overrides.
    pub fn set_profile(&mut self, name: &str) -> Result<()> {
        let mut p = PipelineConfig::profile(name)?;
        p.apply_record(&self.overrides)?;
        p.validate()?;
        self.profile = name.to_string();
        self.pipeline = p;
        Ok(())
    }

    /// Adds (or replaces) one pipeline override.
    pub fn set_override(&mut self, key: &str, value: impl std::fmt::Display) -> Result<()> {
        self.overrides.set(key, value);
        let profile = self.profile.clone();
        self.set_profile(&profile)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.tuner.trials > 0 && self.tuner.executions == 0 {
            return Err(Error::InvalidParameter("tuner.executions must be at least 1".into()));
        }
        for (i, s) in self.sweep.iter().enumerate() {
            if self.sweep[..i].iter().any(|o| o.label == s.label) {
                return Err(Error::InvalidParameter(format!("sweep label `{}` used twice", s.label)));
            }
            self.scenario(s)?;
        }
        Ok(())
    }

    /// Configuration echo: every setting that affects results.
    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("seed", self.seed);
        r.set("data.sp500", self.data.sp500.display());
        r.set("data.vix", self.data.vix.as_ref().map_or(String::new(), |p| p.display().to_string()));
        r.set("data.start", self.data.start.map_or(String::new(), |d| d.to_string()));
        r.set("data.end", self.data.end.map_or(String::new(), |d| d.to_string()));
        r.set("data.close_column", &self.data.close_column);
        r.set("run.variants", self.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","));
        r.set("run.profile", &self.profile);
        r.extend_prefixed("pipeline", &self.pipeline.to_record());
        r.set("tuner.trials", self.tuner.trials);
        r.set("tuner.executions", self.tuner.executions);
        r.set("sweep.variant", self.sweep_variant);
        r
    }

    /// The base configuration with one scenario applied and the sweep
    /// cleared. Fails unless exactly one recorded key changes.
    pub fn scenario(&self, s: &Scenario) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        c.sweep.clear();
        c.set_override(&s.key, &s.value).map_err(|e| Error::Parse(format!("sweep `{}`: {e}", s.label)))?;
        let base = self.to_record();
        let changed = c.to_record();
        let diff = base.diff_keys(&changed);
        if diff.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "sweep `{}` changes {} keys ({}) instead of one",
                s.label,
                diff.len(),
                diff.join(", ")
            )));
        }
        Ok(c)
    }
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub scenario: Option<Scenario>,
    pub config: ExperimentConfig,
    pub run: Result<WalkForwardRun>,
}

impl ScenarioOutcome {
    pub fn label(&self) -> &str {
        self.scenario.as_ref().map_or("base", |s| s.label.as_str())
    }

    pub fn description(&self) -> String {
        match &self.scenario {
            Some(s) => format!("{} = {}", s.key, s.value),
            None => "base".into(),
        }
    }

    fn metrics(&self) -> Option<(f64, f64)> {
        let r = self.run.as_ref().ok()?;
        let (p, a) = (r.predictions(), r.actuals());
        Some((crate::evaluate::mae(&p, &a).ok()?, crate::evaluate::rmse(&p, &a).ok()?))
    }
}

/// Base run first, then one entry per scenario in configuration order.
#[derive(Debug)]
pub struct SweepOutcome {
    pub variant: ModelVariant,
    pub outcomes: Vec<ScenarioOutcome>,
}

/// Runs the base configuration and every scenario on `cfg.sweep_variant`.
///
/// GARCH forecasts are shared unless a scenario changes a GARCH key. A
/// failing scenario is recorded and the sweep continues.
pub fn run_sweep(cfg: &ExperimentConfig, data: &MarketData, garch: Option<&DatedSeries>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let v = cfg.sweep_variant;
    let run_one = |c: &ExperimentConfig, g: Option<&DatedSeries>| -> Result<WalkForwardRun> {
        run_all(&[v], data, g, &c.pipeline, c.seed).remove(&v).expect("requested variant is reported")
    };
    let shared = match (garch, v.needs_garch()) {
        (Some(g), _) => Some(g.clone()),
        (None, true) => {
            let r = crate::timeseries::log_returns(&data.sp500)?;
            let returns = DatedSeries { dates: r.dates, values: r.values };
            Some(crate::pipeline::garch_walk_forward(&returns, &cfg.pipeline.garch)?.series)
        }
        (None, false) => None,
    };
    let mut outcomes =
        vec![ScenarioOutcome { scenario: None, config: cfg.clone(), run: run_one(cfg, shared.as_ref()) }];
    for s in &cfg.sweep {
        let c = cfg.scenario(s)?;
        let g = if s.key.starts_with("garch.") { None } else { shared.as_ref() };
        log::info!("sweep scenario {} ({} = {})", s.label, s.key, s.value);
        let run = run_one(&c, g);
        if let Err(e) = &run {
            log::warn!("sweep scenario {} failed: {e}", s.label);
        }
        outcomes.push(ScenarioOutcome { scenario: Some(s.clone()), config: c, run });
    }
    Ok(SweepOutcome { variant: v, outcomes })
}

impl SweepOutcome {
    /// One row per run; `(*)` marks the base and `+` a metric better than
    /// the base's.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let base = self.outcomes[0].metrics();
        let w = self.outcomes.iter().map(|o| o.label().len() + o.description().len() + 3).max().unwrap_or(10).max(12);
        let _ = writeln!(s, "Sensitivity of {} (* = base, + = better than base)", self.variant);
        let _ = writeln!(s, "{:<w$}  {:>11}  {:>11}", "case", "MAE", "RMSE");
        for (i, o) in self.outcomes.iter().enumerate() {
            let name = if i == 0 { "base (*)".to_string() } else { format!("{}: {}", o.label(), o.description()) };
            match (o.metrics(), &o.run) {
                (Some((mae, rmse)), _) => {
                    let mark = |x: f64, b: Option<f64>| if i > 0 && b.is_some_and(|b| x < b) { "+" } else { " " };
                    let line = format!(
                        "{name:<w$}  {mae:>10.3e}{}  {rmse:>10.3e}{}",
                        mark(mae, base.map(|b| b.0)),
                        mark(rmse, base.map(|b| b.1))
                    );
                    let _ = writeln!(s, "{}", line.trim_end());
                }
                (None, Err(e)) => {
                    let _ = writeln!(s, "{name:<w$}  failed: {e}");
                }
                (None, Ok(_)) => {
                    let _ = writeln!(s, "{name:<w$}  no forecasts");
                }
            }
        }
        s
    }

    /// Summary as CSV rows: label, key, value, base flag, MAE, RMSE, error.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["case", "key", "value", "base", "mae", "rmse", "error"])?;
        for (i, o) in self.outcomes.iter().enumerate() {
            let (k, v) =
                o.scenario.as_ref().map_or((String::new(), String::new()), |s| (s.key.clone(), s.value.clone()));
            let (mae, rmse) =
                o.metrics().map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
            let err = o.run.as_ref().err().map_or(String::new(), |e| e.to_string());
            w.write_record([o.label().to_string(), k, v, (i == 0).to_string(), mae, rmse, err])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
