//! Feature assembly, sequence windowing and the walk-forward protocol.
//!
//! Rows of a [`FeatureTable`] are trading days. Row `t` holds information
//! available at the close of day `t`, plus the GARCH forecast *for* day `t`
//! (built from returns before `t`). A sample whose target is the volatility
//! of row `r` is fed rows `r - lookback .. r`, so nothing dated `r` or later
//! reaches the network.
//!
//! Walk-forward windows count rows, not calendar dates. For window `w` the
//! test block starts at `initial_train + initial_val + w·refit_stride`; the
//! validation block is the `initial_val` rows before it and the training
//! block is everything earlier.

mod features;
mod walk;
mod window;

use std::fmt;
use std::str::FromStr;

pub use features::{build_features, garch_walk_forward, FeatureTable, GarchFeatureConfig, GarchForecasts, MarketData};
pub use walk::{
    align_runs, build_tables, run_all, tune, variant_seed, walk_forward, window_plan, RunRow, WalkForwardRun,
    WindowInfo, WindowModel, WindowPlan,
};
pub use window::{make_sequences, WindowedDataset};

use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::neural::NetworkConfig;
use crate::timeseries::ReturnKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelVariant {
    Garch,
    Lstm,
    LstmGarch,
    LstmGarchVix,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] =
        [ModelVariant::Garch, ModelVariant::Lstm, ModelVariant::LstmGarch, ModelVariant::LstmGarchVix];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Garch => "GARCH",
            ModelVariant::Lstm => "LSTM",
            ModelVariant::LstmGarch => "LSTM_GARCH",
            ModelVariant::LstmGarchVix => "LSTM_GARCH_VIX",
        }
    }

    /// Feature columns, in table order. `returns` is `log_returns` or
    /// `pct_change` depending on the configured return kind.
    pub fn feature_names(self, returns: ReturnKind) -> Vec<&'static str> {
        let r = match returns {
            ReturnKind::Log => "log_returns",
            ReturnKind::Pct => "pct_change",
        };
        match self {
            ModelVariant::Garch => vec!["garch_forecast"],
            ModelVariant::Lstm => vec![r, "lagged_volatility"],
            ModelVariant::LstmGarch => vec![r, "lagged_volatility", "garch_forecast"],
            ModelVariant::LstmGarchVix => vec![r, "lagged_volatility", "garch_forecast", "vix_close"],
        }
    }

    pub fn needs_garch(self) -> bool {
        self != ModelVariant::Lstm
    }

    pub fn needs_vix(self) -> bool {
        self == ModelVariant::LstmGarchVix
    }

    pub fn is_neural(self) -> bool {
        self != ModelVariant::Garch
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "GARCH" => Ok(ModelVariant::Garch),
            "LSTM" => Ok(ModelVariant::Lstm),
            "LSTM_GARCH" => Ok(ModelVariant::LstmGarch),
            "LSTM_GARCH_VIX" | "LSTM_GARCH_WITH_VIX" => Ok(ModelVariant::LstmGarchVix),
            _ => Err(Error::Parse(format!("unknown model variant `{s}`"))),
        }
    }
}

/// Row counts of the walk-forward protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkForwardConfig {
    pub initial_train: usize,
    pub initial_val: usize,
    pub refit_stride: usize,
    /// Steps ahead; only 1 is supported.
    pub horizon: usize,
}

impl WalkForwardConfig {
    /// Twelve years of training, three of validation, yearly refits.
    pub fn paper() -> Self {
        WalkForwardConfig { initial_train: 3024, initial_val: 756, refit_stride: 252, horizon: 1 }
    }

    pub fn desk() -> Self {
        WalkForwardConfig { initial_train: 504, initial_val: 252, refit_stride: 252, horizon: 1 }
    }

    pub fn first_test_index(&self) -> usize {
        self.initial_train + self.initial_val
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_train == 0 || self.initial_val == 0 || self.refit_stride == 0 {
            return Err(Error::InvalidParameter("walk-forward row counts must be positive".into()));
        }
        if self.horizon != 1 {
            return Err(Error::InvalidParameter(format!("horizon {} unsupported; only 1", self.horizon)));
        }
        Ok(())
    }
}

/// Everything that shapes one backtest apart from the data and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub return_kind: ReturnKind,
    /// Rolling window of the volatility target.
    pub vol_window: usize,
    pub lookback: usize,
    /// Multiply volatility by √252.
    pub annualize: bool,
    pub walk_forward: WalkForwardConfig,
    pub garch: GarchFeatureConfig,
    pub network: NetworkConfig,
}

impl PipelineConfig {
    pub fn paper() -> Self {
        PipelineConfig {
            return_kind: ReturnKind::Log,
            vol_window: 22,
            lookback: 22,
            annualize: false,
            walk_forward: WalkForwardConfig::paper(),
            garch: GarchFeatureConfig::paper(),
            network: NetworkConfig::paper(),
        }
    }

    /// Small networks, short windows and coarse GARCH refits.
    pub fn desk() -> Self {
        PipelineConfig {
            walk_forward: WalkForwardConfig::desk(),
            garch: GarchFeatureConfig::desk(),
            network: NetworkConfig::desk(),
            ..Self::paper()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Parse(format!("unknown profile `{other}` (expected paper or desk)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vol_window < 2 || self.lookback == 0 {
            return Err(Error::InvalidParameter("vol_window must be >= 2 and lookback >= 1".into()));
        }
        self.walk_forward.validate()?;
        self.garch.validate()?;
        self.network.validate()
    }

    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("return_kind", self.return_kind.as_str());
        r.set("vol_window", self.vol_window);
        r.set("lookback", self.lookback);
        r.set("annualize", self.annualize);
        let wf = &self.walk_forward;
        r.set("walk_forward.initial_train", wf.initial_train);
        r.set("walk_forward.initial_val", wf.initial_val);
        r.set("walk_forward.refit_stride", wf.refit_stride);
        r.set("walk_forward.horizon", wf.horizon);
        let g = &self.garch;
        r.set("garch.p", g.p);
        r.set("garch.q", g.q);
        r.set("garch.warmup", g.warmup);
        r.set("garch.refit_stride", g.refit_stride);
        r.set("garch.restarts", g.restarts);
        r.extend_prefixed("network", &self.network.to_record());
        r
    }

    /// Overrides fields present in `r`; unknown keys are rejected.
    pub fn apply_record(&mut self, r: &KvRecord) -> Result<()> {
        let mut net = KvRecord::new();
        for (k, v) in r.iter() {
            let bad = || Error::Parse(format!("bad value `{v}` for `{k}`"));
            match k {
                "return_kind" => self.return_kind = v.parse()?,
                "vol_window" => self.vol_window = v.parse().map_err(|_| bad())?,
                "lookback" => self.lookback = v.parse().map_err(|_| bad())?,
                "annualize" => self.annualize = v.parse().map_err(|_| bad())?,
                "walk_forward.initial_train" => self.walk_forward.initial_train = v.parse().map_err(|_| bad())?,
                "walk_forward.initial_val" => self.walk_forward.initial_val = v.parse().map_err(|_| bad())?,
                "walk_forward.refit_stride" => self.walk_forward.refit_stride = v.parse().map_err(|_| bad())?,
                "walk_forward.horizon" => self.walk_forward.horizon = v.parse().map_err(|_| bad())?,
                "garch.p" => self.garch.p = v.parse().map_err(|_| bad())?,
                "garch.q" => self.garch.q = v.parse().map_err(|_| bad())?,
                "garch.warmup" => self.garch.warmup = v.parse().map_err(|_| bad())?,
                "garch.refit_stride" => self.garch.refit_stride = v.parse().map_err(|_| bad())?,
                "garch.restarts" => self.garch.restarts = v.parse().map_err(|_| bad())?,
                _ => match k.strip_prefix("network.") {
                    Some(rest) => net.set(rest, v),
                    None => return Err(Error::Parse(format!("unknown pipeline key `{k}`"))),
                },
            }
        }
        if !net.is_empty() {
            self.network.apply_record(&net, "")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_sets_per_variant() {
        assert_eq!(ModelVariant::Lstm.feature_names(ReturnKind::Log), ["log_returns", "lagged_volatility"]);
        assert_eq!(ModelVariant::LstmGarch.feature_names(ReturnKind::Log).len(), 3);
        assert_eq!(ModelVariant::LstmGarchVix.feature_names(ReturnKind::Log).len(), 4);
        assert_eq!(ModelVariant::Lstm.feature_names(ReturnKind::Pct)[0], "pct_change");
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.as_str().parse::<ModelVariant>().unwrap(), v);
        }
        assert_eq!("lstm-garch".parse::<ModelVariant>().unwrap(), ModelVariant::LstmGarch);
        assert!("arima".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn config_record_round_trip() {
        let mut c = PipelineConfig::desk();
        c.lookback = 5;
        c.network.layers.truncate(1);
        let mut d = PipelineConfig::paper();
        d.apply_record(&c.to_record()).unwrap();
        assert_eq!(c, d);
        let mut bad = KvRecord::new();
        bad.set("lookbak", 3);
        assert!(d.apply_record(&bad).is_err());
    }

    #[test]
    fn paper_walk_forward_starts_testing_at_row_3780() {
        assert_eq!(WalkForwardConfig::paper().first_test_index(), 3780);
    }
}
