use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" | "identity" | "none" => Ok(Activation::Linear),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Mae,
}

impl LossKind {
    #[inline]
    pub fn pointwise(self, pred: f64, target: f64) -> f64 {
        let d = pred - target;
        match self {
            LossKind::Mse => d * d,
            LossKind::Mae => d.abs(),
        }
    }

    /// d(pointwise)/d(pred); the MAE subgradient at zero error is 0.
    #[inline]
    pub fn gradient(self, pred: f64, target: f64) -> f64 {
        let d = pred - target;
        match self {
            LossKind::Mse => 2.0 * d,
            LossKind::Mae => {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::Parse(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
    /// Inverted dropout applied to this layer's output during training.
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    /// Per-sequence mask on `h_{t-1}` entering the gates, every layer.
    pub recurrent_dropout: f64,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub output_activation: Activation,
}

impl NetworkConfig {
    /// Two tanh layers of 128 units, dropout 0.1, Adam at 0.001, MSE,
    /// 100 epochs in batches of 64, patience 10, rectified output.
    pub fn paper() -> Self {
        NetworkConfig {
            layers: vec![LayerSpec { units: 128, activation: Activation::Tanh, dropout: 0.1 }; 2],
            recurrent_dropout: 0.1,
            learning_rate: 0.001,
            loss: LossKind::Mse,
            epochs: 100,
            batch_size: 64,
            patience: 10,
            seed: 0,
            output_activation: Activation::Relu,
        }
    }

    /// [`NetworkConfig::paper`] shrunk to 16 units and 20 epochs.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        for l in &mut c.layers {
            l.units = 16;
        }
        c.epochs = 20;
        c
    }

    pub fn with_uniform_layers(mut self, count: usize, units: usize, activation: Activation, dropout: f64) -> Self {
        self.layers = vec![LayerSpec { units, activation, dropout }; count];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.layers.is_empty() {
            return bad("at least one LSTM layer is required".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.units == 0 {
                return bad(format!("layer {i} has zero units"));
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return bad(format!("layer {i} dropout {} outside [0, 1)", l.dropout));
            }
        }
        if !(0.0..1.0).contains(&self.recurrent_dropout) {
            return bad(format!("recurrent dropout {} outside [0, 1)", self.recurrent_dropout));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        Ok(())
    }

    /// Writes the configuration as flat keys. Per-layer values collapse to a
    /// single value when all layers agree, otherwise they are comma lists.
    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("layers", self.layers.len());
        r.set("units", join_uniform(self.layers.iter().map(|l| l.units.to_string())));
        r.set("activation", join_uniform(self.layers.iter().map(|l| l.activation.to_string())));
        r.set("dropout", join_uniform(self.layers.iter().map(|l| l.dropout.to_string())));
        r.set("recurrent_dropout", self.recurrent_dropout);
        r.set("learning_rate", self.learning_rate);
        r.set("loss", self.loss);
        r.set("epochs", self.epochs);
        r.set("batch_size", self.batch_size);
        r.set("patience", self.patience);
        r.set("seed", self.seed);
        r.set("output_activation", self.output_activation);
        r
    }

    /// Overrides fields present in `r` under `prefix` (e.g. `"network."`).
    pub fn apply_record(&mut self, r: &KvRecord, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}{k}");
        if let Some(n) = r.parse_opt::<usize>(&key("layers"))? {
            if n == 0 {
                return Err(Error::InvalidParameter("layers must be at least 1".into()));
            }
            let last =
                *self.layers.last().unwrap_or(&LayerSpec { units: 16, activation: Activation::Tanh, dropout: 0.0 });
            self.layers.resize(n, last);
        }
        let n = self.layers.len();
        if let Some(v) = r.get(&key("units")) {
            for (l, u) in self.layers.iter_mut().zip(broadcast::<usize>(v, n, "units")?) {
                l.units = u;
            }
        }
        if let Some(v) = r.get(&key("activation")) {
            for (l, a) in self.layers.iter_mut().zip(broadcast::<Activation>(v, n, "activation")?) {
                l.activation = a;
            }
        }
        if let Some(v) = r.get(&key("dropout")) {
            for (l, d) in self.layers.iter_mut().zip(broadcast::<f64>(v, n, "dropout")?) {
                l.dropout = d;
            }
        }
        if let Some(v) = r.parse_opt(&key("recurrent_dropout"))? {
            self.recurrent_dropout = v;
        }
        if let Some(v) = r.parse_opt(&key("learning_rate"))? {
            self.learning_rate = v;
        }
        if let Some(v) = r.parse_opt(&key("loss"))? {
            self.loss = v;
        }
        if let Some(v) = r.parse_opt(&key("epochs"))? {
            self.epochs = v;
        }
        if let Some(v) = r.parse_opt(&key("batch_size"))? {
            self.batch_size = v;
        }
        if let Some(v) = r.parse_opt(&key("patience"))? {
            self.patience = v;
        }
        if let Some(v) = r.parse_opt(&key("seed"))? {
            self.seed = v;
        }
        if let Some(v) = r.parse_opt(&key("output_activation"))? {
            self.output_activation = v;
        }
        self.validate()
    }

    pub fn from_record(r: &KvRecord, prefix: &str) -> Result<Self> {
        let mut c = NetworkConfig::paper();
        c.apply_record(r, prefix)?;
        Ok(c)
    }
}

fn join_uniform(values: impl Iterator<Item = String>) -> String {
    let v: Vec<String> = values.collect();
    if v.windows(2).all(|w| w[0] == w[1]) {
        v.into_iter().next().unwrap_or_default()
    } else {
        v.join(",")
    }
}

fn broadcast<T: FromStr + Clone>(raw: &str, n: usize, what: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let parsed = parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|e| Error::Parse(format!("{what} `{p}`: {e}"))))
        .collect::<Result<Vec<T>>>()?;
    match parsed.len() {
        1 => Ok(vec![parsed[0].clone(); n]),
        len if len == n => Ok(parsed),
        len => Err(Error::InvalidParameter(format!("{what} lists {len} values for {n} layers"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        let p = NetworkConfig::paper();
        p.validate().unwrap();
        assert_eq!(p.layers.len(), 2);
        assert!(p.layers.iter().all(|l| l.units == 128 && l.dropout == 0.1));
        let d = NetworkConfig::desk();
        assert!(d.layers.iter().all(|l| l.units == 16));
        assert_eq!(d.epochs, 20);
    }

    #[test]
    fn record_round_trip() {
        let mut c = NetworkConfig::desk();
        c.layers[1].units = 8;
        c.loss = LossKind::Mae;
        let r = c.to_record();
        assert_eq!(r.get("units"), Some("16,8"));
        assert_eq!(r.get("activation"), Some("tanh"));
        assert_eq!(NetworkConfig::from_record(&r, "").unwrap(), c);
    }

    #[test]
    fn layer_count_override_repeats_the_last_layer() {
        let mut c = NetworkConfig::desk();
        let r = KvRecord::parse("[network]\nlayers = 3\nactivation = relu\n").unwrap();
        c.apply_record(&r, "network.").unwrap();
        assert_eq!(c.layers.len(), 3);
        assert!(c.layers.iter().all(|l| l.units == 16 && l.activation == Activation::Relu));
    }

    #[test]
    fn rejects_invalid_values() {
        let mut c = NetworkConfig::desk();
        assert!(c.apply_record(&KvRecord::parse("dropout = 1.0").unwrap(), "").is_err());
        let mut c = NetworkConfig::desk();
        assert!(c.apply_record(&KvRecord::parse("units = 1,2,3").unwrap(), "").is_err());
        let mut c = NetworkConfig::desk();
        assert!(c.apply_record(&KvRecord::parse("learning_rate = 0").unwrap(), "").is_err());
        assert!("swish".parse::<Activation>().is_err());
    }
}
