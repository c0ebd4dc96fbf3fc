//! Text format for trained networks.
//!
//! A network file is a flat key-value record:
//!
//! ```text
//! format = volcast-lstm
//! version = 1
//! input = <features>
//! config.<key> = ...           # NetworkConfig keys
//! layer.<k>.hidden = <H>
//! layer.<k>.activation = tanh | relu
//! layer.<k>.U = <4H·I values>  # gate blocks f, i, o, c; rows of width I
//! layer.<k>.V = <4H·H values>
//! layer.<k>.b = <4H values>
//! dense.w = <H values>
//! dense.b = <value>
//! dense.activation = relu | linear
//! ```
//!
//! Values are space separated and written in shortest round-trip exponent
//! form, so a save/load cycle is exact.

use std::path::Path;

use super::config::NetworkConfig;
use super::lstm::{DenseParams, LstmLayerParams, LstmNetwork};
use crate::error::{Error, Result};
use crate::kv::KvRecord;

const FORMAT: &str = "volcast-lstm";
const VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn split(raw: &str, key: &str, expected: usize) -> Result<Vec<f64>> {
    let v = raw
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("`{key}`: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: v.len() });
    }
    Ok(v)
}

impl LstmNetwork {
    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("format", FORMAT);
        r.set("version", VERSION);
        r.set("input", self.input_width());
        r.extend_prefixed("config", &self.config.to_record());
        for (k, l) in self.layers.iter().enumerate() {
            r.set(format!("layer.{k}.hidden"), l.hidden);
            r.set(format!("layer.{k}.activation"), l.activation);
            r.set(format!("layer.{k}.U"), join(&l.u));
            r.set(format!("layer.{k}.V"), join(&l.v));
            r.set(format!("layer.{k}.b"), join(&l.b));
        }
        r.set("dense.w", join(&self.dense.w));
        r.set("dense.b", format!("{:e}", self.dense.b));
        r.set("dense.activation", self.dense.activation);
        r
    }

    pub fn from_record(r: &KvRecord) -> Result<Self> {
        if r.get("format") != Some(FORMAT) {
            return Err(Error::Parse(format!("not a {FORMAT} record")));
        }
        let version: u32 = r.parse_value("version")?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported network format version {version}")));
        }
        let config = NetworkConfig::from_record(r, "config.")?;
        let mut input: usize = r.parse_value("input")?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for k in 0..config.layers.len() {
            let hidden: usize = r.parse_value(&format!("layer.{k}.hidden"))?;
            let activation = r.parse_value(&format!("layer.{k}.activation"))?;
            let key = |n: &str| format!("layer.{k}.{n}");
            let layer = LstmLayerParams {
                input,
                hidden,
                activation,
                u: split(r.require(&key("U"))?, &key("U"), 4 * hidden * input)?,
                v: split(r.require(&key("V"))?, &key("V"), 4 * hidden * hidden)?,
                b: split(r.require(&key("b"))?, &key("b"), 4 * hidden)?,
            };
            layer.validate()?;
            layers.push(layer);
            input = hidden;
        }
        let dense = DenseParams {
            w: split(r.require("dense.w")?, "dense.w", input)?,
            b: r.parse_value("dense.b")?,
            activation: r.parse_value("dense.activation")?,
        };
        Ok(LstmNetwork { layers, dense, config })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = format!("# trained LSTM network\n{}", self.to_record());
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_record(&KvRecord::read(path)?)
    }
}
