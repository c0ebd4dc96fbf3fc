//! A small, deterministic LSTM engine in `f64`.
//!
//! Each layer follows
//!
//! ```text
//! f_t  = σ(U_f x_t + V_f h_{t-1} + b_f)
//! i_t  = σ(U_i x_t + V_i h_{t-1} + b_i)
//! o_t  = σ(U_o x_t + V_o h_{t-1} + b_o)
//! C⁺_t = φ(U_c x_t + V_c h_{t-1} + b_c)
//! C_t  = f_t C_{t-1} + i_t C⁺_t
//! h_t  = o_t φ(C_t)
//! ```
//!
//! with φ the layer activation (`tanh` by default). Intermediate layers pass
//! their whole hidden sequence upward, the last one only its final state,
//! which a single-unit dense layer maps to the prediction.
//!
//! Gradients are computed by hand-written backpropagation through time and
//! applied with Adam.

mod adam;
mod config;
mod io;
mod lstm;
mod search;
mod train;

pub use adam::Adam;
pub use config::{Activation, LayerSpec, LossKind, NetworkConfig};
pub use lstm::{cell_forward, CellState, DenseParams, Gradients, LstmLayerParams, LstmNetwork};
pub use search::{random_search, SearchOutcome, SearchSpace, TrialResult};
pub use train::{train, Dataset, TrainHistory};

use crate::error::{Error, Result};

/// Mean squared or mean absolute error.
pub fn loss(kind: LossKind, preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("loss"));
    }
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: preds.len(), actual: targets.len() });
    }
    let n = preds.len() as f64;
    let total: f64 = preds.iter().zip(targets).map(|(p, y)| kind.pointwise(*p, *y)).sum();
    Ok(total / n)
}
