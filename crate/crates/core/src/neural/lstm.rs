use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, LossKind, NetworkConfig};
use super::train::Dataset;
use crate::error::{Error, Result};

/// Gate blocks inside `U`, `V` and `b`, in storage order.
const F: usize = 0;
const I: usize = 1;
const O: usize = 2;
const C: usize = 3;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters of one LSTM layer. Gate blocks are stacked in the order
/// f, i, o, c: `u` is `4H × I` row-major, `v` is `4H × H`, `b` is `4H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize, activation: Activation) -> Self {
        LstmLayerParams {
            input,
            hidden,
            activation,
            u: vec![0.0; 4 * hidden * input],
            v: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform in `±1/√fan_in` per matrix, zero biases except the forget
    /// gate at 1.
    pub fn init(input: usize, hidden: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, hidden, activation);
        let bu = 1.0 / (input as f64).sqrt();
        let bv = 1.0 / (hidden as f64).sqrt();
        p.u.iter_mut().for_each(|w| *w = rng.random_range(-bu..bu));
        p.v.iter_mut().for_each(|w| *w = rng.random_range(-bv..bv));
        p.b[F * hidden..(F + 1) * hidden].fill(1.0);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden;
        for (got, want) in [(self.u.len(), 4 * h * self.input), (self.v.len(), 4 * h * h), (self.b.len(), 4 * h)] {
            if got != want {
                return Err(Error::DimensionMismatch { expected: want, actual: got });
            }
        }
        if self.u.iter().chain(&self.v).chain(&self.b).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("LSTM layer weights".into()));
        }
        Ok(())
    }

    /// One time step; `gates` receives the activated f, i, o and candidate
    /// blocks.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        x: &[f64],
        h_in: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        act_c: &mut [f64],
        h: &mut [f64],
    ) {
        let (ni, nh) = (self.input, self.hidden);
        for r in 0..4 * nh {
            let urow = &self.u[r * ni..(r + 1) * ni];
            let vrow = &self.v[r * nh..(r + 1) * nh];
            let mut z = self.b[r];
            for (w, xv) in urow.iter().zip(x) {
                z += w * xv;
            }
            for (w, hv) in vrow.iter().zip(h_in) {
                z += w * hv;
            }
            gates[r] = if r < C * nh { sigmoid(z) } else { self.activation.apply(z) };
        }
        for k in 0..nh {
            let (f, i, o, g) = (gates[F * nh + k], gates[I * nh + k], gates[O * nh + k], gates[C * nh + k]);
            c[k] = f * c_prev[k] + i * g;
            act_c[k] = self.activation.apply(c[k]);
            h[k] = o * act_c[k];
        }
    }
}

/// Every intermediate quantity of a single cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    /// Candidate `C⁺_t`.
    pub candidate: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Applies the gate equations once.
pub fn cell_forward(layer: &LstmLayerParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<CellState> {
    layer.validate()?;
    for (got, want) in [(x.len(), layer.input), (h_prev.len(), layer.hidden), (c_prev.len(), layer.hidden)] {
        if got != want {
            return Err(Error::DimensionMismatch { expected: want, actual: got });
        }
    }
    let nh = layer.hidden;
    let mut gates = vec![0.0; 4 * nh];
    let (mut c, mut act_c, mut h) = (vec![0.0; nh], vec![0.0; nh], vec![0.0; nh]);
    layer.step(x, h_prev, c_prev, &mut gates, &mut c, &mut act_c, &mut h);
    Ok(CellState {
        f: gates[F * nh..(F + 1) * nh].to_vec(),
        i: gates[I * nh..(I + 1) * nh].to_vec(),
        o: gates[O * nh..(O + 1) * nh].to_vec(),
        candidate: gates[C * nh..(C + 1) * nh].to_vec(),
        c,
        h,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Vec<f64>,
    pub b: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNetwork {
    pub layers: Vec<LstmLayerParams>,
    pub dense: DenseParams,
    pub config: NetworkConfig,
}

/// Gradient buffers shaped like an [`LstmNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &LstmNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads { u: vec![0.0; l.u.len()], v: vec![0.0; l.v.len()], b: vec![0.0; l.b.len()] })
                .collect(),
            dense_w: vec![0.0; net.dense.w.len()],
            dense_b: 0.0,
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.u.fill(0.0);
            l.v.fill(0.0);
            l.b.fill(0.0);
        }
        self.dense_w.fill(0.0);
        self.dense_b = 0.0;
    }

    /// Named gradient blocks in the same order as
    /// [`LstmNetwork::named_params_mut`].
    pub fn named(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.U"), &l.u));
            out.push((format!("layer{k}.V"), &l.v));
            out.push((format!("layer{k}.b"), &l.b));
        }
        out.push(("dense.w".into(), &self.dense_w));
        out.push(("dense.b".into(), std::slice::from_ref(&self.dense_b)));
        out
    }

    fn check_finite(&self) -> Result<()> {
        for (name, g) in self.named() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok(())
    }
}

/// Dropout masks for one sequence, already scaled by `1/(1-p)`.
#[derive(Debug, Clone)]
pub(crate) struct Masks {
    /// Per layer: `T × H` for intermediate layers, `H` for the last.
    output: Vec<Option<Vec<f64>>>,
    /// Per layer: `H`, applied to `h_{t-1}` at every step.
    recurrent: Vec<Option<Vec<f64>>>,
}

fn bernoulli_mask(rng: &mut impl Rng, len: usize, p: f64) -> Option<Vec<f64>> {
    (p > 0.0).then(|| {
        let keep = 1.0 / (1.0 - p);
        (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
    })
}

#[derive(Debug, Default)]
struct LayerCache {
    x: Vec<f64>,
    h_in: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    act_c: Vec<f64>,
    h: Vec<f64>,
}

/// Forward-pass record reused across samples.
#[derive(Debug, Default)]
pub(crate) struct Cache {
    layers: Vec<LayerCache>,
    dense_in: Vec<f64>,
    pre: f64,
    pred: f64,
    // backward scratch
    dh_above: Vec<f64>,
    dh_below: Vec<f64>,
    dz: Vec<f64>,
}

impl LstmNetwork {
    /// Freshly initialized network for inputs of `width` features, seeded
    /// by `config.seed`.
    pub fn new(config: NetworkConfig, width: usize) -> Result<Self> {
        config.validate()?;
        if width == 0 {
            return Err(Error::InvalidParameter("input width must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut input = width;
        for spec in &config.layers {
            layers.push(LstmLayerParams::init(input, spec.units, spec.activation, &mut rng));
            input = spec.units;
        }
        let bound = 1.0 / (input as f64).sqrt();
        let w = (0..input).map(|_| rng.random_range(-bound..bound)).collect();
        // A small positive bias keeps a rectified head away from its dead
        // region at the start of training.
        let b = if config.output_activation == Activation::Relu { 0.1 } else { 0.0 };
        let dense = DenseParams { w, b, activation: config.output_activation };
        Ok(LstmNetwork { layers, dense, config })
    }

    /// All weights and biases zero.
    pub fn zeros(config: NetworkConfig, width: usize) -> Result<Self> {
        let mut net = Self::new(config, width)?;
        for l in &mut net.layers {
            l.u.fill(0.0);
            l.v.fill(0.0);
            l.b.fill(0.0);
        }
        net.dense.w.fill(0.0);
        net.dense.b = 0.0;
        Ok(net)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.u.len() + l.v.len() + l.b.len()).sum::<usize>() + self.dense.w.len() + 1
    }

    /// Parameter blocks in a fixed order: per layer U, V, b; then dense w, b.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (k, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{k}.U"), &mut l.u));
            out.push((format!("layer{k}.V"), &mut l.v));
            out.push((format!("layer{k}.b"), &mut l.b));
        }
        out.push(("dense.w".into(), &mut self.dense.w));
        out.push(("dense.b".into(), std::slice::from_mut(&mut self.dense.b)));
        out
    }

    /// Whether `other` has the same layer shapes (so its weights can seed
    /// this configuration).
    pub fn same_shape(&self, other: &LstmNetwork) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.input == b.input && a.hidden == b.hidden)
    }

    fn check_sequence(&self, seq: &[f64]) -> Result<usize> {
        let w = self.input_width();
        if seq.is_empty() || seq.len() % w != 0 {
            return Err(Error::DimensionMismatch { expected: w, actual: seq.len() });
        }
        Ok(seq.len() / w)
    }

    pub(crate) fn draw_masks(&self, steps: usize, rng: &mut impl Rng) -> Masks {
        let last = self.layers.len() - 1;
        let output = self
            .config
            .layers
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let len = if k == last { spec.units } else { steps * spec.units };
                bernoulli_mask(rng, len, spec.dropout)
            })
            .collect();
        let recurrent = self
            .config
            .layers
            .iter()
            .map(|spec| bernoulli_mask(rng, spec.units, self.config.recurrent_dropout))
            .collect();
        Masks { output, recurrent }
    }

    /// Prediction for one `lookback × width` sequence (row-major). With
    /// `train_mode` the dropout masks are drawn from `seed`; otherwise the
    /// call is deterministic and `seed` is ignored.
    pub fn forward(&self, seq: &[f64], train_mode: bool, seed: u64) -> Result<f64> {
        let steps = self.check_sequence(seq)?;
        let masks = train_mode.then(|| self.draw_masks(steps, &mut ChaCha8Rng::seed_from_u64(seed)));
        let mut cache = Cache::default();
        let y = self.forward_cached(seq, steps, masks.as_ref(), &mut cache);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite("network output".into()))
        }
    }

    /// Deterministic prediction (no dropout).
    pub fn predict(&self, seq: &[f64]) -> Result<f64> {
        self.forward(seq, false, 0)
    }

    pub fn predict_many(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut cache = Cache::default();
        (0..data.len())
            .map(|i| {
                let seq = data.sequence(i);
                let steps = self.check_sequence(seq)?;
                let y = self.forward_cached(seq, steps, None, &mut cache);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::NonFinite(format!("network output for sample {i}")))
                }
            })
            .collect()
    }

    pub(crate) fn forward_cached(&self, seq: &[f64], steps: usize, masks: Option<&Masks>, cache: &mut Cache) -> f64 {
        let nl = self.layers.len();
        cache.layers.resize_with(nl, LayerCache::default);
        for k in 0..nl {
            let layer = &self.layers[k];
            let (ni, nh) = (layer.input, layer.hidden);
            let (below, rest) = cache.layers.split_at_mut(k);
            let lc = &mut rest[0];
            lc.x.resize(steps * ni, 0.0);
            if k == 0 {
                lc.x.copy_from_slice(seq);
            } else {
                let prev = &below[k - 1].h;
                match masks.and_then(|m| m.output[k - 1].as_ref()) {
                    Some(mask) => lc.x.iter_mut().zip(prev.iter().zip(mask)).for_each(|(x, (h, m))| *x = h * m),
                    None => lc.x.copy_from_slice(prev),
                }
            }
            for buf in [&mut lc.h_in, &mut lc.c_prev, &mut lc.c, &mut lc.act_c, &mut lc.h] {
                buf.resize(steps * nh, 0.0);
            }
            lc.gates.resize(steps * 4 * nh, 0.0);
            let rmask = masks.and_then(|m| m.recurrent[k].as_ref());
            for t in 0..steps {
                let (h_hist, h_cur) = lc.h.split_at_mut(t * nh);
                let h_in = &mut lc.h_in[t * nh..(t + 1) * nh];
                let c_prev = &mut lc.c_prev[t * nh..(t + 1) * nh];
                if t == 0 {
                    h_in.fill(0.0);
                    c_prev.fill(0.0);
                } else {
                    let hp = &h_hist[(t - 1) * nh..];
                    match rmask {
                        Some(m) => h_in.iter_mut().zip(hp.iter().zip(m)).for_each(|(a, (h, m))| *a = h * m),
                        None => h_in.copy_from_slice(hp),
                    }
                    c_prev.copy_from_slice(&lc.c[(t - 1) * nh..t * nh]);
                }
                layer.step(
                    &lc.x[t * ni..(t + 1) * ni],
                    h_in,
                    c_prev,
                    &mut lc.gates[t * 4 * nh..(t + 1) * 4 * nh],
                    &mut lc.c[t * nh..(t + 1) * nh],
                    &mut lc.act_c[t * nh..(t + 1) * nh],
                    &mut h_cur[..nh],
                );
            }
        }
        let top = &cache.layers[nl - 1];
        let nh = self.layers[nl - 1].hidden;
        let last = &top.h[(steps - 1) * nh..steps * nh];
        cache.dense_in.clear();
        match masks.and_then(|m| m.output[nl - 1].as_ref()) {
            Some(mask) => cache.dense_in.extend(last.iter().zip(mask).map(|(h, m)| h * m)),
            None => cache.dense_in.extend_from_slice(last),
        }
        let mut pre = self.dense.b;
        for (w, h) in self.dense.w.iter().zip(&cache.dense_in) {
            pre += w * h;
        }
        cache.pre = pre;
        cache.pred = self.dense.activation.apply(pre);
        cache.pred
    }

    /// Backpropagates `dpred = ∂loss/∂prediction` for the sequence last
    /// run through [`LstmNetwork::forward_cached`], accumulating into `g`.
    pub(crate) fn backward_cached(
        &self,
        steps: usize,
        masks: Option<&Masks>,
        dpred: f64,
        cache: &mut Cache,
        g: &mut Gradients,
    ) {
        let nl = self.layers.len();
        let dpre = dpred * self.dense.activation.derivative(cache.pre, cache.pred);
        if dpre == 0.0 {
            return;
        }
        for (gw, h) in g.dense_w.iter_mut().zip(&cache.dense_in) {
            *gw += dpre * h;
        }
        g.dense_b += dpre;

        // ∂loss/∂h for the top layer: only its final step feeds the head.
        let top_h = self.layers[nl - 1].hidden;
        cache.dh_above.clear();
        cache.dh_above.resize(steps * top_h, 0.0);
        {
            let slot = &mut cache.dh_above[(steps - 1) * top_h..];
            let mask = masks.and_then(|m| m.output[nl - 1].as_ref());
            for k in 0..top_h {
                let m = mask.map_or(1.0, |m| m[k]);
                slot[k] = dpre * self.dense.w[k] * m;
            }
        }

        for k in (0..nl).rev() {
            let layer = &self.layers[k];
            let (ni, nh) = (layer.input, layer.hidden);
            let lc = &cache.layers[k];
            let lg = &mut g.layers[k];
            let rmask = masks.and_then(|m| m.recurrent[k].as_ref());
            let need_dx = k > 0;
            cache.dh_below.clear();
            if need_dx {
                cache.dh_below.resize(steps * ni, 0.0);
            }
            cache.dz.resize(4 * nh, 0.0);
            let mut dh_next = vec![0.0; nh];
            let mut dc_next = vec![0.0; nh];
            let mut dh_in = vec![0.0; nh];
            for t in (0..steps).rev() {
                let gates = &lc.gates[t * 4 * nh..(t + 1) * 4 * nh];
                let dz = &mut cache.dz;
                for j in 0..nh {
                    let dh = cache.dh_above[t * nh + j] + dh_next[j];
                    let (f, i, o, gc) = (gates[F * nh + j], gates[I * nh + j], gates[O * nh + j], gates[C * nh + j]);
                    let ac = lc.act_c[t * nh + j];
                    let dc = dc_next[j] + dh * o * layer.activation.derivative(lc.c[t * nh + j], ac);
                    let d_o = dh * ac;
                    let d_f = dc * lc.c_prev[t * nh + j];
                    let d_i = dc * gc;
                    let d_g = dc * i;
                    dc_next[j] = dc * f;
                    dz[F * nh + j] = d_f * f * (1.0 - f);
                    dz[I * nh + j] = d_i * i * (1.0 - i);
                    dz[O * nh + j] = d_o * o * (1.0 - o);
                    // The candidate's pre-activation is positive exactly when
                    // its rectified output is, so `gc` stands in for it.
                    dz[C * nh + j] = d_g * layer.activation.derivative(gc, gc);
                }
                let x = &lc.x[t * ni..(t + 1) * ni];
                let h_in = &lc.h_in[t * nh..(t + 1) * nh];
                dh_in.fill(0.0);
                for r in 0..4 * nh {
                    let d = dz[r];
                    if d == 0.0 {
                        continue;
                    }
                    lg.b[r] += d;
                    let urow = &layer.u[r * ni..(r + 1) * ni];
                    let gu = &mut lg.u[r * ni..(r + 1) * ni];
                    for c in 0..ni {
                        gu[c] += d * x[c];
                    }
                    if need_dx {
                        let dx = &mut cache.dh_below[t * ni..(t + 1) * ni];
                        for c in 0..ni {
                            dx[c] += d * urow[c];
                        }
                    }
                    if t > 0 {
                        let vrow = &layer.v[r * nh..(r + 1) * nh];
                        let gv = &mut lg.v[r * nh..(r + 1) * nh];
                        for c in 0..nh {
                            gv[c] += d * h_in[c];
                            dh_in[c] += d * vrow[c];
                        }
                    }
                }
                match rmask {
                    Some(m) => dh_next.iter_mut().zip(dh_in.iter().zip(m)).for_each(|(a, (d, m))| *a = d * m),
                    None => dh_next.copy_from_slice(&dh_in),
                }
            }
            if need_dx {
                // Route through the dropout mask between layer k-1 and k.
                if let Some(mask) = masks.and_then(|m| m.output[k - 1].as_ref()) {
                    cache.dh_below.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                }
                std::mem::swap(&mut cache.dh_above, &mut cache.dh_below);
            }
        }
    }

    /// Gradient of the mean loss over `batch` (dropout off).
    pub fn backward(&self, batch: &Dataset, loss: LossKind) -> Result<Gradients> {
        let idx: Vec<usize> = (0..batch.len()).collect();
        let mut g = Gradients::zeros_like(self);
        self.batch_gradients(batch, &idx, loss, None, &mut Cache::default(), &mut g)?;
        Ok(g)
    }

    /// Accumulates the gradient of the mean loss over `batch[idx]` into `g`
    /// (which should start cleared) and returns that mean loss.
    pub(crate) fn batch_gradients(
        &self,
        data: &Dataset,
        idx: &[usize],
        loss: LossKind,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
        cache: &mut Cache,
        g: &mut Gradients,
    ) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if data.width() != self.input_width() {
            return Err(Error::DimensionMismatch { expected: self.input_width(), actual: data.width() });
        }
        let scale = 1.0 / idx.len() as f64;
        let steps = data.lookback();
        let mut total = 0.0;
        for &i in idx {
            let masks = dropout_rng.as_deref_mut().map(|rng| self.draw_masks(steps, rng));
            let pred = self.forward_cached(data.sequence(i), steps, masks.as_ref(), cache);
            let y = data.target(i);
            total += loss.pointwise(pred, y);
            self.backward_cached(steps, masks.as_ref(), scale * loss.gradient(pred, y), cache, g);
        }
        g.check_finite()?;
        Ok(total * scale)
    }

    /// Mean loss over a dataset, dropout off.
    pub fn evaluate(&self, data: &Dataset, loss: LossKind) -> Result<f64> {
        let preds = self.predict_many(data)?;
        super::loss(loss, &preds, data.targets())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::config::LayerSpec;
    use approx::assert_abs_diff_eq;

    fn scalar_layer(u: f64, v: f64, b: f64) -> LstmLayerParams {
        LstmLayerParams {
            input: 1,
            hidden: 1,
            activation: Activation::Tanh,
            u: vec![u; 4],
            v: vec![v; 4],
            b: vec![b; 4],
        }
    }

    fn config(units: &[usize], output: Activation) -> NetworkConfig {
        let mut c = NetworkConfig::desk();
        c.layers = units.iter().map(|&u| LayerSpec { units: u, activation: Activation::Tanh, dropout: 0.0 }).collect();
        c.recurrent_dropout = 0.0;
        c.output_activation = output;
        c
    }

    #[test]
    fn zero_cell() {
        let s =
            cell_forward(&LstmLayerParams::zeros(2, 3, Activation::Tanh), &[0.3, -1.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(s.f.iter().chain(&s.i).chain(&s.o).all(|g| *g == 0.5));
        assert!(s.candidate.iter().chain(&s.c).chain(&s.h).all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_cell_trace() {
        let s = cell_forward(&scalar_layer(1.0, 0.0, 0.0), &[1.0], &[0.0], &[0.0]).unwrap();
        assert_abs_diff_eq!(s.f[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(s.candidate[0], 0.761_594_155_955_764_9, epsilon = 1e-12);
        assert_abs_diff_eq!(s.c[0], 0.556_769_941_145_939_7, epsilon = 1e-12);
        assert_abs_diff_eq!(s.h[0], 0.369_606_352_935_705_8, epsilon = 1e-12);
    }

    #[test]
    fn saturated_forget_gate_preserves_memory() {
        let mut layer = LstmLayerParams::zeros(1, 1, Activation::Tanh);
        layer.b[F] = 40.0;
        layer.b[I] = -40.0;
        let s = cell_forward(&layer, &[0.0], &[0.0], &[0.8]).unwrap();
        assert_abs_diff_eq!(s.c[0], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn cell_shape_errors() {
        let layer = LstmLayerParams::zeros(2, 3, Activation::Tanh);
        assert!(cell_forward(&layer, &[0.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(cell_forward(&layer, &[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_network_outputs_rectified_bias() {
        let mut net = LstmNetwork::zeros(config(&[4, 3], Activation::Relu), 2).unwrap();
        for b in [0.7, -0.4] {
            net.dense.b = b;
            for seq in [[0.0; 6], [1.0, -2.0, 3.0, 0.5, 9.0, -7.0]] {
                assert_eq!(net.predict(&seq).unwrap(), b.max(0.0));
            }
        }
    }

    #[test]
    fn two_layer_scalar_trace() {
        // One step through two scalar cells and a linear head.
        let mut net = LstmNetwork::zeros(config(&[1, 1], Activation::Linear), 1).unwrap();
        net.layers[0] = scalar_layer(1.0, 0.0, 0.0);
        net.layers[1] = scalar_layer(1.0, 0.0, 0.0);
        net.dense.w = vec![2.0];
        net.dense.b = 0.5;
        let h1 = 0.369_606_352_935_705_8_f64;
        let s = 1.0 / (1.0 + (-h1).exp());
        let c2 = s * h1.tanh();
        let h2 = s * c2.tanh();
        assert_abs_diff_eq!(net.predict(&[1.0]).unwrap(), 2.0 * h2 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn eval_mode_is_deterministic_and_train_mode_uses_masks() {
        let mut c = config(&[5, 4], Activation::Linear);
        c.layers[0].dropout = 0.5;
        c.recurrent_dropout = 0.3;
        let net = LstmNetwork::new(c, 2).unwrap();
        let seq = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let a = net.forward(&seq, false, 1).unwrap();
        assert_eq!(a.to_bits(), net.forward(&seq, false, 2).unwrap().to_bits());
        assert_eq!(net.forward(&seq, true, 3).unwrap(), net.forward(&seq, true, 3).unwrap());
        let draws: Vec<f64> = (0..10).map(|s| net.forward(&seq, true, s).unwrap()).collect();
        assert!(draws.iter().any(|d| *d != a));
    }

    #[test]
    fn relu_head_is_never_negative() {
        let mut c = config(&[6], Activation::Relu);
        c.seed = 9;
        let net = LstmNetwork::new(c, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let seq: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!(net.predict(&seq).unwrap() >= 0.0);
        }
    }

    #[test]
    fn rejects_misshaped_sequences() {
        let net = LstmNetwork::new(config(&[3], Activation::Linear), 2).unwrap();
        assert!(net.predict(&[0.0; 5]).is_err());
        assert!(net.predict(&[]).is_err());
    }
}
