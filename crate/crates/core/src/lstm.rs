//! From-scratch stacked LSTM with a linear head: a feature sequence in, one
//! scalar yield out.
//!
//! The cell is the modern formulation with a forget gate:
//!
//! ```text
//! i,f,o = sigmoid(U x_t + W h_{t-1} + b)      g = tanh(U x_t + W h_{t-1} + b)
//! c_t   = f . c_{t-1} + i . g                 h_t = o . tanh(c_t)
//! ```
//!
//! The additive cell-state carry is what keeps gradients from vanishing over
//! the 214-step season. Inputs are z-scored inside the model using stats
//! captured at training time, so a checkpoint is self-contained. Dropout
//! (train mode only) applies one fixed per-sequence mask to each layer's
//! output — between layers and before the head, never inside the recurrence
//! — using inverted scaling 1/(1-p).

use crate::error::{Error, Result};
use crate::tensor::{FeatureMatrix, FeatureTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gate order within concatenated buffers.
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;
const GATE_NAMES: [&str; 4] = ["i", "f", "g", "o"];

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Architecture description: input width, one or two hidden layers, and the
/// dropout rate applied at layer outputs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LstmLayout {
    pub input_features: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
}

impl LstmLayout {
    pub fn new(input_features: usize, hidden_sizes: Vec<usize>, dropout_rate: f64) -> Result<Self> {
        let layout = LstmLayout {
            input_features,
            hidden_sizes,
            dropout_rate,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0 {
            return Err(Error::Config("input_features must be positive".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.len() > 2 {
            return Err(Error::Config(format!(
                "layer count {} outside 1..=2",
                self.hidden_sizes.len()
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 0.5]",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.hidden_sizes.len()
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_features
        } else {
            self.hidden_sizes[layer - 1]
        }
    }
}

/// Per-feature z-scoring statistics baked into the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(features: usize) -> NormStats {
        NormStats {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    /// Stats over all (sample, day) cells per feature. Zero-variance
    /// features get std 1 so they z-score to a constant 0.
    pub fn from_tensor(tensor: &FeatureTensor) -> NormStats {
        let f_count = tensor.features();
        let cells = (tensor.samples() * tensor.time_len()) as f64;
        let mut mean = vec![0.0; f_count];
        let mut sq = vec![0.0; f_count];
        for n in 0..tensor.samples() {
            for f in 0..f_count {
                for t in 0..tensor.time_len() {
                    let v = tensor.get(n, f, t);
                    mean[f] += v;
                    sq[f] += v * v;
                }
            }
        }
        for f in 0..f_count {
            mean[f] /= cells;
            let var = (sq[f] / cells - mean[f] * mean[f]).max(0.0);
            sq[f] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        NormStats { mean, std: sq }
    }

    pub fn validate(&self, features: usize) -> Result<()> {
        if self.mean.len() != features || self.std.len() != features {
            return Err(Error::Shape(format!(
                "norm stats cover {} features, model has {features}",
                self.mean.len()
            )));
        }
        if self.std.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::Numeric("norm std must be positive and finite".into()));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("norm mean must be finite".into()));
        }
        Ok(())
    }
}

/// A named slice of the flat parameter vector, with its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offsets of one layer's blocks within the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
struct LayerOffsets {
    u: [usize; 4],
    w: [usize; 4],
    b: [usize; 4],
    f_in: usize,
    h: usize,
}

/// Stacked LSTM parameters, linear head, and normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    layout: LstmLayout,
    params: Vec<f64>,
    blocks: Vec<ParamBlock>,
    layer_offsets: Vec<LayerOffsets>,
    head_v: usize,
    head_b: usize,
    norm: NormStats,
}

/// Weight matrices are stored input-major: `u_g[f * H + j]` maps input f to
/// hidden unit j, and `w_g[k * H + j]` maps previous hidden k to j. The
/// hidden index is contiguous, so every inner loop in the forward and
/// backward scans runs over adjacent memory.
fn build_blocks(layout: &LstmLayout) -> (Vec<ParamBlock>, Vec<LayerOffsets>, usize, usize) {
    let mut blocks = Vec::new();
    let mut offsets = Vec::new();
    let mut cursor = 0;
    let mut push = |blocks: &mut Vec<ParamBlock>, name: String, rows: usize, cols: usize| {
        let b = ParamBlock {
            name,
            offset: cursor,
            rows,
            cols,
        };
        cursor += b.len();
        blocks.push(b);
        cursor - rows * cols
    };
    for layer in 0..layout.layers() {
        let f_in = layout.layer_input(layer);
        let h = layout.hidden_sizes[layer];
        let mut lo = LayerOffsets {
            u: [0; 4],
            w: [0; 4],
            b: [0; 4],
            f_in,
            h,
        };
        for (gate, name) in GATE_NAMES.iter().enumerate() {
            lo.u[gate] = push(&mut blocks, format!("layer{layer}.u_{name}"), f_in, h);
        }
        for (gate, name) in GATE_NAMES.iter().enumerate() {
            lo.w[gate] = push(&mut blocks, format!("layer{layer}.w_{name}"), h, h);
        }
        for (gate, name) in GATE_NAMES.iter().enumerate() {
            lo.b[gate] = push(&mut blocks, format!("layer{layer}.b_{name}"), h, 1);
        }
        offsets.push(lo);
    }
    let h_last = *layout.hidden_sizes.last().unwrap();
    let head_v = push(&mut blocks, "head.v".into(), 1, h_last);
    let head_b = push(&mut blocks, "head.b".into(), 1, 1);
    (blocks, offsets, head_v, head_b)
}

/// Forward evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Borrowed view of one sample's F x T block.
#[derive(Debug, Clone, Copy)]
pub struct SeqView<'a> {
    features: usize,
    time_len: usize,
    data: &'a [f64],
}

impl<'a> SeqView<'a> {
    pub fn new(features: usize, time_len: usize, data: &'a [f64]) -> Result<Self> {
        if data.len() != features * time_len {
            return Err(Error::Shape(format!(
                "sequence data length {} does not match {features} x {time_len}",
                data.len()
            )));
        }
        Ok(SeqView {
            features,
            time_len,
            data,
        })
    }

    pub fn from_matrix(m: &'a FeatureMatrix) -> Self {
        SeqView {
            features: m.features(),
            time_len: m.time_len(),
            data: m.as_slice(),
        }
    }

    pub fn from_tensor(t: &'a FeatureTensor, n: usize) -> Self {
        SeqView {
            features: t.features(),
            time_len: t.time_len(),
            data: t.sample(n),
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn time_len(&self) -> usize {
        self.time_len
    }

    #[inline]
    fn get(&self, f: usize, t: usize) -> f64 {
        self.data[f * self.time_len + t]
    }
}

/// Everything the backward pass needs from one sample's forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) masks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub(crate) t_len: usize,
    /// T x f_in inputs to this layer (z-scored for layer 0, masked h below).
    pub(crate) x: Vec<f64>,
    /// T x 4H activated gate values, ordered i, f, g, o per timestep.
    pub(crate) gates: Vec<f64>,
    /// T x H cell states.
    pub(crate) c: Vec<f64>,
    /// T x H tanh(c).
    pub(crate) tanh_c: Vec<f64>,
    /// T x H hidden states before the dropout mask.
    pub(crate) h_seq: Vec<f64>,
}

/// Per-layer hidden and cell state for streaming evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmModel {
    /// Zero-filled parameters with the given layout.
    pub fn zeros(layout: LstmLayout) -> Result<LstmModel> {
        layout.validate()?;
        let (blocks, layer_offsets, head_v, head_b) = build_blocks(&layout);
        let len = blocks.iter().map(|b| b.len()).sum();
        let norm = NormStats::identity(layout.input_features);
        Ok(LstmModel {
            layout,
            params: vec![0.0; len],
            blocks,
            layer_offsets,
            head_v,
            head_b,
            norm,
        })
    }

    /// Seeded initialization: weights uniform in (-s, s) with s = 1/sqrt(H)
    /// of the receiving layer, forget-gate biases at 1.0 so memory is open
    /// at the start of training.
    pub fn init(layout: LstmLayout, seed: u64) -> Result<LstmModel> {
        let mut model = Self::zeros(layout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in 0..model.layout.layers() {
            let lo = model.layer_offsets[layer].clone();
            let s = 1.0 / (lo.h as f64).sqrt();
            for gate in 0..4 {
                for k in 0..lo.h * lo.f_in {
                    model.params[lo.u[gate] + k] = rng.gen_range(-s..s);
                }
                for k in 0..lo.h * lo.h {
                    model.params[lo.w[gate] + k] = rng.gen_range(-s..s);
                }
                for k in 0..lo.h {
                    model.params[lo.b[gate] + k] = if gate == GATE_F { 1.0 } else { 0.0 };
                }
            }
        }
        let h_last = *model.layout.hidden_sizes.last().unwrap();
        let s = 1.0 / (h_last as f64).sqrt();
        for k in 0..h_last {
            model.params[model.head_v + k] = rng.gen_range(-s..s);
        }
        model.params[model.head_b] = 0.0;
        Ok(model)
    }

    pub fn layout(&self) -> &LstmLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    /// Name of the block containing flat parameter index `idx`.
    pub fn block_name_of(&self, idx: usize) -> &str {
        for b in &self.blocks {
            if idx >= b.offset && idx < b.offset + b.len() {
                return &b.name;
            }
        }
        "out-of-range"
    }

    pub fn block(&self, name: &str) -> Result<&[f64]> {
        let b = self
            .blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Config(format!("no parameter block named {name}")))?;
        Ok(&self.params[b.offset..b.offset + b.len()])
    }

    pub fn set_block(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let b = self
            .blocks
            .iter()
            .find(|b| b.name == name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no parameter block named {name}")))?;
        if values.len() != b.len() {
            return Err(Error::Shape(format!(
                "block {name} holds {} values, got {}",
                b.len(),
                values.len()
            )));
        }
        self.params[b.offset..b.offset + b.len()].copy_from_slice(values);
        Ok(())
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    pub fn set_norm_stats(&mut self, norm: NormStats) -> Result<()> {
        norm.validate(self.layout.input_features)?;
        self.norm = norm;
        Ok(())
    }

    /// Rebuild a model from its persisted parts.
    pub fn from_parts(layout: LstmLayout, params: Vec<f64>, norm: NormStats) -> Result<LstmModel> {
        let mut model = Self::zeros(layout)?;
        if params.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters for a layout needing {}",
                params.len(),
                model.params.len()
            )));
        }
        model.params = params;
        model.set_norm_stats(norm)?;
        Ok(model)
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState {
            h: self.layout.hidden_sizes.iter().map(|&h| vec![0.0; h]).collect(),
            c: self.layout.hidden_sizes.iter().map(|&h| vec![0.0; h]).collect(),
        }
    }

    /// One gated update of a single layer. `x` must already be normalized
    /// (layer 0) or the previous layer's hidden output.
    pub fn cell_step(
        &self,
        layer: usize,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let lo = self
            .layer_offsets
            .get(layer)
            .ok_or_else(|| Error::Shape(format!("no layer {layer}")))?;
        if x.len() != lo.f_in || h_prev.len() != lo.h || c_prev.len() != lo.h {
            return Err(Error::Shape(format!(
                "cell_step shapes: x {} (want {}), h {} / c {} (want {})",
                x.len(),
                lo.f_in,
                h_prev.len(),
                c_prev.len(),
                lo.h
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input to cell_step".into()));
        }
        let mut h = vec![0.0; lo.h];
        let mut c = vec![0.0; lo.h];
        let mut gates = vec![0.0; 4 * lo.h];
        self.step_layer(lo, x, h_prev, c_prev, &mut gates, &mut c, &mut h, None);
        Ok((h, c))
    }

    /// Advance every layer one timestep in place (inference semantics: no
    /// dropout). `x_t` is raw feature space; z-scoring happens here.
    pub fn step(&self, state: &mut LstmState, x_t: &[f64]) -> Result<f64> {
        if x_t.len() != self.layout.input_features {
            return Err(Error::Shape(format!(
                "input width {} does not match model {}",
                x_t.len(),
                self.layout.input_features
            )));
        }
        let mut input: Vec<f64> = x_t
            .iter()
            .enumerate()
            .map(|(f, v)| (v - self.norm.mean[f]) / self.norm.std[f])
            .collect();
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input to step".into()));
        }
        for layer in 0..self.layout.layers() {
            let (h, c) = self.cell_step(layer, &input, &state.h[layer], &state.c[layer])?;
            state.h[layer] = h.clone();
            state.c[layer] = c;
            input = h;
        }
        Ok(self.head(&input))
    }

    fn head(&self, h_last: &[f64]) -> f64 {
        let v = &self.params[self.head_v..self.head_v + h_last.len()];
        let mut out = self.params[self.head_b];
        for (a, b) in v.iter().zip(h_last) {
            out += a * b;
        }
        out
    }

    /// Compute one layer's gates and new state into the provided buffers.
    /// `x` must already carry the previous layer's dropout mask.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn step_layer(
        &self,
        lo: &LayerOffsets,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates_out: &mut [f64],
        c_out: &mut [f64],
        h_out: &mut [f64],
        tanh_c_out: Option<&mut [f64]>,
    ) {
        let h_size = lo.h;
        for gate in 0..4 {
            let u = &self.params[lo.u[gate]..lo.u[gate] + h_size * lo.f_in];
            let w = &self.params[lo.w[gate]..lo.w[gate] + h_size * h_size];
            let b = &self.params[lo.b[gate]..lo.b[gate] + h_size];
            let out = &mut gates_out[gate * h_size..(gate + 1) * h_size];
            out.copy_from_slice(b);
            for (f, &xf) in x.iter().enumerate() {
                let col = &u[f * h_size..(f + 1) * h_size];
                for (o, uu) in out.iter_mut().zip(col) {
                    *o += uu * xf;
                }
            }
            for (k, &hk) in h_prev.iter().enumerate() {
                let col = &w[k * h_size..(k + 1) * h_size];
                for (o, ww) in out.iter_mut().zip(col) {
                    *o += ww * hk;
                }
            }
            for o in out.iter_mut() {
                *o = if gate == GATE_G { o.tanh() } else { sigmoid(*o) };
            }
        }
        let (gi, rest) = gates_out.split_at(h_size);
        let (gf, rest) = rest.split_at(h_size);
        let (gg, go) = rest.split_at(h_size);
        match tanh_c_out {
            Some(tanh_c) => {
                for j in 0..h_size {
                    c_out[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
                    tanh_c[j] = c_out[j].tanh();
                    h_out[j] = go[j] * tanh_c[j];
                }
            }
            None => {
                for j in 0..h_size {
                    c_out[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
                    h_out[j] = go[j] * c_out[j].tanh();
                }
            }
        }
    }

    /// Full many-to-one pass. Returns the prediction and the cache needed
    /// for backpropagation through time.
    pub fn forward(&self, x: SeqView, mode: Mode, dropout_seed: u64) -> Result<(f64, ForwardCache)> {
        if x.features() != self.layout.input_features {
            return Err(Error::Shape(format!(
                "sequence has {} features, model wants {}",
                x.features(),
                self.layout.input_features
            )));
        }
        let t_len = x.time_len();
        if t_len == 0 {
            return Err(Error::Shape("sequence length is zero".into()));
        }

        // z-scored layer-0 input, t-major.
        let f0 = self.layout.input_features;
        let mut input = vec![0.0; t_len * f0];
        for t in 0..t_len {
            for f in 0..f0 {
                let v = (x.get(f, t) - self.norm.mean[f]) / self.norm.std[f];
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite normalized input at feature {f}, day {t}"
                    )));
                }
                input[t * f0 + f] = v;
            }
        }

        let p = self.layout.dropout_rate;
        let apply_dropout = mode == Mode::Train && p > 0.0;
        let mut mask_rng = ChaCha8Rng::seed_from_u64(dropout_seed);

        let mut layers = Vec::with_capacity(self.layout.layers());
        let mut masks = Vec::with_capacity(self.layout.layers());
        for layer in 0..self.layout.layers() {
            let lo = self.layer_offsets[layer].clone();
            let h_size = lo.h;
            let mut cache = LayerCache {
                t_len,
                x: std::mem::take(&mut input),
                gates: vec![0.0; t_len * 4 * h_size],
                c: vec![0.0; t_len * h_size],
                tanh_c: vec![0.0; t_len * h_size],
                h_seq: vec![0.0; t_len * h_size],
            };
            let mut h_prev = vec![0.0; h_size];
            let mut c_prev = vec![0.0; h_size];
            for t in 0..t_len {
                let x_t = &cache.x[t * lo.f_in..(t + 1) * lo.f_in];
                let gates = &mut cache.gates[t * 4 * h_size..(t + 1) * 4 * h_size];
                let c_out = &mut cache.c[t * h_size..(t + 1) * h_size];
                let tanh_c = &mut cache.tanh_c[t * h_size..(t + 1) * h_size];
                let h_out = &mut cache.h_seq[t * h_size..(t + 1) * h_size];
                self.step_layer(&lo, x_t, &h_prev, &c_prev, gates, c_out, h_out, Some(tanh_c));
                h_prev.copy_from_slice(h_out);
                c_prev.copy_from_slice(c_out);
            }
            // Per-sequence output mask, applied between layers and before
            // the head.
            let mask: Vec<f64> = if apply_dropout {
                (0..h_size)
                    .map(|_| {
                        if mask_rng.gen_bool(1.0 - p) {
                            1.0 / (1.0 - p)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                vec![1.0; h_size]
            };
            input = vec![0.0; t_len * h_size];
            for t in 0..t_len {
                for j in 0..h_size {
                    input[t * h_size + j] = cache.h_seq[t * h_size + j] * mask[j];
                }
            }
            masks.push(mask);
            layers.push(cache);
        }

        let h_last = *self.layout.hidden_sizes.last().unwrap();
        let final_masked = &input[(t_len - 1) * h_last..t_len * h_last];
        let prediction = self.head(final_masked);
        Ok((prediction, ForwardCache { layers, masks }))
    }

    /// Inference prediction for one sequence.
    pub fn predict(&self, x: SeqView) -> Result<f64> {
        Ok(self.forward(x, Mode::Infer, 0)?.0)
    }

    /// Inference predictions for every sample in a tensor.
    pub fn predict_all(&self, tensor: &FeatureTensor) -> Result<Vec<f64>> {
        (0..tensor.samples())
            .map(|n| self.predict(SeqView::from_tensor(tensor, n)))
            .collect()
    }

    /// Add one sample's parameter gradients (loss derivative `d_pred` at the
    /// prediction) into `grads`, which is aligned with [`params`](Self::params).
    ///
    /// Within the sample, per-timestep contributions are accumulated in
    /// ascending t; callers accumulate samples in ascending index order so
    /// whole-batch gradients are bit-deterministic.
    pub fn accumulate_grads(
        &self,
        cache: &ForwardCache,
        d_pred: f64,
        grads: &mut [f64],
    ) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer {} does not match parameter count {}",
                grads.len(),
                self.params.len()
            )));
        }
        let t_len = cache.layers[0].t_len;
        let n_layers = self.layout.layers();
        let h_last = *self.layout.hidden_sizes.last().unwrap();

        // Head gradients; d(pred)/d(v_j) is the masked final hidden value.
        let last = &cache.layers[n_layers - 1];
        let last_mask = &cache.masks[n_layers - 1];
        let h_final = &last.h_seq[(t_len - 1) * h_last..t_len * h_last];
        for j in 0..h_last {
            grads[self.head_v + j] += d_pred * h_final[j] * last_mask[j];
        }
        grads[self.head_b] += d_pred;

        // Gradient flowing into each layer's (pre-mask) h sequence.
        let mut dh_out = vec![0.0; t_len * h_last];
        let v = &self.params[self.head_v..self.head_v + h_last];
        for j in 0..h_last {
            dh_out[(t_len - 1) * h_last + j] = d_pred * v[j] * last_mask[j];
        }

        for layer in (0..n_layers).rev() {
            let lo = self.layer_offsets[layer].clone();
            let lc = &cache.layers[layer];
            let h_size = lo.h;
            let f_in = lo.f_in;

            // Reverse scan: compute pre-activation gate gradients per t.
            let mut dgates = vec![0.0; t_len * 4 * h_size];
            let mut dx = vec![0.0; t_len * f_in];
            let mut dh_carry = vec![0.0; h_size];
            let mut dc_carry = vec![0.0; h_size];
            for t in (0..t_len).rev() {
                let gates = &lc.gates[t * 4 * h_size..(t + 1) * 4 * h_size];
                let (gi, rest) = gates.split_at(h_size);
                let (gf, rest) = rest.split_at(h_size);
                let (gg, go) = rest.split_at(h_size);
                let tanh_c = &lc.tanh_c[t * h_size..(t + 1) * h_size];
                let dg_slice = &mut dgates[t * 4 * h_size..(t + 1) * 4 * h_size];

                for j in 0..h_size {
                    let dh = dh_out[t * h_size + j] + dh_carry[j];
                    let dc = dh * go[j] * (1.0 - tanh_c[j] * tanh_c[j]) + dc_carry[j];
                    let c_prev = if t == 0 {
                        0.0
                    } else {
                        lc.c[(t - 1) * h_size + j]
                    };
                    dg_slice[GATE_I * h_size + j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                    dg_slice[GATE_F * h_size + j] = dc * c_prev * gf[j] * (1.0 - gf[j]);
                    dg_slice[GATE_G * h_size + j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
                    dg_slice[GATE_O * h_size + j] = dh * tanh_c[j] * go[j] * (1.0 - go[j]);
                    dc_carry[j] = dc * gf[j];
                }

                // Propagate to h_{t-1} and x_t through W and U.
                for d in dh_carry.iter_mut() {
                    *d = 0.0;
                }
                let dxt = &mut dx[t * f_in..(t + 1) * f_in];
                for gate in 0..4 {
                    let dg = &dg_slice[gate * h_size..(gate + 1) * h_size];
                    let w = &self.params[lo.w[gate]..lo.w[gate] + h_size * h_size];
                    let u = &self.params[lo.u[gate]..lo.u[gate] + h_size * f_in];
                    for (k, slot) in dh_carry.iter_mut().enumerate() {
                        let row = &w[k * h_size..(k + 1) * h_size];
                        let mut acc = 0.0;
                        for (ww, g) in row.iter().zip(dg) {
                            acc += ww * g;
                        }
                        *slot += acc;
                    }
                    for (f, slot) in dxt.iter_mut().enumerate() {
                        let row = &u[f * h_size..(f + 1) * h_size];
                        let mut acc = 0.0;
                        for (uu, g) in row.iter().zip(dg) {
                            acc += uu * g;
                        }
                        *slot += acc;
                    }
                }
            }

            // Forward pass over t accumulates parameter gradients in
            // ascending time order.
            for t in 0..t_len {
                let dg_slice = &dgates[t * 4 * h_size..(t + 1) * 4 * h_size];
                let x_t = &lc.x[t * f_in..(t + 1) * f_in];
                for gate in 0..4 {
                    let dg = &dg_slice[gate * h_size..(gate + 1) * h_size];
                    for (f, &xf) in x_t.iter().enumerate() {
                        let gu = &mut grads
                            [lo.u[gate] + f * h_size..lo.u[gate] + (f + 1) * h_size];
                        for (slot, g) in gu.iter_mut().zip(dg) {
                            *slot += g * xf;
                        }
                    }
                    if t > 0 {
                        let h_prev = &lc.h_seq[(t - 1) * h_size..t * h_size];
                        for (k, &hk) in h_prev.iter().enumerate() {
                            let gw = &mut grads
                                [lo.w[gate] + k * h_size..lo.w[gate] + (k + 1) * h_size];
                            for (slot, g) in gw.iter_mut().zip(dg) {
                                *slot += g * hk;
                            }
                        }
                    }
                    let gb = &mut grads[lo.b[gate]..lo.b[gate] + h_size];
                    for (slot, g) in gb.iter_mut().zip(dg) {
                        *slot += g;
                    }
                }
            }

            // Hand the input gradient down through the mask to the layer
            // below's h sequence.
            if layer > 0 {
                let mask = &cache.masks[layer - 1];
                let below_h = self.layout.hidden_sizes[layer - 1];
                debug_assert_eq!(below_h, f_in);
                let mut next = vec![0.0; t_len * below_h];
                for t in 0..t_len {
                    for j in 0..below_h {
                        next[t * below_h + j] = dx[t * below_h + j] * mask[j];
                    }
                }
                dh_out = next;
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            let idx = grads.iter().position(|g| !g.is_finite()).unwrap();
            return Err(Error::Numeric(format!(
                "non-finite gradient in block {}",
                self.block_name_of(idx)
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layout() -> LstmLayout {
        LstmLayout::new(2, vec![3], 0.0).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = LstmModel::init(small_layout(), 42).unwrap();
        let b = LstmModel::init(small_layout(), 42).unwrap();
        assert_eq!(a.params(), b.params());
        let c = LstmModel::init(small_layout(), 43).unwrap();
        assert_ne!(a.params(), c.params());

        let s = 1.0 / 3.0f64.sqrt();
        for block in a.blocks() {
            let vals = a.block(&block.name).unwrap();
            if block.name.contains(".b_f") {
                assert!(vals.iter().all(|&v| v == 1.0));
            } else if block.name.contains(".b_") || block.name == "head.b" {
                assert!(vals.iter().all(|&v| v == 0.0));
            } else {
                assert!(vals.iter().all(|&v| v.abs() <= s), "block {}", block.name);
            }
        }
    }

    #[test]
    fn zero_params_zero_state_gives_zero_hidden() {
        let model = LstmModel::zeros(small_layout()).unwrap();
        let (h, c) = model
            .cell_step(0, &[0.0, 0.0], &[0.0; 3], &[0.0; 3])
            .unwrap();
        // o = sigmoid(0) = 0.5 but tanh(c) = tanh(0) = 0, so h = 0.
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    /// Independently coded scalar-loop oracle for one cell step.
    fn oracle_cell_step(
        model: &LstmModel,
        layer: usize,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let pre = |name: &str| -> Vec<f64> {
            let u = model.block(&format!("layer{layer}.u_{name}")).unwrap();
            let w = model.block(&format!("layer{layer}.w_{name}")).unwrap();
            let b = model.block(&format!("layer{layer}.b_{name}")).unwrap();
            let h = b.len();
            // Weights are input-major: u[f * h + j], w[k * h + j].
            (0..h)
                .map(|j| {
                    let mut acc = b[j];
                    for (f, xv) in x.iter().enumerate() {
                        acc += u[f * h + j] * xv;
                    }
                    for (k, hv) in h_prev.iter().enumerate() {
                        acc += w[k * h + j] * hv;
                    }
                    acc
                })
                .collect()
        };
        let sig = |v: Vec<f64>| -> Vec<f64> { v.iter().map(|&a| 1.0 / (1.0 + (-a).exp())).collect() };
        let i = sig(pre("i"));
        let f = sig(pre("f"));
        let g: Vec<f64> = pre("g").iter().map(|a| a.tanh()).collect();
        let o = sig(pre("o"));
        let c: Vec<f64> = (0..i.len())
            .map(|j| f[j] * c_prev[j] + i[j] * g[j])
            .collect();
        let h: Vec<f64> = (0..i.len()).map(|j| o[j] * c[j].tanh()).collect();
        (h, c)
    }

    #[test]
    fn cell_step_matches_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..5u64 {
            let model = LstmModel::init(small_layout(), seed).unwrap();
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h_prev: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let c_prev: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let (h, c) = model.cell_step(0, &x, &h_prev, &c_prev).unwrap();
            let (oh, oc) = oracle_cell_step(&model, 0, &x, &h_prev, &c_prev);
            for j in 0..3 {
                assert!((h[j] - oh[j]).abs() < 1e-12);
                assert!((c[j] - oc[j]).abs() < 1e-12);
            }
            // Bounded: |h| < 1 always (tanh times sigmoid).
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn cell_step_rejects_nonfinite() {
        let model = LstmModel::init(small_layout(), 0).unwrap();
        assert!(model
            .cell_step(0, &[f64::NAN, 0.0], &[0.0; 3], &[0.0; 3])
            .is_err());
    }

    #[test]
    fn zero_weight_forward_returns_head_bias() {
        let mut model = LstmModel::zeros(small_layout()).unwrap();
        model.set_block("head.b", &[3.25]).unwrap();
        let x = FeatureMatrix::zeros(2, 7);
        let (pred, _) = model
            .forward(SeqView::from_matrix(&x), Mode::Infer, 0)
            .unwrap();
        assert_eq!(pred, 3.25);
    }

    #[test]
    fn forward_t1_collapses_to_cell_step_plus_head() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = LstmModel::init(small_layout(), 9).unwrap();
        let mut m = FeatureMatrix::zeros(2, 1);
        m.set(0, 0, rng.gen_range(-1.0..1.0));
        m.set(1, 0, rng.gen_range(-1.0..1.0));
        let (pred, _) = model
            .forward(SeqView::from_matrix(&m), Mode::Infer, 0)
            .unwrap();
        // Norm stats are identity here, so cell_step sees the raw values.
        let (h, _c) = model
            .cell_step(0, &[m.get(0, 0), m.get(1, 0)], &[0.0; 3], &[0.0; 3])
            .unwrap();
        let v = model.block("head.v").unwrap();
        let manual: f64 =
            v.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + model.block("head.b").unwrap()[0];
        assert!((pred - manual).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_streaming_steps() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layout = LstmLayout::new(3, vec![4, 2], 0.0).unwrap();
        let mut model = LstmModel::init(layout, 10).unwrap();
        model
            .set_norm_stats(NormStats {
                mean: vec![0.5, -1.0, 2.0],
                std: vec![1.5, 0.7, 3.0],
            })
            .unwrap();
        let t_len = 6;
        let mut m = FeatureMatrix::zeros(3, t_len);
        for f in 0..3 {
            for t in 0..t_len {
                m.set(f, t, rng.gen_range(-3.0..3.0));
            }
        }
        let (pred, _) = model
            .forward(SeqView::from_matrix(&m), Mode::Infer, 0)
            .unwrap();
        let mut state = model.initial_state();
        let mut last = 0.0;
        for t in 0..t_len {
            let x_t: Vec<f64> = (0..3).map(|f| m.get(f, t)).collect();
            last = model.step(&mut state, &x_t).unwrap();
        }
        assert!((pred - last).abs() < 1e-12);
    }

    #[test]
    fn infer_ignores_dropout_seed() {
        use rand::{Rng, SeedableRng};
        let layout = LstmLayout::new(2, vec![3, 3], 0.4).unwrap();
        let model = LstmModel::init(layout, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = FeatureMatrix::zeros(2, 5);
        for f in 0..2 {
            for t in 0..5 {
                m.set(f, t, rng.gen_range(-1.0..1.0));
            }
        }
        let a = model.forward(SeqView::from_matrix(&m), Mode::Infer, 1).unwrap().0;
        let b = model.forward(SeqView::from_matrix(&m), Mode::Infer, 2).unwrap().0;
        assert_eq!(a, b);
        // Train mode with dropout differs across seeds (almost surely) but
        // is deterministic per seed.
        let t1 = model.forward(SeqView::from_matrix(&m), Mode::Train, 1).unwrap().0;
        let t1b = model.forward(SeqView::from_matrix(&m), Mode::Train, 1).unwrap().0;
        assert_eq!(t1, t1b);
        // p = 0 in train mode matches inference exactly.
        let layout0 = LstmLayout::new(2, vec![3, 3], 0.0).unwrap();
        let model0 = LstmModel::init(layout0, 3).unwrap();
        let i0 = model0.forward(SeqView::from_matrix(&m), Mode::Infer, 0).unwrap().0;
        let tr0 = model0.forward(SeqView::from_matrix(&m), Mode::Train, 9).unwrap().0;
        assert_eq!(i0, tr0);
    }

    #[test]
    fn hidden_states_stay_bounded_over_long_sequences() {
        use rand::{Rng, SeedableRng};
        let layout = LstmLayout::new(2, vec![4], 0.0).unwrap();
        let model = LstmModel::init(layout, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t_len = 214;
        let mut m = FeatureMatrix::zeros(2, t_len);
        for f in 0..2 {
            for t in 0..t_len {
                m.set(f, t, rng.gen_range(-5.0..5.0));
            }
        }
        let (pred, cache) = model
            .forward(SeqView::from_matrix(&m), Mode::Infer, 0)
            .unwrap();
        assert!(pred.is_finite());
        let lc = &cache.layers[0];
        for t in 0..t_len {
            for j in 0..4 {
                let h = lc.h_seq[t * 4 + j];
                let c = lc.c[t * 4 + j];
                assert!(h.abs() < 1.0);
                // |c_t| <= t+1 since |f|,|i| < 1 and |g| < 1.
                assert!(c.abs() <= (t + 1) as f64);
                assert!(h.is_finite() && c.is_finite());
            }
        }
    }

    #[test]
    fn from_parts_validates_lengths() {
        let model = LstmModel::init(small_layout(), 1).unwrap();
        let params = model.params().to_vec();
        let rebuilt = LstmModel::from_parts(
            small_layout(),
            params.clone(),
            model.norm_stats().clone(),
        )
        .unwrap();
        assert_eq!(rebuilt, model);
        assert!(LstmModel::from_parts(
            small_layout(),
            params[..params.len() - 1].to_vec(),
            model.norm_stats().clone()
        )
        .is_err());
        let mut bad_norm = model.norm_stats().clone();
        bad_norm.std[0] = 0.0;
        assert!(LstmModel::from_parts(small_layout(), params, bad_norm).is_err());
    }
}
