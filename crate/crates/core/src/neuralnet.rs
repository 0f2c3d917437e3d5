//! Small convolutional network that reads an 8×8 window of matched-filter
//! samples (four symbols at 16 samples each) and classifies the
//! (past, current, future) bit triple.
//!
//! Stack: one valid 3×3 convolution with `K` kernels and tanh, one 2×2
//! average pool, one dense layer to 8 logits, softmax cross-entropy.
//! Class `c` encodes the triple as `past·4 + current·2 + future`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::waveform::{Bit, WaveformConfig};
use crate::{Error, Result};

pub const INPUT_SIDE: usize = 8;
pub const INPUT_LEN: usize = INPUT_SIDE * INPUT_SIDE;
pub const KERNEL_SIDE: usize = 3;
pub const CLASSES: usize = 8;
/// Symbols covered by one input window.
pub const WINDOW_SYMBOLS: usize = 4;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Splits the shape into (leading channels, height, width).
    fn planes(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            [h, w] => Ok((1, *h, *w)),
            [k, h, w] => Ok((*k, *h, *w)),
            s => Err(Error::Shape(format!(
                "expected a 2-D or 3-D tensor, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activated value.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

/// Valid cross-correlation, stride 1, plus per-kernel bias, then activation.
///
/// `input` is `[h, w]`, `kernels` is `[K, kh, kw]`; output is
/// `[K, h - kh + 1, w - kw + 1]`.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    biases: &[f64],
    act: Activation,
) -> Result<Tensor> {
    let [h, w] = *input.shape() else {
        return Err(Error::Shape(format!(
            "conv input must be 2-D, got {:?}",
            input.shape()
        )));
    };
    let [k, kh, kw] = *kernels.shape() else {
        return Err(Error::Shape(format!(
            "kernels must be 3-D, got {:?}",
            kernels.shape()
        )));
    };
    if biases.len() != k || kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(Error::Shape(format!(
            "input {h}x{w}, {k} kernels of {kh}x{kw}, {} biases",
            biases.len()
        )));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = input.data();
    let kern = kernels.data();
    let mut out = vec![0.0; k * oh * ow];
    for f in 0..k {
        let kf = &kern[f * kh * kw..(f + 1) * kh * kw];
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = biases[f];
                for u in 0..kh {
                    for v in 0..kw {
                        acc += kf[u * kw + v] * x[(r + u) * w + c + v];
                    }
                }
                out[(f * oh + r) * ow + c] = act.apply(acc);
            }
        }
    }
    Tensor::new(vec![k, oh, ow], out)
}

/// Non-overlapping 2×2 mean pooling over the last two dimensions.
pub fn avgpool_forward(input: &Tensor) -> Result<Tensor> {
    let (k, h, w) = input.planes()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "pooling needs even dimensions, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0; k * oh * ow];
    for f in 0..k {
        let plane = &x[f * h * w..(f + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let r0 = plane[2 * i * w + 2 * j];
                let r1 = plane[2 * i * w + 2 * j + 1];
                let r2 = plane[(2 * i + 1) * w + 2 * j];
                let r3 = plane[(2 * i + 1) * w + 2 * j + 1];
                out[(f * oh + i) * ow + j] = (r0 + r1 + r2 + r3) / 4.0;
            }
        }
    }
    let mut shape = input.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = oh;
    shape[n - 1] = ow;
    Tensor::new(shape, out)
}

/// `y_j = b_j + Σ_i w_{ij} x_i` with `weights` shaped `[n_in, n_out]`.
pub fn dense_forward(x: &[f64], weights: &Tensor, biases: &[f64]) -> Result<Vec<f64>> {
    let [n_in, n_out] = *weights.shape() else {
        return Err(Error::Shape(format!(
            "dense weights must be 2-D, got {:?}",
            weights.shape()
        )));
    };
    if x.len() != n_in || biases.len() != n_out {
        return Err(Error::Shape(format!(
            "dense layer {n_in}->{n_out} given {} inputs and {} biases",
            x.len(),
            biases.len()
        )));
    }
    let w = weights.data();
    let mut y = biases.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for (yj, &wij) in y.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
            *yj += wij * xi;
        }
    }
    Ok(y)
}

pub fn bits_to_class(past: Bit, current: Bit, future: Bit) -> usize {
    ((past as usize) << 2) | ((current as usize) << 1) | future as usize
}

pub fn class_to_bits(class: usize) -> (Bit, Bit, Bit) {
    (
        ((class >> 2) & 1) as Bit,
        ((class >> 1) & 1) as Bit,
        (class & 1) as Bit,
    )
}

/// Parameters of the conv → pool → dense stack.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub kernels: usize,
    pub activation: Activation,
    /// `[K, 3, 3]`
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// `[9K, 8]`, entry `i * 8 + j` connects pooled feature `i` to logit `j`.
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = CnnModel;

struct Forward {
    conv: Vec<f64>,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

impl CnnModel {
    pub fn conv_side() -> usize {
        INPUT_SIDE - KERNEL_SIDE + 1
    }

    pub fn pool_side() -> usize {
        Self::conv_side() / 2
    }

    pub fn features(kernels: usize) -> usize {
        kernels * Self::pool_side() * Self::pool_side()
    }

    pub fn zeros(kernels: usize, activation: Activation) -> Self {
        Self {
            kernels,
            activation,
            conv_w: vec![0.0; kernels * KERNEL_SIDE * KERNEL_SIDE],
            conv_b: vec![0.0; kernels],
            dense_w: vec![0.0; Self::features(kernels) * CLASSES],
            dense_b: vec![0.0; CLASSES],
        }
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(kernels: usize, seed: u64) -> Result<Self> {
        if kernels == 0 {
            return Err(Error::TrainingConfig("need at least one kernel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros(kernels, Activation::Tanh);
        let taps = KERNEL_SIDE * KERNEL_SIDE;
        let r_conv = (6.0 / (taps + kernels * taps) as f64).sqrt();
        for w in &mut model.conv_w {
            *w = rng.random_range(-r_conv..=r_conv);
        }
        let r_dense = (6.0 / (Self::features(kernels) + CLASSES) as f64).sqrt();
        for w in &mut model.dense_w {
            *w = rng.random_range(-r_dense..=r_dense);
        }
        Ok(model)
    }

    pub fn param_groups(&self) -> [&Vec<f64>; 4] {
        [&self.conv_w, &self.conv_b, &self.dense_w, &self.dense_b]
    }

    pub fn param_groups_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    fn check_input(input: &[f64]) -> Result<()> {
        if input.len() != INPUT_LEN {
            return Err(Error::Shape(format!(
                "expected {INPUT_LEN} inputs, got {}",
                input.len()
            )));
        }
        Ok(())
    }

    fn forward_pass(&self, input: &[f64]) -> Result<Forward> {
        Self::check_input(input)?;
        let x = Tensor::new(vec![INPUT_SIDE, INPUT_SIDE], input.to_vec())?;
        let kern = Tensor::new(
            vec![self.kernels, KERNEL_SIDE, KERNEL_SIDE],
            self.conv_w.clone(),
        )?;
        let conv = conv2d_forward(&x, &kern, &self.conv_b, self.activation)?;
        let pooled = avgpool_forward(&conv)?;
        let dense = Tensor::new(
            vec![Self::features(self.kernels), CLASSES],
            self.dense_w.clone(),
        )?;
        let logits = dense_forward(pooled.data(), &dense, &self.dense_b)?;
        Ok(Forward {
            conv: conv.into_data(),
            pooled: pooled.into_data(),
            logits,
        })
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_pass(input)?.logits)
    }

    pub fn classify(&self, input: &[f64]) -> Result<usize> {
        let logits = self.logits(input)?;
        Ok(argmax(&logits))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chaolink-cnn 1");
        let _ = writeln!(s, "kernels {}", self.kernels);
        let _ = writeln!(s, "activation {}", self.activation.name());
        for (name, values) in ["conv_w", "conv_b", "dense_w", "dense_b"]
            .iter()
            .zip(self.param_groups())
        {
            let _ = write!(s, "{name} {}", values.len());
            for v in values {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("chaolink-cnn 1") {
            return Err(bad("missing `chaolink-cnn 1` header"));
        }
        let kernels: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("kernels "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("missing kernel count"))?;
        let activation = match lines
            .next()
            .and_then(|l| l.strip_prefix("activation "))
            .map(str::trim)
        {
            Some("tanh") => Activation::Tanh,
            Some("identity") => Activation::Identity,
            _ => return Err(bad("missing or unknown activation")),
        };
        let mut model = Self::zeros(kernels, activation);
        for (name, slot) in ["conv_w", "conv_b", "dense_w", "dense_b"]
            .iter()
            .zip(model.param_groups_mut())
        {
            let line = lines
                .next()
                .ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut fields = line.split_whitespace();
            if fields.next() != Some(name) {
                return Err(bad(&format!("expected {name}")));
            }
            let count: usize = fields
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad(&format!("missing {name} length")))?;
            if count != slot.len() {
                return Err(bad(&format!(
                    "{name} has {count} values, expected {}",
                    slot.len()
                )));
            }
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| bad(&format!("bad number `{f}` in {name}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != count {
                return Err(bad(&format!(
                    "{name} declares {count} values but lists {}",
                    values.len()
                )));
            }
            *slot = values;
        }
        Ok(model)
    }
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy loss and its gradient for every parameter.
pub fn loss_and_grad(model: &CnnModel, input: &[f64], label: usize) -> Result<(f64, Gradients)> {
    if label >= CLASSES {
        return Err(Error::Label(label));
    }
    let fwd = model.forward_pass(input)?;
    let probs = softmax(&fwd.logits);
    let max = fwd.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + fwd.logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = (lse - fwd.logits[label]).max(0.0);

    let k = model.kernels;
    let cs = CnnModel::conv_side();
    let ps = CnnModel::pool_side();
    let n_feat = CnnModel::features(k);
    let mut grad = CnnModel::zeros(k, model.activation);

    let mut d_logits = probs;
    d_logits[label] -= 1.0;
    grad.dense_b.copy_from_slice(&d_logits);
    let mut d_pooled = vec![0.0; n_feat];
    for i in 0..n_feat {
        let row = &model.dense_w[i * CLASSES..(i + 1) * CLASSES];
        let grow = &mut grad.dense_w[i * CLASSES..(i + 1) * CLASSES];
        let mut acc = 0.0;
        for j in 0..CLASSES {
            grow[j] = fwd.pooled[i] * d_logits[j];
            acc += row[j] * d_logits[j];
        }
        d_pooled[i] = acc;
    }

    for f in 0..k {
        for r in 0..cs {
            for c in 0..cs {
                let idx = (f * cs + r) * cs + c;
                let d_act = d_pooled[(f * ps + r / 2) * ps + c / 2] / 4.0;
                let dz = d_act * model.activation.slope(fwd.conv[idx]);
                grad.conv_b[f] += dz;
                for u in 0..KERNEL_SIDE {
                    for v in 0..KERNEL_SIDE {
                        grad.conv_w[(f * KERNEL_SIDE + u) * KERNEL_SIDE + v] +=
                            dz * input[(r + u) * INPUT_SIDE + c + v];
                    }
                }
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch: usize,
    /// Stop once every training example is classified correctly.
    pub early_stop: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 2000,
            seed: 1,
            batch: 16,
            early_stop: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::TrainingConfig(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::TrainingConfig("epochs must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::TrainingConfig("batch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: CnnModel,
    /// Mean loss over each completed epoch.
    pub losses: Vec<f64>,
    pub accuracy: f64,
}

pub fn accuracy(model: &CnnModel, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for ex in data {
        if model.classify(&ex.input)? == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Mini-batch gradient descent with a seeded shuffle each epoch.
pub fn train(model: &CnnModel, data: &[Example], cfg: &TrainingConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    for ex in data {
        CnnModel::check_input(&ex.input)?;
        if ex.label >= CLASSES {
            return Err(Error::Label(ex.label));
        }
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a11);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut acc = CnnModel::zeros(model.kernels, model.activation);
            for &idx in batch {
                let (loss, g) = loss_and_grad(&model, &data[idx].input, data[idx].label)?;
                epoch_loss += loss;
                for (a, gv) in acc.param_groups_mut().into_iter().zip(g.param_groups()) {
                    for (x, y) in a.iter_mut().zip(gv) {
                        *x += y;
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, gv) in model.param_groups_mut().into_iter().zip(acc.param_groups()) {
                for (x, y) in p.iter_mut().zip(gv) {
                    *x -= step * y;
                }
            }
        }
        losses.push(epoch_loss / data.len() as f64);
        if cfg.early_stop && accuracy(&model, data)? == 1.0 {
            break;
        }
    }
    let accuracy = accuracy(&model, data)?;
    Ok(TrainReport {
        model,
        losses,
        accuracy,
    })
}

/// Locates per-symbol windows in a matched-filter output.
///
/// The window for symbol `w` is the `4 · n_samp` samples ending at `w`'s
/// decision instant, so it spans symbols `w - 3 ..= w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowLayout {
    pub timing_offset: usize,
    pub n_samp: usize,
}

impl WindowLayout {
    pub fn new(timing_offset: usize, cfg: &WaveformConfig) -> Result<Self> {
        if WINDOW_SYMBOLS * cfg.n_samp != INPUT_LEN {
            return Err(Error::Shape(format!(
                "a {WINDOW_SYMBOLS}-symbol window at n_samp = {} does not fill an {INPUT_SIDE}x{INPUT_SIDE} input",
                cfg.n_samp
            )));
        }
        Ok(Self {
            timing_offset,
            n_samp: cfg.n_samp,
        })
    }

    /// Index one past the window's last sample.
    fn end(&self, w: usize) -> usize {
        self.timing_offset + w * self.n_samp + 1
    }

    /// Raw samples of the window for symbol `w`, or `None` if it does not fit.
    pub fn window<'a>(&self, filtered: &'a [f64], w: usize) -> Option<&'a [f64]> {
        let end = self.end(w);
        if w + 1 < WINDOW_SYMBOLS || end > filtered.len() || end < INPUT_LEN {
            return None;
        }
        Some(&filtered[end - INPUT_LEN..end])
    }

    /// Window scaled by `1 / scale`.
    pub fn normalized_window(&self, filtered: &[f64], w: usize, scale: f64) -> Option<Vec<f64>> {
        self.window(filtered, w)
            .map(|s| s.iter().map(|v| v / scale).collect())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub examples: Vec<Example>,
    /// Window position of each example.
    pub positions: Vec<usize>,
    /// Max absolute matched-filter sample over the probe windows.
    pub scale: f64,
}

/// One example per probe window `w` with `s_{w-3..=w}` and `s_{w+1}` inside
/// the probe, labelled with `(bit_{w-1}, bit_w, bit_{w+1})`.
pub fn build_training_set(
    filtered: &[f64],
    layout: &WindowLayout,
    probe_bits: &[Bit],
) -> Result<TrainingSet> {
    let first = WINDOW_SYMBOLS - 1;
    if probe_bits.len() < WINDOW_SYMBOLS + 1 {
        return Err(Error::ProbeTooShort(format!(
            "{} probe bits, need at least {}",
            probe_bits.len(),
            WINDOW_SYMBOLS + 1
        )));
    }
    let last = probe_bits.len() - 2;
    let mut raw = Vec::with_capacity(last - first + 1);
    for w in first..=last {
        let win = layout.window(filtered, w).ok_or_else(|| {
            Error::ProbeTooShort(format!(
                "matched-filter output does not cover the window of symbol {w}"
            ))
        })?;
        raw.push((w, win));
    }
    let scale = raw
        .iter()
        .flat_map(|(_, win)| win.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::DegenerateProbe);
    }
    let mut examples = Vec::with_capacity(raw.len());
    let mut positions = Vec::with_capacity(raw.len());
    for (w, win) in raw {
        examples.push(Example {
            input: win.iter().map(|v| v / scale).collect(),
            label: bits_to_class(probe_bits[w - 1], probe_bits[w], probe_bits[w + 1]),
        });
        positions.push(w);
    }
    Ok(TrainingSet {
        examples,
        positions,
        scale,
    })
}

/// `(past, current, future)` bits from the arg-max class.
pub fn predict_bits(model: &CnnModel, window: &[f64]) -> Result<(Bit, Bit, Bit)> {
    Ok(class_to_bits(model.classify(window)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conv_zero_kernel() {
        let x = Tensor::new(vec![8, 8], (0..64).map(|v| v as f64).collect()).unwrap();
        let k = Tensor::zeros(vec![2, 3, 3]);
        let y = conv2d_forward(&x, &k, &[0.0, 0.0], Activation::Tanh).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_two_by_two_on_three_by_three() {
        let x = Tensor::new(
            vec![3, 3],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let k = Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let y = conv2d_forward(&x, &k, &[0.0], Activation::Identity).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[-4.0, -4.0, -4.0, -4.0]);
    }

    #[test]
    fn conv_delta_kernel_crops() {
        let x = Tensor::new(vec![8, 8], (0..64).map(|v| v as f64 * 0.1).collect()).unwrap();
        let mut kd = vec![0.0; 9];
        kd[0] = 1.0;
        let k = Tensor::new(vec![1, 3, 3], kd).unwrap();
        let y = conv2d_forward(&x, &k, &[0.0], Activation::Identity).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(y.data()[r * 6 + c], x.data()[r * 8 + c]);
            }
        }
        assert!(conv2d_forward(&x, &k, &[0.0, 1.0], Activation::Identity).is_err());
    }

    #[test]
    fn pooling_arithmetic() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avgpool_forward(&t).unwrap().data(), &[2.5]);
        let t = Tensor::new(vec![2, 2], vec![-1.0, -1.0, 1.0, 1.0]).unwrap();
        assert_eq!(avgpool_forward(&t).unwrap().data(), &[0.0]);
        let z = Tensor::zeros(vec![3, 6, 6]);
        let p = avgpool_forward(&z).unwrap();
        assert_eq!(p.shape(), &[3, 3, 3]);
        assert!(p.data().iter().all(|&v| v == 0.0));
        assert!(avgpool_forward(&Tensor::zeros(vec![3, 5])).is_err());
    }

    #[test]
    fn dense_arithmetic() {
        let w = Tensor::zeros(vec![3, 2]);
        assert_eq!(
            dense_forward(&[1.0, 2.0, 3.0], &w, &[0.5, -1.0]).unwrap(),
            vec![0.5, -1.0]
        );
        let w = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        assert_eq!(dense_forward(&[1.0], &w, &[0.5]).unwrap(), vec![2.5]);
        assert!(dense_forward(&[1.0, 2.0], &w, &[0.5]).is_err());
    }

    #[test]
    fn class_encoding() {
        assert_eq!(bits_to_class(1, 0, 1), 5);
        assert_eq!(bits_to_class(0, 0, 0), 0);
        assert_eq!(class_to_bits(7), (1, 1, 1));
        assert_eq!(class_to_bits(0), (0, 0, 0));
        for c in 0..8 {
            let (a, b, d) = class_to_bits(c);
            assert_eq!(bits_to_class(a, b, d), c);
        }
    }

    #[test]
    fn uniform_logits_loss() {
        let model = CnnModel::zeros(4, Activation::Tanh);
        let (loss, _) = loss_and_grad(&model, &[0.3; 64], 2).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!(matches!(
            loss_and_grad(&model, &[0.3; 64], 8),
            Err(Error::Label(8))
        ));
        assert!(loss_and_grad(&model, &[0.3; 63], 0).is_err());
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let model = CnnModel::new(3, 4).unwrap();
        let data = vec![Example {
            input: vec![0.1; 64],
            label: 3,
        }];
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            epochs: 5,
            early_stop: false,
            ..Default::default()
        };
        let report = train(&model, &data, &cfg).unwrap();
        assert_eq!(report.model, model);
        assert_eq!(report.losses.len(), 5);
        assert!(matches!(train(&model, &[], &cfg), Err(Error::EmptyDataset)));
    }

    #[test]
    fn single_example_memorized() {
        let model = CnnModel::new(8, 11).unwrap();
        let input: Vec<f64> = (0..64).map(|k| ((k as f64) * 0.7).sin()).collect();
        let data = vec![Example {
            input: input.clone(),
            label: 6,
        }];
        let cfg = TrainingConfig {
            epochs: 500,
            early_stop: false,
            ..Default::default()
        };
        let report = train(&model, &data, &cfg).unwrap();
        let (loss, _) = loss_and_grad(&report.model, &input, 6).unwrap();
        assert!(loss < 0.01, "loss {loss}");
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Example> = (0..20)
            .map(|n| Example {
                input: (0..64)
                    .map(|k| ((k * (n + 1)) as f64 * 0.05).cos())
                    .collect(),
                label: n % 8,
            })
            .collect();
        let cfg = TrainingConfig {
            epochs: 30,
            ..Default::default()
        };
        let model = CnnModel::new(4, 2).unwrap();
        let a = train(&model, &data, &cfg).unwrap();
        let b = train(&model, &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn model_text_round_trip() {
        let model = CnnModel::new(5, 8).unwrap();
        let back = CnnModel::from_text(&model.to_text()).unwrap();
        assert_eq!(model, back);
        assert!(CnnModel::from_text("nonsense").is_err());
        let truncated: String = model
            .to_text()
            .lines()
            .take(4)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(CnnModel::from_text(&truncated).is_err());
    }

    #[test]
    fn window_layout_bounds() {
        let cfg = WaveformConfig::default();
        let layout = WindowLayout::new(100, &cfg).unwrap();
        let filtered: Vec<f64> = (0..300).map(|k| k as f64).collect();
        assert!(layout.window(&filtered, 2).is_none());
        let w = layout.window(&filtered, 3).unwrap();
        assert_eq!(w.len(), 64);
        assert_eq!(*w.last().unwrap(), 148.0);
        assert!(layout.window(&filtered, 13).is_none());
        let bad = WaveformConfig { n_samp: 8, ..cfg };
        assert!(WindowLayout::new(0, &bad).is_err());
    }

    proptest! {
        #[test]
        fn pooling_preserves_mean(data in prop::collection::vec(-10.0f64..10.0, 2 * 6 * 6)) {
            let t = Tensor::new(vec![2, 6, 6], data.clone()).unwrap();
            let p = avgpool_forward(&t).unwrap();
            let m_in: f64 = data.iter().sum::<f64>() / data.len() as f64;
            let m_out: f64 = p.data().iter().sum::<f64>() / p.data().len() as f64;
            prop_assert!((m_in - m_out).abs() < 1e-12);
        }

        #[test]
        fn dense_is_affine(
            x in prop::collection::vec(-2.0f64..2.0, 6),
            w in prop::collection::vec(-1.0f64..1.0, 18),
            b in prop::collection::vec(-1.0f64..1.0, 3),
            a in -3.0f64..3.0,
        ) {
            let wt = Tensor::new(vec![6, 3], w).unwrap();
            let at_zero = dense_forward(&[0.0; 6], &wt, &b).unwrap();
            let fx = dense_forward(&x, &wt, &b).unwrap();
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let fax = dense_forward(&ax, &wt, &b).unwrap();
            for j in 0..3 {
                prop_assert!(((fax[j] - at_zero[j]) - a * (fx[j] - at_zero[j])).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_is_non_negative(seed in 0u64..1000, label in 0usize..8, input in prop::collection::vec(-1.0f64..1.0, 64)) {
            let model = CnnModel::new(2, seed).unwrap();
            let (loss, _) = loss_and_grad(&model, &input, label).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}
