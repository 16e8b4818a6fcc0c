//! Supervised training of spike-time networks.
//!
//! The forward pass records each neuron's causal prefix, which makes the
//! firing time a smooth function of the weights and of the causal input
//! times:
//!
//! ```text
//! d z_out / d w_p = (z_p - z_out) / (sum_C w - threshold)
//! d z_out / d z_p =  w_p          / (sum_C w - threshold)
//! ```
//!
//! Gradients are propagated in the time domain (`dt = dz / z`), where both
//! expressions are independent of the reference each layer measures z from.
//! Changes of the causal sets themselves are not differentiated.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate_dims, LayerWeights, Model, DEFAULT_DIMS};
use crate::rng;
use crate::spike::{first_to_fire, forward_recorded, network_forward, KernelConfig, SpikeTime};

/// Samples per gradient work unit. Fixed so the summation order, and hence
/// the trained weights, do not depend on the thread count.
const GRAD_CHUNK: usize = 8;
/// Default cap on each neuron's incoming-weight gradient norm.
pub const GRAD_CLIP: f64 = 0.1;
/// Synaptic time constant used for training, in microseconds.
pub const TRAIN_TAU_SYN_US: f64 = 0.1;

/// One encoded training or test pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub spikes: Vec<SpikeTime>,
    pub label: usize,
}

/// Weight initialisation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct InitScheme {
    /// Weights are drawn from U(-a, a) with standard deviation
    /// `gain / sqrt(fan_in)`.
    pub gain: f64,
    /// Rows whose sum falls below `threshold * (1 + margin) + row_excess`
    /// are shifted up to exactly that sum.
    pub margin: f64,
    pub row_excess: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme {
            gain: 1.0,
            margin: 0.25,
            row_excess: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dims: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// L2 coefficient, applied in the SGD update.
    pub l2_lambda: f64,
    /// Coefficient of the row-sum penalty that keeps neurons able to fire.
    pub weight_sum_penalty: f64,
    /// Required row-sum margin above threshold for the penalty.
    pub firing_margin: f64,
    /// Silent output neurons are scored as firing this long after the
    /// latest output that did fire (tau_syn units).
    pub silent_clamp_offset: f64,
    /// Cap on the Euclidean norm of each neuron's incoming-weight gradient.
    /// A neuron that only just reaches threshold has a near-zero
    /// `sum(w) - threshold`, and its gradient can be orders of magnitude
    /// larger than the rest.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub init: InitScheme,
    pub kernel: KernelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: DEFAULT_DIMS.to_vec(),
            learning_rate: 0.01,
            batch_size: 60,
            max_epochs: 100,
            l2_lambda: 1e-4,
            weight_sum_penalty: 100.0,
            firing_margin: 0.25,
            silent_clamp_offset: 5.0,
            grad_clip: Some(GRAD_CLIP),
            seed: 0,
            init: InitScheme::default(),
            kernel: KernelConfig {
                tau_syn: TRAIN_TAU_SYN_US,
                ..KernelConfig::default()
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        validate_dims(&self.dims)?;
        self.kernel.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad(format!("l2_lambda must be >= 0, got {}", self.l2_lambda));
        }
        if !(self.weight_sum_penalty >= 0.0 && self.firing_margin >= 0.0) {
            return bad("penalty coefficient and margin must be >= 0".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be > 0, got {c}"));
            }
        }
        if !(self.silent_clamp_offset > 0.0) {
            return bad("silent_clamp_offset must be > 0".into());
        }
        if !(self.init.gain >= 0.0 && self.init.margin >= 0.0 && self.init.row_excess >= 0.0) {
            return bad("init parameters must be >= 0".into());
        }
        Ok(())
    }
}

/// Weight gradients, one matrix per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerWeights>,
}

impl Gradients {
    pub fn zeros_like(m: &Model) -> Self {
        Gradients {
            layers: m
                .layers()
                .iter()
                .map(|l| LayerWeights::zeros(l.rows(), l.cols()))
                .collect(),
        }
    }

    /// Rescales every neuron's incoming-weight gradient whose norm exceeds
    /// `max_norm` down to it.
    pub fn clip_row_norms(&mut self, max_norm: f64) {
        for l in &mut self.layers {
            let cols = l.cols();
            for row in l.as_mut_slice().chunks_mut(cols) {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    row.iter_mut().for_each(|x| *x *= s);
                }
            }
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub test_accuracy: f64,
    pub train_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_model: Model,
    pub final_model: Model,
}

impl TrainReport {
    pub fn best_accuracy(&self) -> f64 {
        self.epochs[self.best_epoch - 1].test_accuracy
    }

    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test_accuracy)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

/// Random initial model with default scheme and kernel.
pub fn init_weights(dims: &[usize], seed: u64) -> Result<Model> {
    init_weights_with(dims, seed, &InitScheme::default(), KernelConfig::default())
}

pub fn init_weights_with(dims: &[usize], seed: u64, scheme: &InitScheme, kernel: KernelConfig) -> Result<Model> {
    validate_dims(dims)?;
    kernel.validate()?;
    let mut rng = rng::stream(seed, "init-weights");
    let min_sum = kernel.threshold * (1.0 + scheme.margin) + scheme.row_excess;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let half_width = scheme.gain * (3.0 / fan_in as f64).sqrt();
        let mut layer = LayerWeights::zeros(fan_out, fan_in);
        for r in 0..fan_out {
            let row = layer.row_mut(r);
            for w in row.iter_mut() {
                *w = if half_width > 0.0 {
                    rng.random_range(-half_width..half_width)
                } else {
                    0.0
                };
            }
            let sum: f64 = row.iter().sum();
            if sum < min_sum {
                let shift = (min_sum - sum) / fan_in as f64;
                row.iter_mut().for_each(|w| *w += shift);
            }
        }
        layers.push(layer);
    }
    Model::new(dims.to_vec(), layers, kernel)
}

/// Output times with silent neurons replaced by the clamp time, plus the
/// index that the clamp time follows (the latest firing neuron).
fn clamped_times(out_times: &[SpikeTime], clamp_offset: f64) -> Result<(Vec<f64>, usize)> {
    let mut latest: Option<(usize, f64)> = None;
    for (j, t) in out_times.iter().enumerate() {
        if let Some(t) = t.value() {
            if latest.map_or(true, |(_, lt)| t > lt) {
                latest = Some((j, t));
            }
        }
    }
    let (latest_idx, latest_t) = latest.ok_or(Error::DegenerateOutput)?;
    let clamp = latest_t + clamp_offset;
    let times = out_times.iter().map(|t| t.value().unwrap_or(clamp)).collect();
    Ok((times, latest_idx))
}

fn softmax_neg(times: &[f64]) -> Vec<f64> {
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = times.iter().map(|&t| (t_min - t).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Cross-entropy of a softmax over negated output times. Silent outputs are
/// clamped to 5 tau_syn after the latest firing output.
pub fn loss(out_times: &[SpikeTime], label: usize) -> Result<f64> {
    loss_with_clamp(out_times, label, TrainConfig::default().silent_clamp_offset)
}

pub fn loss_with_clamp(out_times: &[SpikeTime], label: usize, clamp_offset: f64) -> Result<f64> {
    loss_and_time_grad(out_times, label, clamp_offset).map(|(l, _)| l)
}

/// Loss and its gradient with respect to each output firing time. The
/// gradient of clamped entries is routed to the neuron the clamp follows.
fn loss_and_time_grad(out_times: &[SpikeTime], label: usize, clamp_offset: f64) -> Result<(f64, Vec<f64>)> {
    if label >= out_times.len() {
        return Err(Error::DatasetMismatch(format!(
            "label {label} out of range for {} outputs",
            out_times.len()
        )));
    }
    let (times, latest) = clamped_times(out_times, clamp_offset)?;
    let p = softmax_neg(&times);
    let loss = -p[label].ln();
    let mut grad: Vec<f64> = p.iter().map(|&pj| -pj).collect();
    grad[label] += 1.0;
    for j in 0..grad.len() {
        if out_times[j].is_never() {
            grad[latest] += grad[j];
            grad[j] = 0.0;
        }
    }
    Ok((loss, grad))
}

/// Row-sum penalty `K * sum_rows max(0, threshold (1 + margin) - sum(w))^2`.
pub fn weight_sum_penalty(m: &Model, cfg: &TrainConfig) -> f64 {
    let target = m.kernel().threshold * (1.0 + cfg.firing_margin);
    m.layers()
        .iter()
        .flat_map(|l| (0..l.rows()).map(move |r| l.row(r).iter().sum::<f64>()))
        .map(|sum| (target - sum).max(0.0).powi(2))
        .sum::<f64>()
        * cfg.weight_sum_penalty
}

fn add_penalty_grad(grads: &mut Gradients, m: &Model, cfg: &TrainConfig) {
    let target = m.kernel().threshold * (1.0 + cfg.firing_margin);
    for (g, l) in grads.layers.iter_mut().zip(m.layers()) {
        for r in 0..l.rows() {
            let deficit = target - l.row(r).iter().sum::<f64>();
            if deficit > 0.0 {
                let d = -2.0 * cfg.weight_sum_penalty * deficit;
                g.row_mut(r).iter_mut().for_each(|x| *x += d);
            }
        }
    }
}

/// Accumulates `scale * dLoss/dw` for one sample into `acc`. Returns the
/// sample loss, or `None` when every output neuron was silent.
fn accumulate_sample(
    sample: &Sample,
    m: &Model,
    clamp_offset: f64,
    scale: f64,
    acc: &mut Gradients,
) -> Result<Option<f64>> {
    let records = forward_recorded(&sample.spikes, m);
    let out_times = records.last().expect("model has layers").out_times();
    let (loss, mut g_out) = match loss_and_time_grad(&out_times, sample.label, clamp_offset) {
        Ok(v) => v,
        Err(Error::DegenerateOutput) => return Ok(None),
        Err(e) => return Err(e),
    };

    for l in (0..m.layers().len()).rev() {
        let rec = &records[l];
        let w = &m.layers()[l];
        let need_input_grad = l > 0;
        let mut g_in = if need_input_grad {
            vec![0.0; w.cols()]
        } else {
            Vec::new()
        };
        let g_w = &mut acc.layers[l];
        for (j, firing) in rec.firings.iter().enumerate() {
            let (Some(f), g) = (firing, g_out[j]) else { continue };
            if g == 0.0 {
                continue;
            }
            let inv = 1.0 / (f.denom * f.z_out);
            let w_row = w.row(j);
            let g_row = g_w.row_mut(j);
            for k in 0..f.causal_len {
                let i = rec.inputs.order[k];
                let z_i = rec.inputs.z[k];
                g_row[i] += scale * g * (z_i - f.z_out) * inv;
                if need_input_grad {
                    g_in[i] += g * w_row[i] * z_i * inv;
                }
            }
        }
        g_out = g_in;
    }
    Ok(Some(loss))
}

/// Gradient of the batch objective (mean loss plus row-sum penalty).
/// Returns the gradients and the mean loss over samples with a firing output.
pub fn backward(batch: &[Sample], m: &Model, cfg: &TrainConfig) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Err(Error::DatasetMismatch("empty batch".into()));
    }
    if let Some(s) = batch.iter().find(|s| s.spikes.len() != m.input_size()) {
        return Err(Error::ShapeMismatch {
            expected: m.input_size(),
            actual: s.spikes.len(),
        });
    }
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<Result<(Gradients, f64, usize)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = Gradients::zeros_like(m);
            let mut loss_sum = 0.0;
            let mut counted = 0;
            for s in chunk {
                if let Some(l) = accumulate_sample(s, m, cfg.silent_clamp_offset, scale, &mut acc)? {
                    loss_sum += l;
                    counted += 1;
                }
            }
            Ok((acc, loss_sum, counted))
        })
        .collect();

    let mut total = Gradients::zeros_like(m);
    let mut loss_sum = 0.0;
    let mut counted = 0;
    for p in partials {
        let (g, l, c) = p?;
        total.add_assign(&g);
        loss_sum += l;
        counted += c;
    }
    add_penalty_grad(&mut total, m, cfg);
    let mean_loss = if counted > 0 {
        loss_sum / counted as f64
    } else {
        f64::NAN
    };
    Ok((total, mean_loss))
}

/// The scalar that [`backward`] differentiates: mean sample loss plus the
/// row-sum penalty. Samples with no firing output contribute zero.
pub fn batch_objective(batch: &[Sample], m: &Model, cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let (out, _) = network_forward(&s.spikes, m)?;
        match loss_with_clamp(&out, s.label, cfg.silent_clamp_offset) {
            Ok(l) => total += l,
            Err(Error::DegenerateOutput) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(total / batch.len() as f64 + weight_sum_penalty(m, cfg))
}

/// Plain SGD with L2 decay: `w <- w - lr * (grad + lambda * w)`.
pub fn sgd_step(m: &mut Model, grads: &Gradients, cfg: &TrainConfig) -> Result<()> {
    if grads.layers.len() != m.layers().len() {
        return Err(Error::ShapeMismatch {
            expected: m.layers().len(),
            actual: grads.layers.len(),
        });
    }
    for (w, g) in m.layers().iter().zip(&grads.layers) {
        if !w.same_shape(g) {
            return Err(Error::ShapeMismatch {
                expected: w.rows() * w.cols(),
                actual: g.rows() * g.cols(),
            });
        }
    }
    let (lr, lambda) = (cfg.learning_rate, cfg.l2_lambda);
    for (w, g) in m.layers_mut().iter_mut().zip(&grads.layers) {
        for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *wi -= lr * (gi + lambda * *wi);
        }
    }
    Ok(())
}

/// Fraction of samples whose earliest output spike is the label.
pub fn accuracy(samples: &[Sample], m: &Model) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let hits = samples
        .par_iter()
        .map(|s| network_forward(&s.spikes, m).map(|(out, _)| usize::from(first_to_fire(&out) == Some(s.label))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / samples.len() as f64)
}

fn check_dataset(name: &str, set: &[Sample], cfg: &TrainConfig) -> Result<()> {
    let (width, classes) = (cfg.dims[0], *cfg.dims.last().expect("validated"));
    if set.is_empty() {
        return Err(Error::DatasetMismatch(format!("{name} set is empty")));
    }
    for (i, s) in set.iter().enumerate() {
        if s.spikes.len() != width {
            return Err(Error::DatasetMismatch(format!(
                "{name} pattern {i} has width {}, model input is {width}",
                s.spikes.len()
            )));
        }
        if s.label >= classes {
            return Err(Error::DatasetMismatch(format!(
                "{name} pattern {i} has label {} but the model has {classes} outputs",
                s.label
            )));
        }
    }
    Ok(())
}

pub fn train(train_set: &[Sample], test_set: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(train_set, test_set, cfg, |_| {})
}

/// Minibatch SGD with a seeded shuffle each epoch. Test accuracy is measured
/// after every epoch; the report keeps the best and the final model.
pub fn train_with_progress(
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    check_dataset("train", train_set, cfg)?;
    check_dataset("test", test_set, cfg)?;

    let mut model = init_weights_with(&cfg.dims, cfg.seed, &cfg.init, cfg.kernel)?;
    let mut shuffle_rng = rng::stream(cfg.seed, "epoch-shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train_set[i].clone()));
            let (mut grads, batch_loss) = backward(&batch, &model, cfg)?;
            if let Some(c) = cfg.grad_clip {
                grads.clip_row_norms(c);
            }
            sgd_step(&mut model, &grads, cfg)?;
            if batch_loss.is_finite() {
                loss_sum += batch_loss;
                loss_batches += 1;
            }
        }
        let stats = EpochStats {
            epoch,
            test_accuracy: accuracy(test_set, &model)?,
            train_loss: if loss_batches > 0 {
                loss_sum / loss_batches as f64
            } else {
                f64::NAN
            },
        };
        on_epoch(&stats);
        if best.as_ref().map_or(true, |(_, acc, _)| stats.test_accuracy > *acc) {
            best = Some((epoch, stats.test_accuracy, model.clone()));
        }
        epochs.push(stats);
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_model,
        final_model: model,
    })
}
