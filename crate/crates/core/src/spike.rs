//! Spike times, the exponential synaptic kernel, and the closed-form firing
//! time of a non-leaky integrate-and-fire neuron.
//!
//! Internally all times are measured in units of the synaptic time constant.
//! In those units a neuron receiving spikes `t_i` with weights `w_i` has
//!
//! ```text
//! V(t) = sum_i w_i (1 - exp(-(t - t_i)))      for the spikes with t_i <= t
//! ```
//!
//! and, writing `z = exp(t)`, its first threshold crossing satisfies
//!
//! ```text
//! z_out = sum_{i in C} w_i z_i / (sum_{i in C} w_i - threshold)
//! ```
//!
//! where `C` is the set of inputs that arrive strictly before the output
//! spike. [`causal_spike_time`] finds `C` by scanning prefixes of the sorted
//! inputs. [`integrate_membrane`] integrates the same dynamics numerically and
//! serves as an independent check.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{LayerWeights, Model};

/// Default integration horizon of the membrane oracle, in units of tau_syn.
pub const DEFAULT_HORIZON: f64 = 50.0;

/// Physical time constant used unless configured otherwise, in microseconds.
pub const DEFAULT_TAU_SYN_US: f64 = 1.0;

/// Relative band around an input's z value inside which the causal test
/// falls back to comparing times directly.
const Z_COMPARE_BAND: f64 = 1e-9;

/// A spike time in units of tau_syn, or [`SpikeTime::NEVER`].
///
/// `NEVER` orders after every finite time.
#[derive(Clone, Copy, Debug, PartialEq)]
#[repr(transparent)]
pub struct SpikeTime(f64);

impl SpikeTime {
    /// The neuron never fires.
    pub const NEVER: SpikeTime = SpikeTime(f64::INFINITY);

    /// # Panics
    /// If `t` is not finite.
    pub fn at(t: f64) -> Self {
        assert!(t.is_finite(), "spike time must be finite, got {t}");
        SpikeTime(t)
    }

    pub fn try_at(t: f64) -> Option<Self> {
        t.is_finite().then_some(SpikeTime(t))
    }

    pub fn is_never(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(self) -> bool {
        !self.is_never()
    }

    pub fn value(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// The time as `f64`, with `NEVER` mapped to `+inf`.
    pub fn raw(self) -> f64 {
        self.0
    }

    /// Adds `c` to a finite time; `NEVER` stays `NEVER`.
    pub fn shifted(self, c: f64) -> Self {
        if self.is_never() {
            self
        } else {
            SpikeTime::at(self.0 + c)
        }
    }
}

impl Eq for SpikeTime {}

impl PartialOrd for SpikeTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SpikeTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SpikeTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("never"),
        }
    }
}

/// Convenience constructor for a vector of finite spike times.
pub fn spikes(times: &[f64]) -> Vec<SpikeTime> {
    times.iter().copied().map(SpikeTime::at).collect()
}

/// Synaptic time constant and firing threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    /// Synaptic time constant in microseconds.
    pub tau_syn: f64,
    /// Dimensionless membrane threshold.
    pub threshold: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            tau_syn: DEFAULT_TAU_SYN_US,
            threshold: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn new(tau_syn: f64, threshold: f64) -> Result<Self> {
        let cfg = KernelConfig { tau_syn, threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_syn > 0.0 && self.tau_syn.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau_syn must be > 0, got {}",
                self.tau_syn
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Same threshold with time measured in units of tau_syn.
    pub fn normalized(&self) -> KernelConfig {
        KernelConfig {
            tau_syn: 1.0,
            threshold: self.threshold,
        }
    }

    /// Microseconds to internal (tau_syn) units.
    pub fn to_internal(&self, us: f64) -> f64 {
        us / self.tau_syn
    }

    /// Internal (tau_syn) units to microseconds.
    pub fn to_us(&self, t: f64) -> f64 {
        t * self.tau_syn
    }
}

/// Synaptic current injected `x` after a spike: `exp(-x / tau)` for
/// `x >= 0`, zero before the spike. `x` is in the same unit as `cfg.tau_syn`.
pub fn kernel_response(x: f64, cfg: &KernelConfig) -> f64 {
    if x >= 0.0 {
        (-x / cfg.tau_syn).exp()
    } else {
        0.0
    }
}

/// Oracle integration state for one neuron.
#[derive(Clone, Copy, Debug)]
struct MembraneState {
    v_mem: f64,
    t: f64,
    dt: f64,
}

/// Integrates the membrane equation numerically until the potential reaches
/// threshold, using the default horizon of 50 tau_syn.
///
/// This is a brute-force reference. Production code uses
/// [`causal_spike_time`].
pub fn integrate_membrane(spikes: &[SpikeTime], row: &[f64], cfg: &KernelConfig, dt: f64) -> Result<SpikeTime> {
    integrate_membrane_until(spikes, row, cfg, dt, DEFAULT_HORIZON)
}

/// [`integrate_membrane`] with an explicit horizon (units of tau_syn).
///
/// Steps are the trapezoid rule on the synaptic current, cut short at each
/// spike arrival so the current jump never falls inside a step. The crossing
/// time is refined by linear interpolation within the crossing step.
pub fn integrate_membrane_until(
    spikes: &[SpikeTime],
    row: &[f64],
    cfg: &KernelConfig,
    dt: f64,
    horizon: f64,
) -> Result<SpikeTime> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(dt));
    }
    if spikes.len() != row.len() {
        return Err(Error::ShapeMismatch {
            expected: spikes.len(),
            actual: row.len(),
        });
    }
    let unit = cfg.normalized();
    let threshold = unit.threshold;

    let mut arrivals: Vec<(f64, f64)> = spikes
        .iter()
        .zip(row)
        .filter_map(|(t, &w)| t.value().map(|t| (t, w)))
        .collect();
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));

    let start = arrivals.first().map_or(0.0, |a| a.0.min(0.0));
    let mut state = MembraneState {
        v_mem: 0.0,
        t: start,
        dt,
    };
    let full_step_decay = kernel_response(state.dt, &unit);
    let mut current = 0.0;
    let mut next = 0;

    loop {
        while next < arrivals.len() && arrivals[next].0 <= state.t {
            let (t_i, w) = arrivals[next];
            current += w * kernel_response(state.t - t_i, &unit);
            next += 1;
        }
        if state.t >= horizon {
            return Ok(SpikeTime::NEVER);
        }
        // No more input and a non-positive current: V can only fall from here.
        if next == arrivals.len() && current <= 0.0 {
            return Ok(SpikeTime::NEVER);
        }

        let boundary = if next < arrivals.len() {
            arrivals[next].0.min(horizon)
        } else {
            horizon
        };
        let (h, t_end, end_current) = if state.t + state.dt < boundary {
            (state.dt, state.t + state.dt, current * full_step_decay)
        } else {
            let h = boundary - state.t;
            (h, boundary, current * kernel_response(h, &unit))
        };

        let v_end = state.v_mem + 0.5 * h * (current + end_current);
        if v_end >= threshold {
            let frac = (threshold - state.v_mem) / (v_end - state.v_mem);
            return Ok(SpikeTime::at(state.t + frac * h));
        }
        state.v_mem = v_end;
        state.t = t_end;
        current = end_current;
    }
}

/// Finite input spikes sorted by `(time, source index)`, with their z values
/// taken relative to the earliest spike.
///
/// Measuring z from the earliest input keeps `exp` in range for late spikes
/// and makes the result exactly invariant to where time zero sits.
#[derive(Clone, Debug)]
pub(crate) struct SortedInputs {
    pub(crate) order: Vec<usize>,
    pub(crate) times: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) t_ref: f64,
}

/// A neuron's accepted threshold crossing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Firing {
    pub(crate) time: f64,
    /// Length of the accepted prefix of the sorted inputs (the causal set).
    pub(crate) causal_len: usize,
    /// Output z, relative to the same reference as the inputs.
    pub(crate) z_out: f64,
    /// `sum_{i in C} w_i - threshold`.
    pub(crate) denom: f64,
}

/// A crossing that is valid for the current prefix, pending the check
/// against the next input.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Provisional {
    pub(crate) z_out: f64,
    pub(crate) denom: f64,
    t_ref: f64,
}

impl Provisional {
    #[inline]
    pub(crate) fn time(&self) -> f64 {
        self.t_ref + self.z_out.ln()
    }
}

/// Crossing time for a prefix with running sums `s = sum w_i z_i` and
/// `w_sum = sum w_i`, if the prefix can produce one at or after its latest
/// spike (`z_last`).
#[inline]
pub(crate) fn provisional_crossing(s: f64, w_sum: f64, threshold: f64, z_last: f64, t_ref: f64) -> Option<Provisional> {
    let denom = w_sum - threshold;
    if !(denom > 0.0) {
        return None;
    }
    let z_out = s / denom;
    if !(z_out >= z_last) {
        return None;
    }
    Some(Provisional { z_out, denom, t_ref })
}

/// Whether a crossing strictly precedes the next input spike.
///
/// Equivalent to `time < t_next`; the z comparison only short-cuts the
/// clear cases.
#[inline]
pub(crate) fn precedes(p: &Provisional, t_next: f64, z_next: f64) -> bool {
    if p.z_out < z_next * (1.0 - Z_COMPARE_BAND) {
        true
    } else if p.z_out > z_next * (1.0 + Z_COMPARE_BAND) {
        false
    } else {
        p.time() < t_next
    }
}

impl SortedInputs {
    pub(crate) fn new(spikes: &[SpikeTime]) -> Self {
        let mut order: Vec<usize> = (0..spikes.len()).filter(|&i| spikes[i].is_finite()).collect();
        order.sort_by(|&a, &b| spikes[a].raw().total_cmp(&spikes[b].raw()).then(a.cmp(&b)));
        let times: Vec<f64> = order.iter().map(|&i| spikes[i].raw()).collect();
        let t_ref = times.first().copied().unwrap_or(0.0);
        let z = times.iter().map(|&t| (t - t_ref).exp()).collect();
        SortedInputs { order, times, z, t_ref }
    }

    pub(crate) fn len(&self) -> usize {
        self.order.len()
    }

    /// First threshold crossing for one weight row.
    pub(crate) fn fire(&self, row: &[f64], threshold: f64) -> Option<Firing> {
        let n = self.len();
        let mut s = 0.0;
        let mut w_sum = 0.0;
        for k in 0..n {
            let w = row[self.order[k]];
            s += w * self.z[k];
            w_sum += w;
            let Some(p) = provisional_crossing(s, w_sum, threshold, self.z[k], self.t_ref) else {
                continue;
            };
            if k + 1 == n || precedes(&p, self.times[k + 1], self.z[k + 1]) {
                return Some(Firing {
                    time: p.time(),
                    causal_len: k + 1,
                    z_out: p.z_out,
                    denom: p.denom,
                });
            }
        }
        None
    }
}

/// Firing time of one neuron and its causal set (indices into `spikes`, in
/// arrival order). Returns `(NEVER, [])` when no prefix of the inputs
/// reaches threshold.
pub fn causal_spike_time(spikes: &[SpikeTime], row: &[f64], cfg: &KernelConfig) -> Result<(SpikeTime, Vec<usize>)> {
    if spikes.len() != row.len() {
        return Err(Error::ShapeMismatch {
            expected: spikes.len(),
            actual: row.len(),
        });
    }
    let sorted = SortedInputs::new(spikes);
    Ok(match sorted.fire(row, cfg.threshold) {
        Some(f) => (SpikeTime::at(f.time), sorted.order[..f.causal_len].to_vec()),
        None => (SpikeTime::NEVER, Vec::new()),
    })
}

/// Firing times of every destination neuron of one layer.
pub fn layer_forward(in_times: &[SpikeTime], w: &LayerWeights, cfg: &KernelConfig) -> Result<Vec<SpikeTime>> {
    if in_times.len() != w.cols() {
        return Err(Error::ShapeMismatch {
            expected: w.cols(),
            actual: in_times.len(),
        });
    }
    let sorted = SortedInputs::new(in_times);
    Ok(layer_from_sorted(&sorted, w, cfg.threshold)
        .into_iter()
        .map(|f| f.map_or(SpikeTime::NEVER, |f| SpikeTime::at(f.time)))
        .collect())
}

fn layer_from_sorted(sorted: &SortedInputs, w: &LayerWeights, threshold: f64) -> Vec<Option<Firing>> {
    (0..w.rows()).map(|r| sorted.fire(w.row(r), threshold)).collect()
}

/// Index of the earliest output spike, lowest index on ties. `None` when no
/// output neuron fires.
pub fn first_to_fire(out_times: &[SpikeTime]) -> Option<usize> {
    let mut best: Option<(usize, SpikeTime)> = None;
    for (j, &t) in out_times.iter().enumerate() {
        if t.is_never() {
            continue;
        }
        if best.map_or(true, |(_, bt)| t < bt) {
            best = Some((j, t));
        }
    }
    best.map(|(j, _)| j)
}

/// Analytic forward pass through every layer. Returns the output spike
/// times and the predicted class (`None` when no output neuron fires).
pub fn network_forward(in_times: &[SpikeTime], m: &Model) -> Result<(Vec<SpikeTime>, Option<usize>)> {
    if in_times.len() != m.input_size() {
        return Err(Error::ShapeMismatch {
            expected: m.input_size(),
            actual: in_times.len(),
        });
    }
    let mut times = in_times.to_vec();
    for layer in m.layers() {
        times = layer_forward(&times, layer, m.kernel())?;
    }
    let predicted = first_to_fire(&times);
    Ok((times, predicted))
}

/// Per-layer forward record used for backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct LayerRecord {
    pub(crate) inputs: SortedInputs,
    pub(crate) firings: Vec<Option<Firing>>,
}

/// Forward pass that keeps each neuron's causal prefix and z values.
pub(crate) fn forward_recorded(in_times: &[SpikeTime], m: &Model) -> Vec<LayerRecord> {
    let threshold = m.kernel().threshold;
    let mut records: Vec<LayerRecord> = Vec::with_capacity(m.layers().len());
    let mut times = in_times.to_vec();
    for layer in m.layers() {
        let inputs = SortedInputs::new(&times);
        let firings = layer_from_sorted(&inputs, layer, threshold);
        times = firings
            .iter()
            .map(|f| f.map_or(SpikeTime::NEVER, |f| SpikeTime::at(f.time)))
            .collect();
        records.push(LayerRecord { inputs, firings });
    }
    records
}

impl LayerRecord {
    pub(crate) fn out_times(&self) -> Vec<SpikeTime> {
        self.firings
            .iter()
            .map(|f| f.map_or(SpikeTime::NEVER, |f| SpikeTime::at(f.time)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn unit() -> KernelConfig {
        KernelConfig::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn kernel_values() {
        let cfg = unit();
        assert_eq!(kernel_response(-1.0, &cfg), 0.0);
        assert_eq!(kernel_response(-1e-300, &cfg), 0.0);
        assert_eq!(kernel_response(0.0, &cfg), 1.0);
        assert!((kernel_response(1.0, &cfg) - 0.367_879_441_171_442_3).abs() < 1e-15);
        let slow = KernelConfig::new(2.0, 1.0).unwrap();
        assert!((kernel_response(2.0, &slow) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn never_orders_last() {
        let mut v = vec![SpikeTime::NEVER, SpikeTime::at(3.0), SpikeTime::at(-1.0)];
        v.sort();
        assert_eq!(v, vec![SpikeTime::at(-1.0), SpikeTime::at(3.0), SpikeTime::NEVER]);
        assert_eq!(SpikeTime::NEVER.shifted(2.0), SpikeTime::NEVER);
        assert_eq!(SpikeTime::NEVER.to_string(), "never");
    }

    #[test]
    fn membrane_oracle_examples() {
        let cfg = unit();
        let t = integrate_membrane(&spikes(&[0.0]), &[2.0], &cfg, 1e-4).unwrap();
        assert!((t.raw() - LN2).abs() < 1e-6, "{t}");

        let t = integrate_membrane(&spikes(&[0.0]), &[0.5], &cfg, 1e-4).unwrap();
        assert!(t.is_never());

        let t = integrate_membrane(&spikes(&[0.0, 0.1]), &[0.6, 0.6], &cfg, 1e-4).unwrap();
        let expected = ((0.6 + 0.6 * 0.1f64.exp()) / 0.2).ln();
        assert!((t.raw() - 1.843).abs() < 1e-3);
        assert!((t.raw() - expected).abs() < 1e-6, "{t} vs {expected}");
    }

    #[test]
    fn membrane_oracle_rejects_bad_step() {
        let cfg = unit();
        for dt in [0.0, -1e-4, f64::NAN] {
            assert!(matches!(
                integrate_membrane(&spikes(&[0.0]), &[2.0], &cfg, dt),
                Err(Error::InvalidStep(_))
            ));
        }
    }

    #[test]
    fn causal_examples() {
        let cfg = unit();
        let (t, c) = causal_spike_time(&spikes(&[0.0]), &[2.0], &cfg).unwrap();
        assert!((t.raw() - LN2).abs() < 1e-15);
        assert_eq!(c, vec![0]);

        let (t, c) = causal_spike_time(&spikes(&[0.0, 10.0]), &[2.0, 5.0], &cfg).unwrap();
        assert!((t.raw() - LN2).abs() < 1e-15);
        assert_eq!(c, vec![0]);

        let (t, c) = causal_spike_time(&spikes(&[0.0]), &[0.5], &cfg).unwrap();
        assert!(t.is_never());
        assert!(c.is_empty());

        let (t, c) = causal_spike_time(&spikes(&[0.0, 0.1]), &[0.6, 0.6], &cfg).unwrap();
        let expected = ((0.6 + 0.6 * 0.1f64.exp()) / 0.2).ln();
        assert!((t.raw() - expected).abs() < 1e-12);
        assert!((t.raw() - 1.8430).abs() < 1e-4);
        assert_eq!(c, vec![0, 1]);
    }

    #[test]
    fn causal_ignores_never_and_reports_original_indices() {
        let cfg = unit();
        let input = vec![SpikeTime::NEVER, SpikeTime::at(0.5), SpikeTime::at(0.2)];
        let (t, c) = causal_spike_time(&input, &[100.0, 0.6, 0.6], &cfg).unwrap();
        assert_eq!(c, vec![2, 1]);
        let expected = ((0.6 * 0.2f64.exp() + 0.6 * 0.5f64.exp()) / 0.2).ln();
        assert!((t.raw() - expected).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_inputs_are_grouped() {
        // Either spike alone would fire, but both arrive together and neither
        // can precede the other.
        let cfg = unit();
        let (t, c) = causal_spike_time(&spikes(&[0.0, 0.0]), &[2.0, 2.0], &cfg).unwrap();
        assert_eq!(c, vec![0, 1]);
        assert!((t.raw() - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn inhibitory_input_can_silence() {
        let cfg = unit();
        let (t, _) = causal_spike_time(&spikes(&[0.0, 0.01]), &[1.5, -1.0], &cfg).unwrap();
        assert!(t.is_never());
        let oracle = integrate_membrane(&spikes(&[0.0, 0.01]), &[1.5, -1.0], &cfg, 1e-4).unwrap();
        assert!(oracle.is_never());
    }

    #[test]
    fn shape_mismatch() {
        let cfg = unit();
        assert!(matches!(
            causal_spike_time(&spikes(&[0.0]), &[1.0, 2.0], &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
        let w = LayerWeights::zeros(2, 3);
        assert!(matches!(
            layer_forward(&spikes(&[0.0]), &w, &cfg),
            Err(Error::ShapeMismatch { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn layer_examples() {
        let cfg = unit();
        let w = LayerWeights::from_rows(&[vec![2.0], vec![0.5]]).unwrap();
        let out = layer_forward(&spikes(&[0.0]), &w, &cfg).unwrap();
        assert!((out[0].raw() - LN2).abs() < 1e-15);
        assert!(out[1].is_never());

        let out = layer_forward(&[SpikeTime::NEVER], &w, &cfg).unwrap();
        assert!(out.iter().all(|t| t.is_never()));

        let w = LayerWeights::from_rows(&[vec![2.0]]).unwrap();
        for c in [0.0, 0.37, 5.0, 123.25] {
            let out = layer_forward(&spikes(&[c]), &w, &cfg).unwrap();
            assert!((out[0].raw() - (c + LN2)).abs() < 1e-12);
        }
    }

    #[test]
    fn network_example() {
        let cfg = unit();
        let w1 = LayerWeights::from_rows(&[vec![2.0]]).unwrap();
        let w2 = LayerWeights::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let m = Model::new(vec![1, 1, 2], vec![w1, w2], cfg).unwrap();
        let (out, class) = network_forward(&spikes(&[0.0]), &m).unwrap();
        assert!((out[0].raw() - 2.0 * LN2).abs() < 1e-12);
        assert!((out[1].raw() - (LN2 + (4.0f64 / 3.0).ln())).abs() < 1e-12);
        assert_eq!(class, Some(1));

        let (out, class) = network_forward(&[SpikeTime::NEVER], &m).unwrap();
        assert!(out.iter().all(|t| t.is_never()));
        assert_eq!(class, None);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let t = SpikeTime::at(0.5);
        assert_eq!(first_to_fire(&[SpikeTime::NEVER, t, t]), Some(1));
        assert_eq!(first_to_fire(&[SpikeTime::NEVER, SpikeTime::NEVER]), None);
        assert_eq!(first_to_fire(&[]), None);
    }
}
