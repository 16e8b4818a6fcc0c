//! Event-driven inference.
//!
//! Input pulses and neuron firings are processed in global time order. Each
//! neuron keeps running sums over the spikes it has received and, after every
//! arrival, the crossing time those spikes alone would produce. That
//! provisional firing is queued, and discarded if another input reaches the
//! neuron first. A neuron fires at most once, and the simulation stops at the
//! first output spike, so late input pulses are never looked at.
//!
//! Events at the same time are ordered by `(layer, neuron index)`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::spike::{precedes, provisional_crossing, SortedInputs, SpikeTime};

/// Record of one event-driven inference.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTrace {
    /// Earliest firing output neuron, `None` if no output fired.
    pub predicted: Option<usize>,
    /// Time of the first input pulse (tau_syn units).
    pub first_input: Option<f64>,
    /// Time of the first output spike (tau_syn units).
    pub first_output: Option<f64>,
    /// `first_output - first_input`, in microseconds.
    pub recognition_delay_us: Option<f64>,
    /// Input pulses that arrived strictly before the first output spike. All
    /// delivered pulses when no output fires.
    pub input_spikes_consumed: usize,
    /// Firings of every non-input layer, in the order they happened, as
    /// `(neuron, time)`.
    pub firings: Vec<Vec<(usize, f64)>>,
}

impl EventTrace {
    /// Spikes emitted by hidden layers before the halt.
    pub fn hidden_spikes(&self) -> usize {
        let n = self.firings.len();
        self.firings[..n.saturating_sub(1)].iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    layer: usize,
    neuron: usize,
    generation: u32,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.layer.cmp(&other.layer))
            .then(self.neuron.cmp(&other.neuron))
            .then(self.generation.cmp(&other.generation))
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct NeuronState {
    weighted_z: f64,
    weight_sum: f64,
    generation: u32,
    pending: bool,
    fired: bool,
}

struct LayerState {
    neurons: Vec<NeuronState>,
    t_ref: Option<f64>,
}

struct Engine<'a> {
    model: &'a Model,
    inputs: SortedInputs,
    /// Index of the next undelivered input pulse.
    cursor: usize,
    layers: Vec<LayerState>,
    queue: BinaryHeap<Reverse<Event>>,
    firings: Vec<Vec<(usize, f64)>>,
}

impl<'a> Engine<'a> {
    fn new(spikes: &[SpikeTime], model: &'a Model) -> Self {
        let layers = model
            .dims()
            .iter()
            .skip(1)
            .map(|&n| LayerState {
                neurons: vec![NeuronState::default(); n],
                t_ref: None,
            })
            .collect();
        Engine {
            model,
            inputs: SortedInputs::new(spikes),
            cursor: 0,
            layers,
            queue: BinaryHeap::new(),
            firings: vec![Vec::new(); model.layers().len()],
        }
    }

    /// Delivers a spike of neuron `source` in layer `src_layer` (0 = input)
    /// to every neuron of the next layer.
    fn deliver(&mut self, src_layer: usize, source: usize, time: f64) {
        let threshold = self.model.kernel().threshold;
        let weights = &self.model.layers()[src_layer];
        let dest = &mut self.layers[src_layer];
        let t_ref = *dest.t_ref.get_or_insert(time);
        let z = (time - t_ref).exp();
        // Inputs are known in advance, so a first-layer crossing that cannot
        // beat the next pulse is never queued.
        let next_input = (src_layer == 0 && self.cursor < self.inputs.len())
            .then(|| (self.inputs.times[self.cursor], self.inputs.z[self.cursor]));

        for (j, st) in dest.neurons.iter_mut().enumerate() {
            if st.fired {
                continue;
            }
            let w = weights.get(j, source);
            st.weighted_z += w * z;
            st.weight_sum += w;
            st.generation += 1;
            st.pending = false;
            let Some(p) = provisional_crossing(st.weighted_z, st.weight_sum, threshold, z, t_ref) else {
                continue;
            };
            if let Some((t_next, z_next)) = next_input {
                if !precedes(&p, t_next, z_next) {
                    continue;
                }
            }
            st.pending = true;
            self.queue.push(Reverse(Event {
                time: p.time(),
                layer: src_layer + 1,
                neuron: j,
                generation: st.generation,
            }));
        }
    }

    fn next_is_input(&self) -> Option<bool> {
        let input = (self.cursor < self.inputs.len()).then(|| self.inputs.times[self.cursor]);
        match (input, self.queue.peek()) {
            (None, None) => None,
            (Some(_), None) => Some(true),
            (None, Some(_)) => Some(false),
            // Input pulses are layer 0 and win ties.
            (Some(t), Some(Reverse(ev))) => Some(t.total_cmp(&ev.time) != Ordering::Greater),
        }
    }

    /// Runs until the first output spike. Returns `(neuron, time)` of that
    /// spike if one happens.
    fn run(&mut self) -> Option<(usize, f64)> {
        let output_layer = self.model.layers().len();
        while let Some(is_input) = self.next_is_input() {
            if is_input {
                let (source, time) = (self.inputs.order[self.cursor], self.inputs.times[self.cursor]);
                self.cursor += 1;
                self.deliver(0, source, time);
                continue;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            let st = &mut self.layers[ev.layer - 1].neurons[ev.neuron];
            if st.fired || !st.pending || st.generation != ev.generation {
                continue;
            }
            st.fired = true;
            st.pending = false;
            self.firings[ev.layer - 1].push((ev.neuron, ev.time));
            if ev.layer == output_layer {
                return Some((ev.neuron, ev.time));
            }
            self.deliver(ev.layer, ev.neuron, ev.time);
        }
        None
    }
}

/// Event-driven inference of one pattern.
pub fn run_event_inference(spikes: &[SpikeTime], m: &Model) -> Result<EventTrace> {
    if spikes.len() != m.input_size() {
        return Err(Error::ShapeMismatch {
            expected: m.input_size(),
            actual: spikes.len(),
        });
    }
    let mut engine = Engine::new(spikes, m);
    let outcome = engine.run();
    let first_input = engine.inputs.times.first().copied();
    let (predicted, first_output, consumed) = match outcome {
        Some((neuron, t)) => (Some(neuron), Some(t), engine.inputs.times.partition_point(|&ti| ti < t)),
        None => (None, None, engine.cursor),
    };
    let recognition_delay_us = first_output
        .zip(first_input)
        .map(|(out, inp)| m.kernel().to_us(out - inp));
    Ok(EventTrace {
        predicted,
        first_input,
        first_output,
        recognition_delay_us,
        input_spikes_consumed: consumed,
        firings: engine.firings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerWeights;
    use crate::spike::{network_forward, spikes, KernelConfig};

    fn chain(weights: &[f64]) -> Model {
        let layers = weights
            .iter()
            .map(|&w| LayerWeights::from_rows(&[vec![w]]).unwrap())
            .collect();
        Model::new(vec![1; weights.len() + 1], layers, KernelConfig::default()).unwrap()
    }

    #[test]
    fn single_chain() {
        let m = chain(&[2.0, 2.0]);
        let trace = run_event_inference(&spikes(&[0.0]), &m).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(trace.predicted, Some(0));
        assert!((trace.first_output.unwrap() - 2.0 * ln2).abs() < 1e-12);
        assert!((trace.recognition_delay_us.unwrap() - 2.0 * ln2).abs() < 1e-12);
        assert_eq!(trace.input_spikes_consumed, 1);
        assert_eq!(trace.hidden_spikes(), 1);
    }

    #[test]
    fn delay_uses_physical_time_constant() {
        let w = LayerWeights::from_rows(&[vec![2.0]]).unwrap();
        let m = Model::new(vec![1, 1], vec![w], KernelConfig::new(0.25, 1.0).unwrap()).unwrap();
        let trace = run_event_inference(&spikes(&[3.0]), &m).unwrap();
        assert!((trace.recognition_delay_us.unwrap() - 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn silent_input() {
        let m = chain(&[2.0, 2.0]);
        let trace = run_event_inference(&[SpikeTime::NEVER], &m).unwrap();
        assert_eq!(trace.predicted, None);
        assert_eq!(trace.input_spikes_consumed, 0);
        assert_eq!(trace.recognition_delay_us, None);
    }

    #[test]
    fn late_pulses_are_ignored() {
        // Output fires at ln 2 from input 0; input 1 arrives later and cannot
        // change anything, whatever its exact time.
        let w = LayerWeights::from_rows(&[vec![2.0, -5.0], vec![1.2, 3.0]]).unwrap();
        let m = Model::new(vec![2, 2], vec![w], KernelConfig::default()).unwrap();
        let a = run_event_inference(&spikes(&[0.0, 0.9]), &m).unwrap();
        let b = run_event_inference(&spikes(&[0.0, 2.5]), &m).unwrap();
        assert_eq!(a.predicted, Some(0));
        assert_eq!(a, b);
        assert_eq!(a.input_spikes_consumed, 1);
    }

    #[test]
    fn earlier_pulse_cancels_provisional_firing() {
        // Alone, input 0 would fire neuron 0 at ln 2, but an inhibitory pulse
        // arrives at 0.5 and silences it.
        let w = LayerWeights::from_rows(&[vec![2.0, -3.0], vec![0.6, 0.6]]).unwrap();
        let m = Model::new(vec![2, 2], vec![w], KernelConfig::default()).unwrap();
        let input = spikes(&[0.0, 0.5]);
        let trace = run_event_inference(&input, &m).unwrap();
        let (out, class) = network_forward(&input, &m).unwrap();
        assert!(out[0].is_never());
        assert_eq!(trace.predicted, Some(1));
        assert_eq!(class, Some(1));
        assert_eq!(trace.first_output, out[1].value());
        assert_eq!(trace.input_spikes_consumed, 2);
    }

    #[test]
    fn no_output_fires() {
        let m = chain(&[0.5]);
        let trace = run_event_inference(&spikes(&[0.0]), &m).unwrap();
        assert_eq!(trace.predicted, None);
        assert_eq!(trace.input_spikes_consumed, 1);
    }

    #[test]
    fn shape_mismatch() {
        let m = chain(&[2.0]);
        assert!(matches!(
            run_event_inference(&spikes(&[0.0, 1.0]), &m),
            Err(Error::ShapeMismatch { expected: 1, actual: 2 })
        ));
    }
}
