//! Temporal-coded spiking network for classifying LiDAR pulse patterns.
//!
//! Neurons are non-leaky integrate-and-fire units with an exponentially
//! decaying synaptic current. Every neuron fires at most once and the first
//! output neuron to fire names the class. Firing times have a closed form, so
//! the network can be trained with exact gradients and run either layer by
//! layer ([`network_forward`]) or as an event simulation that stops at the
//! first output spike ([`run_event_inference`]).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scenes;
pub mod spike;
pub mod trainer;

pub use error::{Error, Result};
pub use events::{run_event_inference, EventTrace};
pub use metrics::{agreement_check, agreement_check_samples, evaluate, evaluate_samples, EvalMetrics, PatternRecord};
pub use model::{LayerWeights, Model, DEFAULT_DIMS};
pub use scenes::{
    encode_delays, generate_dataset, generate_split, inject_noise, render_scene, Dataset, DelayMap, NoiseSpec, Split,
    CLASS_COUNT, NOISE_RANGES, PIXELS,
};
pub use spike::{
    causal_spike_time, first_to_fire, integrate_membrane, kernel_response, layer_forward, network_forward, spikes,
    KernelConfig, SpikeTime,
};
pub use trainer::{
    backward, batch_objective, init_weights, init_weights_with, loss, sgd_step, train, train_with_progress, EpochStats,
    Gradients, InitScheme, Sample, TrainConfig, TrainReport, GRAD_CLIP, TRAIN_TAU_SYN_US,
};
