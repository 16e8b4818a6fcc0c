use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use pulsenet::{backward, causal_spike_time, network_forward, run_event_inference, TrainConfig};
use pulsenet_bench::{default_model, test_samples};
use std::hint::black_box;

fn inference(c: &mut Criterion) {
    let model = default_model();
    let samples = test_samples(&model, 0.1);
    let input = &samples[0].spikes;

    let mut group = c.benchmark_group("inference");
    group.throughput(Throughput::Elements(1));
    group.bench_function("causal_spike_time/256", |b| {
        let row = model.layers()[0].row(0);
        b.iter(|| causal_spike_time(black_box(input), black_box(row), model.kernel()))
    });
    group.bench_function("network_forward", |b| {
        b.iter(|| network_forward(black_box(input), &model))
    });
    group.bench_function("event_driven", |b| {
        b.iter(|| run_event_inference(black_box(input), &model))
    });
    group.finish();
}

fn training(c: &mut Criterion) {
    let model = default_model();
    let samples = test_samples(&model, 0.1);
    let cfg = TrainConfig::default();
    let batch = &samples[..cfg.batch_size];

    let mut group = c.benchmark_group("training");
    group.sample_size(20);
    group.throughput(Throughput::Elements(batch.len() as u64));
    group.bench_function("backward/batch60", |b| {
        b.iter(|| backward(black_box(batch), &model, &cfg))
    });
    group.finish();
}

criterion_group!(benches, inference, training);
criterion_main!(benches);
