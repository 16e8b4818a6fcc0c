//! Evaluation of a model with the event engine, and CSV reports.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::run_event_inference;
use crate::model::Model;
use crate::scenes::{Dataset, CLASS_COUNT};
use crate::spike::network_forward;
use crate::trainer::Sample;

/// Edges of the coarse delay histogram, in microseconds.
pub const COARSE_EDGES_US: [f64; 4] = [0.0, 0.23, 0.30, 1.0];
pub const FINE_BINS: usize = 20;
/// Output spike times of the two inference paths must agree this closely.
pub const AGREEMENT_TOLERANCE: f64 = 1e-9;

/// Per-pattern outcome of event-driven inference.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternRecord {
    pub label: usize,
    pub predicted: Option<usize>,
    pub delay_us: Option<f64>,
    pub spikes_consumed: usize,
    pub hidden_spikes: usize,
}

impl PatternRecord {
    pub fn correct(&self) -> bool {
        self.predicted == Some(self.label)
    }
}

/// Delay counts per bin. Delays past the last edge go to `overflow`, patterns
/// without an output spike to `silent`, so every pattern is counted once.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub overflow: usize,
    pub silent: usize,
}

impl DelayHistogram {
    fn new(edges: Vec<f64>) -> Self {
        let bins = edges.len() - 1;
        DelayHistogram {
            edges,
            counts: vec![0; bins],
            overflow: 0,
            silent: 0,
        }
    }

    /// Bins are closed on the left and open on the right, except that the
    /// coarse middle bin `[0.23, 0.30]` is closed on both sides.
    fn coarse() -> Self {
        DelayHistogram::new(COARSE_EDGES_US.to_vec())
    }

    fn fine() -> Self {
        DelayHistogram::new((0..=FINE_BINS).map(|i| i as f64 / FINE_BINS as f64).collect())
    }

    fn add_coarse(&mut self, delay: Option<f64>) {
        let Some(d) = delay else {
            self.silent += 1;
            return;
        };
        let bin = if d < 0.23 {
            0
        } else if d <= 0.30 {
            1
        } else if d <= 1.0 {
            2
        } else {
            self.overflow += 1;
            return;
        };
        self.counts[bin] += 1;
    }

    fn add_uniform(&mut self, delay: Option<f64>) {
        let Some(d) = delay else {
            self.silent += 1;
            return;
        };
        let last = *self.edges.last().expect("at least one bin");
        if d > last {
            self.overflow += 1;
            return;
        }
        let last_bin = self.counts.len() - 1;
        let bin = self.edges.partition_point(|&e| e <= d).saturating_sub(1);
        self.counts[bin.min(last_bin)] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow + self.silent
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub records: Vec<PatternRecord>,
    pub accuracy: f64,
    pub histogram: DelayHistogram,
    pub fine_histogram: DelayHistogram,
    /// `confusion[label][predicted]`; the extra last column counts patterns
    /// with no output spike.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalMetrics {
    fn from_records(records: Vec<PatternRecord>) -> Self {
        let mut histogram = DelayHistogram::coarse();
        let mut fine_histogram = DelayHistogram::fine();
        let classes = records
            .iter()
            .map(|r| r.label.max(r.predicted.unwrap_or(0)) + 1)
            .fold(CLASS_COUNT, usize::max);
        let mut confusion = vec![vec![0; classes + 1]; classes];
        for r in &records {
            histogram.add_coarse(r.delay_us);
            fine_histogram.add_uniform(r.delay_us);
            confusion[r.label][r.predicted.unwrap_or(classes)] += 1;
        }
        let correct = records.iter().filter(|r| r.correct()).count();
        let accuracy = if records.is_empty() {
            0.0
        } else {
            correct as f64 / records.len() as f64
        };
        EvalMetrics {
            records,
            accuracy,
            histogram,
            fine_histogram,
            confusion,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean delay over patterns that produced an output spike.
    pub fn mean_delay_us(&self) -> Option<f64> {
        let delays: Vec<f64> = self.records.iter().filter_map(|r| r.delay_us).collect();
        (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64)
    }

    pub fn min_spikes(&self) -> Option<usize> {
        self.records.iter().map(|r| r.spikes_consumed).min()
    }

    pub fn max_spikes(&self) -> Option<usize> {
        self.records.iter().map(|r| r.spikes_consumed).max()
    }

    /// Consumed input spike counts, one per pattern.
    pub fn spike_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.spikes_consumed).collect()
    }

    /// Fraction of patterns whose delay lies in `[0.23, 0.30]` us.
    pub fn core_band_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.histogram.counts[1] as f64 / self.records.len() as f64
    }
}

fn check_width(samples: &[Sample], m: &Model) -> Result<()> {
    match samples.iter().find(|s| s.spikes.len() != m.input_size()) {
        Some(s) => Err(Error::DatasetMismatch(format!(
            "pattern has {} inputs, model expects {}",
            s.spikes.len(),
            m.input_size()
        ))),
        None => Ok(()),
    }
}

/// Runs event-driven inference on every sample.
pub fn evaluate_samples(samples: &[Sample], m: &Model) -> Result<EvalMetrics> {
    check_width(samples, m)?;
    let records = samples
        .par_iter()
        .map(|s| {
            let trace = run_event_inference(&s.spikes, m)?;
            Ok(PatternRecord {
                label: s.label,
                predicted: trace.predicted,
                delay_us: trace.recognition_delay_us,
                spikes_consumed: trace.input_spikes_consumed,
                hidden_spikes: trace.hidden_spikes(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalMetrics::from_records(records))
}

pub fn evaluate(dataset: &Dataset, m: &Model) -> Result<EvalMetrics> {
    evaluate_samples(&dataset.samples(m.kernel()), m)
}

/// Patterns on which the event engine and the layer-by-layer forward pass
/// disagree, on the predicted class or on the first output spike time.
pub fn agreement_check_samples(samples: &[Sample], m: &Model) -> Result<usize> {
    check_width(samples, m)?;
    let mismatches = samples
        .par_iter()
        .map(|s| {
            let trace = run_event_inference(&s.spikes, m)?;
            let (out, predicted) = network_forward(&s.spikes, m)?;
            let analytic_time = predicted.map(|k| out[k].raw());
            let same_time = match (trace.first_output, analytic_time) {
                (Some(a), Some(b)) => (a - b).abs() <= AGREEMENT_TOLERANCE,
                (None, None) => true,
                _ => false,
            };
            Ok(usize::from(trace.predicted != predicted || !same_time))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mismatches.iter().sum())
}

pub fn agreement_check(dataset: &Dataset, m: &Model) -> Result<usize> {
    agreement_check_samples(&dataset.samples(m.kernel()), m)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("csv buffer", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `noise_range,accuracy,mean_delay_us,min_spikes,max_spikes`, one row per
/// evaluated condition.
pub fn summary_csv(rows: &[(f64, &EvalMetrics)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["noise_range", "accuracy", "mean_delay_us", "min_spikes", "max_spikes"])?;
    for (noise, m) in rows {
        w.write_record([
            noise.to_string(),
            m.accuracy.to_string(),
            opt(m.mean_delay_us()),
            opt(m.min_spikes()),
            opt(m.max_spikes()),
        ])?;
    }
    finish(w)
}

/// `pattern_id,label,predicted,delay_us,spikes_consumed,hidden_spikes`.
/// Patterns without an output spike leave `predicted` and `delay_us` empty.
pub fn trace_csv(m: &EvalMetrics) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "pattern_id",
        "label",
        "predicted",
        "delay_us",
        "spikes_consumed",
        "hidden_spikes",
    ])?;
    for (id, r) in m.records.iter().enumerate() {
        w.write_record([
            id.to_string(),
            r.label.to_string(),
            opt(r.predicted),
            opt(r.delay_us),
            r.spikes_consumed.to_string(),
            r.hidden_spikes.to_string(),
        ])?;
    }
    finish(w)
}

/// `bin_low,bin_high,count`. Overflow is reported as `(last edge, inf)`,
/// patterns without an output spike as a row with empty bounds.
pub fn histogram_csv(h: &DelayHistogram) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_low", "bin_high", "count"])?;
    for (i, count) in h.counts.iter().enumerate() {
        w.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), count.to_string()])?;
    }
    let last = h.edges.last().expect("at least one bin");
    w.write_record([last.to_string(), "inf".into(), h.overflow.to_string()])?;
    w.write_record([String::new(), String::new(), h.silent.to_string()])?;
    finish(w)
}

/// Confusion matrix with one row per true label; columns are predicted
/// classes followed by `none`.
pub fn confusion_csv(m: &EvalMetrics) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let cols = m.confusion.first().map_or(0, Vec::len);
    let mut header = vec!["label".to_owned()];
    header.extend((0..cols.saturating_sub(1)).map(|c| c.to_string()));
    header.push("none".into());
    w.write_record(&header)?;
    for (label, row) in m.confusion.iter().enumerate() {
        let mut record = vec![label.to_string()];
        record.extend(row.iter().map(usize::to_string));
        w.write_record(&record)?;
    }
    finish(w)
}

/// `spikes_low,spikes_high,count`: consumed input spikes in bins of 16.
pub fn spike_count_csv(m: &EvalMetrics) -> Result<String> {
    const WIDTH: usize = 16;
    let max = m.max_spikes().unwrap_or(0);
    let mut counts = vec![0usize; max / WIDTH + 1];
    for r in &m.records {
        counts[r.spikes_consumed / WIDTH] += 1;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["spikes_low", "spikes_high", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        w.write_record([
            (i * WIDTH).to_string(),
            ((i + 1) * WIDTH - 1).to_string(),
            c.to_string(),
        ])?;
    }
    finish(w)
}
