//! The four subcommands. Each returns the process exit status.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pulsenet::metrics::{confusion_csv, histogram_csv, spike_count_csv, summary_csv, trace_csv};
use pulsenet::scenes::{class_table_csv, noise_tag};
use pulsenet::{
    agreement_check, evaluate, generate_split, train_with_progress, Dataset, EvalMetrics, Model, Split, TrainReport,
};

use crate::config::RunConfig;

/// Exit status when the event-driven and analytic passes disagree.
pub const EXIT_MISMATCH: u8 = 2;

pub const CLASS_TABLE: &str = "classes.csv";
pub const MODEL: &str = "model.txt";
pub const FINAL_MODEL: &str = "model_final.txt";
pub const ACCURACY_CURVE: &str = "accuracy.csv";
pub const TRAIN_SUMMARY: &str = "train_summary.csv";
pub const SUMMARY: &str = "summary.csv";
pub const HISTOGRAM: &str = "histogram.csv";
pub const FINE_HISTOGRAM: &str = "histogram_fine.csv";
pub const CONFUSION: &str = "confusion.csv";
pub const SPIKE_COUNTS: &str = "spike_counts.csv";
pub const TRACE: &str = "trace.csv";
pub const TABLE: &str = "table.csv";

pub fn dataset_file(split: Split, noise: f64) -> String {
    format!("{split}_noise_{}.txt", noise_tag(noise))
}

/// Per-noise subdirectory of a bench run.
pub fn bench_dir(out: &Path, noise: f64) -> PathBuf {
    out.join(format!("noise_{}", noise_tag(noise)))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(dir: &Path, split: Split, noise: f64) -> Result<Dataset> {
    let path = dir.join(dataset_file(split, noise));
    Dataset::load(&path).with_context(|| format!("loading {split} set (run gen-data first?)"))
}

pub fn gen_data(cfg: &RunConfig) -> Result<u8> {
    cfg.echo()?;
    for &noise in &cfg.noise {
        for (split, per_class) in [(Split::Train, cfg.train_per_class), (Split::Test, cfg.test_per_class)] {
            let ds = generate_split(split, per_class, noise, cfg.dataset_seed())?;
            ds.save(&cfg.out.join(dataset_file(split, noise)))?;
            println!("noise {}: {} {split} patterns", noise_tag(noise), ds.len());
        }
    }
    write(&cfg.out.join(CLASS_TABLE), class_table_csv()?)?;
    Ok(0)
}

fn accuracy_curve_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,accuracy\n");
    for e in &report.epochs {
        writeln!(s, "{},{}", e.epoch, e.test_accuracy).expect("string write");
    }
    s
}

fn train_summary_csv(report: &TrainReport) -> String {
    format!(
        "epochs,best_epoch,best_accuracy,final_accuracy,final_train_loss\n{},{},{},{},{}\n",
        report.epochs.len(),
        report.best_epoch,
        report.best_accuracy(),
        report.final_accuracy(),
        report.final_train_loss()
    )
}

fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    let noise = cfg.single_noise()?;
    let tc = cfg.train_config()?;
    let train_set = load_dataset(&cfg.data, Split::Train, noise)?;
    let test_set = load_dataset(&cfg.data, Split::Test, noise)?;
    let width = tc.dims[0];
    if let Some(p) = train_set
        .patterns
        .iter()
        .chain(&test_set.patterns)
        .find(|p| p.delays().len() != width)
    {
        anyhow::bail!(
            "dataset pattern has {} pixels, network expects {width}",
            p.delays().len()
        );
    }
    cfg.echo()?;
    let report = train_with_progress(
        &train_set.samples(&tc.kernel),
        &test_set.samples(&tc.kernel),
        &tc,
        |e| {
            eprintln!(
                "epoch {:3}  test accuracy {:.4}  train loss {:.4}",
                e.epoch, e.test_accuracy, e.train_loss
            )
        },
    )?;
    report.best_model.save(&cfg.out.join(MODEL))?;
    report.final_model.save(&cfg.out.join(FINAL_MODEL))?;
    write(&cfg.out.join(ACCURACY_CURVE), accuracy_curve_csv(&report))?;
    write(&cfg.out.join(TRAIN_SUMMARY), train_summary_csv(&report))?;
    println!(
        "final accuracy {}  best accuracy {} (epoch {})",
        report.final_accuracy(),
        report.best_accuracy(),
        report.best_epoch
    );
    Ok(report)
}

pub fn train(cfg: &RunConfig) -> Result<u8> {
    run_train(cfg)?;
    Ok(0)
}

/// Evaluation outcome kept for the bench table.
pub struct EvalOutcome {
    pub noise: f64,
    pub metrics: EvalMetrics,
    pub mismatches: usize,
}

fn run_eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let noise = cfg.single_noise()?;
    let model = Model::load(&cfg.model)?;
    let test_set = load_dataset(&cfg.data, Split::Test, noise)?;
    cfg.echo()?;
    let metrics = evaluate(&test_set, &model)?;
    let mismatches = agreement_check(&test_set, &model)?;

    write(&cfg.out.join(SUMMARY), summary_csv(&[(noise, &metrics)])?)?;
    write(&cfg.out.join(HISTOGRAM), histogram_csv(&metrics.histogram)?)?;
    write(&cfg.out.join(FINE_HISTOGRAM), histogram_csv(&metrics.fine_histogram)?)?;
    write(&cfg.out.join(CONFUSION), confusion_csv(&metrics)?)?;
    write(&cfg.out.join(SPIKE_COUNTS), spike_count_csv(&metrics)?)?;
    if cfg.trace {
        write(&cfg.out.join(TRACE), trace_csv(&metrics)?)?;
    }

    let show = |v: Option<usize>| v.map_or("-".to_owned(), |v| v.to_string());
    println!(
        "noise {}  accuracy {}  mean delay {} us  input spikes {}..{}",
        noise_tag(noise),
        metrics.accuracy,
        metrics.mean_delay_us().map_or("-".to_owned(), |d| format!("{d:.4}")),
        show(metrics.min_spikes()),
        show(metrics.max_spikes()),
    );
    if mismatches > 0 {
        eprintln!("error: event-driven and analytic inference disagree on {mismatches} patterns");
    }
    Ok(EvalOutcome {
        noise,
        metrics,
        mismatches,
    })
}

pub fn eval(cfg: &RunConfig) -> Result<u8> {
    let outcome = run_eval(cfg)?;
    Ok(if outcome.mismatches > 0 { EXIT_MISMATCH } else { 0 })
}

fn table_csv(rows: &[(EvalOutcome, TrainReport)]) -> String {
    let mut s = String::from(
        "noise_range,accuracy,final_accuracy,best_epoch,mean_delay_us,core_band_fraction,min_spikes,max_spikes,agreement_mismatches\n",
    );
    for (o, report) in rows {
        let m = &o.metrics;
        let opt = |v: Option<String>| v.unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            o.noise,
            m.accuracy,
            report.final_accuracy(),
            report.best_epoch,
            opt(m.mean_delay_us().map(|d| d.to_string())),
            m.core_band_fraction(),
            opt(m.min_spikes().map(|v| v.to_string())),
            opt(m.max_spikes().map(|v| v.to_string())),
            o.mismatches
        )
        .expect("string write");
    }
    s
}

/// Generates, trains and evaluates every noise range in its own
/// subdirectory, then writes the combined table.
pub fn bench(cfg: &RunConfig) -> Result<u8> {
    cfg.echo()?;
    let mut rows = Vec::new();
    for &noise in &cfg.noise {
        let dir = bench_dir(&cfg.out, noise);
        let stage = |command: &str| RunConfig {
            noise: vec![noise],
            trace: true,
            ..cfg.stage(command, &dir)
        };
        println!("== noise {}", noise_tag(noise));
        gen_data(&stage("gen-data"))?;
        let report = run_train(&stage("train"))?;
        let outcome = run_eval(&stage("eval"))?;
        rows.push((outcome, report));
    }
    let summary: Vec<(f64, &EvalMetrics)> = rows.iter().map(|(o, _)| (o.noise, &o.metrics)).collect();
    write(&cfg.out.join(SUMMARY), summary_csv(&summary)?)?;
    write(&cfg.out.join(TABLE), table_csv(&rows))?;
    print!("{}", table_csv(&rows));
    let failed = rows.iter().any(|(o, _)| o.mismatches > 0);
    Ok(if failed { EXIT_MISMATCH } else { 0 })
}
