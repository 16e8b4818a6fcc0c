//! Run configuration: built-in defaults, then an optional flat TOML file,
//! then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use pulsenet::scenes::{DEFAULT_TEST_PER_CLASS, DEFAULT_TRAIN_PER_CLASS};
use pulsenet::{KernelConfig, TrainConfig, NOISE_RANGES};
use serde::{Deserialize, Serialize};

/// File name of the resolved-configuration echo a command writes into its
/// output directory, e.g. `resolved_train.toml`.
pub fn resolved_config_file(command: &str) -> String {
    format!("resolved_{command}.toml")
}

/// Training-set size per class in quick mode.
pub const QUICK_TRAIN_PER_CLASS: usize = 10;
/// Epoch count in quick mode.
pub const QUICK_EPOCHS: usize = 5;

/// Flags shared by every subcommand. Flags a command does not use are
/// ignored but still echoed.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Flat TOML file with any of the keys of a resolved config echo.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise range r (pixels perturbed by U[0, r]); repeatable.
    #[arg(long = "noise")]
    pub noise: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// L2 coefficient.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Model checkpoint to evaluate (default: `<out>/model.txt`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory holding dataset files (default: the output directory).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write the per-pattern trace CSV.
    #[arg(long)]
    pub trace: bool,
    /// Reduced run: 10 training patterns per class, 5 epochs.
    #[arg(long)]
    pub quick: bool,
}

/// Keys accepted in a config file. Every key is optional.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    /// Present in echoed configs; the subcommand itself decides.
    #[serde(rename = "command")]
    _command: Option<String>,
    noise: Option<Vec<f64>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    l2: Option<f64>,
    tau_syn_us: Option<f64>,
    threshold: Option<f64>,
    train_per_class: Option<usize>,
    test_per_class: Option<usize>,
    grad_clip: Option<f64>,
    penalty: Option<f64>,
    firing_margin: Option<f64>,
    trace: Option<bool>,
    quick: Option<bool>,
}

/// Fully resolved settings of one command.
#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub noise: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub data: PathBuf,
    pub model: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub l2: f64,
    pub tau_syn_us: f64,
    pub threshold: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-layer gradient norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub penalty: f64,
    pub firing_margin: f64,
    pub trace: bool,
    pub quick: bool,
}

impl RunConfig {
    /// Merges defaults, the config file named by `flags.config`, and the flags.
    pub fn resolve(command: &str, flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let defaults = TrainConfig::default();
        let quick = flags.quick || file.quick.unwrap_or(false);

        let noise = if !flags.noise.is_empty() {
            flags.noise.clone()
        } else if let Some(n) = file.noise {
            n
        } else if matches!(command, "train" | "eval") {
            vec![NOISE_RANGES[0]]
        } else {
            NOISE_RANGES.to_vec()
        };
        let out = flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out"));
        let data = flags.data.clone().or(file.data).unwrap_or_else(|| out.clone());
        let model = flags
            .model
            .clone()
            .or(file.model)
            .unwrap_or_else(|| out.join("model.txt"));
        let default_epochs = if quick { QUICK_EPOCHS } else { defaults.max_epochs };
        let default_train = if quick {
            QUICK_TRAIN_PER_CLASS
        } else {
            DEFAULT_TRAIN_PER_CLASS
        };

        let cfg = RunConfig {
            command: command.to_owned(),
            noise,
            seed: flags.seed.or(file.seed).unwrap_or(42),
            out,
            data,
            model,
            epochs: flags.epochs.or(file.epochs).unwrap_or(default_epochs),
            lr: flags.lr.or(file.lr).unwrap_or(defaults.learning_rate),
            batch: flags.batch.or(file.batch).unwrap_or(defaults.batch_size),
            l2: flags.l2.or(file.l2).unwrap_or(defaults.l2_lambda),
            tau_syn_us: file.tau_syn_us.unwrap_or(defaults.kernel.tau_syn),
            threshold: file.threshold.unwrap_or(defaults.kernel.threshold),
            train_per_class: file.train_per_class.unwrap_or(default_train),
            test_per_class: file.test_per_class.unwrap_or(DEFAULT_TEST_PER_CLASS),
            grad_clip: file.grad_clip.unwrap_or(defaults.grad_clip.unwrap_or(0.0)),
            penalty: file.penalty.unwrap_or(defaults.weight_sum_penalty),
            firing_margin: file.firing_margin.unwrap_or(defaults.firing_margin),
            trace: flags.trace || file.trace.unwrap_or(false),
            quick,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.noise.is_empty() {
            bail!("at least one noise range is required");
        }
        for &r in &self.noise {
            if !(0.0..=1.0).contains(&r) {
                bail!("noise range must lie in [0, 1], got {r}");
            }
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            bail!("train_per_class and test_per_class must be >= 1");
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            bail!("grad_clip must be >= 0, got {}", self.grad_clip);
        }
        self.train_config()?.validate()?;
        Ok(())
    }

    /// The single noise range of a `train` or `eval` run.
    pub fn single_noise(&self) -> Result<f64> {
        match self.noise.as_slice() {
            [r] => Ok(*r),
            many => bail!("`{}` takes one --noise, got {}", self.command, many.len()),
        }
    }

    pub fn kernel(&self) -> Result<KernelConfig> {
        Ok(KernelConfig::new(self.tau_syn_us, self.threshold)?)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            max_epochs: self.epochs,
            l2_lambda: self.l2,
            weight_sum_penalty: self.penalty,
            firing_margin: self.firing_margin,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            seed: pulsenet::rng::derive_seed(self.seed, "train"),
            kernel: self.kernel()?,
            ..TrainConfig::default()
        })
    }

    /// Seed handed to the dataset generator.
    pub fn dataset_seed(&self) -> u64 {
        pulsenet::rng::derive_seed(self.seed, "dataset")
    }

    /// Copy of this config for a stage writing into `out`.
    pub fn stage(&self, command: &str, out: &Path) -> RunConfig {
        RunConfig {
            command: command.to_owned(),
            out: out.to_path_buf(),
            data: out.to_path_buf(),
            model: out.join("model.txt"),
            ..self.clone()
        }
    }

    /// Writes the resolved config into its output directory.
    pub fn echo(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(resolved_config_file(&self.command));
        let text = toml::to_string(self).context("serializing config")?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
