//! Dataset generation and the plain-text dataset format.
//!
//! ```text
//! pulsenet-dataset 1
//! grid 16 16
//! classes 30
//! noise 0.1
//! seed 42
//! split train
//! count 3000
//! <label> <256 delays>
//! ...
//! ```

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::{inject_noise, render_scene, DelayMap, NoiseSpec, SceneCatalog, CLASS_COUNT, GRID, PIXELS};
use crate::error::{Error, Result};
use crate::rng;
use crate::spike::KernelConfig;
use crate::trainer::Sample;

const MAGIC: &str = "pulsenet-dataset";
const FORMAT_VERSION: u32 = 1;

pub const DEFAULT_TRAIN_PER_CLASS: usize = 100;
pub const DEFAULT_TEST_PER_CLASS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// File-name tag for a noise range, e.g. `0.10`.
pub fn noise_tag(range: f64) -> String {
    format!("{range:.2}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub noise_range: f64,
    pub seed: u64,
    pub patterns: Vec<DelayMap>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Encodes every pattern as input spike times.
    pub fn samples(&self, cfg: &KernelConfig) -> Vec<Sample> {
        self.patterns
            .iter()
            .map(|p| Sample {
                spikes: super::encode_delays(p, cfg),
                label: p.label(),
            })
            .collect()
    }

    /// Number of patterns per class label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; CLASS_COUNT];
        for p in &self.patterns {
            counts[p.label()] += 1;
        }
        counts
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.patterns.len() * PIXELS * 8);
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "grid {GRID} {GRID}");
        let _ = writeln!(out, "classes {CLASS_COUNT}");
        let _ = writeln!(out, "noise {}", self.noise_range);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "split {}", self.split);
        let _ = writeln!(out, "count {}", self.patterns.len());
        for p in &self.patterns {
            let _ = write!(out, "{}", p.label());
            for d in p.delays() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, reason: String| Error::Parse {
            what: "dataset",
            line,
            reason,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or_else(|| perr(0, format!("missing `{key}` line")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((n, v.trim().to_owned())),
                _ => Err(perr(n, format!("expected `{key}`"))),
            }
        };

        let (n, v) = header(MAGIC)?;
        if v != FORMAT_VERSION.to_string() {
            return Err(perr(n, format!("unsupported version {v}")));
        }
        let (n, v) = header("grid")?;
        if v != format!("{GRID} {GRID}") {
            return Err(perr(n, format!("unsupported grid {v}")));
        }
        let (n, v) = header("classes")?;
        if v != CLASS_COUNT.to_string() {
            return Err(perr(n, format!("unsupported class count {v}")));
        }
        let (n, v) = header("noise")?;
        let noise_range: f64 = v.parse().map_err(|_| perr(n, format!("bad noise range {v}")))?;
        let (n, v) = header("seed")?;
        let seed: u64 = v.parse().map_err(|_| perr(n, format!("bad seed {v}")))?;
        let (n, v) = header("split")?;
        let split: Split = v.parse().map_err(|e| perr(n, e))?;
        let (n, v) = header("count")?;
        let count: usize = v.parse().map_err(|_| perr(n, format!("bad count {v}")))?;

        let mut patterns = Vec::with_capacity(count);
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let label: usize = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| perr(n, "bad label".into()))?;
            let delays = tokens
                .map(|t| t.parse::<f64>().map_err(|e| perr(n, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            patterns.push(DelayMap::new(delays, label).map_err(|e| perr(n, e.to_string()))?);
        }
        if patterns.len() != count {
            return Err(perr(
                0,
                format!("header says {count} patterns, found {}", patterns.len()),
            ));
        }
        Ok(Dataset {
            split,
            noise_range,
            seed,
            patterns,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_text(&text)
    }
}

/// Generates `per_class` patterns for every class: render with jitter, then
/// add noise. Pattern seeds depend on the root seed, split, class and index
/// but not on the noise range, so the same scenes appear at every range.
pub fn generate_split(split: Split, per_class: usize, noise_range: f64, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::InvalidConfig("patterns per class must be >= 1".into()));
    }
    NoiseSpec::new(noise_range, 0)?;
    let jobs: Vec<(usize, usize)> = (0..CLASS_COUNT)
        .flat_map(|c| (0..per_class).map(move |k| (c, k)))
        .collect();
    let patterns = jobs
        .par_iter()
        .map(|&(class, k)| {
            let pattern_seed = rng::derive_seed(seed, &format!("{split}/{class}/{k}"));
            let clean = render_scene(class, pattern_seed)?;
            Ok(inject_noise(&clean, &NoiseSpec::new(noise_range, pattern_seed)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        split,
        noise_range,
        seed,
        patterns,
    })
}

/// Train and test sets drawn from disjoint seed streams.
pub fn generate_dataset(
    per_class_train: usize,
    per_class_test: usize,
    noise_range: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    Ok((
        generate_split(Split::Train, per_class_train, noise_range, seed)?,
        generate_split(Split::Test, per_class_test, noise_range, seed)?,
    ))
}

/// `id,name` table of the built-in classes.
pub fn class_table_csv() -> Result<String> {
    let cat = SceneCatalog::builtin();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "name"])?;
    for id in 0..cat.class_count() {
        w.write_record([id.to_string().as_str(), cat.class_name(id)?])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("class table", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
