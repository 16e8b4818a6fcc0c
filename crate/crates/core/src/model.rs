//! Network weights, layer geometry and the plain-text checkpoint format.
//!
//! A checkpoint looks like:
//!
//! ```text
//! pulsenet-model 1
//! dims 256 400 30
//! threshold 1
//! tau_syn_us 1
//! <row 0 of layer 0, space separated>
//! ...
//! ```
//!
//! Weights are written with Rust's shortest round-trip float formatting, so a
//! reloaded model is bit-identical to the one that was saved.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spike::KernelConfig;

const MAGIC: &str = "pulsenet-model";
const FORMAT_VERSION: u32 = 1;

/// Default layer sizes: 256 inputs, 400 hidden neurons, 30 classes.
pub const DEFAULT_DIMS: [usize; 3] = [256, 400, 30];

/// Dense weight matrix, rows are destination neurons and columns are sources.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LayerWeights {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from nested rows. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            if let Some(bad) = row.iter().find(|w| !w.is_finite()) {
                return Err(Error::InvalidConfig(format!("non-finite weight {bad}")));
            }
            data.extend_from_slice(row);
        }
        Ok(LayerWeights {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, w: f64) {
        self.data[r * self.cols + c] = w;
    }

    pub fn same_shape(&self, other: &LayerWeights) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// A feed-forward time-to-first-spike network.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    dims: Vec<usize>,
    layers: Vec<LayerWeights>,
    kernel: KernelConfig,
}

impl Model {
    /// Assembles a model, checking that each matrix joins adjacent layers.
    pub fn new(dims: Vec<usize>, layers: Vec<LayerWeights>, kernel: KernelConfig) -> Result<Self> {
        validate_dims(&dims)?;
        if layers.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch {
                expected: dims.len() - 1,
                actual: layers.len(),
            });
        }
        for (l, w) in layers.iter().enumerate() {
            if w.cols() != dims[l] {
                return Err(Error::ShapeMismatch {
                    expected: dims[l],
                    actual: w.cols(),
                });
            }
            if w.rows() != dims[l + 1] {
                return Err(Error::ShapeMismatch {
                    expected: dims[l + 1],
                    actual: w.rows(),
                });
            }
        }
        kernel.validate()?;
        Ok(Model { dims, layers, kernel })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerWeights] {
        &mut self.layers
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn input_size(&self) -> usize {
        self.dims[0]
    }

    pub fn output_size(&self) -> usize {
        *self.dims.last().expect("validated non-empty")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "dims {}", dims.join(" "));
        let _ = writeln!(out, "threshold {}", self.kernel.threshold);
        let _ = writeln!(out, "tau_syn_us {}", self.kernel.tau_syn);
        for layer in &self.layers {
            for r in 0..layer.rows() {
                let mut first = true;
                for w in layer.row(r) {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    let _ = write!(out, "{w}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, reason: String| Error::Parse {
            what: "model checkpoint",
            line,
            reason,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let mut header = |key: &str| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines.next().ok_or_else(|| perr(0, format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(perr(n, format!("expected `{key}`")));
            }
            Ok((n, parts.map(str::to_owned).collect()))
        };

        let (n, version) = header(MAGIC)?;
        if version != [FORMAT_VERSION.to_string()] {
            return Err(perr(n, format!("unsupported version {version:?}")));
        }
        let (n, dims) = header("dims")?;
        let dims = dims
            .iter()
            .map(|d| d.parse::<usize>().map_err(|e| perr(n, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let (n, thr) = header("threshold")?;
        let threshold = parse_single_f64(&thr).ok_or_else(|| perr(n, "bad threshold".into()))?;
        let (n, tau) = header("tau_syn_us")?;
        let tau_syn = parse_single_f64(&tau).ok_or_else(|| perr(n, "bad tau_syn_us".into()))?;
        validate_dims(&dims)?;

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (cols, rows) = (pair[0], pair[1]);
            let mut layer = LayerWeights::zeros(rows, cols);
            for r in 0..rows {
                let (n, line) = lines.next().ok_or_else(|| perr(0, "truncated weight block".into()))?;
                let row = layer.row_mut(r);
                let mut count = 0;
                for (slot, tok) in row.iter_mut().zip(line.split_whitespace()) {
                    let w: f64 = tok
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| perr(n, e.to_string()))?;
                    if !w.is_finite() {
                        return Err(perr(n, format!("non-finite weight {tok}")));
                    }
                    *slot = w;
                    count += 1;
                }
                if count != cols || line.split_whitespace().count() != cols {
                    return Err(perr(n, format!("expected {cols} weights")));
                }
            }
            layers.push(layer);
        }
        if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(perr(n, format!("trailing content `{extra}`")));
        }
        Model::new(dims, layers, KernelConfig::new(tau_syn, threshold)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_text(&text)
    }
}

fn parse_single_f64(tokens: &[String]) -> Option<f64> {
    match tokens {
        [one] => one.parse().ok().filter(|v: &f64| v.is_finite()),
        _ => None,
    }
}

pub(crate) fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidDims(dims.to_vec()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        let w1 = LayerWeights::from_rows(&[vec![0.1, -2.5e-7], vec![1.0 / 3.0, 4.0]]).unwrap();
        let w2 = LayerWeights::from_rows(&[vec![2.0, 0.5]]).unwrap();
        Model::new(vec![2, 2, 1], vec![w1, w2], KernelConfig::default()).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = tiny();
        let text = m.to_text();
        assert!(text.starts_with("pulsenet-model 1\ndims 2 2 1\nthreshold 1\ntau_syn_us 1\n"));
        assert_eq!(Model::from_text(&text).unwrap(), m);
    }

    #[test]
    fn rejects_wrong_row_width() {
        let text = "pulsenet-model 1\ndims 2 1\nthreshold 1\ntau_syn_us 1\n1 2 3\n";
        assert!(matches!(Model::from_text(text), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn rejects_mismatched_layers() {
        let w = LayerWeights::zeros(3, 2);
        let err = Model::new(vec![2, 4], vec![w], KernelConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { expected: 4, actual: 3 }));
        assert!(matches!(
            Model::new(vec![2], vec![], KernelConfig::default()),
            Err(Error::InvalidDims(_))
        ));
    }
}
