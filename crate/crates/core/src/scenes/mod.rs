//! Synthetic LiDAR temporal-pulse patterns: 16x16 delay maps rendered from
//! scene templates, per-pattern position jitter, additive uniform noise and
//! the conversion of delays into input spike times.

mod catalog;
mod dataset;

use rand::Rng;

pub use catalog::{SceneCatalog, SceneTemplate};
pub use dataset::{
    class_table_csv, generate_dataset, generate_split, noise_tag, Dataset, Split, DEFAULT_TEST_PER_CLASS,
    DEFAULT_TRAIN_PER_CLASS,
};

use crate::error::{Error, Result};
use crate::rng;
use crate::spike::{KernelConfig, SpikeTime};

/// Side length of a delay map.
pub const GRID: usize = 16;
pub const PIXELS: usize = GRID * GRID;
pub const CLASS_COUNT: usize = 30;

/// Physical delay of a pixel at normalised value 1.0, in microseconds.
pub const MAX_DELAY_US: f64 = 1.0;

/// Default half-width of the per-pattern object offset.
pub const DEFAULT_JITTER: f64 = 0.05;

/// Upper bounds of the four noise ranges evaluated in the benchmark.
pub const NOISE_RANGES: [f64; 4] = [0.10, 0.20, 0.33, 0.50];

/// One pattern: 256 normalised pulse delays in `[0, 1]` plus its class.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayMap {
    delays: Vec<f64>,
    label: usize,
}

impl DelayMap {
    pub fn new(delays: Vec<f64>, label: usize) -> Result<Self> {
        if delays.len() != PIXELS {
            return Err(Error::ShapeMismatch {
                expected: PIXELS,
                actual: delays.len(),
            });
        }
        if let Some(d) = delays.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::InvalidConfig(format!("delay {d} is outside [0, 1]")));
        }
        if label >= CLASS_COUNT {
            return Err(Error::UnknownClass(label));
        }
        Ok(DelayMap { delays, label })
    }

    /// Row-major delays.
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.delays[row * GRID + col]
    }

    fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> DelayMap {
        DelayMap {
            delays: self
                .delays
                .iter()
                .enumerate()
                .map(|(i, &d)| f(i, d).clamp(0.0, 1.0))
                .collect(),
            label: self.label,
        }
    }
}

/// Additive noise `U[0, range]` per pixel, drawn from `seed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub range: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(range: f64, seed: u64) -> Result<Self> {
        if !(range >= 0.0 && range.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise range must be >= 0, got {range}")));
        }
        Ok(NoiseSpec { range, seed })
    }
}

/// Renders class `class_id` with an object offset drawn from `jitter_seed`.
pub fn render_scene(class_id: usize, jitter_seed: u64) -> Result<DelayMap> {
    let template = SceneCatalog::builtin().template(class_id)?;
    let delta = draw_jitter(jitter_seed, DEFAULT_JITTER);
    Ok(apply_jitter(template, delta))
}

/// Jitter offset `U[-amplitude, amplitude]` for a seed.
pub fn draw_jitter(seed: u64, amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    rng::stream(seed, "jitter").random_range(-amplitude..=amplitude)
}

/// Adds `delta` to every footprint pixel, clamping to `[0, 1]`.
pub fn apply_jitter(template: &SceneTemplate, delta: f64) -> DelayMap {
    template
        .map
        .map_values(|i, d| if template.footprint[i] { d + delta } else { d })
}

/// Adds an independent `U[0, range]` draw to every pixel and clamps to 1.
///
/// The per-pixel draws are `range * u` for a fixed uniform matrix `u` per
/// seed, so the same seed at a wider range perturbs every pixel at least as
/// much.
pub fn inject_noise(map: &DelayMap, spec: &NoiseSpec) -> DelayMap {
    if spec.range == 0.0 {
        return map.clone();
    }
    let mut rng = rng::stream(spec.seed, "noise");
    let draws: Vec<f64> = (0..PIXELS).map(|_| rng.random::<f64>()).collect();
    map.map_values(|i, d| d + spec.range * draws[i])
}

/// Converts normalised delays into input spike times in tau_syn units.
pub fn encode_delays(map: &DelayMap, cfg: &KernelConfig) -> Vec<SpikeTime> {
    map.delays
        .iter()
        .map(|&d| SpikeTime::at(cfg.to_internal(d * MAX_DELAY_US)))
        .collect()
}

/// Inverse of [`encode_delays`]. Silent inputs decode to `None`.
pub fn decode_spikes(spikes: &[SpikeTime], cfg: &KernelConfig) -> Vec<Option<f64>> {
    spikes
        .iter()
        .map(|t| t.value().map(|t| cfg.to_us(t) / MAX_DELAY_US))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(value: f64) -> DelayMap {
        DelayMap::new(vec![value; PIXELS], 3).unwrap()
    }

    #[test]
    fn delay_map_validation() {
        assert!(DelayMap::new(vec![0.5; 10], 0).is_err());
        assert!(DelayMap::new(vec![1.5; PIXELS], 0).is_err());
        assert!(matches!(
            DelayMap::new(vec![0.5; PIXELS], 30),
            Err(Error::UnknownClass(30))
        ));
        assert!(matches!(render_scene(30, 0), Err(Error::UnknownClass(30))));
    }

    #[test]
    fn jitter_arithmetic() {
        let template = SceneTemplate {
            map: flat(0.5),
            footprint: (0..PIXELS).map(|i| i % 2 == 0).collect(),
        };
        assert_eq!(apply_jitter(&template, 0.0), template.map);
        let moved = apply_jitter(&template, 0.05);
        for (i, &d) in moved.delays().iter().enumerate() {
            let expected = if i % 2 == 0 { 0.55 } else { 0.5 };
            assert!((d - expected).abs() < 1e-15);
        }
        assert_eq!(moved.label(), 3);

        let high = SceneTemplate {
            map: flat(0.98),
            footprint: vec![true; PIXELS],
        };
        assert!(apply_jitter(&high, 0.05).delays().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn jitter_is_centred() {
        let n = 1000;
        let mean = (0..n).map(|s| draw_jitter(s, DEFAULT_JITTER)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005, "mean jitter {mean}");
        assert!((0..n).all(|s| draw_jitter(s, DEFAULT_JITTER).abs() <= DEFAULT_JITTER));
        assert_eq!(draw_jitter(5, 0.0), 0.0);
    }

    #[test]
    fn noise_bounds() {
        let map = render_scene(7, 1).unwrap();
        assert_eq!(inject_noise(&map, &NoiseSpec::new(0.0, 9).unwrap()), map);
        let noisy = inject_noise(&map, &NoiseSpec::new(0.1, 9).unwrap());
        for (&a, &b) in map.delays().iter().zip(noisy.delays()) {
            assert!(b >= a && b <= (a + 0.1).min(1.0));
        }
        assert_eq!(noisy.label(), map.label());
        assert_eq!(noisy, inject_noise(&map, &NoiseSpec::new(0.1, 9).unwrap()));
        assert_ne!(noisy, inject_noise(&map, &NoiseSpec::new(0.1, 10).unwrap()));
        assert!(NoiseSpec::new(-0.1, 0).is_err());
    }

    #[test]
    fn noise_mean_matches_uniform() {
        let map = flat(0.0);
        let n = 1000;
        let mut total = 0.0;
        for seed in 0..n {
            let noisy = inject_noise(&map, &NoiseSpec::new(0.5, seed).unwrap());
            total += noisy.delays().iter().sum::<f64>() / PIXELS as f64;
        }
        let mean = total / n as f64;
        assert!((mean - 0.25).abs() < 0.01, "mean perturbation {mean}");
    }

    #[test]
    fn encode_examples() {
        let cfg = KernelConfig::new(1.0, 1.0).unwrap();
        let spikes = encode_delays(&flat(0.0), &cfg);
        assert_eq!(spikes.len(), PIXELS);
        assert!(spikes.iter().all(|t| t.raw() == 0.0));

        let mut delays = vec![0.25; PIXELS];
        delays[17] = 1.0;
        let map = DelayMap::new(delays, 0).unwrap();
        let spikes = encode_delays(&map, &cfg);
        assert_eq!(spikes[17].raw(), 1.0);
        assert_eq!(spikes[0].raw(), 0.25);

        let fast = KernelConfig::new(0.125, 1.0).unwrap();
        assert_eq!(encode_delays(&map, &fast)[17].raw(), 8.0);
    }

    #[test]
    fn encode_round_trip() {
        for tau in [1.0, 0.1, 0.37] {
            let cfg = KernelConfig::new(tau, 1.0).unwrap();
            let map = inject_noise(&render_scene(12, 4).unwrap(), &NoiseSpec::new(0.2, 1).unwrap());
            let back = decode_spikes(&encode_delays(&map, &cfg), &cfg);
            for (a, b) in map.delays().iter().zip(back) {
                assert!((a - b.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rendered_scenes_are_valid() {
        for class in 0..CLASS_COUNT {
            let map = render_scene(class, 11).unwrap();
            assert_eq!(map.label(), class);
            assert!(map.delays().iter().all(|d| (0.0..=1.0).contains(d)));
            assert!(map.delays().iter().any(|&d| d < 1.0));
        }
    }

    #[test]
    fn jitter_moves_only_the_footprint() {
        let cat = SceneCatalog::builtin();
        for class in [0, 3, 9, 17, 29] {
            let t = cat.template(class).unwrap();
            let a = render_scene(class, 1).unwrap();
            let b = render_scene(class, 2).unwrap();
            let da = draw_jitter(1, DEFAULT_JITTER);
            let db = draw_jitter(2, DEFAULT_JITTER);
            for i in 0..PIXELS {
                let base = t.map.delays()[i];
                if t.footprint[i] {
                    assert!((a.delays()[i] - (base + da).clamp(0.0, 1.0)).abs() < 1e-15);
                    assert!((b.delays()[i] - (base + db).clamp(0.0, 1.0)).abs() < 1e-15);
                } else {
                    assert_eq!(a.delays()[i], base);
                    assert_eq!(b.delays()[i], base);
                }
            }
        }
    }
}
