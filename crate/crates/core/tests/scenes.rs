use std::collections::HashSet;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use pulsenet::scenes::{class_table_csv, DEFAULT_TEST_PER_CLASS, DEFAULT_TRAIN_PER_CLASS, GRID};
use pulsenet::{generate_dataset, inject_noise, render_scene, Dataset, NoiseSpec, CLASS_COUNT, PIXELS};

const GOLDEN_ROAD: &str = include_str!("golden/road_seed42.txt");

fn parse_grid(text: &str) -> Vec<f64> {
    text.split_whitespace().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn road_scene_matches_golden_file() {
    let map = render_scene(0, 42).unwrap();
    let golden = parse_grid(GOLDEN_ROAD);
    assert_eq!(golden.len(), GRID * GRID);
    assert_eq!(map.delays(), golden.as_slice());
}

#[test]
fn default_generation_is_balanced() {
    let (train, test) = generate_dataset(DEFAULT_TRAIN_PER_CLASS, DEFAULT_TEST_PER_CLASS, 0.1, 42).unwrap();
    assert_eq!(train.len(), 3000);
    assert_eq!(test.len(), 600);
    assert!(train.class_counts().iter().all(|&c| c == 100));
    assert!(test.class_counts().iter().all(|&c| c == 20));
    for p in train.patterns.iter().chain(&test.patterns) {
        assert_eq!(p.delays().len(), PIXELS);
        assert!(p.label() < CLASS_COUNT);
        assert!(p.delays().iter().all(|d| (0.0..=1.0).contains(d)));
    }
}

#[test]
fn generation_is_deterministic_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let (train, _) = generate_dataset(5, 1, 0.2, 9).unwrap();
        let path = dir.path().join(format!("train_{run}.txt"));
        train.save(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
        assert_eq!(Dataset::load(&path).unwrap(), train);
    }
    assert_eq!(bytes[0], bytes[1]);
    let (other, _) = generate_dataset(5, 1, 0.2, 10).unwrap();
    assert_ne!(other.to_text().into_bytes(), bytes[0]);
}

#[test]
fn train_and_test_never_share_a_pattern() {
    let (train, test) = generate_dataset(DEFAULT_TRAIN_PER_CLASS, DEFAULT_TEST_PER_CLASS, 0.1, 42).unwrap();
    let key = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let seen: HashSet<Vec<u64>> = train.patterns.iter().map(|p| key(p.delays())).collect();
    let shared = test.patterns.iter().filter(|p| seen.contains(&key(p.delays()))).count();
    assert_eq!(shared, 0);
}

#[test]
fn nearest_centroid_separates_low_noise_classes() {
    let (train, test) = generate_dataset(DEFAULT_TRAIN_PER_CLASS, DEFAULT_TEST_PER_CLASS, 0.1, 42).unwrap();
    let mut centroids = vec![vec![0.0; PIXELS]; CLASS_COUNT];
    for p in &train.patterns {
        for (c, d) in centroids[p.label()].iter_mut().zip(p.delays()) {
            *c += d;
        }
    }
    let counts = train.class_counts();
    for (c, n) in centroids.iter_mut().zip(counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    let dist = |c: &[f64], d: &[f64]| c.iter().zip(d).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let correct = test
        .patterns
        .iter()
        .filter(|p| {
            let best = (0..CLASS_COUNT)
                .min_by(|&a, &b| dist(&centroids[a], p.delays()).total_cmp(&dist(&centroids[b], p.delays())))
                .unwrap();
            best == p.label()
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.8, "nearest-centroid accuracy {acc}");
}

#[test]
fn class_table_lists_every_class() {
    let csv = class_table_csv().unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), CLASS_COUNT);
    for (id, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("{id},")), "{row}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 256,
        rng_seed: RngSeed::Fixed(3),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn noise_is_additive_and_bounded(class in 0..CLASS_COUNT, scene_seed in any::<u64>(), noise_seed in any::<u64>(), range in 0.0..0.6f64) {
        let clean = render_scene(class, scene_seed).unwrap();
        let noisy = inject_noise(&clean, &NoiseSpec::new(range, noise_seed).unwrap());
        prop_assert_eq!(noisy.label(), clean.label());
        for (&a, &b) in clean.delays().iter().zip(noisy.delays()) {
            prop_assert!(b >= a);
            prop_assert!(b <= (a + range).min(1.0));
        }
    }

    #[test]
    fn wider_noise_never_perturbs_less(class in 0..CLASS_COUNT, seed in any::<u64>(), r in 0.05..0.3f64, extra in 0.0..0.3f64) {
        let clean = render_scene(class, seed).unwrap();
        let narrow = inject_noise(&clean, &NoiseSpec::new(r, seed).unwrap());
        let wide = inject_noise(&clean, &NoiseSpec::new(r + extra, seed).unwrap());
        for (a, b) in narrow.delays().iter().zip(wide.delays()) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn small_datasets_are_balanced(per_class in 1usize..4, seed in any::<u64>()) {
        let (train, test) = generate_dataset(per_class, 1, 0.33, seed).unwrap();
        prop_assert!(train.class_counts().iter().all(|&c| c == per_class));
        prop_assert!(test.class_counts().iter().all(|&c| c == 1));
    }
}
