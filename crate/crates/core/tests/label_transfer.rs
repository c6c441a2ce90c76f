//! KNN label transfer against a brute-force classifier.

use std::collections::BTreeMap;

use densify_core::synth::half_space_cloud;
use densify_core::transfer::{config_grid, cross_validate, fold_assignment, knn_predict};
use densify_core::{grid_search, seed, transfer_labels, KnnConfig, PointCloud, Weighting};
use proptest::prelude::*;
use rand::Rng;

fn brute_predict(points: &[[f64; 3]], labels: &[i32], q: [f64; 3], config: KnnConfig) -> i32 {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = (0..3).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum();
            (d2, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut weights: BTreeMap<i32, f64> = BTreeMap::new();
    for &(d2, i) in &order[..config.k] {
        let w = match config.weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / d2.sqrt().max(1e-12),
        };
        *weights.entry(labels[i]).or_default() += w;
    }
    // BTreeMap iterates labels ascending, so strict > keeps the smallest on ties.
    let mut best = (i32::MAX, f64::NEG_INFINITY);
    for (l, w) in weights {
        if w > best.1 {
            best = (l, w);
        }
    }
    best.0
}

fn brute_cv(cloud: &PointCloud, config: KnnConfig, folds: usize, seed: u64) -> f64 {
    let labels = cloud.labels.as_ref().unwrap();
    let assignment = fold_assignment(cloud.len(), folds, seed);
    let mut total = 0.0;
    for held in &assignment {
        let train: Vec<usize> = (0..cloud.len()).filter(|i| !held.contains(i)).collect();
        let tp: Vec<[f64; 3]> = train.iter().map(|&i| cloud.positions[i]).collect();
        let tl: Vec<i32> = train.iter().map(|&i| labels[i]).collect();
        let hits = held
            .iter()
            .filter(|&&i| brute_predict(&tp, &tl, cloud.positions[i], config) == labels[i])
            .count();
        total += hits as f64 / held.len() as f64;
    }
    total / folds as f64
}

#[test]
fn predictions_match_brute_force() {
    let mut rng = seed::rng(5);
    // Coarse lattice coordinates produce many equidistant neighbors and vote ties.
    let points: Vec<[f64; 3]> = (0..600)
        .map(|_| [0; 3].map(|_| rng.random_range(0..6) as f64 * 0.5))
        .collect();
    let labels: Vec<i32> = (0..600).map(|_| rng.random_range(0..4)).collect();
    for config in config_grid() {
        for _ in 0..40 {
            let q = [0; 3].map(|_| rng.random_range(-0.5..3.0));
            assert_eq!(
                knn_predict(&points, &labels, q, config).unwrap(),
                brute_predict(&points, &labels, q, config),
                "{config}"
            );
        }
    }
}

#[test]
fn cross_validation_matches_brute_force() {
    let cloud = half_space_cloud(400, 3, 0.1, 9);
    for config in config_grid() {
        let fast = cross_validate(&cloud, config, 10, 21).unwrap();
        assert_eq!(fast, brute_cv(&cloud, config, 10, 21), "{config}");
    }
}

#[test]
fn separated_clusters_are_perfect() {
    let mut rng = seed::rng(8);
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for (label, center) in [(0, [0.0, 0.0, 0.0]), (1, [100.0, 0.0, 0.0])] {
        for _ in 0..500 {
            positions.push([0, 1, 2].map(|k| center[k] + rng.random::<f64>()));
            labels.push(label);
        }
    }
    let cloud = PointCloud::from_positions(positions).with_labels(labels);
    let result = grid_search(&cloud, 1).unwrap();
    assert!(result.accuracies.iter().all(|(_, a)| *a == 1.0));
    assert_eq!(result.best_config, config_grid()[0]);
}

#[test]
fn half_space_noise_bounds_accuracy() {
    let cloud = half_space_cloud(4000, 4, 0.05, 17);
    let result = grid_search(&cloud, 3).unwrap();
    assert!(result.best_accuracy >= 0.95, "{}", result.best_accuracy);
    assert_eq!(result.accuracies.len(), 18);
    let rerun = cross_validate(&cloud, result.best_config, 10, 3).unwrap();
    assert_eq!(rerun, result.best_accuracy);
    for (_, a) in &result.accuracies {
        assert!(*a <= result.best_accuracy);
    }
}

#[test]
fn transfer_labels_every_dense_point_from_sparse_set() {
    let sparse = half_space_cloud(2000, 5, 0.0, 2);
    let dense = PointCloud::from_positions(half_space_cloud(40_000, 5, 0.0, 3).positions)
        .with_colors(vec![[9, 8, 7]; 40_000]);
    let config = KnnConfig {
        k: 5,
        weighting: Weighting::InverseDistance,
    };
    let out = transfer_labels(&sparse, &dense, config).unwrap();
    let labels = out.labels.as_ref().unwrap();
    assert_eq!(labels.len(), 40_000);
    assert_eq!(out.positions, dense.positions);
    assert_eq!(out.colors, dense.colors);
    let allowed = sparse.label_set();
    assert!(labels.iter().all(|l| allowed.binary_search(l).is_ok()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transferred_labels_come_from_sparse(
        seed in 0u64..1000,
        parts in 1usize..6,
        k in prop::sample::select(vec![1usize, 3, 9, 17]),
    ) {
        let sparse = half_space_cloud(300, parts, 0.2, seed);
        let dense = PointCloud::from_positions(half_space_cloud(500, parts, 0.0, seed + 1).positions);
        let out = transfer_labels(&sparse, &dense, KnnConfig { k, weighting: Weighting::Uniform }).unwrap();
        let allowed = sparse.label_set();
        prop_assert!(out.labels.unwrap().iter().all(|l| allowed.binary_search(l).is_ok()));
    }
}
