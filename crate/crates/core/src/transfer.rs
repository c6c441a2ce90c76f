//! Per-pair KNN part-label transfer with grid search over `(k, weighting)` and
//! k-fold cross-validation.

use crate::cloud::PointCloud;
use crate::geometry::Point3;
use crate::kdtree::{KdTree, KdTreeError, Neighbor};
use crate::seed;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::fmt;
use thiserror::Error;

/// Guard against division by zero for inverse-distance votes.
pub const EXACT_HIT_EPSILON: f64 = 1e-12;
pub const DEFAULT_FOLDS: usize = 10;
/// Largest `k` in the grid.
pub const MAX_K: usize = 17;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransferError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("k = {k} exceeds the {n} training points")]
    KTooLarge { k: usize, n: usize },
    #[error("cloud has {points} points, fewer than {folds} folds")]
    TooFewPoints { points: usize, folds: usize },
    #[error("fold training portion has {train} points, fewer than k = {k}")]
    FoldTooSmall { train: usize, k: usize },
    #[error("cloud has no labels")]
    Unlabeled,
    #[error("{0} positions but {1} labels")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Index(#[from] KdTreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::InverseDistance => "distance",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "uniform" => Some(Weighting::Uniform),
            "distance" => Some(Weighting::InverseDistance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KnnConfig {
    pub k: usize,
    pub weighting: Weighting,
}

impl fmt::Display for KnnConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={} {}", self.k, self.weighting.name())
    }
}

/// The 18 configurations: odd `k` from 1 to 17, each with uniform then
/// inverse-distance weighting. This order is also the tie-break order.
pub fn config_grid() -> Vec<KnnConfig> {
    (1..=MAX_K)
        .step_by(2)
        .flat_map(|k| {
            [Weighting::Uniform, Weighting::InverseDistance]
                .map(|weighting| KnnConfig { k, weighting })
        })
        .collect()
}

/// Votes over the first `k` neighbors (already in ascending order). Ties go
/// to the smallest label.
pub fn vote(neighbors: &[Neighbor], labels: &[i32], k: usize, weighting: Weighting) -> i32 {
    let mut tally: Vec<(i32, f64)> = Vec::with_capacity(k);
    for n in &neighbors[..k] {
        let w = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / n.distance.max(EXACT_HIT_EPSILON),
        };
        let label = labels[n.index];
        match tally.iter_mut().find(|(l, _)| *l == label) {
            Some(entry) => entry.1 += w,
            None => tally.push((label, w)),
        }
    }
    tally
        .into_iter()
        .reduce(|best, cand| {
            if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .map(|(l, _)| l)
        .expect("k >= 1")
}

/// Predicts the label of `query` from a tree over the training points.
pub fn knn_predict_with_tree(
    tree: &KdTree,
    labels: &[i32],
    query: Point3,
    config: KnnConfig,
) -> Result<i32, TransferError> {
    if config.k > tree.len() {
        return Err(TransferError::KTooLarge {
            k: config.k,
            n: tree.len(),
        });
    }
    let neighbors = tree.k_nearest(query, config.k)?;
    Ok(vote(&neighbors, labels, config.k, config.weighting))
}

pub fn knn_predict(
    train_points: &[Point3],
    train_labels: &[i32],
    query: Point3,
    config: KnnConfig,
) -> Result<i32, TransferError> {
    if train_points.is_empty() {
        return Err(TransferError::EmptyTrainingSet);
    }
    if train_points.len() != train_labels.len() {
        return Err(TransferError::LengthMismatch(
            train_points.len(),
            train_labels.len(),
        ));
    }
    let tree = KdTree::build(train_points)?;
    knn_predict_with_tree(&tree, train_labels, query, config)
}

fn labeled(cloud: &PointCloud) -> Result<&[i32], TransferError> {
    let labels = cloud.labels.as_deref().ok_or(TransferError::Unlabeled)?;
    if labels.len() != cloud.positions.len() {
        return Err(TransferError::LengthMismatch(
            cloud.positions.len(),
            labels.len(),
        ));
    }
    Ok(labels)
}

/// Seeded shuffle split into `folds` contiguous chunks whose sizes differ by
/// at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Accuracy of each config in `configs` on every fold, as `[config][fold]`.
fn fold_accuracies(
    cloud: &PointCloud,
    configs: &[KnnConfig],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, TransferError> {
    let labels = labeled(cloud)?;
    let n = cloud.positions.len();
    if folds == 0 || n < folds {
        return Err(TransferError::TooFewPoints { points: n, folds });
    }
    let max_k = configs.iter().map(|c| c.k).max().unwrap_or(1);
    let assignment = fold_assignment(n, folds, seed);
    let mut per_config = vec![Vec::with_capacity(folds); configs.len()];
    for held_out in &assignment {
        let mut in_fold = vec![false; n];
        for &i in held_out {
            in_fold[i] = true;
        }
        let train_idx: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        if train_idx.len() < max_k {
            return Err(TransferError::FoldTooSmall {
                train: train_idx.len(),
                k: max_k,
            });
        }
        let train_points: Vec<Point3> = train_idx.iter().map(|&i| cloud.positions[i]).collect();
        let train_labels: Vec<i32> = train_idx.iter().map(|&i| labels[i]).collect();
        let tree = KdTree::build(&train_points)?;
        // One max-k query per held-out point; every config reads a prefix.
        let correct: Vec<usize> = held_out
            .par_iter()
            .map(|&i| {
                let neighbors = tree
                    .k_nearest(cloud.positions[i], max_k)
                    .expect("k checked");
                configs
                    .iter()
                    .map(|c| {
                        usize::from(vote(&neighbors, &train_labels, c.k, c.weighting) == labels[i])
                    })
                    .collect::<Vec<_>>()
            })
            .reduce(
                || vec![0; configs.len()],
                |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
            );
        for (c, hits) in correct.iter().enumerate() {
            per_config[c].push(*hits as f64 / held_out.len() as f64);
        }
    }
    Ok(per_config)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean held-out accuracy of `config` over `folds` seeded folds.
pub fn cross_validate(
    cloud: &PointCloud,
    config: KnnConfig,
    folds: usize,
    seed: u64,
) -> Result<f64, TransferError> {
    let acc = fold_accuracies(cloud, &[config], folds, seed)?;
    Ok(mean(&acc[0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    /// `(config, mean CV accuracy)` in grid order.
    pub accuracies: Vec<(KnnConfig, f64)>,
    pub best_config: KnnConfig,
    pub best_accuracy: f64,
}

/// Evaluates every grid configuration on the same fold assignment and keeps
/// the most accurate, preferring earlier grid entries on ties.
pub fn grid_search(cloud: &PointCloud, seed: u64) -> Result<GridSearchResult, TransferError> {
    grid_search_with(cloud, &config_grid(), DEFAULT_FOLDS, seed)
}

pub fn grid_search_with(
    cloud: &PointCloud,
    configs: &[KnnConfig],
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult, TransferError> {
    let per_config = fold_accuracies(cloud, configs, folds, seed)?;
    let accuracies: Vec<(KnnConfig, f64)> = configs
        .iter()
        .zip(&per_config)
        .map(|(c, f)| (*c, mean(f)))
        .collect();
    let mut best = 0;
    for (i, (_, a)) in accuracies.iter().enumerate() {
        if *a > accuracies[best].1 {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best_config: accuracies[best].0,
        best_accuracy: accuracies[best].1,
        accuracies,
    })
}

/// Labels every dense point with the best configuration trained on the full
/// sparse cloud. Positions and colors are kept.
pub fn transfer_labels(
    sparse: &PointCloud,
    dense: &PointCloud,
    config: KnnConfig,
) -> Result<PointCloud, TransferError> {
    let labels = labeled(sparse)?;
    if sparse.positions.is_empty() {
        return Err(TransferError::EmptyTrainingSet);
    }
    let tree = KdTree::build(&sparse.positions)?;
    if config.k > tree.len() {
        return Err(TransferError::KTooLarge {
            k: config.k,
            n: tree.len(),
        });
    }
    let predicted: Vec<i32> = dense
        .positions
        .par_iter()
        .map(|&p| {
            let neighbors = tree.k_nearest(p, config.k).expect("k checked");
            vote(&neighbors, labels, config.k, config.weighting)
        })
        .collect();
    Ok(PointCloud {
        positions: dense.positions.clone(),
        colors: dense.colors.clone(),
        labels: Some(predicted),
    })
}

/// Mean best accuracy per category, averaged over instances.
pub fn category_accuracy<'a>(
    results: impl IntoIterator<Item = (&'a str, f64)>,
) -> Vec<(String, usize, f64)> {
    let mut acc: std::collections::BTreeMap<&str, (usize, f64)> = Default::default();
    for (category, a) in results {
        let e = acc.entry(category).or_default();
        e.0 += 1;
        e.1 += a;
    }
    acc.into_iter()
        .map(|(c, (n, s))| (c.to_owned(), n, s / n as f64))
        .collect()
}
