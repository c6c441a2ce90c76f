//! Geometry stages: sampling, alignment, label transfer, and their reports.

use densify_core::align::category_means;
use densify_core::io::manifest::{AlignmentEntry, KnnEntry, Manifest, Record, Status};
use densify_core::io::obj::load_obj;
use densify_core::io::ply::{parse_ply, write_ply, Encoding};
use densify_core::seed::derive_seed;
use densify_core::transfer::category_accuracy;
use densify_core::{align_pair, grid_search, sample_cloud, transfer_labels, PointCloud};
use log::warn;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::fsio::atomic_write;
use crate::runner::{Pipeline, StageSummary};
use crate::CliError;

pub fn load_cloud(path: &Path) -> Result<PointCloud, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_ply(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn store_cloud(path: &Path, cloud: &PointCloud) -> Result<(), String> {
    atomic_write(path, &write_ply(cloud, Encoding::BinaryLittleEndian)).map_err(|e| e.to_string())
}

impl Pipeline {
    pub fn sampled_path(&self, record: &Record) -> std::path::PathBuf {
        self.output("sampled", &format!("{}.ply", record.id))
    }

    pub fn aligned_path(&self, record: &Record) -> std::path::PathBuf {
        self.output("aligned", &format!("{}.ply", record.id))
    }

    pub fn report_path(&self, name: &str) -> std::path::PathBuf {
        self.output("reports", name)
    }

    pub fn sample(&self, manifest: &mut Manifest) -> Result<StageSummary, CliError> {
        let points = self.config.points;
        let seed = self.config.seed;
        self.run_objects(
            manifest,
            "sample",
            |r| r.status == Status::Pending,
            |r| {
                let path = self.resolve(&r.mesh);
                let parsed = load_obj(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                for w in &parsed.warnings {
                    warn!("{}: {w}", path.display());
                }
                let cloud = sample_cloud(&parsed.mesh, points, derive_seed(seed, &r.id))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                store_cloud(&self.sampled_path(r), &cloud)?;
                Ok(Record {
                    status: Status::Sampled,
                    ..r.clone()
                })
            },
        )
    }

    pub fn align(&self, manifest: &mut Manifest) -> Result<StageSummary, CliError> {
        let summary = self.run_objects(
            manifest,
            "align",
            |r| r.status == Status::Sampled,
            |r| {
                let dense = load_cloud(&self.sampled_path(r))?;
                let sparse = load_cloud(&self.resolve(&r.sparse))?;
                let (aligned, report) = align_pair(&dense, &sparse).map_err(|e| e.to_string())?;
                store_cloud(&self.aligned_path(r), &aligned)?;
                let t = report.transform;
                Ok(Record {
                    status: Status::Aligned,
                    alignment: Some(AlignmentEntry {
                        distances: report.distances,
                        rotation: t.rotation,
                        translation: t.translation,
                        scale: t.scale,
                        abnormal: report.abnormal,
                    }),
                    ..r.clone()
                })
            },
        )?;
        atomic_write(
            &self.report_path("align.jsonl"),
            self.align_report(manifest).as_bytes(),
        )?;
        Ok(summary)
    }

    /// One line per category with the mean distance after each stage, then
    /// one line per abnormal pair.
    pub fn align_report(&self, manifest: &Manifest) -> String {
        let aligned: Vec<(&Record, &AlignmentEntry)> = manifest
            .records
            .iter()
            .filter(|r| self.config.selects(&r.category))
            .filter_map(|r| r.alignment.as_ref().map(|a| (r, a)))
            .collect();
        let mut out = String::new();
        for c in category_means(
            aligned
                .iter()
                .map(|(r, a)| (r.category.as_str(), a.distances)),
        ) {
            let line = json!({"category": c.category, "count": c.count, "mean": c.mean});
            let _ = writeln!(out, "{line}");
        }
        for (r, a) in aligned.iter().filter(|(_, a)| a.abnormal) {
            let line = json!({"abnormal": r.id, "category": r.category, "distances": a.distances});
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn transfer(&self, manifest: &mut Manifest) -> Result<StageSummary, CliError> {
        let seed = self.config.seed;
        let summary = self.run_objects(
            manifest,
            "transfer",
            |r| r.status == Status::Aligned,
            |r| {
                let dense = load_cloud(&self.aligned_path(r))?;
                let sparse = load_cloud(&self.resolve(&r.sparse))?;
                let search = grid_search(&sparse, derive_seed(seed, &format!("knn/{}", r.id)))
                    .map_err(|e| e.to_string())?;
                let labeled = transfer_labels(&sparse, &dense, search.best_config)
                    .map_err(|e| e.to_string())?;
                store_cloud(&self.resolve(&r.dense), &labeled)?;
                Ok(Record {
                    status: Status::Labeled,
                    knn: Some(KnnEntry {
                        k: search.best_config.k,
                        weighting: search.best_config.weighting.name().to_owned(),
                        accuracy: search.best_accuracy,
                        accuracies: search.accuracies.iter().map(|a| a.1).collect(),
                    }),
                    labels: Some(labeled.label_set()),
                    ..r.clone()
                })
            },
        )?;
        atomic_write(
            &self.report_path("transfer.tsv"),
            self.transfer_report(manifest).as_bytes(),
        )?;
        Ok(summary)
    }

    /// Mean best cross-validation accuracy per category.
    pub fn transfer_report(&self, manifest: &Manifest) -> String {
        let rows = category_accuracy(
            manifest
                .records
                .iter()
                .filter(|r| self.config.selects(&r.category))
                .filter_map(|r| r.knn.as_ref().map(|k| (r.category.as_str(), k.accuracy))),
        );
        let mut out = String::from("category\tinstances\taccuracy\n");
        for (category, n, accuracy) in rows {
            let _ = writeln!(out, "{category}\t{n}\t{accuracy:.4}");
        }
        out
    }

    pub fn stats(&self, manifest: &Manifest) -> Result<String, CliError> {
        let table = render_stats(&category_stats(
            manifest
                .records
                .iter()
                .filter(|r| self.config.selects(&r.category)),
        ));
        atomic_write(&self.report_path("stats.tsv"), table.as_bytes())?;
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryStats {
    pub category: String,
    pub instances: usize,
    /// Size of the union of the instances' label sets.
    pub parts: usize,
}

/// Counts labeled instances and distinct part labels per category; records
/// without labels are ignored, so categories with none are absent.
pub fn category_stats<'a>(records: impl IntoIterator<Item = &'a Record>) -> Vec<CategoryStats> {
    let mut acc: BTreeMap<&str, (usize, BTreeSet<i32>)> = BTreeMap::new();
    for r in records {
        if let Some(labels) = &r.labels {
            let e = acc.entry(&r.category).or_default();
            e.0 += 1;
            e.1.extend(labels);
        }
    }
    acc.into_iter()
        .map(|(category, (instances, parts))| CategoryStats {
            category: category.to_owned(),
            instances,
            parts: parts.len(),
        })
        .collect()
}

pub fn render_stats(stats: &[CategoryStats]) -> String {
    let mut out = String::from("category\tinstances\tparts\n");
    for s in stats {
        let _ = writeln!(out, "{}\t{}\t{}", s.category, s.instances, s.parts);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use densify_core::io::manifest::Split;

    fn labeled(id: &str, category: &str, labels: Option<Vec<i32>>) -> Record {
        Record {
            labels,
            ..Record::new(id, category, "m.obj", "s.ply", "d.ply", Split::Train)
        }
    }

    #[test]
    fn stats_union_labels_and_drop_empty_categories() {
        let records = [
            labeled("a", "chair", Some(vec![0, 1, 2, 3])),
            labeled("b", "chair", Some(vec![0, 1, 2, 3])),
            labeled("c", "chair", Some(vec![0, 1, 3])),
            labeled("d", "lamp", None),
            labeled("e", "car", Some(vec![0])),
            labeled("f", "car", Some(vec![2])),
        ];
        let stats = category_stats(&records);
        assert_eq!(
            render_stats(&stats),
            "category\tinstances\tparts\ncar\t2\t2\nchair\t3\t4\n"
        );
    }
}
