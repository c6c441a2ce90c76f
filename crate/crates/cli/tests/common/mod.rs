#![allow(dead_code)]

use densify_cli::synth::{write_dataset, SynthSpec};
use densify_cli::{Pipeline, PipelineConfig, StageSummary};
use densify_gan::{Architecture, GanConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn config(root: &Path, jobs: usize) -> PipelineConfig {
    PipelineConfig {
        jobs,
        seed: 11,
        points: 3000,
        gan: GanConfig {
            epochs: 3,
            points: 128,
            arch: Architecture {
                encoder: [8, 16, 32],
                decoder: [32, 16, 8],
                head: [16, 8],
            },
            ..GanConfig::default()
        },
        ..PipelineConfig::new(root.join("data/manifest.jsonl"), root.join("out"))
    }
}

pub fn dataset(root: &Path, categories: usize, objects: usize) {
    let spec = SynthSpec {
        categories,
        objects_per_category: objects,
        sparse_points: 600,
        seed: 5,
        ..SynthSpec::default()
    };
    write_dataset(&root.join("data/manifest.jsonl"), &spec).unwrap();
}

/// Runs sample, align and transfer; returns the summed summary.
pub fn geometry_stages(pipeline: &Pipeline) -> StageSummary {
    let mut manifest = pipeline.load_manifest().unwrap();
    let a = pipeline.sample(&mut manifest).unwrap();
    let b = pipeline.align(&mut manifest).unwrap();
    let c = pipeline.transfer(&mut manifest).unwrap();
    a.merge(b).merge(c)
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_owned(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
