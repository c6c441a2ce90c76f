//! Per-category colorization training and inference.

use densify_core::io::manifest::{Manifest, Record, Split, Status};
use densify_core::io::ply::{write_ply, Encoding};
use densify_core::seed::derive_seed;
use densify_gan::{colorize, train, Checkpoint, ColorCloud, GanConfig, GanParams};
use log::{info, warn};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::fsio::{atomic_write, read};
use crate::runner::{Pipeline, StageSummary};
use crate::stages::load_cloud;
use crate::CliError;

impl Pipeline {
    pub fn checkpoint_path(&self, category: &str) -> PathBuf {
        self.output("models", &format!("{category}.ckpt"))
    }

    pub fn log_path(&self, category: &str) -> PathBuf {
        self.output("models", &format!("{category}.log.jsonl"))
    }

    pub fn colorized_path(&self, record: &Record) -> PathBuf {
        self.output("colorized", &format!("{}.ply", record.id))
    }

    pub fn category_config(&self, category: &str) -> GanConfig {
        GanConfig {
            seed: derive_seed(self.config.seed, &format!("train/{category}")),
            ..self.config.gan
        }
    }

    fn load_checkpoint(&self, category: &str) -> Option<Checkpoint<f32>> {
        let bytes = std::fs::read(self.checkpoint_path(category)).ok()?;
        Checkpoint::from_bytes(&bytes).ok()
    }

    /// Trains one model per selected category on its labeled train split,
    /// holding out the test split. A category whose checkpoint already holds
    /// the requested configuration is skipped.
    pub fn train(&self, manifest: &Manifest) -> Result<StageSummary, CliError> {
        let categories: BTreeSet<&str> = manifest
            .records
            .iter()
            .filter(|r| self.config.selects(&r.category))
            .map(|r| r.category.as_str())
            .collect();
        let results: Vec<(&str, Result<bool, String>)> = self.install(|| {
            categories
                .par_iter()
                .map(|&c| (c, self.train_category(manifest, c)))
                .collect()
        });
        let mut summary = StageSummary::default();
        for (category, result) in results {
            match result {
                Ok(true) => summary.processed += 1,
                Ok(false) => info!("train {category}: checkpoint is current"),
                Err(message) => {
                    warn!("train {category}: {message}");
                    summary.failed += 1;
                }
            }
        }
        Ok(summary)
    }

    fn train_category(&self, manifest: &Manifest, category: &str) -> Result<bool, String> {
        let config = self.category_config(category);
        if self
            .load_checkpoint(category)
            .is_some_and(|c| c.config == config)
        {
            return Ok(false);
        }
        let split = |s: Split| -> Result<Vec<ColorCloud<f32>>, String> {
            manifest
                .records
                .iter()
                .filter(|r| r.category == category && r.split == s && r.status == Status::Labeled)
                .map(|r| {
                    let cloud = load_cloud(&self.resolve(&r.dense))?;
                    let seed = derive_seed(self.config.seed, &format!("subsample/{}", r.id));
                    ColorCloud::prepare(&cloud, config.points, seed)
                        .map_err(|e| format!("{}: {e}", r.id))
                })
                .collect()
        };
        let train_set = split(Split::Train)?;
        if train_set.is_empty() {
            return Err("no labeled training clouds".to_owned());
        }
        let test_set = split(Split::Test)?;
        info!(
            "train {category}: {} train / {} test clouds, {} epochs",
            train_set.len(),
            test_set.len(),
            config.epochs
        );
        let mut log = String::new();
        let outcome = train(&train_set, &test_set, config, |entry| {
            let _ = writeln!(
                log,
                "{}",
                serde_json::to_string(entry).expect("log entry serializes")
            );
        })
        .map_err(|e| e.to_string())?;
        let checkpoint = Checkpoint {
            config,
            params: outcome.trainer.params,
            state: outcome.trainer.state,
        };
        atomic_write(&self.log_path(category), log.as_bytes()).map_err(|e| e.to_string())?;
        atomic_write(&self.checkpoint_path(category), &checkpoint.to_bytes())
            .map_err(|e| e.to_string())?;
        Ok(true)
    }

    /// Writes generated colors for every labeled test-split cloud of a
    /// category that has a checkpoint.
    pub fn colorize(&self, manifest: &mut Manifest) -> Result<StageSummary, CliError> {
        let mut models: BTreeMap<String, GanParams<f32>> = BTreeMap::new();
        for r in &manifest.records {
            if self.config.selects(&r.category) && !models.contains_key(&r.category) {
                let path = self.checkpoint_path(&r.category);
                if path.exists() {
                    let checkpoint = Checkpoint::<f32>::from_bytes(&read(&path)?)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    models.insert(r.category.clone(), checkpoint.params);
                }
            }
        }
        let dropout = self.config.gan.dropout_p;
        let seed = self.config.seed;
        self.run_objects(
            manifest,
            "colorize",
            |r| r.split == Split::Test && r.status == Status::Labeled,
            |r| {
                let params = models
                    .get(&r.category)
                    .ok_or_else(|| format!("no checkpoint for category '{}'", r.category))?;
                let cloud = load_cloud(&self.resolve(&r.dense))?;
                let seed = derive_seed(seed, &format!("colorize/{}", r.id));
                let colored = colorize(params, &cloud, dropout, seed).map_err(|e| e.to_string())?;
                atomic_write(
                    &self.colorized_path(r),
                    &write_ply(&colored, Encoding::BinaryLittleEndian),
                )
                .map_err(|e| e.to_string())?;
                Ok(r.clone())
            },
        )
    }
}
