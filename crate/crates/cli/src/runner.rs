use densify_core::io::manifest::{read_manifest, write_manifest, Failure, Manifest, Record};
use log::{info, warn};
use rayon::ThreadPool;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use crate::config::PipelineConfig;
use crate::fsio::{atomic_write, read};
use crate::CliError;

/// Counts for one stage run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub processed: usize,
    pub failed: usize,
}

impl StageSummary {
    pub fn merge(self, other: StageSummary) -> StageSummary {
        StageSummary {
            processed: self.processed + other.processed,
            failed: self.failed + other.failed,
        }
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pool: ThreadPool,
    base: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, CliError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
        let base = config
            .manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Pipeline { config, pool, base })
    }

    pub fn load_manifest(&self) -> Result<Manifest, CliError> {
        let path = &self.config.manifest;
        read_manifest(&read(path)?).map_err(|source| CliError::Manifest {
            path: path.clone(),
            source,
        })
    }

    pub fn save_manifest(&self, manifest: &Manifest) -> Result<(), CliError> {
        atomic_write(&self.config.manifest, &write_manifest(manifest))
    }

    /// A manifest path, taken relative to the manifest's directory.
    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base.join(path)
    }

    pub fn output(&self, dir: &str, file: &str) -> PathBuf {
        self.config.out_dir.join(dir).join(file)
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Runs `work` on every selected record for which `pending` holds.
    ///
    /// Workers return the updated record; this thread is the only writer of
    /// the manifest and saves it after every finished object. A failure is
    /// stored on the record, which keeps its previous status.
    pub fn run_objects<F>(
        &self,
        manifest: &mut Manifest,
        stage: &str,
        pending: impl Fn(&Record) -> bool,
        work: F,
    ) -> Result<StageSummary, CliError>
    where
        F: Fn(&Record) -> Result<Record, String> + Sync,
    {
        let mut todo: Vec<usize> = (0..manifest.records.len())
            .filter(|&i| {
                let r = &manifest.records[i];
                self.config.selects(&r.category) && pending(r)
            })
            .collect();
        if let Some(limit) = self.config.limit {
            todo.truncate(limit);
        }
        info!("{stage}: {} objects to process", todo.len());
        let mut summary = StageSummary::default();
        let (tx, rx) = mpsc::channel();
        let work = &work;
        self.pool.in_place_scope(|scope| -> Result<(), CliError> {
            for &i in &todo {
                let record = manifest.records[i].clone();
                let tx = tx.clone();
                scope.spawn(move |_| {
                    let result = catch_unwind(AssertUnwindSafe(|| work(&record)))
                        .unwrap_or_else(|_| Err("worker panicked".to_owned()));
                    let _ = tx.send((i, result));
                });
            }
            drop(tx);
            for (i, result) in rx {
                let record = &mut manifest.records[i];
                match result {
                    Ok(mut updated) => {
                        updated.failure = None;
                        *record = updated;
                        summary.processed += 1;
                    }
                    Err(message) => {
                        warn!("{stage} {}: {message}", record.id);
                        record.failure = Some(Failure {
                            stage: stage.to_owned(),
                            message,
                        });
                        summary.failed += 1;
                    }
                }
                self.save_manifest(manifest)?;
            }
            Ok(())
        })?;
        Ok(summary)
    }
}
