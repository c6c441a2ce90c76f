use densify_core::DEFAULT_SAMPLE_COUNT;
use densify_gan::GanConfig;
use std::path::PathBuf;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    /// Points sampled per mesh.
    pub points: usize,
    pub category: Option<String>,
    /// `seed` is replaced per category at training time.
    pub gan: GanConfig,
    /// Stop after this many objects per stage; simulates an interrupted run.
    pub limit: Option<usize>,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            out_dir: out_dir.into(),
            seed: 0,
            jobs: 1,
            points: DEFAULT_SAMPLE_COUNT,
            category: None,
            gan: GanConfig::default(),
            limit: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.points == 0 {
            return Err(CliError::Config("--points must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        self.gan
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn selects(&self, category: &str) -> bool {
        self.category.as_deref().is_none_or(|c| c == category)
    }
}
