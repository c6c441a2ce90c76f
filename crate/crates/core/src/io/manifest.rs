//! Line-delimited JSON manifest: one object record per line.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: duplicate object id '{id}'")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Last pipeline stage that completed for an object.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Pending,
    Sampled,
    Aligned,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

/// Alignment outcome stored with the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    /// One-sided distances after {original, rotated, centered, scaled}.
    pub distances: [f64; 4],
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    pub abnormal: bool,
}

/// Grid search outcome stored with the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnEntry {
    pub k: usize,
    pub weighting: String,
    pub accuracy: f64,
    /// Mean CV accuracy for each of the grid configurations, in grid order.
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub category: String,
    pub mesh: String,
    pub sparse: String,
    pub dense: String,
    pub split: Split,
    #[serde(default)]
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnEntry>,
    /// Distinct part labels of the labeled dense cloud.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

impl Record {
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        mesh: impl Into<String>,
        sparse: impl Into<String>,
        dense: impl Into<String>,
        split: Split,
    ) -> Self {
        Record {
            id: id.into(),
            category: category.into(),
            mesh: mesh.into(),
            sparse: sparse.into(),
            dense: dense.into(),
            split,
            status: Status::Pending,
            alignment: None,
            knn: None,
            labels: None,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }
}

pub fn read_manifest(bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let text = String::from_utf8_lossy(bytes);
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw)
            .map_err(|source| ManifestError::Malformed { line, source })?;
        for (field, value) in [
            ("id", &record.id),
            ("category", &record.category),
            ("mesh", &record.mesh),
            ("sparse", &record.sparse),
            ("dense", &record.dense),
        ] {
            if value.is_empty() {
                return Err(ManifestError::EmptyField { line, field });
            }
        }
        if !seen.insert(record.id.clone()) {
            return Err(ManifestError::DuplicateId {
                line,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(Manifest { records })
}

pub fn write_manifest(manifest: &Manifest) -> Vec<u8> {
    let mut out = Vec::new();
    for record in &manifest.records {
        serde_json::to_writer(&mut out, record).expect("records serialize");
        out.push(b'\n');
    }
    out
}
