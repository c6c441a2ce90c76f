//! Consistency checks over every file the pipeline produced.

use densify_core::io::manifest::{Manifest, Record, Split, Status};
use densify_core::io::ply::parse_ply;
use densify_core::PointCloud;
use densify_gan::Checkpoint;
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::runner::Pipeline;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: PathBuf,
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}",
            self.path.display(),
            self.kind,
            self.message
        )
    }
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
    /// Files already reported as unreadable, so shared inputs count once.
    broken: BTreeSet<PathBuf>,
}

impl Checker {
    fn report(&mut self, path: &Path, kind: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.to_owned(),
            kind,
            message: message.into(),
        });
    }

    /// Parses and structurally validates a cloud, reporting at most one
    /// violation per file.
    fn cloud(&mut self, path: &Path) -> Option<PointCloud> {
        if self.broken.contains(path) {
            return None;
        }
        let parsed = std::fs::read(path)
            .map_err(|e| ("missing", e.to_string()))
            .and_then(|b| parse_ply(&b).map_err(|e| ("parse", e.to_string())))
            .and_then(|c| {
                c.validate()
                    .map(|_| c)
                    .map_err(|e| ("invariant", e.to_string()))
            });
        match parsed {
            Ok(c) => Some(c),
            Err((kind, message)) => {
                self.broken.insert(path.to_owned());
                self.report(path, kind, message);
                None
            }
        }
    }

    fn require_colors(&mut self, path: &Path, cloud: &PointCloud) -> bool {
        if cloud.colors.is_none() {
            self.report(path, "channel", "no color channel");
        }
        cloud.colors.is_some()
    }
}

impl Pipeline {
    /// Violations in manifest order; an empty list means the outputs are
    /// consistent.
    pub fn validate(&self, manifest: &Manifest) -> Vec<Violation> {
        let mut check = Checker::default();
        let mut sparse_checked = BTreeSet::new();
        let mut categories = BTreeSet::new();
        for r in manifest
            .records
            .iter()
            .filter(|r| self.config.selects(&r.category))
        {
            categories.insert(r.category.as_str());
            self.validate_record(&mut check, &mut sparse_checked, r);
        }
        for category in categories {
            let path = self.checkpoint_path(category);
            if let Ok(bytes) = std::fs::read(&path) {
                if let Err(e) = Checkpoint::<f32>::from_bytes(&bytes) {
                    check.report(&path, "parse", e.to_string());
                }
            }
        }
        check.violations
    }

    fn validate_record(
        &self,
        check: &mut Checker,
        sparse_checked: &mut BTreeSet<PathBuf>,
        r: &Record,
    ) {
        if r.status >= Status::Sampled {
            let path = self.sampled_path(r);
            if let Some(c) = check.cloud(&path) {
                check.require_colors(&path, &c);
            }
        }
        let mut aligned_len = None;
        if r.status >= Status::Aligned {
            let path = self.aligned_path(r);
            if let Some(c) = check.cloud(&path) {
                check.require_colors(&path, &c);
                aligned_len = Some(c.len());
            }
            match &r.alignment {
                None => check.report(
                    &self.config.manifest,
                    "manifest",
                    format!("{}: aligned without alignment entry", r.id),
                ),
                Some(a) if a.abnormal => check.report(
                    &path,
                    "monotonicity",
                    format!("stage distances {:?} increase", a.distances),
                ),
                Some(_) => {}
            }
        }
        if r.status < Status::Labeled {
            return;
        }
        let sparse_path = self.resolve(&r.sparse);
        let sparse = check.cloud(&sparse_path);
        if let Some(s) = &sparse {
            if sparse_checked.insert(sparse_path.clone()) {
                if s.labels.is_none() {
                    check.report(&sparse_path, "channel", "no label channel");
                } else if !s.labels_contiguous() {
                    check.report(
                        &sparse_path,
                        "labels",
                        "label ids are not contiguous from 0",
                    );
                }
            }
        }
        let dense_path = self.resolve(&r.dense);
        let Some(dense) = check.cloud(&dense_path) else {
            return;
        };
        check.require_colors(&dense_path, &dense);
        if dense.labels.is_none() {
            check.report(&dense_path, "channel", "no label channel");
            return;
        }
        if let Some(n) = aligned_len.filter(|&n| n != dense.len()) {
            check.report(
                &dense_path,
                "count",
                format!("{} points, aligned cloud has {n}", dense.len()),
            );
        }
        let labels = dense.label_set();
        if let Some(s) = sparse.as_ref().filter(|s| s.labels.is_some()) {
            let allowed = s.label_set();
            let extra: Vec<i32> = labels
                .iter()
                .copied()
                .filter(|l| !allowed.contains(l))
                .collect();
            if !extra.is_empty() {
                check.report(
                    &dense_path,
                    "containment",
                    format!("labels {extra:?} absent from {}", sparse_path.display()),
                );
            }
        }
        if r.labels.as_ref() != Some(&labels) {
            check.report(
                &self.config.manifest,
                "manifest",
                format!(
                    "{}: recorded labels differ from {}",
                    r.id,
                    dense_path.display()
                ),
            );
        }
        if r.split == Split::Test {
            let path = self.colorized_path(r);
            if path.exists() {
                if let Some(c) = check.cloud(&path) {
                    check.require_colors(&path, &c);
                    if c.len() != dense.len() {
                        check.report(
                            &path,
                            "count",
                            format!("{} points, labeled cloud has {}", c.len(), dense.len()),
                        );
                    }
                }
            }
        }
    }
}
