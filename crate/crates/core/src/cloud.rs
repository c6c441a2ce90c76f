//! Point clouds with optional per-point color and part label channels.

use crate::geometry::{Point3, Rgb};
use thiserror::Error;

/// Structural violations of the point cloud invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CloudError {
    #[error("point cloud is empty")]
    Empty,
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("{channel} channel has {got} entries for {expected} points")]
    ChannelLength {
        channel: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("point {index} has negative label {label}")]
    NegativeLabel { index: usize, label: i32 },
}

/// N positions plus optional RGB and part-label channels.
///
/// Channel presence is meaningful: a PLY file written from this cloud lists
/// exactly the channels that are `Some`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Point3>,
    pub colors: Option<Vec<Rgb>>,
    pub labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Point3>) -> Self {
        PointCloud {
            positions,
            colors: None,
            labels: None,
        }
    }

    pub fn with_colors(mut self, colors: Vec<Rgb>) -> Self {
        self.colors = Some(colors);
        self
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks length agreement, finiteness, non-emptiness and label sign.
    pub fn validate(&self) -> Result<(), CloudError> {
        let n = self.positions.len();
        if n == 0 {
            return Err(CloudError::Empty);
        }
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(CloudError::NonFinite(i));
        }
        if let Some(colors) = &self.colors {
            if colors.len() != n {
                return Err(CloudError::ChannelLength {
                    channel: "color",
                    expected: n,
                    got: colors.len(),
                });
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(CloudError::ChannelLength {
                    channel: "label",
                    expected: n,
                    got: labels.len(),
                });
            }
            if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l < 0) {
                return Err(CloudError::NegativeLabel { index, label });
            }
        }
        Ok(())
    }

    /// Sorted distinct labels, or an empty vector when unlabeled.
    pub fn label_set(&self) -> Vec<i32> {
        let mut set: Vec<i32> = self.labels.clone().unwrap_or_default();
        set.sort_unstable();
        set.dedup();
        set
    }

    /// True when the distinct labels are exactly `0..m` for some `m`.
    pub fn labels_contiguous(&self) -> bool {
        self.label_set()
            .iter()
            .enumerate()
            .all(|(i, &l)| l as usize == i)
    }
}
