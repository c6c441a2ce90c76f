//! Similarity alignment of a dense cloud onto its sparse labeled counterpart,
//! scored by the one-sided Hausdorff distance.
//!
//! Alignment runs three stages and records `d(sparse, dense)` before the
//! first and after each one:
//!
//! 1. rotate the dense cloud by the cube-group rotation that best explains the
//!    pair once centers and sizes match. The rotation turns about an axis line
//!    placed so the dense box center lands as close to the sparse box center
//!    as a pure rotation allows;
//! 2. translate it so the bounding-box centers coincide;
//! 3. scale it about its box center so the box diagonals have equal length.
//!
//! A pair whose recorded distances ever increase (beyond a tolerance scaled
//! to the sparse cloud's size) is flagged abnormal.

use crate::cloud::PointCloud;
use crate::geometry::{add, bounding_box, box_center, box_diagonal, dot, norm, sub, Point3};
use crate::kdtree::{KdTree, KdTreeError};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

/// Abnormality tolerance as a fraction of the sparse box diagonal.
pub const ABNORMAL_RELATIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("point cloud is empty")]
    Empty,
    #[error("{0} cloud has a zero-diagonal bounding box")]
    DegenerateBox(&'static str),
    #[error(transparent)]
    Index(#[from] KdTreeError),
}

pub type Matrix3 = [[f64; 3]; 3];

pub const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_vec(m: &Matrix3, p: Point3) -> Point3 {
    [0, 1, 2].map(|r| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2])
}

pub fn mat_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn transpose(m: &Matrix3) -> Matrix3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in m.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[c][r] = v;
        }
    }
    out
}

pub fn determinant(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// The 24 orientation-preserving signed permutation matrices, identity first.
pub fn candidate_rotations() -> Vec<Matrix3> {
    const PERMUTATIONS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut out = Vec::with_capacity(24);
    for perm in PERMUTATIONS {
        for signs in 0..8u32 {
            let mut m = [[0.0; 3]; 3];
            for (row, &col) in perm.iter().enumerate() {
                m[row][col] = if signs & (1 << row) == 0 { 1.0 } else { -1.0 };
            }
            if determinant(&m) > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Matrix3,
    pub translation: Point3,
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: IDENTITY,
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let r = mat_vec(&self.rotation, p);
        [0, 1, 2].map(|k| self.scale * r[k] + self.translation[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentReport {
    /// Distances after {original, rotated, centered, scaled}.
    pub distances: [f64; 4],
    pub transform: SimilarityTransform,
    pub abnormal: bool,
}

/// `max_{a∈A} min_{b∈B} ‖a − b‖` against a prebuilt tree over `B`.
pub fn hausdorff_to_tree(a: &[Point3], tree: &KdTree) -> f64 {
    a.par_iter()
        .map(|&p| tree.nearest(p).distance)
        .reduce(|| 0.0, f64::max)
}

/// One-sided Hausdorff distance `d(A, B)`; not symmetric.
pub fn one_sided_hausdorff(a: &[Point3], b: &[Point3]) -> Result<f64, AlignError> {
    if a.is_empty() || b.is_empty() {
        return Err(AlignError::Empty);
    }
    Ok(hausdorff_to_tree(a, &KdTree::build(b)?))
}

/// True iff some later distance exceeds an earlier one by more than `tolerance`.
pub fn detect_abnormal(distances: &[f64], tolerance: f64) -> bool {
    distances.iter().enumerate().any(|(i, &earlier)| {
        distances[i + 1..]
            .iter()
            .any(|&later| later > earlier + tolerance)
    })
}

fn box_of(points: &[Point3], which: &'static str) -> Result<(Point3, f64), AlignError> {
    let (lo, hi) = bounding_box(points).ok_or(AlignError::Empty)?;
    let diagonal = box_diagonal(lo, hi);
    if !(diagonal > 0.0) {
        return Err(AlignError::DegenerateBox(which));
    }
    Ok((box_center(lo, hi), diagonal))
}

/// Unit rotation axis of a proper rotation other than the identity.
fn rotation_axis(r: &Matrix3) -> Point3 {
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let n = norm(v);
    if n > 1e-12 {
        return v.map(|c| c / n);
    }
    // Half-turn: any non-zero column of R + I spans the axis.
    (0..3)
        .map(|c| [r[0][c], r[1][c], r[2][c]])
        .enumerate()
        .map(|(c, col)| {
            let mut col = col;
            col[c] += 1.0;
            col
        })
        .max_by(|a, b| norm(*a).total_cmp(&norm(*b)))
        .map(|v| v.map(|c| c / norm(v)))
        .unwrap()
}

/// Rotates `points` by `rotation` about the axis line (parallel to the
/// rotation axis) that carries `center` as close to `target` as a pure
/// rotation can: the new center is `target` projected onto the plane through
/// `center` perpendicular to the axis.
fn rotate_toward(
    points: &[Point3],
    rotation: &Matrix3,
    center: Point3,
    target: Point3,
) -> Vec<Point3> {
    if *rotation == IDENTITY {
        return points.to_vec();
    }
    let axis = rotation_axis(rotation);
    let offset = sub(target, center);
    let along = dot(axis, offset);
    let moved = add(center, sub(offset, axis.map(|c| c * along)));
    points
        .iter()
        .map(|&p| add(mat_vec(rotation, sub(p, center)), moved))
        .collect()
}

/// Picks the candidate rotation minimizing the distance the pair would reach
/// after centering and scaling. Scores are evaluated by pulling the sparse
/// points back through the inverse similarity, so one tree over `dense`
/// serves every candidate. Ties keep the earlier candidate.
fn select_rotation(
    sparse: &[Point3],
    dense_tree: &KdTree,
    sparse_center: Point3,
    sparse_diagonal: f64,
    dense_center: Point3,
    dense_diagonal: f64,
) -> Matrix3 {
    let scale = sparse_diagonal / dense_diagonal;
    let candidates = candidate_rotations();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|r| {
            let rt = transpose(r);
            sparse
                .iter()
                .map(|&a| {
                    let local = sub(a, sparse_center).map(|c| c / scale);
                    let pulled = add(mat_vec(&rt, local), dense_center);
                    dense_tree.nearest(pulled).distance
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    candidates[best]
}

/// Aligns `dense` onto `sparse`. Colors travel with the dense points; the
/// sparse cloud is only read.
pub fn align_pair(
    dense: &PointCloud,
    sparse: &PointCloud,
) -> Result<(PointCloud, AlignmentReport), AlignError> {
    let s = &sparse.positions;
    if s.is_empty() || dense.positions.is_empty() {
        return Err(AlignError::Empty);
    }
    let (sparse_center, sparse_diagonal) = box_of(s, "sparse")?;
    let (dense_center, dense_diagonal) = box_of(&dense.positions, "dense")?;

    let tree = KdTree::build(&dense.positions)?;
    let d0 = hausdorff_to_tree(s, &tree);

    let rotation = select_rotation(
        s,
        &tree,
        sparse_center,
        sparse_diagonal,
        dense_center,
        dense_diagonal,
    );
    let rotated = rotate_toward(&dense.positions, &rotation, dense_center, sparse_center);
    let d1 = one_sided_hausdorff(s, &rotated)?;

    let (rotated_center, _) = box_of(&rotated, "dense")?;
    let shift = sub(sparse_center, rotated_center);
    let centered: Vec<Point3> = rotated.iter().map(|&p| add(p, shift)).collect();
    let d2 = one_sided_hausdorff(s, &centered)?;

    let (centered_center, centered_diagonal) = box_of(&centered, "dense")?;
    let factor = sparse_diagonal / centered_diagonal;
    let scaled: Vec<Point3> = if factor == 1.0 {
        centered
    } else {
        centered
            .iter()
            .map(|&p| add(sub(p, centered_center).map(|c| c * factor), centered_center))
            .collect()
    };
    let d3 = one_sided_hausdorff(s, &scaled)?;

    // x ↦ f·(Rx + o + shift − c_c) + c_c, o the stage-1 image of the origin
    let origin = rotate_toward(&[[0.0; 3]], &rotation, dense_center, sparse_center)[0];
    let translation = [0, 1, 2]
        .map(|k| factor * (origin[k] + shift[k] - centered_center[k]) + centered_center[k]);
    let transform = SimilarityTransform {
        rotation,
        translation: if rotation == IDENTITY && factor == 1.0 {
            shift
        } else {
            translation
        },
        scale: factor,
    };

    let distances = [d0, d1, d2, d3];
    let tolerance = ABNORMAL_RELATIVE_TOLERANCE * sparse_diagonal;
    let report = AlignmentReport {
        distances,
        transform,
        abnormal: detect_abnormal(&distances, tolerance),
    };
    let aligned = PointCloud {
        positions: scaled,
        colors: dense.colors.clone(),
        labels: dense.labels.clone(),
    };
    Ok((aligned, report))
}

/// Per-category stage means, in category order.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistances {
    pub category: String,
    pub count: usize,
    pub mean: [f64; 4],
}

pub fn category_means<'a>(
    reports: impl IntoIterator<Item = (&'a str, [f64; 4])>,
) -> Vec<CategoryDistances> {
    let mut acc: BTreeMap<&str, (usize, [f64; 4])> = BTreeMap::new();
    for (category, d) in reports {
        let e = acc.entry(category).or_insert((0, [0.0; 4]));
        e.0 += 1;
        for k in 0..4 {
            e.1[k] += d[k];
        }
    }
    acc.into_iter()
        .map(|(category, (count, sum))| CategoryDistances {
            category: category.to_owned(),
            count,
            mean: sum.map(|s| s / count as f64),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetric_distance() {
        let a = [[0.0, 0.0, 0.0]];
        let b = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(one_sided_hausdorff(&a, &b).unwrap(), 0.0);
        assert_eq!(one_sided_hausdorff(&b, &a).unwrap(), 1.0);
        assert_eq!(one_sided_hausdorff(&[], &b), Err(AlignError::Empty));
    }

    #[test]
    fn rotation_group() {
        let rs = candidate_rotations();
        assert_eq!(rs.len(), 24);
        assert_eq!(rs[0], IDENTITY);
        for (i, r) in rs.iter().enumerate() {
            assert_eq!(determinant(r), 1.0);
            assert_eq!(mat_mul(r, &transpose(r)), IDENTITY);
            assert!(r.iter().flatten().all(|v| [-1.0, 0.0, 1.0].contains(v)));
            assert!(rs[i + 1..].iter().all(|o| o != r));
        }
    }

    #[test]
    fn group_closure() {
        let rs = candidate_rotations();
        for a in &rs {
            for b in &rs {
                assert!(rs.contains(&mat_mul(a, b)));
            }
        }
    }

    #[test]
    fn abnormal_detection() {
        assert!(!detect_abnormal(&[5.0, 2.0, 1.0, 0.1], 1e-6));
        assert!(detect_abnormal(&[5.0, 2.0, 3.0, 0.1], 1e-6));
        let tau = 1e-3;
        assert!(!detect_abnormal(&[5.0, 5.0 + tau / 2.0, 1.0, 0.1], tau));
    }

    #[test]
    fn copy_aligns_to_identity() {
        let pts: Vec<Point3> = (0..50)
            .map(|i| {
                let t = i as f64;
                [t.sin(), (0.7 * t).cos() * 2.0, (0.3 * t).sin() * 0.5]
            })
            .collect();
        let c = PointCloud::from_positions(pts);
        let (aligned, report) = align_pair(&c, &c).unwrap();
        assert_eq!(report.distances, [0.0; 4]);
        assert_eq!(report.transform, SimilarityTransform::identity());
        assert!(!report.abnormal);
        assert_eq!(aligned.positions, c.positions);
    }

    #[test]
    fn degenerate_box_is_an_error() {
        let dot = PointCloud::from_positions(vec![[1.0; 3]; 3]);
        let ok = PointCloud::from_positions(vec![[0.0; 3], [1.0; 3]]);
        assert_eq!(
            align_pair(&dot, &ok).unwrap_err(),
            AlignError::DegenerateBox("dense")
        );
        assert_eq!(
            align_pair(&ok, &dot).unwrap_err(),
            AlignError::DegenerateBox("sparse")
        );
    }

    #[test]
    fn category_means_average_per_category() {
        let rows = [
            ("chair", [4.0, 2.0, 1.0, 0.0]),
            ("chair", [2.0, 2.0, 1.0, 0.0]),
            ("lamp", [1.0, 1.0, 1.0, 1.0]),
        ];
        let m = category_means(rows.iter().map(|(c, d)| (*c, *d)));
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].mean, [3.0, 2.0, 1.0, 0.0]);
        assert_eq!(m[0].count, 2);
        assert_eq!(m[1].category, "lamp");
    }
}
