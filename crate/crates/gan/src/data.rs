//! Conversions between point clouds and network tensors.

use densify_core::geometry::{bounding_box, box_center, dist2};
use densify_core::{seed, PointCloud, Rgb};
use ndarray::Array2;

use crate::net::{generator_forward, DropoutMasks, GanParams};
use crate::scalar::Real;
use crate::GanError;

pub fn normalize_color(c: u8) -> f64 {
    c as f64 / 127.5 - 1.0
}

/// Inverse of [`normalize_color`], clamped and rounded to the nearest level.
pub fn denormalize_color(x: f64) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn normalize_colors<T: Real>(colors: &[Rgb]) -> Array2<T> {
    Array2::from_shape_fn((colors.len(), 3), |(i, k)| {
        T::of(normalize_color(colors[i][k]))
    })
}

pub fn denormalize_colors<T: Real>(x: &Array2<T>) -> Vec<Rgb> {
    x.outer_iter()
        .map(|r| [0, 1, 2].map(|k| denormalize_color(r[k].to_f64())))
        .collect()
}

/// Centers on the bounding-box center and scales to unit maximum radius.
/// Depends only on the point set, not its order.
pub fn normalize_positions<T: Real>(positions: &[[f64; 3]]) -> Array2<T> {
    let Some((lo, hi)) = bounding_box(positions) else {
        return Array2::zeros((0, 3));
    };
    let c = box_center(lo, hi);
    let radius = positions
        .iter()
        .map(|&p| dist2(p, c))
        .fold(0.0, f64::max)
        .sqrt();
    let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };
    Array2::from_shape_fn((positions.len(), 3), |(i, k)| {
        T::of((positions[i][k] - c[k]) * scale)
    })
}

/// One training example in network coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorCloud<T> {
    pub positions: Array2<T>,
    pub colors: Array2<T>,
}

impl<T: Real> ColorCloud<T> {
    /// Normalizes a colored cloud, keeping a seeded uniform subset of at most
    /// `max_points` points (in ascending index order).
    pub fn prepare(cloud: &PointCloud, max_points: usize, seed: u64) -> Result<Self, GanError> {
        let colors = cloud.colors.as_ref().ok_or(GanError::Uncolored)?;
        if cloud.positions.is_empty() {
            return Err(GanError::EmptyCloud);
        }
        let positions = normalize_positions::<T>(&cloud.positions);
        let colors = normalize_colors::<T>(colors);
        if cloud.len() <= max_points {
            return Ok(ColorCloud { positions, colors });
        }
        let mut keep =
            rand::seq::index::sample(&mut seed::rng(seed), cloud.len(), max_points).into_vec();
        keep.sort_unstable();
        Ok(ColorCloud {
            positions: positions.select(ndarray::Axis(0), &keep),
            colors: colors.select(ndarray::Axis(0), &keep),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generated colors for every point of `cloud`; dropout stays active with
/// masks drawn from `seed`. Labels are kept.
pub fn colorize<T: Real>(
    params: &GanParams<T>,
    cloud: &PointCloud,
    dropout_p: f64,
    seed: u64,
) -> Result<PointCloud, GanError> {
    if cloud.positions.is_empty() {
        return Err(GanError::EmptyCloud);
    }
    let x = normalize_positions::<T>(&cloud.positions);
    let masks = DropoutMasks::draw(&mut seed::rng(seed), x.nrows(), &params.arch, dropout_p);
    let out = generator_forward(params, x.view(), masks)?;
    Ok(PointCloud {
        positions: cloud.positions.clone(),
        colors: Some(denormalize_colors(&out.output)),
        labels: cloud.labels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_round_trip_is_exhaustive_identity() {
        for c in 0..=255u8 {
            assert_eq!(denormalize_color(normalize_color(c)), c);
            assert_eq!(
                denormalize_colors(&normalize_colors::<f32>(&[[c, c, c]]))[0],
                [c; 3]
            );
        }
        assert_eq!(normalize_color(0), -1.0);
        assert_eq!(normalize_color(255), 1.0);
        assert!((normalize_color(127) + 0.003921568).abs() < 1e-8);
        assert!((normalize_color(128) - 0.003921568).abs() < 1e-8);
        assert_eq!(denormalize_color(3.0), 255);
        assert_eq!(denormalize_color(-3.0), 0);
    }

    #[test]
    fn positions_fit_unit_sphere() {
        let pts = vec![[10.0, 0.0, 0.0], [14.0, 2.0, 0.0], [12.0, 1.0, 3.0]];
        let x = normalize_positions::<f64>(&pts);
        let r = x.outer_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-12);
        let single = normalize_positions::<f64>(&[[5.0, 5.0, 5.0]]);
        assert_eq!(single.row(0).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn prepare_subsamples_deterministically() {
        let n = 3000;
        let cloud = PointCloud::from_positions((0..n).map(|i| [i as f64, 0.0, 1.0]).collect())
            .with_colors(vec![[1, 2, 3]; n]);
        let a = ColorCloud::<f32>::prepare(&cloud, 1024, 4).unwrap();
        let b = ColorCloud::<f32>::prepare(&cloud, 1024, 4).unwrap();
        assert_eq!(a.len(), 1024);
        assert_eq!(a, b);
        assert!(matches!(
            ColorCloud::<f32>::prepare(&PointCloud::from_positions(vec![[0.0; 3]]), 8, 0),
            Err(GanError::Uncolored)
        ));
    }
}
