//! Synthetic objects for tests, demos and the acceptance suite.
//!
//! Objects are unions of axis-aligned boxes, one box per part, each part with
//! its own material color. They are deliberately asymmetric so that the
//! cube-group rotation search has a unique answer.

use crate::align::{candidate_rotations, mat_vec, Matrix3};
use crate::cloud::PointCloud;
use crate::geometry::{add, Point3, Rgb};
use crate::mesh::{ColorSource, Mesh};
use crate::sampler::Sampler;
use crate::seed;
use rand::Rng;
use std::fmt::Write as _;

/// Palette used for part colors, indexed by part id.
pub const PART_COLORS: [Rgb; 6] = [
    [200, 40, 40],
    [40, 90, 200],
    [40, 170, 60],
    [220, 180, 40],
    [150, 60, 170],
    [30, 170, 170],
];

/// A box mesh with a per-triangle part id.
#[derive(Debug, Clone)]
pub struct PartMesh {
    pub mesh: Mesh,
    pub triangle_parts: Vec<i32>,
}

fn push_box(mesh: &mut Mesh, parts: &mut Vec<i32>, lo: Point3, hi: Point3, part: i32, rgb: Rgb) {
    let base = mesh.vertices.len() as u32;
    for i in 0..8u32 {
        mesh.vertices.push([
            if i & 1 == 0 { lo[0] } else { hi[0] },
            if i & 2 == 0 { lo[1] } else { hi[1] },
            if i & 4 == 0 { lo[2] } else { hi[2] },
        ]);
    }
    const QUADS: [[u32; 4]; 6] = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    for q in QUADS {
        for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
            mesh.triangles.push(tri.map(|v| base + v));
            mesh.face_colors.push(ColorSource::Constant(rgb));
            parts.push(part);
        }
    }
}

/// A seat-and-back object with an optional leg block; dimensions jitter with
/// `seed`. Part 0 is the seat, part 1 the back, part 2 the leg.
pub fn chair_like(seed: u64, parts: usize) -> PartMesh {
    let mut rng = seed::rng(seed);
    let mut j = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let w = j(0.8, 1.2);
    let d = j(0.7, 1.0);
    let t = j(0.1, 0.2);
    let back_h = j(0.9, 1.4);
    let leg_h = j(0.5, 0.8);
    let mut mesh = Mesh::default();
    let mut tri_parts = Vec::new();
    push_box(
        &mut mesh,
        &mut tri_parts,
        [0.0, 0.0, 0.0],
        [w, t, d],
        0,
        PART_COLORS[0],
    );
    push_box(
        &mut mesh,
        &mut tri_parts,
        [0.0, t, 0.0],
        [w, t + back_h, t],
        1,
        PART_COLORS[1],
    );
    if parts > 2 {
        push_box(
            &mut mesh,
            &mut tri_parts,
            [0.6 * w, -leg_h, 0.6 * d],
            [0.6 * w + t, 0.0, 0.6 * d + t],
            2,
            PART_COLORS[2],
        );
    }
    PartMesh {
        mesh,
        triangle_parts: tri_parts,
    }
}

/// Samples `n` labeled points (no colors), labels taken from the source triangle.
pub fn labeled_sample(part_mesh: &PartMesh, n: usize, seed: u64) -> PointCloud {
    let sampler = Sampler::new(&part_mesh.mesh, seed).expect("synthetic mesh is valid");
    let (positions, labels) = sampler
        .take(n)
        .map(|s| (s.position, part_mesh.triangle_parts[s.triangle]))
        .unzip();
    PointCloud::from_positions(positions).with_labels(labels)
}

/// A random member of the cube group, a translation of norm at most
/// `max_shift` and a scale in `[min_scale, max_scale]`.
#[derive(Debug, Clone, Copy)]
pub struct RandomSimilarity {
    pub rotation: Matrix3,
    pub translation: Point3,
    pub scale: f64,
}

impl RandomSimilarity {
    /// Translation uniform in the ball of radius `max_shift`, scale uniform
    /// in `[min_scale, max_scale]`, rotation uniform over the cube group.
    pub fn draw(rng: &mut impl Rng, max_shift: f64, min_scale: f64, max_scale: f64) -> Self {
        let rotations = candidate_rotations();
        let rotation = rotations[rng.random_range(0..rotations.len())];
        let translation = loop {
            let v: Point3 = [0; 3].map(|_| rng.random_range(-1.0..1.0));
            if v[0] * v[0] + v[1] * v[1] + v[2] * v[2] <= 1.0 {
                break v.map(|c| c * max_shift);
            }
        };
        let scale = rng.random_range(min_scale..=max_scale);
        RandomSimilarity {
            rotation,
            translation,
            scale,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        add(
            mat_vec(&self.rotation, p).map(|c| c * self.scale),
            self.translation,
        )
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            positions: cloud.positions.iter().map(|&p| self.apply(p)).collect(),
            ..cloud.clone()
        }
    }
}

/// OBJ text plus its MTL companion for a mesh whose faces carry constant
/// colors. Each distinct color becomes one material.
pub fn mesh_to_obj(mesh: &Mesh, mtl_name: &str) -> (String, String) {
    let mut colors: Vec<Rgb> = Vec::new();
    for c in &mesh.face_colors {
        if let ColorSource::Constant(rgb) = c {
            if !colors.contains(rgb) {
                colors.push(*rgb);
            }
        }
    }
    let mut mtl = String::new();
    for (i, c) in colors.iter().enumerate() {
        let _ = writeln!(
            mtl,
            "newmtl m{i}\nKd {} {} {}",
            c[0] as f64 / 255.0,
            c[1] as f64 / 255.0,
            c[2] as f64 / 255.0
        );
    }
    let mut obj = format!("mtllib {mtl_name}\n");
    for v in &mesh.vertices {
        let _ = writeln!(obj, "v {} {} {}", v[0], v[1], v[2]);
    }
    let mut current = None;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if let ColorSource::Constant(rgb) = &mesh.face_colors[t] {
            let m = colors.iter().position(|c| c == rgb);
            if m != current {
                let _ = writeln!(obj, "usemtl m{}", m.unwrap());
                current = m;
            }
        }
        let _ = writeln!(obj, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    (obj, mtl)
}

/// Points in the unit cube split into `parts` slabs along a random direction;
/// the `noise` fraction of points nearest a slab boundary get a label drawn
/// uniformly from the two parts meeting there.
pub fn half_space_cloud(n: usize, parts: usize, noise: f64, seed: u64) -> PointCloud {
    let mut rng = seed::rng(seed);
    let dir = loop {
        let v: Point3 = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if len > 0.2 && len <= 1.0 {
            break v.map(|c| c / len);
        }
    };
    let positions: Vec<Point3> = (0..n)
        .map(|_| [0; 3].map(|_| rng.random::<f64>()))
        .collect();
    let proj: Vec<f64> = positions
        .iter()
        .map(|p| p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2])
        .collect();
    let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / parts as f64;
    let mut labels: Vec<i32> = proj
        .iter()
        .map(|&s| (((s - lo) / width) as usize).min(parts - 1) as i32)
        .collect();
    if parts > 1 && noise > 0.0 {
        // distance to the nearest interior boundary and the part across it
        let mut near: Vec<(f64, usize, i32)> = proj
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let (d, other) = (1..parts)
                    .map(|b| {
                        let edge = lo + b as f64 * width;
                        let other = if s < edge { b as i32 } else { b as i32 - 1 };
                        ((s - edge).abs(), other)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .unwrap();
                (d, i, other)
            })
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let count = (noise * n as f64).round() as usize;
        for &(_, i, other) in &near[..count] {
            if rng.random::<bool>() {
                labels[i] = other;
            }
        }
    }
    PointCloud::from_positions(positions).with_labels(labels)
}
