//! Area-uniform surface sampling of colored meshes.
//!
//! A triangle is picked by inverting the cumulative area distribution with
//! `u0`; the point inside it uses the square-root warp
//! `b = (1 - sqrt(u1), sqrt(u1)(1 - u2), sqrt(u1) u2)`.

use crate::cloud::PointCloud;
use crate::geometry::{cross, norm, sub, Point3, Rgb};
use crate::mesh::{ColorSource, Mesh, MeshError};
use crate::seed;
use rand::Rng;
use thiserror::Error;

/// Points sampled per mesh when no count is given.
pub const DEFAULT_SAMPLE_COUNT: usize = 40_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("every triangle has zero area")]
    Degenerate,
    #[error("invalid mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("sample count must be at least 1")]
    ZeroCount,
}

pub fn triangle_area(v0: Point3, v1: Point3, v2: Point3) -> f64 {
    0.5 * norm(cross(sub(v1, v0), sub(v2, v0)))
}

/// Cumulative normalized triangle areas.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaCdf {
    pub cumulative: Vec<f64>,
    pub total_area: f64,
}

impl AreaCdf {
    /// Index of the triangle owning variate `u0 ∈ [0,1)`: the first entry
    /// whose cumulative value exceeds `u0`. Zero-area triangles are never
    /// selected.
    pub fn select(&self, u0: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= u0);
        let i = i.min(self.cumulative.len() - 1);
        // u0 can only land past the last positive-area triangle through
        // rounding; walk back to it.
        let mut j = i;
        while j > 0 && self.probability(j) == 0.0 {
            j -= 1;
        }
        j
    }

    pub fn probability(&self, t: usize) -> f64 {
        if t == 0 {
            self.cumulative[0]
        } else {
            self.cumulative[t] - self.cumulative[t - 1]
        }
    }
}

pub fn build_area_cdf(mesh: &Mesh) -> Result<AreaCdf, SampleError> {
    mesh.validate()?;
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            triangle_area(a, b, c)
        })
        .collect();
    let total_area: f64 = areas.iter().sum();
    if !(total_area > 0.0) || !total_area.is_finite() {
        return Err(SampleError::Degenerate);
    }
    let mut running = 0.0;
    let mut cumulative: Vec<f64> = areas
        .iter()
        .map(|a| {
            running += a;
            running / total_area
        })
        .collect();
    // Pin the tail (and any trailing zero-area triangles) to exactly 1.
    let last_positive = areas.iter().rposition(|&a| a > 0.0).unwrap();
    for c in &mut cumulative[last_positive..] {
        *c = 1.0;
    }
    Ok(AreaCdf {
        cumulative,
        total_area,
    })
}

/// One sampled surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: Point3,
    pub rgb: Rgb,
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

fn blend_rgb(colors: [Rgb; 3], b: [f64; 3]) -> Rgb {
    let mut out = [0u8; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let v: f64 = (0..3).map(|i| b[i] * colors[i][ch] as f64).sum();
        *o = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Maps three uniform variates to a colored surface point.
pub fn sample_point(mesh: &Mesh, cdf: &AreaCdf, u: [f64; 3]) -> SurfaceSample {
    let t = cdf.select(u[0]);
    let r = u[1].sqrt();
    let b = [1.0 - r, r * (1.0 - u[2]), r * u[2]];
    let [v0, v1, v2] = mesh.triangle(t);
    let position = [0, 1, 2].map(|k| b[0] * v0[k] + b[1] * v1[k] + b[2] * v2[k]);
    let rgb = match &mesh.face_colors[t] {
        ColorSource::Constant(c) => *c,
        ColorSource::PerVertex(colors) => blend_rgb(*colors, b),
        ColorSource::Texture(tex) => {
            let corners = mesh.uvs.as_ref().expect("validated textured mesh")[t];
            let uv =
                [0, 1].map(|k| b[0] * corners[0][k] + b[1] * corners[1][k] + b[2] * corners[2][k]);
            mesh.textures[*tex].sample_nearest(uv)
        }
    };
    SurfaceSample {
        position,
        rgb,
        triangle: t,
        barycentric: b,
    }
}

/// Iterator of samples driven by the reference RNG.
pub struct Sampler<'a> {
    mesh: &'a Mesh,
    cdf: AreaCdf,
    rng: seed::ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    pub fn new(mesh: &'a Mesh, seed: u64) -> Result<Self, SampleError> {
        Ok(Sampler {
            mesh,
            cdf: build_area_cdf(mesh)?,
            rng: seed::rng(seed),
        })
    }

    pub fn cdf(&self) -> &AreaCdf {
        &self.cdf
    }
}

impl Iterator for Sampler<'_> {
    type Item = SurfaceSample;

    fn next(&mut self) -> Option<SurfaceSample> {
        let u: [f64; 3] = [self.rng.random(), self.rng.random(), self.rng.random()];
        Some(sample_point(self.mesh, &self.cdf, u))
    }
}

/// Samples `n` colored points; the output is a pure function of
/// `(mesh, n, seed)`.
pub fn sample_cloud(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud, SampleError> {
    if n == 0 {
        return Err(SampleError::ZeroCount);
    }
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for s in Sampler::new(mesh, seed)?.take(n) {
        positions.push(s.position);
        colors.push(s.rgb);
    }
    Ok(PointCloud::from_positions(positions).with_colors(colors))
}
