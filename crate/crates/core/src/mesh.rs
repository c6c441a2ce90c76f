//! Indexed triangle meshes and their per-face color sources.

use crate::geometry::{Point3, Rgb};
use thiserror::Error;

/// An RGB raster, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Texture {
    /// Nearest-texel lookup with repeat wrapping. `v = 0` is the bottom row,
    /// following the OBJ texture coordinate convention.
    pub fn sample_nearest(&self, uv: [f64; 2]) -> Rgb {
        let wrap = |t: f64| {
            let f = t - t.floor();
            if f.is_finite() {
                f
            } else {
                0.0
            }
        };
        let u = wrap(uv[0]);
        let v = wrap(uv[1]);
        let x = ((u * self.width as f64) as usize).min(self.width - 1);
        let y = (((1.0 - v) * self.height as f64) as usize).min(self.height - 1);
        self.pixels[y * self.width + x]
    }
}

/// Where a triangle gets its color from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColorSource {
    Constant(Rgb),
    /// Index into [`Mesh::textures`]; corner UVs come from [`Mesh::uvs`].
    Texture(usize),
    /// One color per triangle corner, interpolated barycentrically.
    PerVertex([Rgb; 3]),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} but only {count} vertices exist")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },
    #[error("mesh has no triangles")]
    NoTriangles,
    #[error("{0} face color entries for {1} triangles")]
    FaceColorCount(usize, usize),
    #[error("{0} uv entries for {1} triangles")]
    UvCount(usize, usize),
    #[error("triangle {0} is textured but the mesh has no uvs")]
    MissingUvs(usize),
    #[error("triangle {0} references a missing texture")]
    MissingTexture(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-corner texture coordinates, one triple per triangle.
    pub uvs: Option<Vec<[[f64; 2]; 3]>>,
    pub face_colors: Vec<ColorSource>,
    pub textures: Vec<Texture>,
}

impl Mesh {
    /// A mesh whose every face has the same constant color.
    pub fn with_constant_color(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>, rgb: Rgb) -> Self {
        let face_colors = vec![ColorSource::Constant(rgb); triangles.len()];
        Mesh {
            vertices,
            triangles,
            uvs: None,
            face_colors,
            textures: Vec::new(),
        }
    }

    pub fn triangle(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.triangles.is_empty() {
            return Err(MeshError::NoTriangles);
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        let count = self.vertices.len();
        for (triangle, tri) in self.triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= count) {
                return Err(MeshError::IndexOutOfRange {
                    triangle,
                    index,
                    count,
                });
            }
        }
        if self.face_colors.len() != self.triangles.len() {
            return Err(MeshError::FaceColorCount(
                self.face_colors.len(),
                self.triangles.len(),
            ));
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != self.triangles.len() {
                return Err(MeshError::UvCount(uvs.len(), self.triangles.len()));
            }
        }
        for (t, source) in self.face_colors.iter().enumerate() {
            if let ColorSource::Texture(tex) = source {
                if self.uvs.is_none() {
                    return Err(MeshError::MissingUvs(t));
                }
                if *tex >= self.textures.len() {
                    return Err(MeshError::MissingTexture(t));
                }
            }
        }
        Ok(())
    }
}
