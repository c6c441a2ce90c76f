//! Small fixed-size vector helpers shared by every module.

/// A 3D position in model units.
pub type Point3 = [f64; 3];

/// An 8-bit RGB triple.
pub type Rgb = [u8; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance. Every nearest-neighbor comparison in the crate
/// goes through this function so that tie-breaks are reproducible.
#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Axis-aligned bounding box as `(min corner, max corner)`.
///
/// Returns `None` for an empty slice.
pub fn bounding_box(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = *points.first()?;
    let mut lo = first;
    let mut hi = first;
    for p in &points[1..] {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    Some((lo, hi))
}

#[inline]
pub fn box_center(lo: Point3, hi: Point3) -> Point3 {
    [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ]
}

#[inline]
pub fn box_diagonal(lo: Point3, hi: Point3) -> f64 {
    norm(sub(hi, lo))
}
