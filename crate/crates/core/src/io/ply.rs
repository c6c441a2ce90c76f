//! PLY point cloud reading and writing.
//!
//! Reads `ascii 1.0` and `binary_little_endian 1.0`. The `vertex` element must
//! carry `x`, `y`, `z`; `red`/`green`/`blue` and `label` are optional. Other
//! elements and properties (including list properties) are parsed and
//! discarded.
//!
//! Writing always emits `float` positions, `uchar` colors and an `int` label,
//! listing only the channels present on the cloud.

use crate::cloud::PointCloud;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlyError {
    #[error("missing 'ply' magic line")]
    BadMagic,
    #[error("unknown format line: {0}")]
    UnknownFormat(String),
    #[error("malformed header line: {0}")]
    BadHeader(String),
    #[error("header has no end_header")]
    UnterminatedHeader,
    #[error("no vertex element")]
    NoVertexElement,
    #[error("vertex element lacks property {0}")]
    MissingProperty(&'static str),
    #[error("element {element}: declared {declared} entries, found {found}")]
    CountMismatch {
        element: String,
        declared: usize,
        found: usize,
    },
    #[error("binary payload truncated")]
    Truncated,
    #[error("{0} bytes of trailing data after the last element")]
    TrailingData(usize),
    #[error("line {line}: malformed value '{token}'")]
    BadValue { line: usize, token: String },
    #[error("vertex {index}: {channel} value {value} out of range")]
    OutOfRange {
        index: usize,
        channel: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn from_name(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut pos = 0;
    let mut next_line = || -> Option<String> {
        if pos >= bytes.len() {
            return None;
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| pos + i);
        let line = String::from_utf8_lossy(&bytes[pos..end])
            .trim_end_matches('\r')
            .to_owned();
        pos = (end + 1).min(bytes.len());
        Some(line)
    };
    if next_line().as_deref().map(str::trim) != Some("ply") {
        return Err(PlyError::BadMagic);
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line().ok_or(PlyError::UnterminatedHeader)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let bad = || PlyError::BadHeader(line.clone());
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match tokens.get(1..) {
                    Some(["ascii", "1.0"]) => Encoding::Ascii,
                    Some(["binary_little_endian", "1.0"]) => Encoding::BinaryLittleEndian,
                    _ => return Err(PlyError::UnknownFormat(line.clone())),
                });
            }
            Some("element") => {
                let [_, name, count] = tokens[..] else {
                    return Err(bad());
                };
                let count = count.parse().map_err(|_| bad())?;
                elements.push(Element {
                    name: name.to_owned(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(bad)?;
                let property = match tokens[1..] {
                    ["list", count, item, name] => Property {
                        name: name.to_owned(),
                        kind: PropertyKind::List {
                            count: Scalar::from_name(count)
                                .filter(|s| s.is_integer())
                                .ok_or_else(bad)?,
                            item: Scalar::from_name(item).ok_or_else(bad)?,
                        },
                    },
                    [ty, name] => Property {
                        name: name.to_owned(),
                        kind: PropertyKind::Scalar(Scalar::from_name(ty).ok_or_else(bad)?),
                    },
                    _ => return Err(bad()),
                };
                element.properties.push(property);
            }
            Some("end_header") => break,
            Some(_) => return Err(bad()),
        }
    }
    let encoding = encoding.ok_or_else(|| PlyError::UnknownFormat(String::new()))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: pos,
    })
}

/// Column positions of the channels we keep within the vertex element.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    label: Option<usize>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout, PlyError> {
    let find = |name: &str| {
        element
            .properties
            .iter()
            .position(|p| p.name == name && matches!(p.kind, PropertyKind::Scalar(_)))
    };
    let x = find("x").ok_or(PlyError::MissingProperty("x"))?;
    let y = find("y").ok_or(PlyError::MissingProperty("y"))?;
    let z = find("z").ok_or(PlyError::MissingProperty("z"))?;
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        (None, None, None) => None,
        (None, _, _) => return Err(PlyError::MissingProperty("red")),
        (_, None, _) => return Err(PlyError::MissingProperty("green")),
        (_, _, None) => return Err(PlyError::MissingProperty("blue")),
    };
    Ok(VertexLayout {
        xyz: [x, y, z],
        rgb,
        label: find("label"),
    })
}

/// Accumulates the kept channels, validating ranges as values arrive.
struct CloudBuilder {
    layout: VertexLayout,
    cloud: PointCloud,
}

impl CloudBuilder {
    fn new(layout: VertexLayout, capacity: usize) -> Self {
        let capacity = capacity.min(1 << 20);
        let cloud = PointCloud {
            positions: Vec::with_capacity(capacity),
            colors: layout.rgb.map(|_| Vec::with_capacity(capacity)),
            labels: layout.label.map(|_| Vec::with_capacity(capacity)),
        };
        CloudBuilder { layout, cloud }
    }

    fn push(&mut self, row: &[f64]) -> Result<(), PlyError> {
        let index = self.cloud.positions.len();
        let [x, y, z] = self.layout.xyz.map(|i| row[i]);
        for (channel, value) in [("x", x), ("y", y), ("z", z)] {
            if !value.is_finite() {
                return Err(PlyError::OutOfRange {
                    index,
                    channel,
                    value,
                });
            }
        }
        self.cloud.positions.push([x, y, z]);
        if let (Some(cols), Some(colors)) = (self.layout.rgb, self.cloud.colors.as_mut()) {
            let mut rgb = [0u8; 3];
            for (k, &c) in cols.iter().enumerate() {
                let value = row[c];
                if !(0.0..=255.0).contains(&value) || value.fract() != 0.0 {
                    return Err(PlyError::OutOfRange {
                        index,
                        channel: ["red", "green", "blue"][k],
                        value,
                    });
                }
                rgb[k] = value as u8;
            }
            colors.push(rgb);
        }
        if let (Some(c), Some(labels)) = (self.layout.label, self.cloud.labels.as_mut()) {
            let value = row[c];
            if value < 0.0 || value > i32::MAX as f64 || value.fract() != 0.0 {
                return Err(PlyError::OutOfRange {
                    index,
                    channel: "label",
                    value,
                });
            }
            labels.push(value as i32);
        }
        Ok(())
    }
}

/// Parses a PLY byte buffer into a point cloud.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, PlyError> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or(PlyError::NoVertexElement)?;
    let layout = vertex_layout(&header.elements[vertex_pos])?;
    let mut builder = CloudBuilder::new(layout, header.elements[vertex_pos].count);
    let body = &bytes[header.body_offset..];
    match header.encoding {
        Encoding::Ascii => read_ascii(body, &header.elements, vertex_pos, &mut builder)?,
        Encoding::BinaryLittleEndian => {
            read_binary(body, &header.elements, vertex_pos, &mut builder)?
        }
    }
    Ok(builder.cloud)
}

fn read_ascii(
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    builder: &mut CloudBuilder,
) -> Result<(), PlyError> {
    let text = String::from_utf8_lossy(body);
    let mut rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut row = Vec::new();
    for (e, element) in elements.iter().enumerate() {
        for found in 0..element.count {
            let Some((line, content)) = rows.next() else {
                return Err(PlyError::CountMismatch {
                    element: element.name.clone(),
                    declared: element.count,
                    found,
                });
            };
            let bad = |token: &str| PlyError::BadValue {
                line: line + 1,
                token: token.to_owned(),
            };
            let mut tokens = content.split_whitespace();
            let value = |tokens: &mut std::str::SplitWhitespace| -> Result<f64, PlyError> {
                let t = tokens.next().ok_or_else(|| bad("<missing>"))?;
                t.parse::<f64>().map_err(|_| bad(t))
            };
            row.clear();
            for property in &element.properties {
                match property.kind {
                    PropertyKind::Scalar(_) => row.push(value(&mut tokens)?),
                    PropertyKind::List { .. } => {
                        let n = value(&mut tokens)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(bad(&n.to_string()));
                        }
                        for _ in 0..n as usize {
                            value(&mut tokens)?;
                        }
                        row.push(n);
                    }
                }
            }
            if let Some(extra) = tokens.next() {
                return Err(bad(extra));
            }
            if e == vertex_pos {
                builder.push(&row)?;
            }
        }
    }
    if rows.next().is_some() {
        let last = elements.last().unwrap();
        return Err(PlyError::CountMismatch {
            element: last.name.clone(),
            declared: last.count,
            found: last.count + 1 + rows.count(),
        });
    }
    Ok(())
}

fn read_binary(
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    builder: &mut CloudBuilder,
) -> Result<(), PlyError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], PlyError> {
        let end = pos.checked_add(n).ok_or(PlyError::Truncated)?;
        let slice = body.get(pos..end).ok_or(PlyError::Truncated)?;
        pos = end;
        Ok(slice)
    };
    let mut row = Vec::new();
    for (e, element) in elements.iter().enumerate() {
        for _ in 0..element.count {
            row.clear();
            for property in &element.properties {
                match property.kind {
                    PropertyKind::Scalar(s) => row.push(s.read_le(take(s.size())?)),
                    PropertyKind::List { count, item } => {
                        let n = count.read_le(take(count.size())?);
                        if n < 0.0 {
                            return Err(PlyError::Truncated);
                        }
                        let len = (n as usize)
                            .checked_mul(item.size())
                            .ok_or(PlyError::Truncated)?;
                        take(len)?;
                        row.push(n);
                    }
                }
            }
            if e == vertex_pos {
                builder.push(&row)?;
            }
        }
    }
    if pos < body.len() {
        return Err(PlyError::TrailingData(body.len() - pos));
    }
    Ok(())
}

/// Formats a value with six significant digits, shortest form.
fn six_digits(v: f64) -> String {
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    let s = format!("{rounded}");
    if s == "-0" {
        "0".to_owned()
    } else {
        s
    }
}

/// Serializes `cloud`. Positions are stored as 32-bit floats.
pub fn write_ply(cloud: &PointCloud, encoding: Encoding) -> Vec<u8> {
    let n = cloud.positions.len();
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        Encoding::Ascii => "format ascii 1.0\n",
        Encoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {n}");
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if cloud.labels.is_some() {
        header.push_str("property int label\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    match encoding {
        Encoding::BinaryLittleEndian => {
            let stride = 12
                + cloud.colors.as_ref().map_or(0, |_| 3)
                + cloud.labels.as_ref().map_or(0, |_| 4);
            out.reserve(stride * n);
            for i in 0..n {
                for c in cloud.positions[i] {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
                if let Some(colors) = &cloud.colors {
                    out.extend_from_slice(&colors[i]);
                }
                if let Some(labels) = &cloud.labels {
                    out.extend_from_slice(&labels[i].to_le_bytes());
                }
            }
        }
        Encoding::Ascii => {
            let mut line = String::new();
            for i in 0..n {
                line.clear();
                let p = cloud.positions[i].map(|c| c as f32 as f64);
                let _ = write!(
                    line,
                    "{} {} {}",
                    six_digits(p[0]),
                    six_digits(p[1]),
                    six_digits(p[2])
                );
                if let Some(colors) = &cloud.colors {
                    let [r, g, b] = colors[i];
                    let _ = write!(line, " {r} {g} {b}");
                }
                if let Some(labels) = &cloud.labels {
                    let _ = write!(line, " {}", labels[i]);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_positions_only() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 2 3\n";
        let c = parse_ply(src).unwrap();
        assert_eq!(c.positions, vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        assert!(c.colors.is_none() && c.labels.is_none());
    }

    #[test]
    fn ascii_count_mismatch() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n0 0 0\n0 0 0\n0 0 0\n";
        assert_eq!(
            parse_ply(src),
            Err(PlyError::CountMismatch {
                element: "vertex".into(),
                declared: 5,
                found: 4
            })
        );
    }

    #[test]
    fn unknown_format() {
        let src = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_ply(src), Err(PlyError::UnknownFormat(_))));
    }

    #[test]
    fn truncated_binary() {
        let cloud = PointCloud::from_positions(vec![[1.0, 2.0, 3.0]; 3]);
        let mut bytes = write_ply(&cloud, Encoding::BinaryLittleEndian);
        bytes.truncate(bytes.len() - 1);
        assert_eq!(parse_ply(&bytes), Err(PlyError::Truncated));
    }

    #[test]
    fn header_lists_present_channels_only() {
        let bare = PointCloud::from_positions(vec![[0.0; 3]]);
        let text = String::from_utf8(write_ply(&bare, Encoding::Ascii)).unwrap();
        assert!(!text.contains("red") && !text.contains("label"));
        let labeled = bare.clone().with_labels(vec![3]);
        let text = String::from_utf8(write_ply(&labeled, Encoding::Ascii)).unwrap();
        assert!(text.contains("property int label\n"));
        assert!(text.ends_with("0 0 0 3\n"));
    }

    #[test]
    fn skips_faces_and_extra_properties() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nproperty float nx\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for v in [0.5f64, 1.5, 2.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&1f32.to_le_bytes());
        bytes.push(3);
        for i in [0i32, 0, 0] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let c = parse_ply(&bytes).unwrap();
        assert_eq!(c.positions, vec![[0.5, 1.5, 2.5]]);
        bytes.push(0);
        assert_eq!(parse_ply(&bytes), Err(PlyError::TrailingData(1)));
    }

    #[test]
    fn rejects_bad_color_values() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty int red\nproperty int green\nproperty int blue\nend_header\n0 0 0 256 0 0\n";
        assert!(matches!(
            parse_ply(src),
            Err(PlyError::OutOfRange { channel: "red", .. })
        ));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(six_digits(0.1f32 as f64), "0.1");
        assert_eq!(six_digits(123456789.0), "123457000");
        assert_eq!(six_digits(-1.0e-7), "-0.0000001");
        assert_eq!(six_digits(-0.0), "0");
    }
}
