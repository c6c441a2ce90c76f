//! Wavefront OBJ/MTL reading.
//!
//! Supported: `v` (optionally with trailing `r g b` vertex colors in `[0,1]`),
//! `vt`, `f` (any polygon, fan-triangulated, with `v`, `v/vt`, `v/vt/vn` and
//! `v//vn` corners, negative indices allowed), `mtllib` and `usemtl`.
//! Everything else is skipped and reported as a warning.
//!
//! Face colors resolve in priority order: vertex colors on all three corners,
//! then a `map_Kd` texture with uvs, then the material `Kd`, then
//! [`DEFAULT_COLOR`].

use super::ppm::{parse_ppm, PpmError};
use crate::mesh::{ColorSource, Mesh, Texture};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Color assigned to faces that have no material, texture or vertex color.
pub const DEFAULT_COLOR: [u8; 3] = [128, 128, 128];

#[derive(Debug, Error)]
pub enum ObjError {
    #[error("line {0}: malformed vertex")]
    MalformedVertex(usize),
    #[error("line {0}: malformed texture coordinate")]
    MalformedTexCoord(usize),
    #[error("line {0}: malformed face")]
    MalformedFace(usize),
    #[error("line {line}: index {index} out of range ({count} available)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("no faces")]
    NoFaces,
    #[error("line {0}: malformed material statement")]
    MalformedMaterial(usize),
    #[error("texture {path}: {source}")]
    Texture {
        path: PathBuf,
        #[source]
        source: PpmError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Result of parsing an OBJ file.
#[derive(Debug, Clone)]
pub struct ParsedObj {
    pub mesh: Mesh,
    /// Skipped directives, one entry per directive keyword.
    pub warnings: Vec<String>,
    pub mtllibs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Material {
    pub kd: Option<[f64; 3]>,
    pub map_kd: Option<String>,
}

/// Materials from one or more MTL files, keyed by `newmtl` name.
#[derive(Debug, Clone, Default)]
pub struct MaterialLibrary {
    pub materials: HashMap<String, Material>,
    /// Decoded `map_Kd` images keyed by the name used in the MTL file.
    pub textures: HashMap<String, Texture>,
}

fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, String)> + '_ {
    bytes.split(|&b| b == b'\n').enumerate().map(|(i, raw)| {
        let text = String::from_utf8_lossy(raw);
        let text = match text.find('#') {
            Some(c) => text[..c].trim().to_owned(),
            None => text.trim().to_owned(),
        };
        (i + 1, text)
    })
}

fn parse_floats(tokens: &[&str]) -> Option<Vec<f64>> {
    tokens
        .iter()
        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Parses MTL text. Only `newmtl`, `Kd` and `map_Kd` are interpreted.
pub fn parse_mtl(bytes: &[u8]) -> Result<BTreeMap<String, Material>, ObjError> {
    let mut out = BTreeMap::new();
    let mut current: Option<String> = None;
    for (line, text) in lines(bytes) {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let Some((&head, rest)) = tokens.split_first() else {
            continue;
        };
        match head {
            "newmtl" => {
                let name = rest.join(" ");
                if name.is_empty() {
                    return Err(ObjError::MalformedMaterial(line));
                }
                out.entry(name.clone()).or_insert_with(Material::default);
                current = Some(name);
            }
            "Kd" => {
                let name = current.as_ref().ok_or(ObjError::MalformedMaterial(line))?;
                let v = parse_floats(rest)
                    .filter(|v| v.len() == 3)
                    .ok_or(ObjError::MalformedMaterial(line))?;
                out.get_mut(name).unwrap().kd = Some([v[0], v[1], v[2]]);
            }
            "map_Kd" => {
                let name = current.as_ref().ok_or(ObjError::MalformedMaterial(line))?;
                // Options such as `-s` are not supported; the file name is the last token.
                let file = rest.last().ok_or(ObjError::MalformedMaterial(line))?;
                out.get_mut(name).unwrap().map_kd = Some((*file).to_owned());
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Parses OBJ text without any material library.
pub fn parse_obj(bytes: &[u8]) -> Result<ParsedObj, ObjError> {
    parse_obj_with(bytes, &MaterialLibrary::default())
}

struct Corner {
    vertex: i64,
    uv: Option<i64>,
}

struct RawFace {
    line: usize,
    corners: Vec<Corner>,
    material: Option<String>,
}

fn parse_index(token: &str) -> Option<i64> {
    token.parse::<i64>().ok().filter(|&i| i != 0)
}

fn parse_corner(token: &str) -> Option<Corner> {
    let mut parts = token.split('/');
    let vertex = parse_index(parts.next()?)?;
    let uv = match parts.next() {
        None | Some("") => None,
        Some(t) => Some(parse_index(t)?),
    };
    Some(Corner { vertex, uv })
}

/// Resolves a 1-based or negative OBJ index against `count` entries.
fn resolve(index: i64, count: usize, line: usize) -> Result<usize, ObjError> {
    let resolved = if index > 0 {
        index - 1
    } else {
        count as i64 + index
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(ObjError::IndexOutOfRange { line, index, count });
    }
    Ok(resolved as usize)
}

fn to_rgb(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Parses OBJ text, resolving `usemtl` against `library`.
pub fn parse_obj_with(bytes: &[u8], library: &MaterialLibrary) -> Result<ParsedObj, ObjError> {
    let mut vertices = Vec::new();
    let mut vertex_colors: Vec<Option<[f64; 3]>> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<RawFace> = Vec::new();
    let mut material: Option<String> = None;
    let mut mtllibs = Vec::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();

    for (line, text) in lines(bytes) {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let Some((&head, rest)) = tokens.split_first() else {
            continue;
        };
        match head {
            "v" => {
                let v = parse_floats(rest).ok_or(ObjError::MalformedVertex(line))?;
                match v.len() {
                    3 | 4 => vertex_colors.push(None),
                    6 => vertex_colors.push(Some([v[3], v[4], v[5]])),
                    _ => return Err(ObjError::MalformedVertex(line)),
                }
                vertices.push([v[0], v[1], v[2]]);
            }
            "vt" => {
                let v = parse_floats(rest)
                    .filter(|v| (1..=3).contains(&v.len()))
                    .ok_or(ObjError::MalformedTexCoord(line))?;
                texcoords.push([v[0], v.get(1).copied().unwrap_or(0.0)]);
            }
            "f" => {
                let corners: Option<Vec<Corner>> = rest.iter().map(|t| parse_corner(t)).collect();
                let corners = corners
                    .filter(|c| c.len() >= 3)
                    .ok_or(ObjError::MalformedFace(line))?;
                // Relative indices refer to entries defined so far.
                let corners = corners
                    .into_iter()
                    .map(|c| Corner {
                        vertex: if c.vertex < 0 {
                            vertices.len() as i64 + c.vertex + 1
                        } else {
                            c.vertex
                        },
                        uv: c.uv.map(|u| {
                            if u < 0 {
                                texcoords.len() as i64 + u + 1
                            } else {
                                u
                            }
                        }),
                    })
                    .collect();
                faces.push(RawFace {
                    line,
                    corners,
                    material: material.clone(),
                });
            }
            "mtllib" => mtllibs.extend(rest.iter().map(|s| (*s).to_owned())),
            "usemtl" => {
                if rest.is_empty() {
                    return Err(ObjError::MalformedMaterial(line));
                }
                material = Some(rest.join(" "));
            }
            other => *skipped.entry(other.to_owned()).or_default() += 1,
        }
    }

    if faces.is_empty() {
        return Err(ObjError::NoFaces);
    }

    let any_uv = faces
        .iter()
        .any(|f| f.corners.iter().any(|c| c.uv.is_some()));
    let mut triangles = Vec::new();
    let mut uvs = Vec::new();
    let mut face_colors = Vec::new();
    let mut textures: Vec<Texture> = Vec::new();
    let mut texture_slots: HashMap<String, usize> = HashMap::new();
    let mut uncolored = 0usize;
    let mut unknown_materials: BTreeMap<String, usize> = BTreeMap::new();

    for face in &faces {
        let mut idx = Vec::with_capacity(face.corners.len());
        let mut corner_uvs = Vec::with_capacity(face.corners.len());
        for c in &face.corners {
            idx.push(resolve(c.vertex, vertices.len(), face.line)?);
            corner_uvs.push(match c.uv {
                Some(u) => Some(texcoords[resolve(u, texcoords.len(), face.line)?]),
                None => None,
            });
        }
        let mat = face
            .material
            .as_ref()
            .and_then(|name| match library.materials.get(name) {
                Some(m) => Some(m),
                None => {
                    *unknown_materials.entry(name.clone()).or_default() += 1;
                    None
                }
            });
        for k in 1..idx.len() - 1 {
            let tri = [0, k, k + 1];
            triangles.push(tri.map(|i| idx[i] as u32));
            let tri_uvs = tri.map(|i| corner_uvs[i]);
            let has_uv = tri_uvs.iter().all(Option::is_some);
            if any_uv {
                uvs.push(tri_uvs.map(|u| u.unwrap_or([0.0, 0.0])));
            }
            let colors = tri.map(|i| vertex_colors[idx[i]]);
            let texture = mat
                .and_then(|m| m.map_kd.as_ref())
                .filter(|_| has_uv)
                .and_then(|name| library.textures.get(name).map(|t| (name, t)));
            let source = if colors.iter().all(Option::is_some) {
                ColorSource::PerVertex(colors.map(|c| to_rgb(c.unwrap())))
            } else if let Some((name, tex)) = texture {
                let slot = *texture_slots.entry(name.clone()).or_insert_with(|| {
                    textures.push(tex.clone());
                    textures.len() - 1
                });
                ColorSource::Texture(slot)
            } else if let Some(kd) = mat.and_then(|m| m.kd) {
                ColorSource::Constant(to_rgb(kd))
            } else {
                uncolored += 1;
                ColorSource::Constant(DEFAULT_COLOR)
            };
            face_colors.push(source);
        }
    }

    let mut warnings: Vec<String> = skipped
        .into_iter()
        .map(|(k, n)| format!("skipped {n} '{k}' statement(s)"))
        .collect();
    warnings.extend(
        unknown_materials
            .into_iter()
            .map(|(k, n)| format!("material '{k}' not found ({n} face(s))")),
    );
    if uncolored > 0 {
        warnings.push(format!(
            "{uncolored} triangle(s) have no color source; using default color"
        ));
    }

    let mesh = Mesh {
        vertices,
        triangles,
        uvs: any_uv.then_some(uvs),
        face_colors,
        textures,
    };
    Ok(ParsedObj {
        mesh,
        warnings,
        mtllibs,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, ObjError> {
    std::fs::read(path).map_err(|source| ObjError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Loads an OBJ from disk together with its MTL files and PPM textures,
/// resolved relative to the OBJ's directory.
pub fn load_obj(path: &Path) -> Result<ParsedObj, ObjError> {
    let bytes = read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut library = MaterialLibrary::default();
    let names: Vec<String> = lines(&bytes)
        .filter_map(|(_, t)| t.strip_prefix("mtllib ").map(str::to_owned))
        .flat_map(|t| t.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .collect();
    for name in names {
        for (mat_name, mat) in parse_mtl(&read(&dir.join(&name))?)? {
            if let Some(tex) = &mat.map_kd {
                if !library.textures.contains_key(tex) {
                    let tex_path = dir.join(tex);
                    let is_ppm = tex_path
                        .extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
                    if is_ppm {
                        let image =
                            parse_ppm(&read(&tex_path)?).map_err(|source| ObjError::Texture {
                                path: tex_path.clone(),
                                source,
                            })?;
                        library.textures.insert(tex.clone(), image);
                    }
                }
            }
            library.materials.insert(mat_name, mat);
        }
    }
    let mut parsed = parse_obj_with(&bytes, &library)?;
    for mat in library.materials.values() {
        if let Some(tex) = &mat.map_kd {
            if !library.textures.contains_key(tex) {
                parsed
                    .warnings
                    .push(format!("texture '{tex}' is not PPM; falling back to Kd"));
            }
        }
    }
    Ok(parsed)
}
