//! File formats: OBJ/MTL meshes, PPM textures, PLY point clouds and the
//! pipeline manifest.

pub mod manifest;
pub mod obj;
pub mod ply;
pub mod ppm;

pub use manifest::{read_manifest, write_manifest, Manifest, ManifestError, Record, Split, Status};
pub use obj::{
    load_obj, parse_mtl, parse_obj, parse_obj_with, MaterialLibrary, ObjError, ParsedObj,
};
pub use ply::{parse_ply, write_ply, Encoding, PlyError};
pub use ppm::{parse_ppm, PpmError};
