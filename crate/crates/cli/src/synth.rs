//! Synthetic dataset: part-colored box meshes plus misaligned sparse labeled
//! clouds, with a manifest tying them together.

use densify_core::geometry::norm;
use densify_core::io::manifest::{Manifest, Record, Split};
use densify_core::io::ply::{write_ply, Encoding};
use densify_core::seed::{self, derive_seed};
use densify_core::synth::{chair_like, labeled_sample, mesh_to_obj, RandomSimilarity};
use rand::Rng;
use std::path::Path;

use crate::fsio::atomic_write;
use crate::CliError;

pub const CATEGORY_NAMES: [&str; 16] = [
    "airplane",
    "bag",
    "cap",
    "car",
    "chair",
    "earphone",
    "guitar",
    "knife",
    "lamp",
    "laptop",
    "motorbike",
    "mug",
    "pistol",
    "rocket",
    "skateboard",
    "table",
];

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub categories: usize,
    pub objects_per_category: usize,
    pub sparse_points: usize,
    /// Every `test_every`-th object of a category goes to the test split.
    pub test_every: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            categories: 2,
            objects_per_category: 5,
            sparse_points: 2000,
            test_every: 5,
            seed: 0,
        }
    }
}

/// A cube-group rotation, a shift of norm in `[3, 6]` and a scale in
/// `[0.5, 0.8] ∪ [1.25, 2]`, so every alignment stage has work to do.
pub fn misalignment(rng: &mut impl Rng) -> RandomSimilarity {
    let unit = RandomSimilarity::draw(rng, 1.0, 1.0, 1.0);
    let direction = unit
        .translation
        .map(|c| c / norm(unit.translation).max(1e-12));
    let length = rng.random_range(3.0..=6.0);
    let factor = rng.random_range(1.25f64.ln()..=2f64.ln()).exp();
    RandomSimilarity {
        rotation: unit.rotation,
        translation: direction.map(|c| c * length),
        scale: if rng.random::<bool>() {
            factor
        } else {
            1.0 / factor
        },
    }
}

/// Writes meshes, sparse clouds and the manifest; paths in the manifest are
/// relative to its directory.
pub fn write_dataset(manifest_path: &Path, spec: &SynthSpec) -> Result<Manifest, CliError> {
    if spec.categories == 0 || spec.categories > CATEGORY_NAMES.len() {
        return Err(CliError::Config(format!(
            "--categories must lie in 1..={}",
            CATEGORY_NAMES.len()
        )));
    }
    if spec.sparse_points == 0 || spec.test_every == 0 {
        return Err(CliError::Config(
            "sparse point count and test period must be positive".into(),
        ));
    }
    let root = manifest_path.parent().unwrap_or(Path::new(""));
    let mut manifest = Manifest::default();
    for (c, category) in CATEGORY_NAMES.iter().take(spec.categories).enumerate() {
        let parts = 2 + c % 2;
        for j in 0..spec.objects_per_category {
            let id = format!("{category}_{j:03}");
            let part_mesh = chair_like(derive_seed(spec.seed, &format!("mesh/{id}")), parts);
            let (obj, mtl) = mesh_to_obj(&part_mesh.mesh, &format!("{id}.mtl"));
            atomic_write(&root.join(format!("meshes/{id}.obj")), obj.as_bytes())?;
            atomic_write(&root.join(format!("meshes/{id}.mtl")), mtl.as_bytes())?;

            let sparse = labeled_sample(
                &part_mesh,
                spec.sparse_points,
                derive_seed(spec.seed, &format!("sparse/{id}")),
            );
            let mut rng = seed::rng(derive_seed(spec.seed, &format!("pose/{id}")));
            let sparse = misalignment(&mut rng).apply_cloud(&sparse);
            atomic_write(
                &root.join(format!("sparse/{id}.ply")),
                &write_ply(&sparse, Encoding::BinaryLittleEndian),
            )?;

            let split = if j % spec.test_every == spec.test_every - 1 {
                Split::Test
            } else {
                Split::Train
            };
            manifest.records.push(Record::new(
                &id,
                *category,
                format!("meshes/{id}.obj"),
                format!("sparse/{id}.ply"),
                format!("dense/{id}.ply"),
                split,
            ));
        }
    }
    atomic_write(
        manifest_path,
        &densify_core::io::manifest::write_manifest(&manifest),
    )?;
    Ok(manifest)
}
