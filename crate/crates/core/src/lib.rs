//! Building blocks for dense, color- and part-annotated point clouds.
//!
//! A mesh is sampled into a dense colored cloud ([`sampler`]), aligned onto a
//! sparse part-labeled cloud of the same object ([`align`]), and labeled by
//! KNN classifiers tuned per pair ([`transfer`]). [`kdtree`] provides the
//! exact neighbor queries all of these rely on.

pub mod align;
pub mod cloud;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod sampler;
pub mod seed;
pub mod synth;
pub mod transfer;

pub use align::{
    align_pair, one_sided_hausdorff, AlignError, AlignmentReport, SimilarityTransform,
};
pub use cloud::{CloudError, PointCloud};
pub use geometry::{Point3, Rgb};
pub use kdtree::{KdTree, KdTreeError, Neighbor};
pub use mesh::{ColorSource, Mesh, MeshError, Texture};
pub use sampler::{sample_cloud, SampleError, DEFAULT_SAMPLE_COUNT};
pub use transfer::{grid_search, transfer_labels, GridSearchResult, KnnConfig, Weighting};
