//! Class-agnostic instance pseudo-masks for scanned indoor meshes.
//!
//! The pipeline coarsens a triangle mesh into geometric segments, pools
//! per-vertex self-supervised features over those segments and extracts
//! instance masks without labels, either with a masked normalized-cut loop
//! ([`ncut::masked_ncut`]) or with seed-based proposals
//! ([`freemask::freemask_generate`]). Mask sets can be densified with
//! external predictions ([`selftrain::merge_predictions`]) and scored with
//! class-agnostic AP ([`eval::evaluate_ap`]).
//!
//! ```
//! use pseudomask::{cosine_similarity, masked_ncut, synth, NCutParams};
//!
//! let scene = synth::planted_clusters(&[12, 9], 42);
//! let params = NCutParams { min_foreground_segments: 2, ..Default::default() };
//! let masks = masked_ncut(&cosine_similarity(&scene.features), &scene.segments, &params).unwrap();
//! assert_eq!(masks.len(), 2);
//! ```

pub mod eigen;
pub mod error;
pub mod eval;
pub mod features;
pub mod freemask;
pub mod io;
pub mod masks;
pub mod matrix;
pub mod mesh;
pub mod ncut;
pub mod overseg;
pub mod pipeline;
pub mod selftrain;
pub mod synth;
pub mod unionfind;

pub use error::{Error, ErrorClass, Result};
pub use eval::{evaluate_ap, mask_iou, APReport, GroundTruthSet};
pub use features::{
    aggregate_features, cosine_similarity, fuse_similarities, load_vertex_features, threshold_saliency,
    AffinityMatrix, FeatureMatrix, Modality, VertexFeatures,
};
pub use freemask::{freemask_generate, FreeMaskParams};
pub use masks::{InstanceMask, MaskSource, PseudoMaskSet, ScoredMask};
pub use matrix::Matrix;
pub use mesh::{ply::load_ply, TriMesh};
pub use ncut::{masked_ncut, NCutParams, Separation};
pub use overseg::{oversegment, OversegParams, SegmentGraph};
pub use selftrain::{merge_predictions, MergePolicy};
