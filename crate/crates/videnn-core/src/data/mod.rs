//! Training-data construction: patch extraction, dihedral augmentation,
//! blind-noise pairing, ground-truth-by-averaging and the temporal dataset
//! procedure.

mod augment;
mod build;
mod manifest;
mod patch;

pub use augment::AugmentOp;
pub use build::{
    build_spatial_dataset, build_temporal_dataset, regenerate_spatial_pairs,
    regenerate_temporal_pairs, split_corpus, SpatialBuildConfig, TemporalBuild,
    TemporalBuildConfig,
};
pub use manifest::{DatasetKind, DatasetManifest, ManifestHeader, ManifestRecord};
pub use patch::{average_ground_truth, crop, extract_patches};

use crate::frame::Frame;
use crate::noise::NoiseSpec;

/// Default training patch side.
pub const PATCH_SIZE_DEFAULT: usize = 50;

/// A (noisy, clean) training example for the spatial phase, with the
/// degradation that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub noisy: Frame,
    pub clean: Frame,
    pub noise: NoiseSpec,
}

/// A temporal-phase example: three spatially denoised patches in temporal
/// order, cropped at identical coordinates, plus the clean center patch.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletPatchPair {
    pub inputs: [Frame; 3],
    pub clean_center: Frame,
    pub noise: NoiseSpec,
}
