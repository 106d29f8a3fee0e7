//! Volumes, preprocessing, view reprojection, slice stacks, augmentation
//! and the synthetic cohort generator.

mod preprocess;
mod stack;
mod synth;
mod view;
mod volume;

pub use preprocess::{center_crop, downsample, preprocess, quantize, reproject, resample, DEFAULT_CROP, DEFAULT_FACTORS};
pub use stack::{apply_augmentation, augment, AugmentParams, AugmentPolicy, SliceStack};
pub use synth::{
    synth_generate, write_synth, SynthConfig, SynthKnee, DEFAULT_PROPORTIONS, SYNTH_CROP, SYNTH_DIMS, SYNTH_SPACING,
};
pub use view::{reprojected_grid, stack_extents, View};
pub use volume::{load_volume, read_header, save_volume, Dtype, Volume, VolumeHeader, Voxels, HEADER_LEN, MAGIC, MAX_VOXELS, VERSION};
