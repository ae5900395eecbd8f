//! Procedural shape × motion video clips standing in for recorded behavior
//! videos, their on-disk format and the stratified train/test manifest.

mod clip;
mod manifest;

pub use clip::{
    class_parts, clip_from_bytes, clip_geometry, clip_to_bytes, generate_background, generate_clip, load_clip,
    save_clip, ClipGeometry, ClipSpec, Motion, Shape, VideoClip, MIN_HEIGHT, MIN_WIDTH, NUM_CLASSES,
};
pub use manifest::{
    generate_dataset, load_manifest, DatasetConfig, DatasetManifest, ManifestEntry, Split, DEFAULT_TRAIN_RATIO, MANIFEST_FILE,
    REFERENCE_CLASS_TOTALS,
};
