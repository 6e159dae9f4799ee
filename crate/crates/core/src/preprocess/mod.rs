//! Dataset ingestion: crop, letterbox, normalize, split.

mod geometry;
mod image;
mod manifest;
mod normalize;
mod split;

pub use self::image::RgbImage;
pub use geometry::{crop_bbox, letterbox, letterbox_placement, resize_bilinear, BoundingBox, Placement, CANVAS};
pub use manifest::{DatasetManifest, Label, ManifestRecord, Split};
pub use normalize::{canonical_frame, normalize_value, prepare, to_model_input, IMAGENET_MEAN, IMAGENET_STD};
pub use split::{split_dataset, split_sizes, SplitAssignment};
