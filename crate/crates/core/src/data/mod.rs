//! File formats: images, pair manifests, age metadata, prediction and score
//! tables.

mod images;
mod manifest;
mod tables;

pub use images::{is_image_file, list_images, load_image, save_image};
pub use manifest::{load_age_metadata, load_pair_manifest, AgeMetadata, PairEntry, PairManifest, SplitTag};
pub use tables::{read_predictions, read_scores, write_predictions, write_roc_csv};
