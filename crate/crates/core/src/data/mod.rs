//! Image normalization, landmark tables, annotation checks, augmentation,
//! balancing, splits and the file formats around them.

pub mod augment;
pub mod balance;
pub mod boxes;
pub mod convert;
pub mod features;
pub mod image;
pub mod io;
pub mod landmarks;
pub mod pnm;
pub mod sample;
pub mod split;
pub mod synthetic;
pub mod validate;

pub use augment::{augment, augment_chain, augment_image, augment_landmarks, random_chain, AugmentOp};
pub use balance::{balance_classes, balance_gender, MAX_PER_CLASS, MIN_PER_CLASS};
pub use boxes::{load_boxes, parse_boxes, BBox, BoxFile};
pub use convert::{to_hcnn_data, to_landmark_data, LandmarkImputer};
pub use features::{load_feature_vectors, parse_feature_vectors, FeatureSet, FEATURE_DIM};
pub use image::{normalize_image, GrayImage, Normalized, RgbImage, NORMALIZED_SIZE};
pub use io::{load_dataset, load_labels, save_dataset, LabelRow};
pub use landmarks::{
    load_landmark_table, load_landmark_table_with, parse_landmark_table, Bounds, LandmarkSet, LandmarkTable,
    LANDMARK_NAMES, NUM_POINTS,
};
pub use pnm::{read_pnm, write_pgm, Pnm};
pub use sample::{Dataset, Gender, Sample, Task};
pub use split::{split, SplitSpec};
pub use synthetic::{synthetic_dataset, SyntheticConfig};
pub use validate::{validate_annotations, ValidationReport, DEFAULT_SIGMA_K};
