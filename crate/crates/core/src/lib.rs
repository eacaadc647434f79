//! Visual place recognition toolkit.
//!
//! The pipeline has two phases. Mapping extracts local features from a set of
//! reference images, quantizes them against a k-means visual dictionary,
//! aggregates each image into a VLAD descriptor and indexes the descriptors in
//! a ball tree. Localization computes the VLAD descriptor of a query frame and
//! ranks the reference images by distance. The [`eval`] module scores the
//! rankings with precision-recall curves, per-query timing and a cross-dataset
//! feature correlation measure.

pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod index;
pub mod pipeline;
pub mod synthetic;
pub mod vlad;
pub mod vocab;

mod util;

pub use error::{Error, Result};
pub use eval::{
    aggregate_timing, compute_pr, correlation_coefficient, CorrelationReport, GroundTruth,
    PrCurve, PrPoint, TimingSummary,
};
pub use features::{
    extract, DescriptorKind, DescriptorSet, ExtractorConfig, FeatureSet, Keypoint,
};
pub use imaging::{build_pyramid, load_image, GrayImage, Pyramid};
pub use index::{brute_force_knn, BallTree, Neighbor};
pub use pipeline::{build_map, localize, EnvironmentMap, LocalizationResult, TimingRecord};
pub use vlad::{compute_vlad, vlad_distance, VladDescriptor, VladNormalization};
pub use vocab::{assign, train_dictionary, KMeansParams, VisualDictionary};
