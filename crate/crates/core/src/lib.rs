//! Cross-domain identification with learned sparsifying transforms.
//!
//! The crate matches probe images from one modality (skulls) against a
//! gallery of another (face photographs). It provides:
//!
//! - [`tlcore`]: square sparsifying transform learning by alternating minimization.
//! - [`coupled`]: two-domain matchers, unsupervised (independent transforms) and
//!   semi-supervised (transforms plus a learned code alignment map).
//! - [`features`]: pixel, HOG, LBP and dense SIFT descriptors.
//! - [`dictbase`]: dictionary-learning baseline (OMP coding, MOD updates).
//! - [`reduce`]: principal component projection.
//! - [`dataset`]: manifests, preprocessing, registration, augmentation, fold
//!   planning and a synthetic paired-domain corpus generator.
//! - [`eval`]: identification, CMC curves, score distributions, protocol runs
//!   and report files.
//! - [`xfml`]: the binary model container.

pub mod coupled;
pub mod dataset;
pub mod dictbase;
pub mod error;
pub mod eval;
pub mod features;
pub mod raster;
pub mod reduce;
pub mod tlcore;
pub mod xfml;

pub use error::{Error, Result};
pub use raster::ImageTensor;
pub use tlcore::{CodedBatch, FeatureMatrix, TransformModel, TransformParams};
