//! Manifests, image preprocessing, registration, augmentation, fold planning
//! and the synthetic paired corpus.

mod augment;
mod folds;
mod preprocess;
mod register;
mod synth;

pub use augment::{augment, AugmentationSpec};
pub use folds::{plan_folds, FoldPlan, FoldSplit, Protocol};
pub use preprocess::{load_image, preprocess, preprocess_image, CANONICAL_SIZE};
pub use register::{ncc, register, register_detailed, warp, Registration};
pub use synth::{
    skull_degradation, synth_extended_gallery, synth_paired, synth_paired_with, write_corpus,
    Corpus, SynthStyle,
};

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Face,
    Skull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub modality: Modality,
    pub path: String,
    pub labeled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended_gallery: Option<bool>,
}

impl ManifestRecord {
    pub fn is_extended(&self) -> bool {
        self.extended_gallery == Some(true)
    }
}

/// A labeled face/skull pair, as indices into a record list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub subject_id: String,
    pub face: usize,
    pub skull: usize,
}

/// Checks sample-id uniqueness and the pairing invariant: each labeled
/// subject has exactly one labeled face and one labeled skull. Returns the
/// pairs ordered by subject id.
pub fn validate_records(records: &[ManifestRecord]) -> Result<Vec<Pair>> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.sample_id.as_str()) {
            return Err(Error::data(format!("duplicate sample_id {:?}", r.sample_id)));
        }
        if r.is_extended() && (r.modality != Modality::Face || r.labeled) {
            return Err(Error::data(format!(
                "extended-gallery record {:?} must be an unlabeled face",
                r.sample_id
            )));
        }
    }
    let mut by_subject: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.labeled) {
        let entry = by_subject.entry(r.subject_id.as_str()).or_default();
        match r.modality {
            Modality::Face => entry.0.push(i),
            Modality::Skull => entry.1.push(i),
        }
    }
    let mut pairs = Vec::with_capacity(by_subject.len());
    for (subject, (faces, skulls)) in by_subject {
        match (faces.as_slice(), skulls.as_slice()) {
            ([f], [s]) => pairs.push(Pair {
                subject_id: subject.to_string(),
                face: *f,
                skull: *s,
            }),
            ([], _) | (_, []) => {
                return Err(Error::data(format!(
                    "dangling pair: labeled subject {subject:?} has {} face and {} skull records",
                    faces.len(),
                    skulls.len()
                )))
            }
            _ => {
                return Err(Error::data(format!(
                    "labeled subject {subject:?} has {} faces and {} skulls; expected one of each",
                    faces.len(),
                    skulls.len()
                )))
            }
        }
    }
    Ok(pairs)
}

pub fn parse_manifest(json: &str) -> Result<Vec<ManifestRecord>> {
    let records: Vec<ManifestRecord> =
        serde_json::from_str(json).map_err(|e| Error::data(format!("malformed manifest: {e}")))?;
    validate_records(&records)?;
    Ok(records)
}

/// Reads and validates a manifest. Relative image paths are resolved against
/// the manifest's directory, and every image must be readable.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = parse_manifest(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut records {
        let resolved: PathBuf = base.join(&r.path);
        if let Err(e) = std::fs::File::open(&resolved) {
            return Err(Error::data(format!(
                "record {:?}: unreadable image {}: {e}",
                r.sample_id,
                resolved.display()
            )));
        }
        r.path = resolved.to_string_lossy().into_owned();
    }
    Ok(records)
}

pub fn save_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(records).expect("manifest serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

impl Corpus {
    /// Loads a manifest and all of its images.
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let records = load_manifest(manifest)?;
        let images = load_images(&records)?;
        Ok(Corpus { records, images })
    }
}

/// Loads and preprocesses every record's image, in record order.
pub fn load_images(records: &[ManifestRecord]) -> Result<Vec<ImageTensor>> {
    records
        .par_iter()
        .map(|r| load_image(&r.path).map(|img| img.with_source(r.path.clone())))
        .collect()
}
