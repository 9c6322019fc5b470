use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cmc, identify, score_split, Fusion};
use crate::coupled::{fit_sstl, fit_ustl, match_domains, DomainBatch, MatchScoreMatrix, SupervisionConfig};
use crate::dataset::{
    augment, plan_folds, register, AugmentationSpec, Corpus, FoldPlan, Modality, Protocol,
};
use crate::dictbase::{dl_features, fit_dictionary};
use crate::error::{Error, Result, StageExt};
use crate::features::{batch_extract, FeatureConfig, FeatureKind, Standardizer};
use crate::raster::ImageTensor;
use crate::reduce::Pca;
use crate::tlcore::{FeatureMatrix, TransformParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Hog,
    Lbp,
    Dsift,
    Pixels,
    Dl,
    UstlPixels,
    SstlPixels,
    UstlHog,
    SstlHog,
}

impl MethodKind {
    pub const ALL: [MethodKind; 9] = [
        MethodKind::Hog,
        MethodKind::Lbp,
        MethodKind::Dsift,
        MethodKind::Pixels,
        MethodKind::Dl,
        MethodKind::UstlPixels,
        MethodKind::SstlPixels,
        MethodKind::UstlHog,
        MethodKind::SstlHog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Hog => "hog",
            MethodKind::Lbp => "lbp",
            MethodKind::Dsift => "dsift",
            MethodKind::Pixels => "pixels",
            MethodKind::Dl => "dl",
            MethodKind::UstlPixels => "ustl_pixels",
            MethodKind::SstlPixels => "sstl_pixels",
            MethodKind::UstlHog => "ustl_hog",
            MethodKind::SstlHog => "sstl_hog",
        }
    }

    /// Descriptor the method consumes.
    pub fn feature_kind(self) -> FeatureKind {
        match self {
            MethodKind::Hog | MethodKind::UstlHog | MethodKind::SstlHog => FeatureKind::Hog,
            MethodKind::Lbp => FeatureKind::Lbp,
            MethodKind::Dsift => FeatureKind::Dsift,
            MethodKind::Pixels | MethodKind::Dl | MethodKind::UstlPixels | MethodKind::SstlPixels => {
                FeatureKind::Pixels
            }
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlConfig {
    /// Requested atom count; clamped to the number of training columns.
    pub k: usize,
    pub sparsity: usize,
    pub iters: usize,
}

impl Default for DlConfig {
    fn default() -> Self {
        DlConfig {
            k: 256,
            sparsity: 10,
            iters: 30,
        }
    }
}

/// Every parameter of a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: Protocol,
    /// Fold-assignment seed; learners derive their seeds from it.
    pub seed: u64,
    pub register: bool,
    pub max_shift: u32,
    pub scales: Vec<f64>,
    pub augmentation: AugmentationSpec,
    /// Also augment the labeled training pairs (both sides alike) before
    /// transform learning.
    pub augment_training: bool,
    pub fusion: Fusion,
    /// Descriptor settings; `kind` is chosen per method.
    pub features: FeatureConfig,
    /// Leading principal components kept before transform learning.
    pub pca_components: usize,
    pub transform: TransformParams,
    pub supervision: SupervisionConfig,
    pub dl: DlConfig,
}

impl RunConfig {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        RunConfig {
            protocol,
            seed,
            register: true,
            max_shift: 5,
            scales: vec![0.95, 1.0, 1.05],
            augmentation: AugmentationSpec::default(),
            augment_training: true,
            fusion: Fusion::MinPerIdentity,
            features: FeatureConfig::new(FeatureKind::Pixels),
            pca_components: 64,
            transform: TransformParams {
                tau: 32,
                ..TransformParams::default()
            },
            supervision: SupervisionConfig {
                rho: Some(3.0),
                ..SupervisionConfig::default()
            },
            dl: DlConfig::default(),
        }
    }
}

/// Outcome of one cross-validation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_probes: usize,
    pub n_gallery_identities: usize,
    /// Rank-r identification accuracy in percent, for r = 1..identities.
    pub rank_accuracies: Vec<f64>,
    pub genuine_scores: Vec<f64>,
    pub impostor_scores: Vec<f64>,
}

impl FoldResult {
    /// Accuracy at `rank`; ranks past the gallery size are saturated.
    pub fn accuracy_at(&self, rank: usize) -> f64 {
        match self.rank_accuracies.get(rank - 1) {
            Some(v) => *v,
            None => self.rank_accuracies.last().copied().unwrap_or(100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: MethodKind,
    pub per_fold: Vec<FoldResult>,
    /// Mean over folds of the rank-1 accuracy (percent).
    pub mean_rank1: f64,
    pub mean_rank5: f64,
    pub config_echo: RunConfig,
}

impl EvalReport {
    fn from_folds(method: MethodKind, per_fold: Vec<FoldResult>, config: &RunConfig) -> Self {
        let mean_at = |r: usize| {
            per_fold.iter().map(|f| f.accuracy_at(r)).sum::<f64>() / per_fold.len() as f64
        };
        EvalReport {
            method,
            mean_rank1: mean_at(1),
            mean_rank5: mean_at(5),
            per_fold,
            config_echo: config.clone(),
        }
    }

    /// Fold-averaged CMC up to the largest gallery.
    pub fn mean_cmc(&self) -> Vec<f64> {
        let ranks = self.per_fold.iter().map(|f| f.rank_accuracies.len()).max().unwrap_or(0);
        let n = self.per_fold.len() as f64;
        (1..=ranks)
            .map(|r| self.per_fold.iter().map(|f| f.accuracy_at(r)).sum::<f64>() / n)
            .collect()
    }
}

/// Registered images of one round, shared by every method.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub fold: usize,
    /// Augmented gallery images and the identity of each.
    pub gallery: Vec<ImageTensor>,
    pub gallery_labels: Vec<String>,
    pub probes: Vec<ImageTensor>,
    pub probe_ids: Vec<String>,
    pub probe_truth: Vec<String>,
    /// Labeled training pairs, index-aligned.
    pub train_faces: Vec<ImageTensor>,
    pub train_skulls: Vec<ImageTensor>,
    pub unlabeled_faces: Vec<ImageTensor>,
    pub unlabeled_skulls: Vec<ImageTensor>,
}

fn mean_image(images: &[ImageTensor]) -> Result<ImageTensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Protocol("fold has no training faces".into()))?;
    let n = images.len() as f64;
    Ok(ImageTensor::from_fn_clamped(first.height(), first.width(), |r, c| {
        images.iter().map(|im| im.get(r, c)).sum::<f64>() / n
    }))
}

/// Registers every image of fold `fold` to the mean training face and
/// augments the gallery.
pub fn prepare_fold(
    corpus: &Corpus,
    plan: &FoldPlan,
    fold: usize,
    config: &RunConfig,
) -> Result<PreparedFold> {
    let split = plan
        .splits
        .get(fold)
        .ok_or_else(|| Error::argument(format!("fold {fold} does not exist")))?;
    let index: HashMap<&str, usize> = corpus
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.sample_id.as_str(), i))
        .collect();
    let lookup = |id: &String| {
        index
            .get(id.as_str())
            .copied()
            .ok_or_else(|| Error::Protocol(format!("plan names unknown sample {id:?}")))
    };
    let by_modality = |ids: &[String], modality| -> Result<Vec<usize>> {
        Ok(ids
            .iter()
            .map(lookup)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|&i| corpus.records[i].modality == modality)
            .collect())
    };

    // training pairs in subject order so faces and skulls line up
    let mut train_faces = by_modality(&split.training_pairs, Modality::Face)?;
    let mut train_skulls = by_modality(&split.training_pairs, Modality::Skull)?;
    train_faces.sort_by(|&a, &b| corpus.records[a].subject_id.cmp(&corpus.records[b].subject_id));
    train_skulls.sort_by(|&a, &b| corpus.records[a].subject_id.cmp(&corpus.records[b].subject_id));
    let unlabeled_faces = by_modality(&split.training_unlabeled, Modality::Face)?;
    let unlabeled_skulls = by_modality(&split.training_unlabeled, Modality::Skull)?;
    let gallery = split.gallery.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    let probes = split.probes.iter().map(lookup).collect::<Result<Vec<_>>>()?;

    let raw = |ids: &[usize]| ids.iter().map(|&i| corpus.images[i].clone()).collect::<Vec<_>>();
    let reference = mean_image(&raw(&train_faces))?;
    let align = |ids: &[usize]| -> Result<Vec<ImageTensor>> {
        if !config.register {
            return Ok(raw(ids));
        }
        ids.par_iter()
            .map(|&i| register(&corpus.images[i], &reference, config.max_shift, &config.scales))
            .collect()
    };

    let gallery_images = align(&gallery)?;
    let copies = config.augmentation.copies();
    let augmented = augment(&gallery_images, &config.augmentation)?;
    let gallery_labels = gallery
        .iter()
        .flat_map(|&i| std::iter::repeat_n(corpus.records[i].subject_id.clone(), copies))
        .collect();
    Ok(PreparedFold {
        fold,
        gallery: augmented,
        gallery_labels,
        probes: align(&probes)?,
        probe_ids: probes.iter().map(|&i| corpus.records[i].sample_id.clone()).collect(),
        probe_truth: probes.iter().map(|&i| corpus.records[i].subject_id.clone()).collect(),
        train_faces: align(&train_faces)?,
        train_skulls: align(&train_skulls)?,
        unlabeled_faces: align(&unlabeled_faces)?,
        unlabeled_skulls: align(&unlabeled_skulls)?,
    })
}

fn features(images: &[ImageTensor], kind: FeatureKind, config: &RunConfig) -> Result<FeatureMatrix> {
    let cfg = FeatureConfig {
        kind,
        standardize: false,
        ..config.features.clone()
    };
    batch_extract(images, &cfg)
}

fn concat(parts: &[&[ImageTensor]]) -> Vec<ImageTensor> {
    parts.iter().flat_map(|p| p.iter().cloned()).collect()
}

/// Projection onto leading principal components of the training data,
/// scaled so training columns have unit mean squared norm.
struct Reducer {
    pca: Pca,
    scale: f64,
}

impl Reducer {
    fn fit(train: &FeatureMatrix, components: usize) -> Result<Self> {
        let pca = Pca::fit(train, components)?;
        let projected = pca.apply(train)?;
        let ms = projected.as_matrix().norm_squared() / projected.n_samples() as f64;
        Ok(Reducer {
            pca,
            scale: 1.0 / ms.sqrt(),
        })
    }

    fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        FeatureMatrix::new(self.pca.apply(x)?.into_inner() * self.scale)
    }
}

/// Scores the fold's probes against its gallery with one method.
fn score(prepared: &PreparedFold, method: MethodKind, config: &RunConfig) -> Result<MatchScoreMatrix> {
    let kind = method.feature_kind();
    let seed = config.seed.wrapping_add(prepared.fold as u64);
    let gallery = features(&prepared.gallery, kind, config).stage("gallery features")?;
    let probes = features(&prepared.probes, kind, config).stage("probe features")?;
    let labels = prepared.gallery_labels.clone();
    let ids = prepared.probe_ids.clone();

    match method {
        MethodKind::Hog | MethodKind::Lbp | MethodKind::Dsift | MethodKind::Pixels => {
            let (gallery, probes) = if config.features.standardize {
                let train = concat(&[
                    &prepared.train_faces,
                    &prepared.train_skulls,
                    &prepared.unlabeled_faces,
                    &prepared.unlabeled_skulls,
                ]);
                let s = Standardizer::fit(&features(&train, kind, config)?);
                (s.apply(&gallery)?, s.apply(&probes)?)
            } else {
                (gallery, probes)
            };
            MatchScoreMatrix::euclidean(probes.as_matrix(), gallery.as_matrix(), ids, labels)
        }
        MethodKind::Dl => {
            let train = features(
                &concat(&[&prepared.train_faces, &prepared.unlabeled_faces]),
                kind,
                config,
            )?;
            let k = config.dl.k.min(train.n_samples());
            let s = config.dl.sparsity.min(k).min(train.dim());
            let dict = fit_dictionary(&train, k, s, config.dl.iters, seed).stage("dictionary fit")?;
            let g = dl_features(&dict, &gallery)?;
            let p = dl_features(&dict, &probes)?;
            MatchScoreMatrix::euclidean(p.as_matrix(), g.as_matrix(), ids, labels)
        }
        MethodKind::UstlPixels | MethodKind::UstlHog | MethodKind::SstlPixels | MethodKind::SstlHog => {
            let (train_faces, train_skulls) = if config.augment_training {
                (
                    augment(&prepared.train_faces, &config.augmentation)?,
                    augment(&prepared.train_skulls, &config.augmentation)?,
                )
            } else {
                (prepared.train_faces.clone(), prepared.train_skulls.clone())
            };
            let n_pairs = train_faces.len();
            let faces = features(&concat(&[&train_faces, &prepared.unlabeled_faces]), kind, config)?;
            let skulls = features(&concat(&[&train_skulls, &prepared.unlabeled_skulls]), kind, config)?;
            let reducer = Reducer::fit(&FeatureMatrix::hstack(&[&faces, &skulls])?, config.pca_components)
                .stage("dimension reduction")?;
            let faces = reducer.apply(&faces)?;
            let skulls = reducer.apply(&skulls)?;
            let mut params = config.transform.clone();
            params.seed = seed;
            params.tau = params.tau.min(faces.dim());
            let model = if matches!(method, MethodKind::UstlPixels | MethodKind::UstlHog) {
                fit_ustl(&faces, &skulls, &params).stage("transform fit")?
            } else {
                let pair_idx: Vec<usize> = (0..n_pairs).collect();
                let labeled = DomainBatch::paired(
                    faces.select_columns(&pair_idx)?,
                    skulls.select_columns(&pair_idx)?,
                )?;
                let unlabeled = DomainBatch::unpaired(faces, skulls);
                fit_sstl(&unlabeled, &labeled, &params, &config.supervision)
                    .stage("coupled transform fit")?
            };
            match_domains(&model, &reducer.apply(&gallery)?, &reducer.apply(&probes)?, labels, ids)
        }
    }
}

/// Runs one method on a prepared fold and computes its metrics.
pub fn run_method(prepared: &PreparedFold, method: MethodKind, config: &RunConfig) -> Result<FoldResult> {
    let scores = score(prepared, method, config)?;
    let ranked = identify(&scores, config.fusion)?;
    let curve = cmc(&ranked, &prepared.probe_truth)?;
    let (genuine_scores, impostor_scores) = score_split(&scores, &prepared.probe_truth)?;
    let mut identities = prepared.gallery_labels.clone();
    identities.sort();
    identities.dedup();
    Ok(FoldResult {
        fold: prepared.fold,
        n_probes: prepared.probes.len(),
        n_gallery_identities: identities.len(),
        rank_accuracies: curve.iter().map(|v| v * 100.0).collect(),
        genuine_scores,
        impostor_scores,
    })
}

/// Five-fold evaluation of every listed method. Registration and
/// augmentation are done once per fold and shared by the methods; folds run
/// in parallel and the result does not depend on scheduling.
pub fn run_protocol(corpus: &Corpus, methods: &[MethodKind], config: &RunConfig) -> Result<Vec<EvalReport>> {
    let plan = plan_folds(&corpus.records, config.protocol, config.seed).stage("fold planning")?;
    plan.check_no_leakage(&corpus.records)?;
    let per_fold: Vec<Vec<FoldResult>> = (0..plan.splits.len())
        .into_par_iter()
        .map(|f| {
            let prepared = prepare_fold(corpus, &plan, f, config).stage(&format!("fold {}: prepare", f + 1))?;
            methods
                .iter()
                .map(|&m| run_method(&prepared, m, config).stage(&format!("fold {}: {m}", f + 1)))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let folds = per_fold.iter().map(|f| f[mi].clone()).collect();
            EvalReport::from_folds(m, folds, config)
        })
        .collect())
}
