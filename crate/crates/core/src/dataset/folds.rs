use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{validate_records, ManifestRecord, Modality};
use crate::error::{Error, Result};

pub const N_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Gallery holds only the test fold's faces.
    P1,
    /// Gallery additionally holds every extended-gallery face.
    P2,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1" | "1" => Ok(Protocol::P1),
            "P2" | "2" => Ok(Protocol::P2),
            _ => Err(Error::argument(format!("unknown protocol {s:?} (expected P1 or P2)"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Sample ids handed to one cross-validation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub gallery: Vec<String>,
    pub probes: Vec<String>,
    /// Labeled sample ids of the other folds (faces and skulls).
    pub training_pairs: Vec<String>,
    /// Unlabeled, non-extended sample ids.
    pub training_unlabeled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub protocol: Protocol,
    pub seed: u64,
    /// Test subjects of each fold.
    pub folds: Vec<Vec<String>>,
    pub extended_gallery: Vec<String>,
    pub splits: Vec<FoldSplit>,
}

/// Shuffles the labeled subjects under `seed` and deals them into five
/// near-equal folds. Each fold's gallery is its subjects' faces (plus the
/// extended gallery under P2) and its probes are their skulls; training gets
/// the other folds' pairs and every unlabeled, non-extended record.
pub fn plan_folds(records: &[ManifestRecord], protocol: Protocol, seed: u64) -> Result<FoldPlan> {
    let pairs = validate_records(records)?;
    if pairs.len() < N_FOLDS {
        return Err(Error::argument(format!(
            "{} labeled subjects; at least {N_FOLDS} are needed for five folds",
            pairs.len()
        )));
    }
    let extended: Vec<String> = records
        .iter()
        .filter(|r| r.is_extended())
        .map(|r| r.sample_id.clone())
        .collect();
    if protocol == Protocol::P2 && extended.is_empty() {
        return Err(Error::Protocol(
            "protocol P2 needs records flagged extended_gallery".into(),
        ));
    }

    // pairs are ordered by subject id, so the shuffle ignores manifest order
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = pairs.len() / N_FOLDS;
    let extra = pairs.len() % N_FOLDS;
    let mut fold_pairs = Vec::with_capacity(N_FOLDS);
    let mut start = 0;
    for f in 0..N_FOLDS {
        let size = base + usize::from(f < extra);
        fold_pairs.push(order[start..start + size].to_vec());
        start += size;
    }

    let unlabeled: Vec<String> = records
        .iter()
        .filter(|r| !r.labeled && !r.is_extended())
        .map(|r| r.sample_id.clone())
        .collect();
    let mut splits = Vec::with_capacity(N_FOLDS);
    for (f, members) in fold_pairs.iter().enumerate() {
        let mut gallery: Vec<String> =
            members.iter().map(|&p| records[pairs[p].face].sample_id.clone()).collect();
        if protocol == Protocol::P2 {
            gallery.extend(extended.iter().cloned());
        }
        let probes = members.iter().map(|&p| records[pairs[p].skull].sample_id.clone()).collect();
        let mut training_pairs = Vec::new();
        for (g, others) in fold_pairs.iter().enumerate() {
            if g != f {
                for &p in others {
                    training_pairs.push(records[pairs[p].face].sample_id.clone());
                    training_pairs.push(records[pairs[p].skull].sample_id.clone());
                }
            }
        }
        splits.push(FoldSplit {
            gallery,
            probes,
            training_pairs,
            training_unlabeled: unlabeled.clone(),
        });
    }
    let folds = fold_pairs
        .iter()
        .map(|m| m.iter().map(|&p| pairs[p].subject_id.clone()).collect())
        .collect();
    Ok(FoldPlan {
        protocol,
        seed,
        folds,
        extended_gallery: if protocol == Protocol::P2 { extended } else { Vec::new() },
        splits,
    })
}

impl FoldPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fold plan serializes")
    }

    /// Verifies that no test subject of a fold reaches that fold's training
    /// data and that the folds partition the labeled subjects.
    pub fn check_no_leakage(&self, records: &[ManifestRecord]) -> Result<()> {
        let subject_of = |id: &str| {
            records
                .iter()
                .find(|r| r.sample_id == id)
                .map(|r| r.subject_id.as_str())
                .ok_or_else(|| Error::Protocol(format!("plan names unknown sample {id:?}")))
        };
        let mut all = HashSet::new();
        for (fold, split) in self.folds.iter().zip(&self.splits) {
            let test: HashSet<&str> = fold.iter().map(String::as_str).collect();
            for id in split.training_pairs.iter().chain(&split.training_unlabeled) {
                if test.contains(subject_of(id)?) {
                    return Err(Error::Protocol(format!("test subject leaks into training via {id:?}")));
                }
            }
            for s in fold {
                if !all.insert(s.as_str()) {
                    return Err(Error::Protocol(format!("subject {s:?} appears in two folds")));
                }
            }
        }
        let labeled: HashSet<&str> = records
            .iter()
            .filter(|r| r.labeled && r.modality == Modality::Face)
            .map(|r| r.subject_id.as_str())
            .collect();
        if labeled != all {
            return Err(Error::Protocol("folds do not cover the labeled subjects".into()));
        }
        Ok(())
    }
}
