//! Identification, CMC curves, genuine/impostor scores, protocol runs and
//! report files.

mod protocol;
mod report;

pub use protocol::{
    prepare_fold, run_method, run_protocol, DlConfig, EvalReport, FoldResult, MethodKind,
    PreparedFold, RunConfig,
};
pub use report::{emit_report, load_report, to_json_17};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupled::MatchScoreMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Every gallery entry is ranked on its own.
    None,
    /// Entries sharing an identity collapse to their minimum distance.
    #[default]
    MinPerIdentity,
}

/// Gallery identities of one probe, best first, with their distances.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub probe_id: String,
    pub ranking: Vec<(String, f64)>,
}

impl RankedList {
    /// 1-based rank of the first entry with identity `id`.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.ranking.iter().position(|(g, _)| g == id).map(|p| p + 1)
    }
}

/// Per-probe distances to each gallery identity. Under min fusion every
/// identity appears once with the smallest distance among its entries.
fn fused_row(scores: &MatchScoreMatrix, row: usize, fusion: Fusion) -> Vec<(String, f64)> {
    let row = scores.scores.row(row);
    let entries = scores.gallery_ids.iter().zip(row.iter());
    match fusion {
        Fusion::None => entries.map(|(id, d)| (id.clone(), *d)).collect(),
        Fusion::MinPerIdentity => {
            let mut best: BTreeMap<&str, f64> = BTreeMap::new();
            for (id, &d) in entries {
                best.entry(id).and_modify(|b| *b = b.min(d)).or_insert(d);
            }
            best.into_iter().map(|(id, d)| (id.to_string(), d)).collect()
        }
    }
}

/// Ranks gallery identities for every probe by ascending (fused) distance,
/// breaking ties by identity in lexicographic order. Gallery ids of the
/// score matrix are identity labels; augmented copies share a label.
pub fn identify(scores: &MatchScoreMatrix, fusion: Fusion) -> Result<Vec<RankedList>> {
    if scores.n_gallery() == 0 {
        return Err(Error::argument("empty gallery"));
    }
    if scores.scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("non-finite match score"));
    }
    Ok((0..scores.n_probes())
        .map(|i| {
            let mut ranking = fused_row(scores, i, fusion);
            // stable sort keeps gallery order among identical entries
            ranking.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            RankedList {
                probe_id: scores.probe_ids[i].clone(),
                ranking,
            }
        })
        .collect())
}

/// Cumulative match characteristic: entry `r-1` is the fraction of probes
/// whose true identity is ranked at or above `r`.
pub fn cmc(rankings: &[RankedList], true_ids: &[String]) -> Result<Vec<f64>> {
    if rankings.len() != true_ids.len() {
        return Err(Error::argument("one true identity per probe is required"));
    }
    let length = rankings.iter().map(|r| r.ranking.len()).max().unwrap_or(0);
    let mut hits = vec![0usize; length];
    for (list, truth) in rankings.iter().zip(true_ids) {
        let rank = list.rank_of(truth).ok_or_else(|| {
            Error::Protocol(format!(
                "probe {:?}: mated identity {truth:?} is not in the gallery",
                list.probe_id
            ))
        })?;
        hits[rank - 1] += 1;
    }
    let n = rankings.len().max(1) as f64;
    let mut total = 0;
    Ok(hits
        .into_iter()
        .map(|h| {
            total += h;
            total as f64 / n
        })
        .collect())
}

/// Splits identity-level (min-fused) distances into mated and non-mated
/// scores. Yields `probes × identities` values in total.
pub fn score_split(scores: &MatchScoreMatrix, true_ids: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    if true_ids.len() != scores.n_probes() {
        return Err(Error::argument("one true identity per probe is required"));
    }
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (i, truth) in true_ids.iter().enumerate() {
        for (id, d) in fused_row(scores, i, Fusion::MinPerIdentity) {
            if &id == truth {
                genuine.push(d);
            } else {
                impostor.push(d);
            }
        }
    }
    Ok((genuine, impostor))
}
