//! The size gate: walk the scorer's ranking from the most to the least
//! probable label and return the first one whose size range covers the
//! image's annotated size.

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use crate::label_registry::{LabelSet, LabelSetError};
use crate::rsize_io::Manifest;
use crate::scoring::{ScoreTable, ScoreVector};
use crate::text::{is_plain_field, lines};

pub const PREDICTIONS_HEADER: &str =
    "image_id,predicted,baseline_top1,fallback_used,selected_rank,filtered_set";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error(transparent)]
    Size(#[from] LabelSetError),
    #[error("scores for {id:?} cover {found} labels but label set {label_set:?} has {expected}")]
    LabelMismatch {
        id: String,
        label_set: String,
        expected: usize,
        found: usize,
    },
    #[error("score table columns do not match label set {0:?}")]
    TableMismatch(String),
    #[error("no scores for image {0:?}")]
    MissingScores(String),
    #[error("image {0:?} has no size annotation")]
    MissingSize(String),
    #[error("predictions header must be {PREDICTIONS_HEADER:?}, found {0:?}")]
    Header(String),
    #[error("predictions line {line}: {reason}")]
    Line { line: usize, reason: String },
}

/// Outcome of gating one image, with enough provenance to audit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatedPrediction {
    pub image_id: String,
    pub predicted: String,
    pub baseline_top1: String,
    /// Labels whose range covers the size, in label-set order.
    pub filtered_set: Vec<String>,
    /// Set when no label survived the filter and the baseline was used.
    pub fallback_used: bool,
    /// 1-based position of `predicted` in the descending-probability ranking.
    pub selected_rank: usize,
}

/// Label indices by descending probability, ties in label-set order.
pub fn ranking(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal));
    order
}

pub fn gate(ls: &LabelSet, size_m: f64, scores: &ScoreVector) -> Result<GatedPrediction, GateError> {
    if scores.probs.len() != ls.len() {
        return Err(GateError::LabelMismatch {
            id: scores.image_id.clone(),
            label_set: ls.name().to_string(),
            expected: ls.len(),
            found: scores.probs.len(),
        });
    }
    let filtered = ls.filter_by_size(size_m)?;
    let order = ranking(&scores.probs);
    let baseline = order[0];
    let (predicted, selected_rank, fallback_used) = match order
        .iter()
        .position(|&i| filtered.contains(i))
    {
        Some(pos) => (order[pos], pos + 1, false),
        None => (baseline, 1, true),
    };
    Ok(GatedPrediction {
        image_id: scores.image_id.clone(),
        predicted: ls.label(predicted).to_string(),
        baseline_top1: ls.label(baseline).to_string(),
        filtered_set: filtered.labels(ls).into_iter().map(str::to_string).collect(),
        fallback_used,
        selected_rank,
    })
}

/// Gates every manifest row, preserving manifest order. Fails on the first
/// row lacking scores or a size.
pub fn gate_batch(
    ls: &LabelSet,
    manifest: &Manifest,
    scores: &ScoreTable,
) -> Result<Vec<GatedPrediction>, GateError> {
    if !scores.matches(ls) {
        return Err(GateError::TableMismatch(ls.name().to_string()));
    }
    manifest
        .rows
        .iter()
        .map(|row| {
            let v = scores
                .get(&row.image_id)
                .ok_or_else(|| GateError::MissingScores(row.image_id.clone()))?;
            let size = row
                .size_m
                .ok_or_else(|| GateError::MissingSize(row.image_id.clone()))?;
            gate(ls, size, v)
        })
        .collect()
}

pub fn write_predictions(preds: &[GatedPrediction]) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for p in preds {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.image_id,
            p.predicted,
            p.baseline_top1,
            p.fallback_used,
            p.selected_rank,
            p.filtered_set.join("|")
        ));
    }
    out
}

/// Parses a predictions file, checking every label against `ls` and the
/// structural invariants of each row.
pub fn read_predictions(text: &str, ls: &LabelSet) -> Result<Vec<GatedPrediction>, GateError> {
    let mut it = lines(text);
    match it.next() {
        Some((_, h)) if h == PREDICTIONS_HEADER => {}
        other => return Err(GateError::Header(other.map(|(_, h)| h).unwrap_or("").to_string())),
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, l) in it {
        let bad = |reason: String| GateError::Line { line, reason };
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", f.len())));
        }
        if !is_plain_field(f[0]) || !seen.insert(f[0].to_string()) {
            return Err(bad(format!("invalid or duplicate image id {:?}", f[0])));
        }
        let label = |s: &str| {
            ls.index_of(s)
                .map(|_| s.to_string())
                .ok_or_else(|| bad(format!("unknown label {s:?}")))
        };
        let predicted = label(f[1])?;
        let baseline_top1 = label(f[2])?;
        let fallback_used = match f[3] {
            "true" => true,
            "false" => false,
            v => return Err(bad(format!("fallback_used must be true or false, found {v:?}"))),
        };
        let selected_rank: usize = f[4]
            .parse()
            .ok()
            .filter(|&r| r >= 1 && r <= ls.len())
            .ok_or_else(|| bad(format!("bad selected_rank {:?}", f[4])))?;
        let filtered_set = if f[5].is_empty() {
            Vec::new()
        } else {
            f[5].split('|').map(label).collect::<Result<Vec<_>, _>>()?
        };
        let consistent = if fallback_used {
            filtered_set.is_empty() && predicted == baseline_top1
        } else {
            filtered_set.contains(&predicted)
        };
        if !consistent {
            return Err(bad("predicted label inconsistent with filtered_set".into()));
        }
        out.push(GatedPrediction {
            image_id: f[0].to_string(),
            predicted,
            baseline_top1,
            filtered_set,
            fallback_used,
            selected_rank,
        });
    }
    Ok(out)
}
