//! Class-probability vectors and the scorers that produce them.
//!
//! Two scorers are built in: [`FileScorer`] replays a score file written by
//! an external model, and [`CentroidModel`] is a nearest-centroid classifier
//! with a softmax over negative squared distances.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_registry::LabelSet;
use crate::rsize_io::{FeatureTable, Manifest};
use crate::text::{fmt_f64, is_plain_field, lines, parse_decimal};

/// Allowed deviation of an emitted vector's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-6;
/// Ingested rows whose sum lies within this distance of 1 are renormalized.
pub const INGEST_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("score header must be image_id followed by the label set in order; column {position}: expected {expected:?}, found {found:?}")]
    Header {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("score row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("scores for {id:?}: probability {value:?} for {label:?} is outside [0, 1]")]
    OutOfRange {
        id: String,
        label: String,
        value: String,
    },
    #[error("scores for {id:?} sum to {sum}, not 1")]
    BadSum { id: String, sum: f64 },
    #[error("scores for {id:?} cover {found} labels, expected {expected}")]
    Length {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid or duplicate image id {0:?} in score table")]
    Id(String),
    #[error("no scores for image {0:?}")]
    UnknownImage(String),
    #[error("feature dimension {found} does not match model dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("class {0:?} has no training samples")]
    EmptyClass(String),
    #[error("feature row {0:?} has no label in the manifest")]
    Unlabeled(String),
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("malformed centroid model: {0}")]
    Model(String),
    #[error("scorer labels do not match label set {0:?}")]
    LabelMismatch(String),
}

/// Probabilities for one image, indexed in label-set order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub image_id: String,
    pub probs: Vec<f64>,
}

impl ScoreVector {
    /// Checks length, range and normalization against a label count.
    pub fn validate(&self, labels: &[String]) -> Result<(), ScoreError> {
        if self.probs.len() != labels.len() {
            return Err(ScoreError::Length {
                id: self.image_id.clone(),
                expected: labels.len(),
                found: self.probs.len(),
            });
        }
        for (p, label) in self.probs.iter().zip(labels) {
            if !(p.is_finite() && (0.0..=1.0).contains(p)) {
                return Err(ScoreError::OutOfRange {
                    id: self.image_id.clone(),
                    label: label.clone(),
                    value: p.to_string(),
                });
            }
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ScoreError::BadSum {
                id: self.image_id.clone(),
                sum,
            });
        }
        Ok(())
    }

    /// Index of the highest probability; ties go to the earliest label.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// A scorer maps an image (and whatever payload it needs) to a probability
/// vector over a fixed label list.
pub trait Scorer {
    type Input: ?Sized;

    fn labels(&self) -> &[String];

    fn score(&self, image_id: &str, input: &Self::Input) -> Result<ScoreVector, ScoreError>;

    /// [`Scorer::score`] followed by the normalization and range checks
    /// every emitted vector must satisfy.
    fn score_checked(&self, image_id: &str, input: &Self::Input) -> Result<ScoreVector, ScoreError> {
        let v = self.score(image_id, input)?;
        v.validate(self.labels())?;
        Ok(v)
    }
}

fn labels_of(ls: &LabelSet) -> Vec<String> {
    ls.labels().map(str::to_string).collect()
}

/// Validated score vectors keyed by image id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    labels: Vec<String>,
    rows: Vec<ScoreVector>,
    index: HashMap<String, usize>,
}

impl ScoreTable {
    pub fn new(ls: &LabelSet, rows: Vec<ScoreVector>) -> Result<Self, ScoreError> {
        let labels = labels_of(ls);
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            r.validate(&labels)?;
            if !is_plain_field(&r.image_id) || index.insert(r.image_id.clone(), i).is_some() {
                return Err(ScoreError::Id(r.image_id.clone()));
            }
        }
        Ok(Self {
            labels,
            rows,
            index,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[ScoreVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ScoreVector> {
        self.index.get(image_id).map(|&i| &self.rows[i])
    }

    /// True when the table's columns are exactly `ls` in order.
    pub fn matches(&self, ls: &LabelSet) -> bool {
        self.labels.iter().map(String::as_str).eq(ls.labels())
    }
}

fn score_header(labels: &[String]) -> String {
    let mut h = String::from("image_id");
    for l in labels {
        h.push(',');
        h.push_str(l);
    }
    h
}

/// Parses a score file whose columns must follow `ls` order. Rows summing
/// to within [`INGEST_TOLERANCE`] of 1 are rescaled to sum to 1.
pub fn read_scores(text: &str, ls: &LabelSet) -> Result<ScoreTable, ScoreError> {
    let labels = labels_of(ls);
    let mut it = lines(text);
    let header = it.next().map(|(_, h)| h).unwrap_or("");
    let expected = std::iter::once("image_id").chain(labels.iter().map(String::as_str));
    let found: Vec<&str> = header.split(',').collect();
    for (position, exp) in expected.enumerate() {
        let f = found.get(position).copied().unwrap_or("");
        if f != exp {
            return Err(ScoreError::Header {
                position: position + 1,
                expected: exp.to_string(),
                found: f.to_string(),
            });
        }
    }
    if found.len() != labels.len() + 1 {
        return Err(ScoreError::Header {
            position: labels.len() + 2,
            expected: String::new(),
            found: found[labels.len() + 1].to_string(),
        });
    }
    let mut rows = Vec::new();
    for (line, l) in it {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != labels.len() + 1 {
            return Err(ScoreError::FieldCount {
                row: line - 1,
                expected: labels.len() + 1,
                found: fields.len(),
            });
        }
        let id = fields[0].to_string();
        let mut probs = Vec::with_capacity(labels.len());
        for (v, label) in fields[1..].iter().zip(&labels) {
            match parse_decimal(v) {
                Some(p) if (0.0..=1.0).contains(&p) => probs.push(p),
                _ => {
                    return Err(ScoreError::OutOfRange {
                        id,
                        label: label.clone(),
                        value: v.to_string(),
                    })
                }
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > INGEST_TOLERANCE {
            return Err(ScoreError::BadSum { id, sum });
        }
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        rows.push(ScoreVector { image_id: id, probs });
    }
    ScoreTable::new(ls, rows)
}

pub fn write_scores(table: &ScoreTable) -> String {
    let mut out = score_header(&table.labels);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&r.image_id);
        for p in &r.probs {
            out.push(',');
            out.push_str(&fmt_f64(*p));
        }
        out.push('\n');
    }
    out
}

/// Replays stored probabilities; the payload is unused.
pub struct FileScorer<'a> {
    table: &'a ScoreTable,
}

impl<'a> FileScorer<'a> {
    pub fn new(table: &'a ScoreTable) -> Self {
        Self { table }
    }
}

impl Scorer for FileScorer<'_> {
    type Input = ();

    fn labels(&self) -> &[String] {
        &self.table.labels
    }

    fn score(&self, image_id: &str, _: &()) -> Result<ScoreVector, ScoreError> {
        self.table
            .get(image_id)
            .cloned()
            .ok_or_else(|| ScoreError::UnknownImage(image_id.to_string()))
    }
}

/// Softmax of `-d2 / tau`, shifted by the smallest distance so the largest
/// exponent is zero.
pub fn probs_from_sq_distances(d2: &[f64], tau: f64) -> Vec<f64> {
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = d2.iter().map(|d| (-(d - min) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// One mean feature vector per label, scored with temperature `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    labels: Vec<String>,
    tau: f64,
    centroids: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    labels: Vec<String>,
    tau: f64,
    dim: usize,
    centroids: Vec<Vec<f64>>,
}

impl CentroidModel {
    pub fn new(labels: Vec<String>, centroids: Vec<Vec<f64>>, tau: f64) -> Result<Self, ScoreError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ScoreError::Temperature(tau));
        }
        if labels.is_empty() || labels.len() != centroids.len() {
            return Err(ScoreError::Model(format!(
                "{} labels but {} centroids",
                labels.len(),
                centroids.len()
            )));
        }
        let dim = centroids[0].len();
        if dim == 0 {
            return Err(ScoreError::Model("dimension 0".into()));
        }
        for c in &centroids {
            if c.len() != dim {
                return Err(ScoreError::Dimension {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(ScoreError::Model("non-finite centroid entry".into()));
            }
        }
        Ok(Self {
            labels,
            tau,
            centroids,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self, ScoreError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ScoreError::Temperature(tau));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn matches(&self, ls: &LabelSet) -> bool {
        self.labels.iter().map(String::as_str).eq(ls.labels())
    }

    pub fn from_json(text: &str) -> Result<Self, ScoreError> {
        let raw: RawModel =
            serde_json::from_str(text).map_err(|e| ScoreError::Model(e.to_string()))?;
        let model = Self::new(raw.labels, raw.centroids, raw.tau)?;
        if model.dim() != raw.dim {
            return Err(ScoreError::Model(format!(
                "declared dim {} but centroids have {}",
                raw.dim,
                model.dim()
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let raw = RawModel {
            labels: self.labels.clone(),
            tau: self.tau,
            dim: self.dim(),
            centroids: self.centroids.clone(),
        };
        let mut s = serde_json::to_string(&raw).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn sq_distances(&self, x: &[f64]) -> Result<Vec<f64>, ScoreError> {
        if x.len() != self.dim() {
            return Err(ScoreError::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .centroids
            .iter()
            .map(|c| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect())
    }

    /// Scores every record of `features`, in table order.
    pub fn score_table(&self, ls: &LabelSet, features: &FeatureTable) -> Result<ScoreTable, ScoreError> {
        if !self.matches(ls) {
            return Err(ScoreError::LabelMismatch(ls.name().to_string()));
        }
        let rows = features
            .records()
            .iter()
            .map(|r| self.score_checked(&r.image_id, &r.features))
            .collect::<Result<Vec<_>, _>>()?;
        ScoreTable::new(ls, rows)
    }
}

impl Scorer for CentroidModel {
    type Input = [f64];

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn score(&self, image_id: &str, x: &[f64]) -> Result<ScoreVector, ScoreError> {
        let d2 = self.sq_distances(x)?;
        Ok(ScoreVector {
            image_id: image_id.to_string(),
            probs: probs_from_sq_distances(&d2, self.tau),
        })
    }
}

/// Arithmetic mean of each class's feature vectors.
///
/// Every feature row must have a label in `labels`; manifest rows without
/// features are ignored. Samples are accumulated in image-id order, so the
/// result does not depend on the order of the input table.
pub fn train_centroids(
    ls: &LabelSet,
    features: &FeatureTable,
    labels: &Manifest,
    tau: f64,
) -> Result<CentroidModel, ScoreError> {
    let label_of: HashMap<&str, &str> = labels
        .rows
        .iter()
        .map(|r| (r.image_id.as_str(), r.true_label.as_str()))
        .collect();
    let mut per_class: Vec<BTreeMap<&str, &[f64]>> = vec![BTreeMap::new(); ls.len()];
    for r in features.records() {
        let label = label_of
            .get(r.image_id.as_str())
            .ok_or_else(|| ScoreError::Unlabeled(r.image_id.clone()))?;
        let class = ls
            .index_of(label)
            .ok_or_else(|| ScoreError::UnknownLabel(label.to_string()))?;
        per_class[class].insert(&r.image_id, &r.features);
    }
    let dim = features.dim();
    let mut centroids = Vec::with_capacity(ls.len());
    for (class, samples) in per_class.iter().enumerate() {
        if samples.is_empty() {
            return Err(ScoreError::EmptyClass(ls.label(class).to_string()));
        }
        let mut sum = vec![0.0; dim];
        for x in samples.values() {
            sum.iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v);
        }
        let n = samples.len() as f64;
        centroids.push(sum.into_iter().map(|s| s / n).collect());
    }
    CentroidModel::new(labels_of(ls), centroids, tau)
}
