//! Size-annotated category label sets.
//!
//! Every category carries a closed interval of admissible real sizes,
//! measured as shooting distance in meters. Ranges of different categories
//! may overlap; the filter then returns several labels and the score
//! re-ranking downstream decides between them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only unit label sets are expressed in.
pub const UNIT: &str = "meters";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelSetError {
    #[error("malformed label set: {0}")]
    Malformed(String),
    #[error("label set unit must be \"meters\", found {0:?}")]
    Unit(String),
    #[error("label set has fewer than 2 categories ({0})")]
    TooFew(usize),
    #[error("category #{position} {label:?}: label must match [a-z0-9_]+")]
    InvalidLabel { position: usize, label: String },
    #[error("category #{position} {label:?}: duplicate label")]
    DuplicateLabel { position: usize, label: String },
    #[error("category #{position} {label:?}: {reason}")]
    Range {
        position: usize,
        label: String,
        reason: RangeError,
    },
    #[error("size must be positive and finite, got {0}")]
    InvalidSize(f64),
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum RangeError {
    #[error("bounds must be finite")]
    NonFinite,
    #[error("bounds must be positive (min {0})")]
    NonPositive(f64),
    #[error("min {min} exceeds max {max}")]
    Inverted { min: f64, max: f64 },
}

/// Closed interval `[min_m, max_m]` of shooting distances, `0 < min_m <= max_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRange {
    min_m: f64,
    max_m: f64,
}

impl SizeRange {
    pub fn new(min_m: f64, max_m: f64) -> Result<Self, RangeError> {
        if !min_m.is_finite() || !max_m.is_finite() {
            return Err(RangeError::NonFinite);
        }
        if min_m <= 0.0 || max_m <= 0.0 {
            return Err(RangeError::NonPositive(min_m.min(max_m)));
        }
        if min_m > max_m {
            return Err(RangeError::Inverted {
                min: min_m,
                max: max_m,
            });
        }
        Ok(Self { min_m, max_m })
    }

    pub fn min_m(&self) -> f64 {
        self.min_m
    }

    pub fn max_m(&self) -> f64 {
        self.max_m
    }

    /// Boundaries are inclusive.
    pub fn contains(&self, size_m: f64) -> bool {
        self.min_m <= size_m && size_m <= self.max_m
    }

    pub fn overlaps(&self, other: &SizeRange) -> bool {
        self.min_m <= other.max_m && other.min_m <= self.max_m
    }

    pub fn width(&self) -> f64 {
        self.max_m - self.min_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryEntry {
    pub label: String,
    pub range: SizeRange,
}

/// Lowercases and trims a raw label.
pub fn canonical_label(raw: &str) -> String {
    raw.trim().to_ascii_lowercase()
}

pub fn is_valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// An ordered, immutable list of categories. Order fixes tie-breaking and
/// the axes of every matrix derived from the set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    name: String,
    categories: Vec<CategoryEntry>,
}

/// Labels surviving the size filter, as indices into the label set in
/// label-set order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilteredSet(Vec<usize>);

impl FilteredSet {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn labels<'a>(&self, ls: &'a LabelSet) -> Vec<&'a str> {
        self.0.iter().map(|&i| ls.label(i)).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabelSet {
    name: String,
    unit: String,
    categories: Vec<RawCategory>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCategory {
    label: String,
    min_m: f64,
    max_m: f64,
}

impl LabelSet {
    /// Builds a label set from `(label, min_m, max_m)` triples, validating
    /// every invariant. Labels are canonicalized first.
    pub fn new<I, S>(name: impl Into<String>, categories: I) -> Result<Self, LabelSetError>
    where
        I: IntoIterator<Item = (S, f64, f64)>,
        S: AsRef<str>,
    {
        let mut out: Vec<CategoryEntry> = Vec::new();
        for (i, (raw, min_m, max_m)) in categories.into_iter().enumerate() {
            let position = i + 1;
            let label = canonical_label(raw.as_ref());
            if !is_valid_label(&label) {
                return Err(LabelSetError::InvalidLabel { position, label });
            }
            if out.iter().any(|c| c.label == label) {
                return Err(LabelSetError::DuplicateLabel { position, label });
            }
            let range = SizeRange::new(min_m, max_m).map_err(|reason| LabelSetError::Range {
                position,
                label: label.clone(),
                reason,
            })?;
            out.push(CategoryEntry { label, range });
        }
        if out.len() < 2 {
            return Err(LabelSetError::TooFew(out.len()));
        }
        Ok(Self {
            name: name.into(),
            categories: out,
        })
    }

    /// Parses the JSON label-set file format.
    pub fn from_json(text: &str) -> Result<Self, LabelSetError> {
        let raw: RawLabelSet =
            serde_json::from_str(text).map_err(|e| LabelSetError::Malformed(e.to_string()))?;
        if raw.unit != UNIT {
            return Err(LabelSetError::Unit(raw.unit));
        }
        Self::new(
            raw.name,
            raw.categories
                .into_iter()
                .map(|c| (c.label, c.min_m, c.max_m)),
        )
    }

    /// Canonical compact JSON followed by a newline.
    pub fn to_json(&self) -> String {
        let raw = RawLabelSet {
            name: self.name.clone(),
            unit: UNIT.to_string(),
            categories: self
                .categories
                .iter()
                .map(|c| RawCategory {
                    label: c.label.clone(),
                    min_m: c.range.min_m,
                    max_m: c.range.max_m,
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&raw).expect("label set serializes");
        s.push('\n');
        s
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn categories(&self) -> &[CategoryEntry] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.categories[index].label
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.label.as_str())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.label == label)
    }

    pub fn range_of(&self, label: &str) -> Option<SizeRange> {
        self.index_of(label).map(|i| self.categories[i].range)
    }

    /// Categories whose range covers `size_m`, in label-set order.
    pub fn filter_by_size(&self, size_m: f64) -> Result<FilteredSet, LabelSetError> {
        if !(size_m.is_finite() && size_m > 0.0) {
            return Err(LabelSetError::InvalidSize(size_m));
        }
        Ok(FilteredSet(
            self.categories
                .iter()
                .enumerate()
                .filter(|(_, c)| c.range.contains(size_m))
                .map(|(i, _)| i)
                .collect(),
        ))
    }

    /// Same categories, every range replaced by `f(label, range)`.
    pub fn map_ranges(
        &self,
        mut f: impl FnMut(&str, SizeRange) -> SizeRange,
    ) -> LabelSet {
        LabelSet {
            name: self.name.clone(),
            categories: self
                .categories
                .iter()
                .map(|c| CategoryEntry {
                    label: c.label.clone(),
                    range: f(&c.label, c.range),
                })
                .collect(),
        }
    }
}

/// The two reference label sets: six vehicles and their scale models, and
/// five street/indoor objects.
pub fn canonical_table_fixtures() -> (LabelSet, LabelSet) {
    let first = LabelSet::new(
        "rsize-1",
        [
            ("police_car", 4.0, 8.0),
            ("police_car_model", 0.1, 1.0),
            ("fire_truck", 5.0, 12.0),
            ("fire_truck_model", 0.2, 1.0),
            ("bullet_train", 30.0, 90.0),
            ("bullet_train_model", 0.3, 2.0),
        ],
    )
    .expect("fixture is valid");
    let second = LabelSet::new(
        "rsize-2",
        [
            ("pedestrian", 1.0, 3.1),
            ("car", 5.0, 8.0),
            ("crosswalk", 10.0, 20.0),
            ("pillow", 0.2, 3.0),
            ("bed", 1.5, 3.5),
        ],
    )
    .expect("fixture is valid");
    (first, second)
}
