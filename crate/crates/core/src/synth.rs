//! Synthetic datasets with controlled feature ambiguity and size structure.
//!
//! Two generators are provided:
//!
//! * [`generate_pairs`]: `G` groups, each an *object* and its *model*. Both
//!   members of a group draw features from the same Gaussian when the pair
//!   separation is zero, so only their (disjoint) size ranges tell them
//!   apart.
//! * [`generate_interference`]: `K` classes with pairwise-disjoint size
//!   ranges. Test features mix the target draw with a draw from another
//!   class, `(1 - alpha) * target + alpha * interferer`.
//!
//! # Random streams
//!
//! Every `(class, split, row)` triple owns an independent SplitMix64 stream
//! seeded with
//!
//! ```text
//! h = mix(seed); h = mix(h ^ class); h = mix(h ^ split); h = mix(h ^ row)
//! ```
//!
//! where `mix` is one SplitMix64 step from the given state, `class` is the
//! label-set index, `split` is 1 for train and 2 for test, and `row` is the
//! 0-based row within the class. Uniforms are `(next >> 11) * 2^-53`;
//! normals come in Box-Muller pairs from `u1 = 1 - uniform`, `u2 = uniform`.
//! Within a row the draws are: `dim` normals for the features, then (test
//! interference rows only) one uniform picking the interferer and `dim`
//! normals for it, then one uniform for the size.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_registry::{canonical_table_fixtures, LabelSet, LabelSetError};
use crate::rsize_io::{write_features, write_manifest, FeatureRecord, FeatureTable, Manifest, ManifestRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("malformed synthetic config: {0}")]
    Malformed(String),
    #[error("size ranges of {a:?} and {b:?} overlap")]
    Overlap { a: String, b: String },
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error(transparent)]
    LabelSet(#[from] LabelSetError),
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        self.spare = Some(r * (TAU * u2).sin());
        r * (TAU * u2).cos()
    }
}

fn mix(x: u64) -> u64 {
    SplitMix64::new(x).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train = 1,
    Test = 2,
}

/// The generator for one `(class, split, row)` triple.
pub fn row_stream(seed: u64, class: usize, split: Split, row: usize) -> SplitMix64 {
    let mut h = mix(seed);
    h = mix(h ^ class as u64);
    h = mix(h ^ split as u64);
    h = mix(h ^ row as u64);
    SplitMix64::new(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Pairs,
    Interference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub label: String,
    pub min_m: f64,
    pub max_m: f64,
}

fn default_kind() -> SynthKind {
    SynthKind::Pairs
}
fn default_groups() -> usize {
    3
}
fn default_classes() -> usize {
    5
}
fn default_n_train() -> usize {
    350
}
fn default_n_test() -> usize {
    100
}
fn default_dim() -> usize {
    16
}
fn default_group_separation() -> f64 {
    6.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.5
}

/// Generator parameters; the JSON config file maps onto it field by field
/// and every omitted field takes its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_kind")]
    pub kind: SynthKind,
    /// Object/model groups (pairs generator).
    #[serde(default = "default_groups")]
    pub groups: usize,
    /// Class count (interference generator).
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Distance of each group (or class) mean from the origin along its axis.
    #[serde(default = "default_group_separation")]
    pub group_separation: f64,
    /// Distance between the object and model means of a group.
    #[serde(default)]
    pub pair_separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Size ranges in label-set order; defaults depend on `kind`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<CategorySpec>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            groups: default_groups(),
            classes: default_classes(),
            n_train: default_n_train(),
            n_test: default_n_test(),
            dim: default_dim(),
            group_separation: default_group_separation(),
            pair_separation: 0.0,
            noise: default_noise(),
            alpha: default_alpha(),
            seed: 0,
            categories: None,
        }
    }
}

impl SynthConfig {
    pub fn pairs(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn interference(seed: u64) -> Self {
        Self {
            kind: SynthKind::Interference,
            seed,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Categories in label-set order, falling back to the defaults: the
    /// vehicle/model fixture (then generic pairs beyond three groups), or
    /// evenly spaced disjoint ranges for interference classes.
    pub fn resolved_categories(&self) -> Vec<CategorySpec> {
        if let Some(c) = &self.categories {
            return c.clone();
        }
        let spec = |label: String, min_m, max_m| CategorySpec { label, min_m, max_m };
        match self.kind {
            SynthKind::Pairs => {
                let (fixture, _) = canonical_table_fixtures();
                (0..self.groups)
                    .flat_map(|g| {
                        if g < 3 {
                            [2 * g, 2 * g + 1]
                                .map(|i| {
                                    let c = &fixture.categories()[i];
                                    spec(c.label.clone(), c.range.min_m(), c.range.max_m())
                                })
                                .to_vec()
                        } else {
                            vec![
                                spec(format!("object_{g}"), 4.0, 8.0),
                                spec(format!("model_{g}"), 0.1, 1.0),
                            ]
                        }
                    })
                    .collect()
            }
            SynthKind::Interference => (0..self.classes)
                .map(|k| spec(format!("class_{k}"), 1.0 + 3.0 * k as f64, 2.0 + 3.0 * k as f64))
                .collect(),
        }
    }

    /// Checks the parameters and builds the label set.
    pub fn validate(&self) -> Result<LabelSet, SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1");
        }
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return bad("noise must be positive");
        }
        if !(self.group_separation.is_finite() && self.group_separation >= 0.0) {
            return bad("group_separation must be non-negative");
        }
        if !(self.pair_separation.is_finite() && self.pair_separation >= 0.0) {
            return bad("pair_separation must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SynthError::Alpha(self.alpha));
        }
        let cats = self.resolved_categories();
        let ls = LabelSet::new(
            format!("synth-{}", self.kind_name()),
            cats.iter().map(|c| (c.label.as_str(), c.min_m, c.max_m)),
        )?;
        let overlap = |a: usize, b: usize| {
            let (ca, cb) = (&ls.categories()[a], &ls.categories()[b]);
            if ca.range.overlaps(&cb.range) {
                Err(SynthError::Overlap {
                    a: ca.label.clone(),
                    b: cb.label.clone(),
                })
            } else {
                Ok(())
            }
        };
        match self.kind {
            SynthKind::Pairs => {
                if self.groups == 0 || self.groups > self.dim {
                    return bad("groups must be between 1 and dim");
                }
                if ls.len() != 2 * self.groups {
                    return bad("pairs config needs exactly 2 categories per group");
                }
                for g in 0..self.groups {
                    overlap(2 * g, 2 * g + 1)?;
                }
            }
            SynthKind::Interference => {
                if self.classes < 2 || self.classes > self.dim {
                    return bad("classes must be between 2 and dim");
                }
                if ls.len() != self.classes {
                    return bad("interference config needs one category per class");
                }
                for a in 0..ls.len() {
                    for b in a + 1..ls.len() {
                        overlap(a, b)?;
                    }
                }
            }
        }
        Ok(ls)
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            SynthKind::Pairs => "pairs",
            SynthKind::Interference => "interference",
        }
    }

    /// Feature mean of a class.
    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        match self.kind {
            SynthKind::Pairs => {
                mean[class / 2] += self.group_separation;
                let role = if class.is_multiple_of(2) { -0.5 } else { 0.5 };
                mean[self.dim - 1] += role * self.pair_separation;
            }
            SynthKind::Interference => mean[class] += self.group_separation,
        }
        mean
    }
}

/// One split: manifest plus features, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub manifest: Manifest,
    pub features: FeatureTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub label_set: LabelSet,
    pub train: SplitData,
    pub test: SplitData,
}

pub const DATASET_FILES: [&str; 6] = [
    "label_set.json",
    "train_manifest.csv",
    "train_features.csv",
    "test_manifest.csv",
    "test_features.csv",
    "provenance.json",
];

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    prng: &'static str,
    config: &'a SynthConfig,
}

impl SynthDataset {
    /// File name and contents for every output, in [`DATASET_FILES`] order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut resolved = self.config.clone();
        resolved.categories = Some(resolved.resolved_categories());
        let mut provenance = serde_json::to_string_pretty(&Provenance {
            generator: self.config.kind_name(),
            prng: "splitmix64 per (class, split, row) stream; box-muller normals",
            config: &resolved,
        })
        .expect("provenance serializes");
        provenance.push('\n');
        let contents = [
            self.label_set.to_json(),
            write_manifest(&self.train.manifest),
            write_features(&self.train.features),
            write_manifest(&self.test.manifest),
            write_features(&self.test.features),
            provenance,
        ];
        DATASET_FILES.into_iter().zip(contents).collect()
    }
}

fn draw_vec(rng: &mut SplitMix64, mean: &[f64], sigma: f64) -> Vec<f64> {
    mean.iter().map(|m| m + sigma * rng.normal()).collect()
}

fn split_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn build_split(
    cfg: &SynthConfig,
    ls: &LabelSet,
    split: Split,
    n: usize,
    mut draw: impl FnMut(usize, &mut SplitMix64) -> Vec<f64>,
) -> SplitData {
    let means: Vec<Vec<f64>> = (0..ls.len()).map(|c| cfg.class_mean(c)).collect();
    let mut rows = Vec::with_capacity(ls.len() * n);
    let mut records = Vec::with_capacity(ls.len() * n);
    for (class, cat) in ls.categories().iter().enumerate() {
        for row in 0..n {
            let mut rng = row_stream(cfg.seed, class, split, row);
            let features = match split {
                Split::Train => draw_vec(&mut rng, &means[class], cfg.noise),
                Split::Test => draw(class, &mut rng),
            };
            let size = cat.range.min_m() + rng.uniform() * cat.range.width();
            let image_id = format!("{}_{}_{:04}", split_prefix(split), cat.label, row);
            rows.push(ManifestRow {
                image_id: image_id.clone(),
                true_label: cat.label.clone(),
                size_m: Some(size),
            });
            records.push(FeatureRecord { image_id, features });
        }
    }
    SplitData {
        manifest: Manifest::new(rows).expect("generated ids are unique").bind(ls).expect("labels come from the set"),
        features: FeatureTable::new(cfg.dim, records).expect("generated features are finite"),
    }
}

fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let ls = cfg.validate()?;
    let means: Vec<Vec<f64>> = (0..ls.len()).map(|c| cfg.class_mean(c)).collect();
    let train = build_split(cfg, &ls, Split::Train, cfg.n_train, |_, _| unreachable!());
    let test = match cfg.kind {
        SynthKind::Pairs => build_split(cfg, &ls, Split::Test, cfg.n_test, |class, rng| {
            draw_vec(rng, &means[class], cfg.noise)
        }),
        SynthKind::Interference => {
            let k = ls.len();
            build_split(cfg, &ls, Split::Test, cfg.n_test, |class, rng| {
                let target = draw_vec(rng, &means[class], cfg.noise);
                let pick = ((rng.uniform() * (k - 1) as f64) as usize).min(k - 2);
                let other = if pick >= class { pick + 1 } else { pick };
                let interferer = draw_vec(rng, &means[other], cfg.noise);
                target
                    .iter()
                    .zip(&interferer)
                    .map(|(t, i)| (1.0 - cfg.alpha) * t + cfg.alpha * i)
                    .collect()
            })
        }
    };
    Ok(SynthDataset {
        config: cfg.clone(),
        label_set: ls,
        train,
        test,
    })
}

/// Object/model pair dataset. `cfg.kind` must be [`SynthKind::Pairs`].
pub fn generate_pairs(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    if cfg.kind != SynthKind::Pairs {
        return Err(SynthError::Config("expected kind \"pairs\"".into()));
    }
    generate(cfg)
}

/// Interference dataset. `cfg.kind` must be [`SynthKind::Interference`].
pub fn generate_interference(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    if cfg.kind != SynthKind::Interference {
        return Err(SynthError::Config("expected kind \"interference\"".into()));
    }
    generate(cfg)
}

/// Dispatches on `cfg.kind`.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    generate(cfg)
}
