//! Size-gated object recognition.
//!
//! A feature scorer ranks every category by probability; a size gate keeps
//! only the categories whose real-size range (expressed as a shooting
//! distance in meters) covers the size annotated for the image, and the
//! highest-ranked surviving category is the prediction.
//!
//! The crate is organized as a pipeline:
//!
//! * [`label_registry`] holds size-annotated label sets and interval filtering.
//! * [`rsize_io`] ingests datasets: filename-encoded distances, manifests, feature tables.
//! * [`scoring`] produces class-probability vectors (score files or a nearest-centroid model).
//! * [`size_gate`] combines the size filter with the score ranking.
//! * [`eval`] builds confusion matrices and baseline-vs-gated accuracy reports.
//! * [`synth`] generates reproducible synthetic datasets.
//! * [`cli`] wires the stages together behind the `sizenet` binary.

pub mod cli;
pub mod error;
pub mod eval;
pub mod label_registry;
pub mod rsize_io;
pub mod scoring;
pub mod size_gate;
pub mod synth;

mod text;

pub use error::{Error, Result};
pub use eval::{AccuracyReport, Comparison, ConfusionMatrix, Variant};
pub use label_registry::{CategoryEntry, LabelSet, SizeRange};
pub use rsize_io::{FeatureRecord, FeatureTable, Manifest, ManifestRow, ScanMode};
pub use scoring::{CentroidModel, ScoreTable, ScoreVector, Scorer};
pub use size_gate::GatedPrediction;
pub use synth::SynthConfig;
