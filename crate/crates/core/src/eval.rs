//! Confusion matrices and baseline-versus-gated accuracy reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::label_registry::LabelSet;
use crate::rsize_io::Manifest;
use crate::size_gate::GatedPrediction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty manifest")]
    EmptyManifest,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("prediction for unknown image {0:?}")]
    UnknownImage(String),
    #[error("duplicate prediction for image {0:?}")]
    DuplicatePrediction(String),
    #[error("no prediction for image {0:?}")]
    MissingPrediction(String),
    #[error("label {label:?} for image {id:?} is not in the label set")]
    UnknownLabel { id: String, label: String },
    #[error("reports cover different label sets")]
    LabelSetMismatch,
}

/// Which column of a prediction is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Gated,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Gated => "gated",
        }
    }

    pub fn pick(self, p: &GatedPrediction) -> &str {
        match self {
            Variant::Baseline => &p.baseline_top1,
            Variant::Gated => &p.predicted,
        }
    }
}

/// Counts indexed `[true][predicted]`, axes in label-set order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, true_label: &str, predicted: &str) -> Option<u64> {
        let i = self.labels.iter().position(|l| l == true_label)?;
        let j = self.labels.iter().position(|l| l == predicted)?;
        Some(self.counts[i][j])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Comma-separated matrix: header row of predicted labels, one row per
    /// true label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the confusion matrix for `(image_id, predicted_label)` pairs,
/// which must cover the manifest exactly.
pub fn confusion<'a, I>(manifest: &Manifest, predictions: I, ls: &LabelSet) -> Result<ConfusionMatrix, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut truth: HashMap<&str, (usize, bool)> = HashMap::with_capacity(manifest.len());
    for r in &manifest.rows {
        let i = ls.index_of(&r.true_label).ok_or_else(|| EvalError::UnknownLabel {
            id: r.image_id.clone(),
            label: r.true_label.clone(),
        })?;
        truth.insert(&r.image_id, (i, false));
    }
    let n = ls.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (id, predicted) in predictions {
        let (t, seen) = truth
            .get_mut(id)
            .ok_or_else(|| EvalError::UnknownImage(id.to_string()))?;
        if *seen {
            return Err(EvalError::DuplicatePrediction(id.to_string()));
        }
        *seen = true;
        let p = ls.index_of(predicted).ok_or_else(|| EvalError::UnknownLabel {
            id: id.to_string(),
            label: predicted.to_string(),
        })?;
        counts[*t][p] += 1;
    }
    if let Some(r) = manifest.rows.iter().find(|r| !truth[r.image_id.as_str()].1) {
        return Err(EvalError::MissingPrediction(r.image_id.clone()));
    }
    Ok(ConfusionMatrix {
        labels: ls.labels().map(str::to_string).collect(),
        counts,
    })
}

pub fn confusion_for(
    manifest: &Manifest,
    predictions: &[GatedPrediction],
    variant: Variant,
    ls: &LabelSet,
) -> Result<ConfusionMatrix, EvalError> {
    confusion(
        manifest,
        predictions.iter().map(|p| (p.image_id.as_str(), variant.pick(p))),
        ls,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub variant: Variant,
    /// `None` for classes without samples.
    pub per_class_accuracy: Vec<(String, Option<f64>)>,
    /// Mean over classes with at least one sample.
    pub macro_accuracy: f64,
    /// Trace over total.
    pub micro_accuracy: f64,
    pub fallback_rate: f64,
}

impl AccuracyReport {
    pub fn class(&self, label: &str) -> Option<f64> {
        self.per_class_accuracy
            .iter()
            .find(|(l, _)| l == label)
            .and_then(|(_, a)| *a)
    }
}

/// Accuracy figures for one matrix. `fallback_rate` is left at zero; see
/// [`evaluate`] for the gated variant.
pub fn accuracies(cm: &ConfusionMatrix, variant: Variant) -> Result<AccuracyReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class: Vec<(String, Option<f64>)> = cm
        .labels
        .iter()
        .zip(cm.row_sums())
        .enumerate()
        .map(|(i, (l, n))| (l.clone(), (n > 0).then(|| cm.counts[i][i] as f64 / n as f64)))
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|(_, a)| *a).collect();
    Ok(AccuracyReport {
        variant,
        macro_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        micro_accuracy: cm.trace() as f64 / total as f64,
        per_class_accuracy: per_class,
        fallback_rate: 0.0,
    })
}

/// Both variants evaluated over one predictions list.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub baseline_matrix: ConfusionMatrix,
    pub gated_matrix: ConfusionMatrix,
    pub comparison: Comparison,
}

pub fn evaluate(manifest: &Manifest, predictions: &[GatedPrediction], ls: &LabelSet) -> Result<Evaluation, EvalError> {
    if manifest.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let baseline_matrix = confusion_for(manifest, predictions, Variant::Baseline, ls)?;
    let gated_matrix = confusion_for(manifest, predictions, Variant::Gated, ls)?;
    let baseline = accuracies(&baseline_matrix, Variant::Baseline)?;
    let mut gated = accuracies(&gated_matrix, Variant::Gated)?;
    let fallbacks = predictions.iter().filter(|p| p.fallback_used).count();
    gated.fallback_rate = fallbacks as f64 / predictions.len() as f64;
    Ok(Evaluation {
        baseline_matrix,
        gated_matrix,
        comparison: compare_report(&baseline, &gated)?,
    })
}

/// Baseline and gated reports side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: AccuracyReport,
    pub gated: AccuracyReport,
}

pub fn compare_report(baseline: &AccuracyReport, gated: &AccuracyReport) -> Result<Comparison, EvalError> {
    let same = baseline.per_class_accuracy.len() == gated.per_class_accuracy.len()
        && baseline
            .per_class_accuracy
            .iter()
            .zip(&gated.per_class_accuracy)
            .all(|(a, b)| a.0 == b.0);
    if !same {
        return Err(EvalError::LabelSetMismatch);
    }
    Ok(Comparison {
        baseline: baseline.clone(),
        gated: gated.clone(),
    })
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn fmt_delta(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.4}"))
}

impl Comparison {
    pub fn delta_micro(&self) -> f64 {
        self.gated.micro_accuracy - self.baseline.micro_accuracy
    }

    pub fn delta_macro(&self) -> f64 {
        self.gated.macro_accuracy - self.baseline.macro_accuracy
    }

    /// Gated micro-accuracy fell below the baseline, which can only happen
    /// when some size annotation excludes the true label.
    pub fn regressed(&self) -> bool {
        self.delta_micro() < 0.0
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["Variant".to_string()];
        h.extend(self.baseline.per_class_accuracy.iter().map(|(l, _)| l.clone()));
        h.extend(["Macro", "Micro", "FallbackRate"].map(String::from));
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let row = |r: &AccuracyReport| {
            let mut v = vec![r.variant.as_str().to_string()];
            v.extend(r.per_class_accuracy.iter().map(|(_, a)| fmt_acc(*a)));
            v.push(fmt_acc(Some(r.macro_accuracy)));
            v.push(fmt_acc(Some(r.micro_accuracy)));
            v.push(fmt_acc(Some(r.fallback_rate)));
            v
        };
        let mut delta = vec![if self.regressed() { "delta(regressed)" } else { "delta" }.to_string()];
        delta.extend(
            self.baseline
                .per_class_accuracy
                .iter()
                .zip(&self.gated.per_class_accuracy)
                .map(|((_, b), (_, g))| fmt_delta(b.zip(*g).map(|(b, g)| g - b))),
        );
        delta.push(fmt_delta(Some(self.delta_macro())));
        delta.push(fmt_delta(Some(self.delta_micro())));
        delta.push(fmt_delta(Some(self.gated.fallback_rate - self.baseline.fallback_rate)));
        vec![row(&self.baseline), row(&self.gated), delta]
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in self.rows() {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned pipe table for terminals.
    pub fn to_table(&self) -> String {
        let header = self.header();
        let rows = self.rows();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::from("|");
            for (c, w) in cells.iter().zip(&widths) {
                let _ = write!(s, " {c:<w$} |");
            }
            s.push('\n');
            s
        };
        let mut out = line(&header);
        out.push('|');
        for w in &widths {
            out.push_str(&"-".repeat(w + 2));
            out.push('|');
        }
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
        }
        if self.regressed() {
            let _ = writeln!(
                out,
                "warning: gated micro-accuracy is below baseline ({:+.4}); some size annotations exclude their true label",
                self.delta_micro()
            );
        }
        out
    }
}
