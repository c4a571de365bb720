//! Python bindings for the size-gated classifier.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sizenet::eval;
use sizenet::rsize_io::{self, FeatureRecord, FeatureTable, Manifest, ManifestRow};
use sizenet::scoring::{self, Scorer, ScoreTable, ScoreVector};
use sizenet::size_gate;
use sizenet::synth;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "LabelSet", module = "sizenet", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyLabelSet {
    inner: sizenet::LabelSet,
}

#[pymethods]
impl PyLabelSet {
    /// `categories` is a list of `(label, min_m, max_m)` tuples.
    #[new]
    fn new(name: &str, categories: Vec<(String, f64, f64)>) -> PyResult<Self> {
        let inner = sizenet::LabelSet::new(name, categories).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: sizenet::LabelSet::from_json(text).map_err(value_err)? })
    }

    /// The two built-in label sets, `rsize-1` and `rsize-2`.
    #[staticmethod]
    fn fixtures() -> (Self, Self) {
        let (a, b) = sizenet::label_registry::canonical_table_fixtures();
        (Self { inner: a }, Self { inner: b })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().map(str::to_string).collect()
    }

    #[getter]
    fn ranges(&self) -> Vec<(String, f64, f64)> {
        self.inner
            .categories()
            .iter()
            .map(|c| (c.label.clone(), c.range.min_m(), c.range.max_m()))
            .collect()
    }

    /// Labels whose closed range contains `size_m`, in label-set order.
    fn filter_by_size(&self, size_m: f64) -> PyResult<Vec<String>> {
        let f = self.inner.filter_by_size(size_m).map_err(value_err)?;
        Ok(f.labels(&self.inner).into_iter().map(str::to_string).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("LabelSet({:?}, {} categories)", self.inner.name(), self.inner.len())
    }
}

#[pyclass(name = "CentroidModel", module = "sizenet", frozen)]
struct PyCentroidModel {
    inner: scoring::CentroidModel,
}

#[pymethods]
impl PyCentroidModel {
    /// Fit one centroid per class from parallel lists of labels and vectors.
    #[staticmethod]
    #[pyo3(signature = (label_set, labels, features, tau = scoring::DEFAULT_TAU))]
    fn train(label_set: &PyLabelSet, labels: Vec<String>, features: Vec<Vec<f64>>, tau: f64) -> PyResult<Self> {
        if labels.len() != features.len() {
            return Err(PyValueError::new_err("labels and features differ in length"));
        }
        let dim = features.first().map_or(0, Vec::len);
        let ids: Vec<String> = (0..labels.len()).map(|i| format!("s{i:08}")).collect();
        let table = FeatureTable::new(
            dim,
            ids.iter()
                .zip(features)
                .map(|(id, f)| FeatureRecord { image_id: id.clone(), features: f })
                .collect(),
        )
        .map_err(value_err)?;
        let manifest = Manifest::new(
            ids.into_iter()
                .zip(labels)
                .map(|(image_id, true_label)| ManifestRow { image_id, true_label, size_m: None })
                .collect(),
        )
        .map_err(value_err)?;
        let inner = scoring::train_centroids(&label_set.inner, &table, &manifest, tau).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: scoring::CentroidModel::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau()
    }

    #[getter]
    fn centroids(&self) -> Vec<Vec<f64>> {
        self.inner.centroids().to_vec()
    }

    /// Class probabilities for one feature vector.
    fn score(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.score_checked("x", &x).map_err(value_err)?.probs)
    }
}

fn prediction_dict<'py>(py: Python<'py>, p: &size_gate::GatedPrediction) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("predicted", &p.predicted)?;
    d.set_item("baseline_top1", &p.baseline_top1)?;
    d.set_item("filtered_set", &p.filtered_set)?;
    d.set_item("fallback_used", p.fallback_used)?;
    d.set_item("selected_rank", p.selected_rank)?;
    Ok(d)
}

/// Gate one probability vector by the measured size.
#[pyfunction]
fn gate<'py>(py: Python<'py>, label_set: &PyLabelSet, size_m: f64, probs: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let v = ScoreVector { image_id: "x".into(), probs };
    let labels: Vec<String> = label_set.inner.labels().map(str::to_string).collect();
    v.validate(&labels).map_err(value_err)?;
    let p = size_gate::gate(&label_set.inner, size_m, &v).map_err(value_err)?;
    prediction_dict(py, &p)
}

fn report_dict<'py>(py: Python<'py>, r: &eval::AccuracyReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let per_class = PyDict::new(py);
    for (label, acc) in &r.per_class_accuracy {
        per_class.set_item(label, acc)?;
    }
    d.set_item("per_class", per_class)?;
    d.set_item("macro", r.macro_accuracy)?;
    d.set_item("micro", r.micro_accuracy)?;
    d.set_item("fallback_rate", r.fallback_rate)?;
    Ok(d)
}

/// Gate every row and compare baseline against gated accuracy.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    label_set: &PyLabelSet,
    true_labels: Vec<String>,
    sizes: Vec<f64>,
    probs: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let n = true_labels.len();
    if sizes.len() != n || probs.len() != n {
        return Err(PyValueError::new_err("true_labels, sizes and probs differ in length"));
    }
    let ls = &label_set.inner;
    let ids: Vec<String> = (0..n).map(|i| format!("r{i:08}")).collect();
    let manifest = Manifest::new(
        ids.iter()
            .zip(true_labels)
            .zip(&sizes)
            .map(|((id, l), s)| ManifestRow { image_id: id.clone(), true_label: l, size_m: Some(*s) })
            .collect(),
    )
    .and_then(|m| m.bind(ls))
    .map_err(value_err)?;
    let rows = ids.into_iter().zip(probs).map(|(image_id, probs)| ScoreVector { image_id, probs }).collect();
    let table = ScoreTable::new(ls, rows).map_err(value_err)?;
    let preds = size_gate::gate_batch(ls, &manifest, &table).map_err(value_err)?;
    let ev = eval::evaluate(&manifest, &preds, ls).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("baseline", report_dict(py, &ev.comparison.baseline)?)?;
    d.set_item("gated", report_dict(py, &ev.comparison.gated)?)?;
    d.set_item("delta_micro", ev.comparison.delta_micro())?;
    d.set_item("regressed", ev.comparison.regressed())?;
    d.set_item("report", ev.comparison.to_table())?;
    let list = preds.iter().map(|p| prediction_dict(py, p)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("predictions", list)?;
    Ok(d)
}

#[pyfunction]
fn parse_distance_from_name(filename: &str) -> PyResult<f64> {
    rsize_io::parse_distance_from_name(filename).map_err(value_err)
}

/// Generate a synthetic dataset from a JSON config; returns file name to contents.
#[pyfunction]
#[pyo3(signature = (config_json, seed = None))]
fn generate_synth<'py>(py: Python<'py>, config_json: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = synth::SynthConfig::from_json(config_json).map_err(value_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = synth::generate_dataset(&cfg).map_err(value_err)?;
    let d = PyDict::new(py);
    for (name, contents) in data.files() {
        d.set_item(name, contents)?;
    }
    Ok(d)
}

#[pymodule]
#[pyo3(name = "sizenet")]
fn sizenet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLabelSet>()?;
    m.add_class::<PyCentroidModel>()?;
    m.add_function(wrap_pyfunction!(gate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(parse_distance_from_name, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synth, m)?)?;
    Ok(())
}
