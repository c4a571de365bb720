//! Dataset ingestion: filename-encoded shooting distances, per-class
//! directory trees, manifests and feature tables.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::label_registry::{canonical_label, is_valid_label, LabelSet};
use crate::text::{fmt_f64, is_plain_field, lines, parse_decimal};

pub const MANIFEST_HEADER: &str = "image_id,true_label,size_m";

/// Extensions recognized as image files, compared case-insensitively.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NameError {
    #[error("empty file name")]
    Empty,
    #[error("{0:?}: no recognized image extension (.jpg, .jpeg, .png)")]
    NoExtension(String),
    #[error("{0:?}: no underscore before the distance token")]
    NoUnderscore(String),
    #[error("{0:?}: empty distance token")]
    EmptyToken(String),
    #[error("{name:?}: distance token {token:?} is not a decimal number")]
    NonNumeric { name: String, token: String },
    #[error("{name:?}: distance token {token:?} is not positive")]
    NonPositive { name: String, token: String },
}

impl NameError {
    /// True when the extension was recognized but no usable distance was
    /// found, the situation tolerated for unannotated training images.
    fn is_missing_distance(&self) -> bool {
        !matches!(self, NameError::Empty | NameError::NoExtension(_))
    }
}

fn image_stem(filename: &str) -> Option<&str> {
    let (stem, ext) = filename.rsplit_once('.')?;
    IMAGE_EXTENSIONS
        .iter()
        .any(|e| ext.eq_ignore_ascii_case(e))
        .then_some(stem)
}

/// Reads the shooting distance encoded between the last underscore and the
/// image extension, e.g. `police_car_042_6.5.jpg` gives `6.5`.
pub fn parse_distance_from_name(filename: &str) -> Result<f64, NameError> {
    if filename.is_empty() {
        return Err(NameError::Empty);
    }
    let stem = image_stem(filename).ok_or_else(|| NameError::NoExtension(filename.into()))?;
    let (_, token) = stem
        .rsplit_once('_')
        .ok_or_else(|| NameError::NoUnderscore(filename.into()))?;
    if token.is_empty() {
        return Err(NameError::EmptyToken(filename.into()));
    }
    let digits = token.bytes().filter(u8::is_ascii_digit).count();
    let dots = token.bytes().filter(|&b| b == b'.').count();
    if digits == 0 || dots > 1 || digits + dots != token.len() {
        return Err(NameError::NonNumeric {
            name: filename.into(),
            token: token.into(),
        });
    }
    let value: f64 = token.parse().map_err(|_| NameError::NonNumeric {
        name: filename.into(),
        token: token.into(),
    })?;
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(NameError::NonPositive {
            name: filename.into(),
            token: token.into(),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("manifest header must be {MANIFEST_HEADER:?}, found {0:?}")]
    Header(String),
    #[error("manifest line {line}: expected 3 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("manifest line {line}: invalid image id {id:?}")]
    InvalidId { line: usize, id: String },
    #[error("manifest line {line}: duplicate image id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("manifest line {line}: invalid label {label:?}")]
    InvalidLabel { line: usize, label: String },
    #[error("manifest line {line}: bad number {value:?}")]
    BadNumber { line: usize, value: String },
    #[error("manifest line {line}: size must be positive, got {value}")]
    NonPositiveSize { line: usize, value: f64 },
    #[error("image {id:?}: label {label:?} is not in label set {label_set:?}")]
    UnknownLabel {
        id: String,
        label: String,
        label_set: String,
    },
}

/// Ground truth for one image. `size_m` is absent for unannotated
/// (training) images.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub image_id: String,
    pub true_label: String,
    pub size_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Name of the label set the rows were checked against, if any.
    pub label_set_name: Option<String>,
}

impl Manifest {
    /// Builds a manifest, rejecting duplicate ids and invalid sizes.
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self, ManifestError> {
        let mut seen = HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            let line = i + 2;
            if !is_plain_field(&r.image_id) {
                return Err(ManifestError::InvalidId {
                    line,
                    id: r.image_id.clone(),
                });
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(ManifestError::DuplicateId {
                    line,
                    id: r.image_id.clone(),
                });
            }
            if !is_valid_label(&r.true_label) {
                return Err(ManifestError::InvalidLabel {
                    line,
                    label: r.true_label.clone(),
                });
            }
            if let Some(s) = r.size_m {
                if !(s.is_finite() && s > 0.0) {
                    return Err(ManifestError::NonPositiveSize { line, value: s });
                }
            }
        }
        Ok(Self {
            rows,
            label_set_name: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks every true label against `ls` and records its name.
    pub fn bind(mut self, ls: &LabelSet) -> Result<Self, ManifestError> {
        if let Some(r) = self.rows.iter().find(|r| ls.index_of(&r.true_label).is_none()) {
            return Err(ManifestError::UnknownLabel {
                id: r.image_id.clone(),
                label: r.true_label.clone(),
                label_set: ls.name().to_string(),
            });
        }
        self.label_set_name = Some(ls.name().to_string());
        Ok(self)
    }

    /// Per-label row counts in label-set order.
    pub fn class_counts(&self, ls: &LabelSet) -> Vec<usize> {
        let mut counts = vec![0; ls.len()];
        for r in &self.rows {
            if let Some(i) = ls.index_of(&r.true_label) {
                counts[i] += 1;
            }
        }
        counts
    }
}

pub fn read_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let mut it = lines(text);
    match it.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        Some((_, h)) => return Err(ManifestError::Header(h.to_string())),
        None => return Err(ManifestError::Header(String::new())),
    }
    let mut rows = Vec::new();
    for (line, l) in it {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 3 {
            return Err(ManifestError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        let label = canonical_label(fields[1]);
        if !is_valid_label(&label) {
            return Err(ManifestError::InvalidLabel { line, label });
        }
        let size_m = if fields[2].is_empty() {
            None
        } else {
            let v = parse_decimal(fields[2]).ok_or_else(|| ManifestError::BadNumber {
                line,
                value: fields[2].to_string(),
            })?;
            if v <= 0.0 {
                return Err(ManifestError::NonPositiveSize { line, value: v });
            }
            Some(v)
        };
        rows.push(ManifestRow {
            image_id: fields[0].to_string(),
            true_label: label,
            size_m,
        });
    }
    Manifest::new(rows)
}

pub fn write_manifest(m: &Manifest) -> String {
    let mut out = String::with_capacity(32 * (m.rows.len() + 1));
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in &m.rows {
        out.push_str(&r.image_id);
        out.push(',');
        out.push_str(&r.true_label);
        out.push(',');
        if let Some(s) = r.size_m {
            out.push_str(&fmt_f64(s));
        }
        out.push('\n');
    }
    out
}

/// Whether distance tokens are mandatory (test images) or optional
/// (training images, which carry no size annotation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Test,
    Train,
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("cannot read directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("directory {path} does not name a category of label set {label_set:?}")]
    UnknownDirectory { path: PathBuf, label_set: String },
    #[error("{path}: {source}")]
    FileName {
        path: PathBuf,
        #[source]
        source: NameError,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: ManifestError,
    },
}

#[derive(Debug)]
pub struct ScanReport {
    pub manifest: Manifest,
    /// Non-fatal findings: empty class directories and ignored entries.
    pub warnings: Vec<String>,
}

fn read_dir_sorted(path: &Path) -> Result<Vec<fs::DirEntry>, ScanError> {
    let io = |source| ScanError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut entries = fs::read_dir(path)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Builds a manifest from a tree with one subdirectory per category.
///
/// Image files (by extension) become rows; their id is the file name
/// without extension. Other files are skipped with a warning. Any
/// subdirectory that is not a category of `ls` is an error, as is any
/// image whose name does not encode a distance in [`ScanMode::Test`].
pub fn scan_directory(root: &Path, ls: &LabelSet, mode: ScanMode) -> Result<ScanReport, ScanError> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for class_dir in read_dir_sorted(root)? {
        let path = class_dir.path();
        if !path.is_dir() {
            warnings.push(format!("ignoring non-directory {}", path.display()));
            continue;
        }
        let name = class_dir.file_name().to_string_lossy().into_owned();
        if ls.index_of(&name).is_none() {
            return Err(ScanError::UnknownDirectory {
                path,
                label_set: ls.name().to_string(),
            });
        }
        let mut count = 0usize;
        for file in read_dir_sorted(&path)? {
            let fpath = file.path();
            let fname = file.file_name().to_string_lossy().into_owned();
            let Some(stem) = image_stem(&fname).filter(|_| fpath.is_file()) else {
                warnings.push(format!("skipping non-image {}", fpath.display()));
                continue;
            };
            let size_m = match (parse_distance_from_name(&fname), mode) {
                (Ok(v), _) => Some(v),
                (Err(e), ScanMode::Train) if e.is_missing_distance() => None,
                (Err(source), _) => return Err(ScanError::FileName { path: fpath, source }),
            };
            rows.push(ManifestRow {
                image_id: stem.to_string(),
                true_label: name.clone(),
                size_m,
            });
            count += 1;
        }
        if count == 0 {
            let w = format!("class directory {} contains no images", path.display());
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    rows.sort_by(|a, b| {
        (a.true_label.as_str(), a.image_id.as_str()).cmp(&(b.true_label.as_str(), b.image_id.as_str()))
    });
    let manifest = Manifest::new(rows)
        .map_err(|source| ScanError::Manifest {
            path: root.to_path_buf(),
            source,
        })?
        .bind(ls)
        .map_err(|source| ScanError::Manifest {
            path: root.to_path_buf(),
            source,
        })?;
    Ok(ScanReport { manifest, warnings })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature header must be image_id,f0,...,f{{d-1}} with d >= 1, found {0:?}")]
    Header(String),
    #[error("feature row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("feature row {row}, column {column}: {value:?} is not a finite decimal")]
    BadValue {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("feature row {row}: invalid or duplicate image id {id:?}")]
    Id { row: usize, id: String },
    #[error("feature vector for {id:?} has dimension {found}, expected {expected}")]
    Dimension {
        id: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub image_id: String,
    pub features: Vec<f64>,
}

/// Feature vectors sharing one dimension, keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    records: Vec<FeatureRecord>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(dim: usize, records: Vec<FeatureRecord>) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::Header("dimension 0".into()));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != dim {
                return Err(FeatureError::Dimension {
                    id: r.image_id.clone(),
                    expected: dim,
                    found: r.features.len(),
                });
            }
            if let Some(column) = r.features.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::BadValue {
                    row: i + 1,
                    column: column + 1,
                    value: r.features[column].to_string(),
                });
            }
            if !is_plain_field(&r.image_id) || index.insert(r.image_id.clone(), i).is_some() {
                return Err(FeatureError::Id {
                    row: i + 1,
                    id: r.image_id.clone(),
                });
            }
        }
        Ok(Self {
            dim,
            records,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&[f64]> {
        self.index
            .get(image_id)
            .map(|&i| self.records[i].features.as_slice())
    }
}

fn feature_header(dim: usize) -> String {
    let mut h = String::from("image_id");
    for i in 0..dim {
        h.push_str(&format!(",f{i}"));
    }
    h
}

/// Parses a feature table. Rows are numbered from 1 after the header.
pub fn read_features(text: &str) -> Result<FeatureTable, FeatureError> {
    let mut it = lines(text);
    let header = it.next().map(|(_, h)| h).unwrap_or("");
    let dim = header.split(',').count().saturating_sub(1);
    if dim == 0 || header != feature_header(dim) {
        return Err(FeatureError::Header(header.to_string()));
    }
    let mut records = Vec::new();
    for (row, l) in it.map(|(line, l)| (line - 1, l)) {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(FeatureError::Ragged {
                row,
                expected: dim + 1,
                found: fields.len(),
            });
        }
        let features = fields[1..]
            .iter()
            .enumerate()
            .map(|(c, v)| {
                parse_decimal(v).ok_or_else(|| FeatureError::BadValue {
                    row,
                    column: c + 1,
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(FeatureRecord {
            image_id: fields[0].to_string(),
            features,
        });
    }
    FeatureTable::new(dim, records)
}

pub fn write_features(table: &FeatureTable) -> String {
    let mut out = feature_header(table.dim);
    out.push('\n');
    for r in &table.records {
        out.push_str(&r.image_id);
        for v in &r.features {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
