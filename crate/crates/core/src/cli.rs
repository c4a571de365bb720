//! The `sizenet` command line.
//!
//! Each pipeline stage is its own subcommand reading and writing the
//! crate's file formats, so any stage can be replaced by an external tool
//! (typically `score`, by a deep network exporting a score file). Outputs
//! are written through a temporary file and renamed into place.
//!
//! Exit status: 0 on success, 2 for usage or validation errors, 1 for
//! internal failures such as an unwritable output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{evaluate, Evaluation};
use crate::label_registry::LabelSet;
use crate::rsize_io::{
    parse_distance_from_name, read_features, read_manifest, scan_directory, write_manifest, Manifest, ScanMode,
};
use crate::scoring::{read_scores, train_centroids, write_scores, CentroidModel, ScoreTable, DEFAULT_TAU};
use crate::size_gate::{gate_batch, read_predictions, write_predictions};
use crate::synth::{generate_dataset, SynthConfig, SynthDataset};
use crate::text::fmt_f64;

#[derive(Debug, Parser)]
#[command(name = "sizenet", version, about = "Size-gated object recognition pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a JSON config.
    GenSynth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Build a manifest from a directory with one subdirectory per category.
    Scan {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        label_set: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training images: distance tokens are optional.
        #[arg(long)]
        train: bool,
        #[arg(long)]
        force: bool,
    },
    /// Fit a nearest-centroid model on training features.
    Train {
        #[arg(long)]
        label_set: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        force: bool,
    },
    /// Score feature vectors with a centroid model.
    Score {
        #[arg(long)]
        label_set: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the model's temperature.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        force: bool,
    },
    /// Apply the size gate to a score file.
    Gate {
        #[arg(long)]
        label_set: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Confusion matrices and the baseline/gated accuracy report.
    Eval {
        #[arg(long)]
        label_set: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        force: bool,
    },
    /// Run every stage end to end, from a synthetic config or an experiment file.
    Run {
        /// Synthetic dataset config.
        #[arg(long, conflicts_with = "experiment", required_unless_present = "experiment")]
        config: Option<PathBuf>,
        /// Experiment file naming an existing dataset and scorer.
        #[arg(long)]
        experiment: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        force: bool,
    },
    /// Print the distance encoded in an image file name.
    ParseName { filename: String },
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn load_label_set(path: &Path) -> Result<LabelSet> {
    Ok(LabelSet::from_json(&read_text(path)?)?)
}

fn load_manifest(path: &Path, ls: &LabelSet) -> Result<Manifest> {
    Ok(read_manifest(&read_text(path)?)?.bind(ls)?)
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let werr = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(werr)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(werr)?;
    tmp.write_all(contents.as_bytes()).map_err(werr)?;
    tmp.persist(path).map_err(|e| werr(e.error))?;
    Ok(())
}

fn check_file_target(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Usage(format!(
            "{} already exists (use --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

fn check_dir_target(dir: &Path, force: bool) -> Result<()> {
    if dir.is_file() {
        return Err(Error::Usage(format!("{} is a file, expected a directory", dir.display())));
    }
    let non_empty = fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if non_empty && !force {
        return Err(Error::Usage(format!(
            "output directory {} is not empty (use --force to overwrite)",
            dir.display()
        )));
    }
    Ok(())
}

/// Writes every `(relative path, contents)` pair under `dir`. Callers
/// compute all contents first so a failing stage leaves nothing behind.
fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    for (name, contents) in files {
        write_atomic(&dir.join(name), contents)?;
    }
    Ok(())
}

fn load_synth_config(path: &Path, seed: Option<u64>) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::from_json(&read_text(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn eval_files(ev: &Evaluation) -> Vec<(String, String)> {
    vec![
        ("confusion_baseline.csv".into(), ev.baseline_matrix.to_csv()),
        ("confusion_gated.csv".into(), ev.gated_matrix.to_csv()),
        ("report.csv".into(), ev.comparison.to_csv()),
        ("report.txt".into(), ev.comparison.to_table()),
    ]
}

fn print_report(out: &mut dyn Write, ev: &Evaluation, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => ev.comparison.to_csv(),
        Format::Table => ev.comparison.to_table(),
    };
    out.write_all(text.as_bytes()).map_err(|source| Error::Write {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

/// Scorer named in an experiment file.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    /// Precomputed score file.
    File(PathBuf),
    /// Saved centroid model.
    Centroid(PathBuf),
    /// Centroid model trained on the experiment's training split.
    TrainCentroid,
}

impl std::str::FromStr for ScorerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("file", p)) if !p.is_empty() => Ok(ScorerSpec::File(p.into())),
            Some(("centroid", p)) if !p.is_empty() => Ok(ScorerSpec::Centroid(p.into())),
            None if s == "centroid" => Ok(ScorerSpec::TrainCentroid),
            _ => Err(Error::Usage(format!(
                "scorer must be file:<path>, centroid:<model-path> or centroid, got {s:?}"
            ))),
        }
    }
}

/// Experiment file: an existing dataset plus a scorer. Relative paths are
/// resolved against the experiment file's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label_set: PathBuf,
    pub test_manifest: PathBuf,
    #[serde(default)]
    pub test_features: Option<PathBuf>,
    #[serde(default)]
    pub train_manifest: Option<PathBuf>,
    #[serde(default)]
    pub train_features: Option<PathBuf>,
    #[serde(default)]
    pub val_manifest: Option<PathBuf>,
    #[serde(default)]
    pub val_features: Option<PathBuf>,
    pub scorer: String,
    #[serde(default)]
    pub tau: Option<f64>,
}

struct PipelineOutput {
    files: Vec<(String, String)>,
    evaluation: Evaluation,
}

/// Gate and evaluate one scored split; file names get `prefix`.
fn gate_and_eval(
    ls: &LabelSet,
    manifest: &Manifest,
    scores: &ScoreTable,
    prefix: &str,
) -> Result<(Evaluation, Vec<(String, String)>)> {
    let preds = gate_batch(ls, manifest, scores)?;
    let ev = evaluate(manifest, &preds, ls)?;
    let mut files = vec![
        (format!("{prefix}scores.csv"), write_scores(scores)),
        (format!("{prefix}predictions.csv"), write_predictions(&preds)),
    ];
    files.extend(
        eval_files(&ev)
            .into_iter()
            .map(|(n, c)| (format!("{prefix}{n}"), c)),
    );
    Ok((ev, files))
}

fn run_synthetic(cfg: &SynthConfig, tau: f64) -> Result<PipelineOutput> {
    let data: SynthDataset = generate_dataset(cfg)?;
    let ls = &data.label_set;
    let model = train_centroids(ls, &data.train.features, &data.train.manifest, tau)?;
    let scores = model.score_table(ls, &data.test.features)?;
    let (evaluation, stage_files) = gate_and_eval(ls, &data.test.manifest, &scores, "")?;
    let mut files: Vec<(String, String)> = data
        .files()
        .into_iter()
        .map(|(n, c)| (format!("data/{n}"), c))
        .collect();
    files.push(("model.json".into(), model.to_json()));
    files.extend(stage_files);
    Ok(PipelineOutput { files, evaluation })
}

fn run_experiment(path: &Path, tau_override: Option<f64>) -> Result<PipelineOutput> {
    let exp: ExperimentConfig = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Usage(format!("malformed experiment file {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let at = |p: &Path| base.join(p);
    let need = |p: &Option<PathBuf>, what: &str| {
        p.as_ref()
            .map(|p| at(p))
            .ok_or_else(|| Error::Usage(format!("experiment needs {what} for this scorer")))
    };
    let ls = load_label_set(&at(&exp.label_set))?;
    let test = load_manifest(&at(&exp.test_manifest), &ls)?;
    let tau = tau_override.or(exp.tau);
    let scorer: ScorerSpec = exp.scorer.parse()?;
    let model = match &scorer {
        ScorerSpec::File(_) => None,
        ScorerSpec::Centroid(p) => {
            let m = CentroidModel::from_json(&read_text(&at(p))?)?;
            Some(match tau {
                Some(t) => m.with_tau(t)?,
                None => m,
            })
        }
        ScorerSpec::TrainCentroid => {
            let train = load_manifest(&need(&exp.train_manifest, "train_manifest")?, &ls)?;
            let feats = read_features(&read_text(&need(&exp.train_features, "train_features")?)?)?;
            Some(train_centroids(&ls, &feats, &train, tau.unwrap_or(DEFAULT_TAU))?)
        }
    };
    let score_split = |features: &Option<PathBuf>| -> Result<ScoreTable> {
        match (&scorer, &model) {
            (ScorerSpec::File(p), _) => Ok(read_scores(&read_text(&at(p))?, &ls)?),
            (_, Some(m)) => {
                let f = read_features(&read_text(&need(features, "features")?)?)?;
                Ok(m.score_table(&ls, &f)?)
            }
            _ => unreachable!("model exists for centroid scorers"),
        }
    };
    let mut files = Vec::new();
    if let Some(m) = &model {
        files.push(("model.json".to_string(), m.to_json()));
    }
    let scores = score_split(&exp.test_features)?;
    let (evaluation, stage) = gate_and_eval(&ls, &test, &scores, "")?;
    files.extend(stage);
    if let Some(vp) = &exp.val_manifest {
        let val = load_manifest(&at(vp), &ls)?;
        let val_scores = score_split(&exp.val_features)?;
        if val.rows.iter().all(|r| r.size_m.is_some()) {
            files.extend(gate_and_eval(&ls, &val, &val_scores, "val_")?.1);
        } else {
            // unannotated validation images: ungated accuracy only
            let preds: Vec<(String, String)> = val
                .rows
                .iter()
                .map(|r| {
                    let v = val_scores
                        .get(&r.image_id)
                        .ok_or_else(|| crate::size_gate::GateError::MissingScores(r.image_id.clone()))?;
                    Ok((r.image_id.clone(), ls.label(v.argmax()).to_string()))
                })
                .collect::<Result<_>>()?;
            let cm = crate::eval::confusion(&val, preds.iter().map(|(a, b)| (a.as_str(), b.as_str())), &ls)?;
            let report = crate::eval::accuracies(&cm, crate::eval::Variant::Baseline)?;
            files.push(("val_confusion_baseline.csv".into(), cm.to_csv()));
            files.push((
                "val_report.csv".into(),
                format!("Variant,Macro,Micro\nbaseline,{:.4},{:.4}\n", report.macro_accuracy, report.micro_accuracy),
            ));
        }
    }
    Ok(PipelineOutput { files, evaluation })
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenSynth {
            config,
            out: dir,
            seed,
            force,
        } => {
            let cfg = load_synth_config(&config, seed)?;
            let data = generate_dataset(&cfg)?;
            check_dir_target(&dir, force)?;
            let files: Vec<(String, String)> = data.files().into_iter().map(|(n, c)| (n.to_string(), c)).collect();
            write_all(&dir, &files)
        }
        Command::Scan {
            root,
            label_set,
            out: path,
            train,
            force,
        } => {
            let ls = load_label_set(&label_set)?;
            let mode = if train { ScanMode::Train } else { ScanMode::Test };
            let report = scan_directory(&root, &ls, mode)?;
            check_file_target(&path, force)?;
            write_atomic(&path, &write_manifest(&report.manifest))
        }
        Command::Train {
            label_set,
            manifest,
            features,
            out: path,
            tau,
            force,
        } => {
            let ls = load_label_set(&label_set)?;
            let m = load_manifest(&manifest, &ls)?;
            let f = read_features(&read_text(&features)?)?;
            let model = train_centroids(&ls, &f, &m, tau)?;
            check_file_target(&path, force)?;
            write_atomic(&path, &model.to_json())
        }
        Command::Score {
            label_set,
            model,
            features,
            out: path,
            tau,
            force,
        } => {
            let ls = load_label_set(&label_set)?;
            let mut m = CentroidModel::from_json(&read_text(&model)?)?;
            if let Some(t) = tau {
                m = m.with_tau(t)?;
            }
            let f = read_features(&read_text(&features)?)?;
            let table = m.score_table(&ls, &f)?;
            check_file_target(&path, force)?;
            write_atomic(&path, &write_scores(&table))
        }
        Command::Gate {
            label_set,
            manifest,
            scores,
            out: path,
            force,
        } => {
            let ls = load_label_set(&label_set)?;
            let m = load_manifest(&manifest, &ls)?;
            let s = read_scores(&read_text(&scores)?, &ls)?;
            let preds = gate_batch(&ls, &m, &s)?;
            check_file_target(&path, force)?;
            write_atomic(&path, &write_predictions(&preds))
        }
        Command::Eval {
            label_set,
            manifest,
            predictions,
            out: dir,
            format,
            force,
        } => {
            let ls = load_label_set(&label_set)?;
            let m = load_manifest(&manifest, &ls)?;
            let preds = read_predictions(&read_text(&predictions)?, &ls)?;
            let ev = evaluate(&m, &preds, &ls)?;
            check_dir_target(&dir, force)?;
            write_all(&dir, &eval_files(&ev))?;
            print_report(out, &ev, format)
        }
        Command::Run {
            config,
            experiment,
            out: dir,
            seed,
            tau,
            format,
            force,
        } => {
            let result = match (config, experiment) {
                (Some(c), _) => {
                    let cfg = load_synth_config(&c, seed)?;
                    run_synthetic(&cfg, tau.unwrap_or(DEFAULT_TAU))?
                }
                (None, Some(e)) => run_experiment(&e, tau)?,
                (None, None) => return Err(Error::Usage("run needs --config or --experiment".into())),
            };
            check_dir_target(&dir, force)?;
            write_all(&dir, &result.files)?;
            print_report(out, &result.evaluation, format)
        }
        Command::ParseName { filename } => {
            let d = parse_distance_from_name(&filename)?;
            writeln!(out, "{}", fmt_f64(d)).map_err(|source| Error::Write {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}
