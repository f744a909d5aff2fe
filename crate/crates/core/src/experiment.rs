//! End-to-end runs: parse, split, fit on train, evaluate on test, write reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, OutputFormat, PredictorConfig};
use crate::eventlog::{read_log, EventLog};
use crate::harness::{evaluate_task_parallel, EvaluationConfig, Task};
use crate::metrics::MetricReport;
use crate::predictors::{ExternalPredictor, NGramModel, Predictor, PredictorError};
use crate::preprocessing::{FittedPreprocessor, PrefixSample};
use crate::splitting::{load_split, persist_split, split, SplitAssignment, SplitLabel};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Dataset,
    Split,
    Preprocessing,
    Predictor,
    Evaluation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Dataset => "dataset",
            Stage::Split => "split",
            Stage::Preprocessing => "preprocessing",
            Stage::Predictor => "predictor",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for ExperimentError {}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError { stage, message: e.to_string() }
}

/// Everything up to sample generation.
pub struct Prepared {
    pub log: EventLog,
    pub assignment: SplitAssignment,
    pub preprocessor: FittedPreprocessor,
}

impl Prepared {
    pub fn samples(&self, label: SplitLabel) -> Result<Vec<PrefixSample>, ExperimentError> {
        self.preprocessor
            .samples(&self.log, &self.assignment, label)
            .map_err(at(Stage::Preprocessing))
    }
}

/// Parses the dataset, computes or loads the split and fits preprocessing on train.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let d = &cfg.dataset;
    let log = read_log(&d.path, d.format, &d.columns, &d.timestamp_format)
        .map_err(|e| at(Stage::Dataset)(format!("{}: {e}", d.path.display())))?;
    let assignment = match &cfg.split.path {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| at(Stage::Split)(format!("{}: {e}", path.display())))?;
            let a = load_split(std::io::BufReader::new(file)).map_err(at(Stage::Split))?;
            a.check_against(&log).map_err(at(Stage::Split))?;
            a
        }
        None => split(&log, cfg.split.strategy, cfg.split.fractions, cfg.split.seed).map_err(at(Stage::Split))?,
    };
    let preprocessor = FittedPreprocessor::fit(&log, &assignment, &cfg.preprocessing).map_err(at(Stage::Preprocessing))?;
    Ok(Prepared { log, assignment, preprocessor })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub engine_version: String,
    pub config_sha256: String,
    pub dataset_sha256: String,
    pub split_sha256: String,
    pub master_seed: u64,
    pub split_strategy: String,
    pub split_seed: u64,
    pub sampler_seed: u64,
    pub n_train_cases: usize,
    pub n_val_cases: usize,
    pub n_test_cases: usize,
    pub n_dropped_cases: usize,
    pub vocab_size: usize,
    pub pad_size: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub reports: Vec<(Task, MetricReport)>,
    pub files: Vec<PathBuf>,
}

/// Tracks written files so a failed run leaves nothing behind.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self, ExperimentError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| at(Stage::Output)(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| at(Stage::Output)(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

type Factory = Box<dyn Fn() -> Result<Box<dyn Predictor>, PredictorError> + Sync>;

fn predictor_factory(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Factory, ExperimentError> {
    let pre = &prepared.preprocessor;
    match &cfg.predictor {
        PredictorConfig::NGram { n, alpha } => {
            let train = prepared.samples(SplitLabel::Train)?;
            let model = NGramModel::fit(&train, *n, *alpha, pre.vocab.len()).map_err(at(Stage::Predictor))?;
            let model = Arc::new(model);
            Ok(Box::new(move || Ok(Box::new(model.clone()) as Box<dyn Predictor>)))
        }
        PredictorConfig::External { command, timeout } => {
            let (command, timeout) = (command.clone(), *timeout);
            let (vocab, pad, n) = (pre.vocab.clone(), pre.pad, pre.n_gram);
            Ok(Box::new(move || {
                let p = ExternalPredictor::spawn(&command, &vocab, &pad, n, timeout)?;
                Ok(Box::new(p) as Box<dyn Predictor>)
            }))
        }
    }
}

fn report_json(manifest: &Manifest, reports: &[(Task, MetricReport)], emit_per_k: bool) -> Value {
    let mut tasks = Map::new();
    for (task, r) in reports {
        let mut entry = Map::new();
        if emit_per_k {
            entry.insert("per_k".into(), json!(r.per_k));
        }
        entry.insert("aggregate_unweighted".into(), json!(r.aggregate_unweighted));
        entry.insert("aggregate_weighted".into(), json!(r.aggregate_weighted));
        entry.insert("global".into(), json!(r.global));
        tasks.insert(task.as_str().into(), Value::Object(entry));
    }
    json!({ "manifest": manifest, "tasks": tasks })
}

/// Runs the configured experiment. `config_source` is hashed into the manifest;
/// `workers` overrides the configured worker count. Outputs are removed on failure.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    config_source: &[u8],
    workers: Option<usize>,
) -> Result<RunOutcome, ExperimentError> {
    let prepared = prepare(cfg)?;
    let mut outputs = Outputs::open(&cfg.output.dir)?;
    match run_prepared(cfg, config_source, workers, &prepared, &mut outputs) {
        Ok((manifest, reports)) => Ok(RunOutcome { manifest, reports, files: outputs.files }),
        Err(e) => {
            outputs.discard();
            Err(e)
        }
    }
}

fn run_prepared(
    cfg: &ExperimentConfig,
    config_source: &[u8],
    workers: Option<usize>,
    prepared: &Prepared,
    outputs: &mut Outputs,
) -> Result<(Manifest, Vec<(Task, MetricReport)>), ExperimentError> {
    let mut split_bytes = Vec::new();
    persist_split(&prepared.assignment, &mut split_bytes).map_err(at(Stage::Split))?;
    outputs.write("split.csv", &split_bytes)?;
    let dataset_bytes = fs::read(&cfg.dataset.path).map_err(at(Stage::Dataset))?;

    let pre = &prepared.preprocessor;
    let a = &prepared.assignment;
    let manifest = Manifest {
        engine_version: ENGINE_VERSION.into(),
        config_sha256: sha256_hex(config_source),
        dataset_sha256: sha256_hex(&dataset_bytes),
        split_sha256: sha256_hex(&split_bytes),
        master_seed: cfg.master_seed,
        split_strategy: a.strategy.as_str().into(),
        split_seed: a.seed,
        sampler_seed: cfg.generation.sampler.seed,
        n_train_cases: a.train.len(),
        n_val_cases: a.val.len(),
        n_test_cases: a.test.len(),
        n_dropped_cases: a.dropped.len(),
        vocab_size: pre.vocab.len(),
        pad_size: pre.pad.pad_size,
    };

    let test = prepared.samples(SplitLabel::Test)?;
    let factory = predictor_factory(cfg, prepared)?;
    let eval = EvaluationConfig { generation: cfg.generation.clone(), encoder: pre.encoder, metrics: cfg.metrics };
    let workers = workers.unwrap_or(cfg.workers);
    let mut reports = Vec::with_capacity(cfg.tasks.len());
    for &task in &cfg.tasks {
        log::info!("evaluating {task} on {} test samples", test.len());
        let report = evaluate_task_parallel(&factory, &test, task, &eval, workers)
            .map_err(|e| at(Stage::Evaluation)(format!("task {task}: {e}")))?;
        reports.push((task, report));
    }

    if cfg.output.formats.contains(&OutputFormat::Json) {
        let doc = report_json(&manifest, &reports, cfg.output.emit_per_k);
        let mut bytes = serde_json::to_vec_pretty(&doc).map_err(at(Stage::Output))?;
        bytes.push(b'\n');
        outputs.write("report.json", &bytes)?;
    }
    if cfg.output.formats.contains(&OutputFormat::Csv) {
        for (task, report) in &reports {
            let mut bytes = Vec::new();
            report.write_csv_rows(&mut bytes, cfg.output.emit_per_k).map_err(at(Stage::Output))?;
            outputs.write(&format!("{task}.csv"), &bytes)?;
        }
    }
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).map_err(at(Stage::Output))?;
    manifest_bytes.push(b'\n');
    outputs.write("manifest.json", &manifest_bytes)?;
    Ok((manifest, reports))
}
