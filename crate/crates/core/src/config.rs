//! Experiment configuration, read from TOML.
//!
//! Every key is optional except `dataset.path` and one predictor table. Unknown
//! keys are rejected, and all problems found in a document are reported together.
//!
//! ```toml
//! master_seed = 42
//! workers = 1
//! tasks = ["next_activity", "next_timestamp", "suffix", "remaining_direct", "remaining_iterative"]
//!
//! [dataset]
//! path = "helpdesk.csv"          # relative to the config file
//! format = "csv"                 # csv | xes; inferred from the extension when absent
//! timestamp_format = "auto"      # or a strftime pattern
//! [dataset.columns]
//! case = "case_id"
//! activity = "activity"
//! timestamp = "timestamp"
//! resource = "resource"          # optional
//!
//! [split]
//! strategy = "case_random"       # case_random | time_based | combined | stratified_variants
//! fractions = [0.8, 0.1, 0.1]
//! seed = 42                      # defaults to master_seed
//! path = "split.csv"             # load a persisted split instead of computing one
//!
//! [preprocessing]
//! n_gram = 4
//! pad = "auto"                   # or a power of two
//! scale_all_time_features = false
//!
//! [predictor.ngram]              # or [predictor.external], exactly one
//! n = 4                          # defaults to preprocessing.n_gram
//! alpha = 1.0
//! # [predictor.external]
//! # command = ["python3", "adapter.py"]
//! # timeout_secs = 30
//!
//! [sampler]
//! strategy = "greedy"            # greedy | random | top_k | top_p
//! temperature = 1.0
//! k = 5
//! p = 0.9
//! seed = 42                      # defaults to master_seed
//!
//! [generation]
//! max_len = 16                   # defaults to the pad size
//! clamp_negative_delta = true
//! mode = "iterative"             # iterative | msp
//! m = 4                          # block size for msp
//! include_end = false
//!
//! [metrics]
//! balanced_fixed_k = 14          # divide balanced accuracy by a fixed class count
//! bleu_max_order = 4
//!
//! [output]
//! dir = "out"
//! formats = ["json", "csv"]
//! emit_per_k = true
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use toml::{Table, Value};

use crate::eventlog::{ColumnMapping, LogFormat, TimestampFormat};
use crate::harness::{GenerationConfig, GenerationMode, Task};
use crate::metrics::{BalancedMode, MetricSettings};
use crate::predictors::external::DEFAULT_TIMEOUT;
use crate::preprocessing::{PadPolicy, PadSetting, PreprocessConfig};
use crate::sampling::{SamplerConfig, SamplingStrategy};
use crate::splitting::{SplitFractions, SplitStrategy};

/// All problems found in one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: LogFormat,
    pub columns: ColumnMapping,
    pub timestamp_format: TimestampFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub strategy: SplitStrategy,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorConfig {
    NGram { n: usize, alpha: f64 },
    External { command: Vec<String>, timeout: Duration },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub emit_per_k: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub workers: usize,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub preprocessing: PreprocessConfig,
    pub predictor: PredictorConfig,
    pub generation: GenerationConfig,
    pub metrics: MetricSettings,
    pub tasks: Vec<Task>,
    pub output: OutputConfig,
}

/// Reads and validates a config file; relative paths resolve against its directory.
pub fn load_config_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        problems: vec![format!("cannot read {}: {e}", path.display())],
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_config(&text, base)
}

/// Parses a TOML document; relative paths resolve against `base`.
pub fn load_config(source: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = source.parse().map_err(|e: toml::de::Error| ConfigError {
        problems: vec![format!("not valid TOML: {}", e.message())],
    })?;
    let mut r = Reader { problems: Vec::new(), base };
    let cfg = r.experiment(&root);
    match cfg {
        Some(cfg) if r.problems.is_empty() => Ok(cfg),
        _ => Err(ConfigError { problems: r.problems }),
    }
}

struct Reader<'a> {
    problems: Vec<String>,
    base: &'a Path,
}

impl Reader<'_> {
    fn problem(&mut self, msg: impl Into<String>) {
        self.problems.push(msg.into());
    }

    fn check_keys(&mut self, table: &Table, prefix: &str, known: &[&str]) {
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                let full = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                self.problem(format!("unknown key `{full}` (known: {})", known.join(", ")));
            }
        }
    }

    fn table<'t>(&mut self, parent: &'t Table, key: &str, path: &str) -> Option<&'t Table> {
        match parent.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.problem(format!("`{path}` must be a table"));
                None
            }
        }
    }

    fn value<T>(&mut self, t: &Table, key: &str, path: &str, kind: &str, get: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let v = t.get(key)?;
        let out = get(v);
        if out.is_none() {
            self.problem(format!("`{path}` must be {kind}"));
        }
        out
    }

    fn string(&mut self, t: &Table, key: &str, path: &str) -> Option<String> {
        self.value(t, key, path, "a string", |v| v.as_str().map(str::to_string))
    }

    fn boolean(&mut self, t: &Table, key: &str, path: &str) -> Option<bool> {
        self.value(t, key, path, "a boolean", Value::as_bool)
    }

    fn float(&mut self, t: &Table, key: &str, path: &str) -> Option<f64> {
        self.value(t, key, path, "a number", |v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
    }

    fn uint(&mut self, t: &Table, key: &str, path: &str) -> Option<u64> {
        self.value(t, key, path, "a non-negative integer", |v| v.as_integer().and_then(|i| u64::try_from(i).ok()))
    }

    fn size(&mut self, t: &Table, key: &str, path: &str) -> Option<usize> {
        self.uint(t, key, path).map(|v| v as usize)
    }

    fn parsed<T: std::str::FromStr<Err: fmt::Display>>(&mut self, t: &Table, key: &str, path: &str) -> Option<T> {
        let s = self.string(t, key, path)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problem(format!("`{path}`: {e}"));
                None
            }
        }
    }

    fn strings(&mut self, t: &Table, key: &str, path: &str) -> Option<Vec<String>> {
        self.value(t, key, path, "an array of strings", |v| {
            v.as_array()?.iter().map(|x| x.as_str().map(str::to_string)).collect()
        })
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn experiment(&mut self, root: &Table) -> Option<ExperimentConfig> {
        self.check_keys(
            root,
            "",
            &[
                "master_seed", "workers", "tasks", "dataset", "split", "preprocessing", "predictor", "sampler",
                "generation", "metrics", "output",
            ],
        );
        let master_seed = self.uint(root, "master_seed", "master_seed").unwrap_or(0);
        let workers = self.size(root, "workers", "workers").unwrap_or(1);
        if workers == 0 {
            self.problem("`workers` must be >= 1");
        }
        let tasks = self.tasks(root);
        let empty = Table::new();

        let dataset = self.table(root, "dataset", "dataset");
        let dataset = match dataset {
            Some(t) => self.dataset(t),
            None => {
                self.problem("missing `[dataset]` table with `path`");
                None
            }
        };
        let split = self.table(root, "split", "split").unwrap_or(&empty);
        let split = self.split(split, master_seed);
        let preprocessing = self.table(root, "preprocessing", "preprocessing").unwrap_or(&empty);
        let preprocessing = self.preprocessing(preprocessing);
        let predictor = self.predictor(root.get("predictor"), preprocessing.n_gram);
        let sampler = self.table(root, "sampler", "sampler").unwrap_or(&empty);
        let sampler = self.sampler(sampler, master_seed);
        let generation = self.table(root, "generation", "generation").unwrap_or(&empty);
        let generation = self.generation(generation, sampler, &preprocessing);
        let metrics = self.table(root, "metrics", "metrics").unwrap_or(&empty);
        let metrics = self.metrics(metrics);
        let output = self.table(root, "output", "output").unwrap_or(&empty);
        let output = self.output(output);

        Some(ExperimentConfig {
            master_seed,
            workers,
            dataset: dataset?,
            split: split?,
            preprocessing,
            predictor: predictor?,
            generation,
            metrics,
            tasks,
            output,
        })
    }

    fn tasks(&mut self, root: &Table) -> Vec<Task> {
        let Some(names) = self.strings(root, "tasks", "tasks") else {
            return Task::ALL.to_vec();
        };
        if names.is_empty() {
            self.problem("`tasks` must not be empty");
        }
        let mut tasks = Vec::new();
        for name in names {
            match name.parse::<Task>() {
                Ok(t) if tasks.contains(&t) => self.problem(format!("`tasks`: `{t}` listed twice")),
                Ok(t) => tasks.push(t),
                Err(e) => self.problem(format!("`tasks`: {e}")),
            }
        }
        tasks
    }

    fn dataset(&mut self, t: &Table) -> Option<DatasetConfig> {
        self.check_keys(t, "dataset", &["path", "format", "columns", "timestamp_format"]);
        let path = self.string(t, "path", "dataset.path").map(|p| self.resolve(&p));
        if path.is_none() && !t.contains_key("path") {
            self.problem("missing `dataset.path`");
        }
        let format = self.parsed::<LogFormat>(t, "format", "dataset.format");
        let timestamp_format = self.parsed::<TimestampFormat>(t, "timestamp_format", "dataset.timestamp_format");
        let mut columns = ColumnMapping::default();
        if let Some(c) = self.table(t, "columns", "dataset.columns") {
            self.check_keys(c, "dataset.columns", &["case", "activity", "timestamp", "resource"]);
            if let Some(v) = self.string(c, "case", "dataset.columns.case") {
                columns.case = v;
            }
            if let Some(v) = self.string(c, "activity", "dataset.columns.activity") {
                columns.activity = v;
            }
            if let Some(v) = self.string(c, "timestamp", "dataset.columns.timestamp") {
                columns.timestamp = v;
            }
            columns.resource = self.string(c, "resource", "dataset.columns.resource");
        }
        let path = path?;
        Some(DatasetConfig {
            format: format.unwrap_or_else(|| LogFormat::from_path(&path)),
            path,
            columns,
            timestamp_format: timestamp_format.unwrap_or_default(),
        })
    }

    fn split(&mut self, t: &Table, master_seed: u64) -> Option<SplitConfig> {
        self.check_keys(t, "split", &["strategy", "fractions", "seed", "path"]);
        let strategy = self.parsed::<SplitStrategy>(t, "strategy", "split.strategy");
        let seed = self.uint(t, "seed", "split.seed").unwrap_or(master_seed);
        let path = self.string(t, "path", "split.path").map(|p| self.resolve(&p));
        let fractions = match t.get("fractions") {
            None => Some(SplitFractions::default()),
            Some(_) => {
                let values = self.value(t, "fractions", "split.fractions", "an array of three numbers", |v| {
                    let a = v.as_array()?;
                    let nums: Option<Vec<f64>> =
                        a.iter().map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64))).collect();
                    nums.filter(|n| n.len() == 3)
                });
                values.and_then(|v| match SplitFractions::new(v[0], v[1], v[2]) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        self.problem(format!("`split.fractions`: {e}"));
                        None
                    }
                })
            }
        };
        if strategy.is_none() && t.contains_key("strategy") {
            return None;
        }
        Some(SplitConfig { strategy: strategy.unwrap_or(SplitStrategy::CaseRandom), fractions: fractions?, seed, path })
    }

    fn preprocessing(&mut self, t: &Table) -> PreprocessConfig {
        self.check_keys(t, "preprocessing", &["n_gram", "pad", "scale_all_time_features"]);
        let mut cfg = PreprocessConfig::default();
        if let Some(n) = self.size(t, "n_gram", "preprocessing.n_gram") {
            if n == 0 {
                self.problem("`preprocessing.n_gram` must be >= 1");
            }
            cfg.n_gram = n.max(1);
        }
        match t.get("pad") {
            None => {}
            Some(Value::String(s)) if s == "auto" => {}
            Some(Value::Integer(p)) => match PadPolicy::fixed(*p as usize) {
                Ok(_) if *p > 0 => cfg.pad = PadSetting::Fixed(*p as usize),
                _ => self.problem(format!("`preprocessing.pad` = {p} is not a power of two >= 2")),
            },
            Some(_) => self.problem("`preprocessing.pad` must be \"auto\" or a power of two"),
        }
        if let Some(b) = self.boolean(t, "scale_all_time_features", "preprocessing.scale_all_time_features") {
            cfg.scale_all_time_features = b;
        }
        cfg
    }

    fn predictor(&mut self, value: Option<&Value>, n_gram: usize) -> Option<PredictorConfig> {
        let Some(value) = value else {
            self.problem("missing `[predictor]`: configure exactly one of `predictor.ngram` or `predictor.external`");
            return None;
        };
        let Some(t) = value.as_table() else {
            self.problem("`predictor` must be a table");
            return None;
        };
        self.check_keys(t, "predictor", &["ngram", "external"]);
        match (t.get("ngram"), t.get("external")) {
            (Some(_), Some(_)) => {
                self.problem("configure exactly one of `predictor.ngram` or `predictor.external`, not both");
                None
            }
            (None, None) => {
                self.problem("configure exactly one of `predictor.ngram` or `predictor.external`");
                None
            }
            (Some(_), None) => {
                let g = self.table(t, "ngram", "predictor.ngram")?;
                self.check_keys(g, "predictor.ngram", &["n", "alpha"]);
                let n = self.size(g, "n", "predictor.ngram.n").unwrap_or(n_gram);
                if n == 0 || n > n_gram {
                    self.problem(format!("`predictor.ngram.n` = {n} must lie in 1..={n_gram} (preprocessing.n_gram)"));
                }
                let alpha = self.float(g, "alpha", "predictor.ngram.alpha").unwrap_or(1.0);
                if !(alpha.is_finite() && alpha >= 0.0) {
                    self.problem("`predictor.ngram.alpha` must be finite and >= 0");
                }
                Some(PredictorConfig::NGram { n, alpha })
            }
            (None, Some(_)) => {
                let e = self.table(t, "external", "predictor.external")?;
                self.check_keys(e, "predictor.external", &["command", "timeout_secs"]);
                let command = match e.get("command") {
                    Some(Value::String(s)) => s.split_whitespace().map(str::to_string).collect(),
                    Some(_) => self.strings(e, "command", "predictor.external.command").unwrap_or_default(),
                    None => Vec::new(),
                };
                if command.is_empty() {
                    self.problem("`predictor.external.command` must name a program");
                }
                let timeout = match self.float(e, "timeout_secs", "predictor.external.timeout_secs") {
                    Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
                    Some(_) => {
                        self.problem("`predictor.external.timeout_secs` must be > 0");
                        DEFAULT_TIMEOUT
                    }
                    None => DEFAULT_TIMEOUT,
                };
                Some(PredictorConfig::External { command, timeout })
            }
        }
    }

    fn sampler(&mut self, t: &Table, master_seed: u64) -> SamplerConfig {
        self.check_keys(t, "sampler", &["strategy", "temperature", "k", "p", "seed"]);
        let cfg = SamplerConfig {
            strategy: self.parsed::<SamplingStrategy>(t, "strategy", "sampler.strategy").unwrap_or_default(),
            temperature: self.float(t, "temperature", "sampler.temperature").unwrap_or(1.0),
            k: self.size(t, "k", "sampler.k"),
            p: self.float(t, "p", "sampler.p"),
            seed: self.uint(t, "seed", "sampler.seed").unwrap_or(master_seed),
        };
        if let Err(e) = cfg.validate() {
            self.problem(format!("`sampler`: {e}"));
        }
        cfg
    }

    fn generation(&mut self, t: &Table, sampler: SamplerConfig, pre: &PreprocessConfig) -> GenerationConfig {
        self.check_keys(t, "generation", &["max_len", "clamp_negative_delta", "mode", "m", "include_end"]);
        let defaults = GenerationConfig::default();
        let max_len = self.size(t, "max_len", "generation.max_len");
        match (max_len, pre.pad) {
            (Some(0), _) => self.problem("`generation.max_len` must be >= 1"),
            (Some(l), PadSetting::Fixed(p)) if l > p => {
                self.problem(format!("`generation.max_len` = {l} exceeds the pad size {p}"))
            }
            _ => {}
        }
        let m = self.size(t, "m", "generation.m");
        let mode = match self.string(t, "mode", "generation.mode").as_deref() {
            None | Some("iterative") => {
                if m.is_some() {
                    self.problem("`generation.m` is only meaningful with mode = \"msp\"");
                }
                GenerationMode::Iterative
            }
            Some("msp") => match m {
                Some(m) if m >= 1 => GenerationMode::Msp(m),
                _ => {
                    self.problem("mode = \"msp\" needs `generation.m` >= 1");
                    GenerationMode::Msp(1)
                }
            },
            Some(other) => {
                self.problem(format!("`generation.mode`: unknown mode `{other}` (valid: iterative, msp)"));
                GenerationMode::Iterative
            }
        };
        GenerationConfig {
            sampler,
            max_len,
            clamp_negative_delta: self
                .boolean(t, "clamp_negative_delta", "generation.clamp_negative_delta")
                .unwrap_or(defaults.clamp_negative_delta),
            mode,
            include_end: self.boolean(t, "include_end", "generation.include_end").unwrap_or(defaults.include_end),
        }
    }

    fn metrics(&mut self, t: &Table) -> MetricSettings {
        self.check_keys(t, "metrics", &["balanced_fixed_k", "bleu_max_order"]);
        let mut cfg = MetricSettings::default();
        if let Some(k) = self.size(t, "balanced_fixed_k", "metrics.balanced_fixed_k") {
            if k == 0 {
                self.problem("`metrics.balanced_fixed_k` must be >= 1");
            }
            cfg.balanced_mode = BalancedMode::FixedK(k);
        }
        if let Some(n) = self.size(t, "bleu_max_order", "metrics.bleu_max_order") {
            if n == 0 {
                self.problem("`metrics.bleu_max_order` must be >= 1");
            }
            cfg.bleu_max_order = n;
        }
        cfg
    }

    fn output(&mut self, t: &Table) -> OutputConfig {
        self.check_keys(t, "output", &["dir", "formats", "emit_per_k"]);
        let dir = self.string(t, "dir", "output.dir").unwrap_or_else(|| "out".into());
        let mut formats = Vec::new();
        for f in self.strings(t, "formats", "output.formats").unwrap_or_else(|| vec!["json".into(), "csv".into()]) {
            let parsed = match f.as_str() {
                "json" => OutputFormat::Json,
                "csv" => OutputFormat::Csv,
                other => {
                    self.problem(format!("`output.formats`: unknown format `{other}` (valid: json, csv)"));
                    continue;
                }
            };
            if !formats.contains(&parsed) {
                formats.push(parsed);
            }
        }
        if formats.is_empty() && self.problems.iter().all(|p| !p.starts_with("`output.formats`")) {
            self.problem("`output.formats` must not be empty");
        }
        OutputConfig {
            dir: self.resolve(&dir),
            formats,
            emit_per_k: self.boolean(t, "emit_per_k", "output.emit_per_k").unwrap_or(true),
        }
    }
}
