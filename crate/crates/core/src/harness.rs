//! Suffix generation and task evaluation over test samples.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::MS_PER_DAY;
use crate::metrics::{build_report, Metric, MetricError, MetricReport, MetricSettings, Observation, ScoredSample};
use crate::preprocessing::{raw_time_features, FeatureEncoder, PrefixSample, TimeFeatures, TokenId, END, PAD};
use crate::predictors::{PredictionQuery, Predictor, PredictorError};
use crate::sampling::{self, stream_rng, SamplerConfig, SamplingError};
use crate::splitting::SplitLabel;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("sample {case_id}/k={k} comes from the {origin} split; only test samples may be evaluated")]
    Provenance { case_id: String, k: usize, origin: SplitLabel },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("task `{task}` needs {needs}, which the predictor does not declare")]
    Capability { task: Task, needs: &'static str },
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("generation failed for {case_id}/k={k} after {} steps: {source}", partial.activity_ids.len())]
    Generation {
        case_id: String,
        k: usize,
        partial: GeneratedSuffix,
        source: PredictorError,
    },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Iterative,
    /// `m` steps per forward pass.
    Msp(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub sampler: SamplerConfig,
    /// Upper bound on generated tokens, END included. `None` means the pad size.
    pub max_len: Option<usize>,
    pub clamp_negative_delta: bool,
    pub mode: GenerationMode,
    /// Keep END in sequences scored by the suffix metrics.
    pub include_end: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            max_len: None,
            clamp_negative_delta: true,
            mode: GenerationMode::Iterative,
            include_end: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self, pad_size: usize) -> Result<(), HarnessError> {
        self.sampler.validate()?;
        if let Some(max_len) = self.max_len {
            if max_len == 0 || max_len > pad_size {
                return Err(HarnessError::Config(format!("max_len = {max_len} outside 1..={pad_size}")));
            }
        }
        if self.mode == GenerationMode::Msp(0) {
            return Err(HarnessError::Config("msp block size must be >= 1".into()));
        }
        Ok(())
    }

    fn effective_max_len(&self, pad_size: usize) -> usize {
        self.max_len.unwrap_or(pad_size).min(pad_size)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSuffix {
    /// Generated ids, ending in END when `terminated`.
    pub activity_ids: Vec<TokenId>,
    pub delta_days: Vec<f64>,
    /// Absolute times in ms, accumulated from the prefix's last known timestamp.
    pub timestamps: Vec<i64>,
    pub terminated: bool,
}

impl GeneratedSuffix {
    /// Generated ids without END and PAD.
    pub fn activities(&self) -> Vec<TokenId> {
        self.activity_ids.iter().copied().filter(|&id| id != END && id != PAD).collect()
    }
}

/// Sum of the generated deltas (as stored, so after any clamping).
pub fn remaining_time_iterative(suffix: &GeneratedSuffix) -> f64 {
    suffix.delta_days.iter().sum()
}

/// Rolling state of one generation: the window, its features and the clock.
struct Generation<'a> {
    sample: &'a PrefixSample,
    encoder: &'a FeatureEncoder,
    clamp: bool,
    ids: Vec<TokenId>,
    features: Vec<TimeFeatures>,
    last_ms: i64,
    out: GeneratedSuffix,
}

impl<'a> Generation<'a> {
    fn new(sample: &'a PrefixSample, encoder: &'a FeatureEncoder, clamp: bool) -> Self {
        Self {
            sample,
            encoder,
            clamp,
            ids: sample.input_ids.clone(),
            features: sample.input_time_features.clone(),
            last_ms: sample.last_timestamp_ms,
            out: GeneratedSuffix::default(),
        }
    }

    fn window(&self) -> (&[TokenId], &[TimeFeatures]) {
        let n = self.sample.input_ids.len();
        let from = self.ids.len() - n;
        (&self.ids[from..], &self.features[from..])
    }

    fn query(&self) -> PredictionQuery<'_> {
        let (input_ids, time_features) = self.window();
        PredictionQuery {
            case_id: &self.sample.case_id,
            prefix_len: self.sample.k + self.out.activity_ids.len(),
            input_ids,
            time_features,
        }
    }

    fn push(&mut self, id: TokenId, delta: Option<f64>) {
        let mut delta = delta.unwrap_or(0.0);
        if self.clamp {
            delta = delta.max(0.0);
        }
        // the first event of a case has no predecessor, so it sits at the case start
        let first_event = self.sample.k == 1 && self.out.activity_ids.is_empty();
        let prev_ms = self.last_ms;
        let ts = if first_event { prev_ms } else { prev_ms + (delta * MS_PER_DAY).round() as i64 };
        let position = self.sample.k + self.out.activity_ids.len();
        let features = if id == END {
            [0.0; 5]
        } else {
            let prev = (!first_event).then_some(prev_ms);
            self.encoder.encode(raw_time_features(prev, self.sample.case_start_ms, ts, position))
        };
        self.ids.push(id);
        self.features.push(features);
        self.last_ms = ts;
        self.out.activity_ids.push(id);
        self.out.delta_days.push(delta);
        self.out.timestamps.push(ts);
        if id == END {
            self.out.terminated = true;
        }
    }

    fn fail(self, source: PredictorError) -> HarnessError {
        HarnessError::Generation {
            case_id: self.sample.case_id.clone(),
            k: self.sample.k,
            partial: self.out,
            source,
        }
    }
}

/// Autoregressive generation: one predicted step at a time until END or `max_len`.
pub fn generate_suffix<P: Predictor + ?Sized>(
    predictor: &mut P,
    sample: &PrefixSample,
    cfg: &GenerationConfig,
    encoder: &FeatureEncoder,
    rng: &mut impl RngCore,
) -> Result<GeneratedSuffix, HarnessError> {
    generate_blocks(predictor, sample, 1, cfg, encoder, rng)
}

/// Generation in blocks of `m` steps per predictor call. END inside a block
/// discards the rest of the block.
pub fn generate_msp<P: Predictor + ?Sized>(
    predictor: &mut P,
    sample: &PrefixSample,
    m: usize,
    cfg: &GenerationConfig,
    encoder: &FeatureEncoder,
    rng: &mut impl RngCore,
) -> Result<GeneratedSuffix, HarnessError> {
    let caps = predictor.capabilities();
    if m == 0 || m > caps.max_m {
        return Err(PredictorError::StepsOutOfRange { m, max: caps.max_m }.into());
    }
    generate_blocks(predictor, sample, m, cfg, encoder, rng)
}

fn generate_blocks<P: Predictor + ?Sized>(
    predictor: &mut P,
    sample: &PrefixSample,
    m: usize,
    cfg: &GenerationConfig,
    encoder: &FeatureEncoder,
    rng: &mut impl RngCore,
) -> Result<GeneratedSuffix, HarnessError> {
    let max_len = cfg.effective_max_len(sample.suffix_ids.len());
    let mut gen = Generation::new(sample, encoder, cfg.clamp_negative_delta);
    while !gen.out.terminated && gen.out.activity_ids.len() < max_len {
        let steps = m.min(max_len - gen.out.activity_ids.len());
        let dists = match predictor.predict(&gen.query(), steps) {
            Ok(d) if d.len() == steps => d,
            Ok(d) => {
                let e = PredictorError::Protocol(format!("expected {steps} distributions, got {}", d.len()));
                return Err(gen.fail(e));
            }
            Err(e) => return Err(gen.fail(e)),
        };
        for dist in &dists {
            let id = sampling::sample(dist, &cfg.sampler, rng)?;
            gen.push(id, dist.delta_days);
            if gen.out.terminated {
                break;
            }
        }
    }
    Ok(gen.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    NextActivity,
    NextTimestamp,
    Suffix,
    RemainingDirect,
    RemainingIterative,
}

impl Task {
    pub const ALL: [Task; 5] =
        [Task::NextActivity, Task::NextTimestamp, Task::Suffix, Task::RemainingDirect, Task::RemainingIterative];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::NextActivity => "next_activity",
            Task::NextTimestamp => "next_timestamp",
            Task::Suffix => "suffix",
            Task::RemainingDirect => "remaining_direct",
            Task::RemainingIterative => "remaining_iterative",
        }
    }

    pub fn metrics(self) -> &'static [Metric] {
        match self {
            Task::NextActivity => &Metric::CLASSIFICATION,
            Task::Suffix => &Metric::SEQUENCE,
            _ => &Metric::REGRESSION,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = Task::ALL.iter().map(|t| t.as_str()).collect();
            format!("unknown task `{s}` (valid: {})", valid.join(", "))
        })
    }
}

/// Everything besides the predictor and the samples that evaluation depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub generation: GenerationConfig,
    pub encoder: FeatureEncoder,
    pub metrics: MetricSettings,
}

fn check_capabilities<P: Predictor + ?Sized>(predictor: &P, task: Task, cfg: &GenerationConfig) -> Result<(), HarnessError> {
    let caps = predictor.capabilities();
    let needs = match task {
        Task::NextTimestamp | Task::RemainingIterative if !caps.supports_time_delta => Some("time-delta prediction"),
        Task::RemainingDirect if !caps.supports_remaining_time => Some("remaining-time prediction"),
        _ => None,
    };
    if let Some(needs) = needs {
        return Err(HarnessError::Capability { task, needs });
    }
    if let (Task::Suffix | Task::RemainingIterative, GenerationMode::Msp(m)) = (task, cfg.mode) {
        if m > caps.max_m {
            return Err(HarnessError::Capability { task, needs: "multi-step prediction of the configured block size" });
        }
    }
    Ok(())
}

fn check_samples(samples: &[PrefixSample]) -> Result<(), HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    if let Some(s) = samples.iter().find(|s| s.origin != SplitLabel::Test) {
        return Err(HarnessError::Provenance { case_id: s.case_id.clone(), k: s.k, origin: s.origin });
    }
    Ok(())
}

fn generate<P: Predictor + ?Sized>(
    predictor: &mut P,
    sample: &PrefixSample,
    cfg: &EvaluationConfig,
    rng: &mut impl RngCore,
) -> Result<GeneratedSuffix, HarnessError> {
    match cfg.generation.mode {
        GenerationMode::Iterative => generate_suffix(predictor, sample, &cfg.generation, &cfg.encoder, rng),
        GenerationMode::Msp(m) => generate_msp(predictor, sample, m, &cfg.generation, &cfg.encoder, rng),
    }
}

fn score_one<P: Predictor + ?Sized>(
    predictor: &mut P,
    sample: &PrefixSample,
    index: usize,
    task: Task,
    cfg: &EvaluationConfig,
) -> Result<ScoredSample, HarnessError> {
    let mut rng = stream_rng(cfg.generation.sampler.seed, index as u64);
    let query = PredictionQuery::from_sample(sample);
    let one = |predictor: &mut P| -> Result<_, HarnessError> {
        let mut d = predictor.predict(&query, 1)?;
        if d.len() != 1 {
            return Err(PredictorError::Protocol(format!("expected 1 distribution, got {}", d.len())).into());
        }
        Ok(d.remove(0))
    };
    let missing = |field: &str| PredictorError::Protocol(format!("prediction lacks `{field}`"));
    let observation = match task {
        Task::NextActivity => {
            let dist = one(predictor)?;
            Observation::Class { pred: sampling::sample(&dist, &cfg.generation.sampler, &mut rng)?, target: sample.next_activity_id }
        }
        Task::NextTimestamp => {
            let dist = one(predictor)?;
            let pred = dist.delta_days.ok_or_else(|| missing("delta_days"))?;
            Observation::Value { pred, target: sample.next_delta_days }
        }
        Task::RemainingDirect => {
            let dist = one(predictor)?;
            let pred = dist.remaining_days.ok_or_else(|| missing("remaining_days"))?;
            Observation::Value { pred, target: sample.remaining_time_days }
        }
        Task::Suffix => {
            let generated = generate(predictor, sample, cfg, &mut rng)?;
            let keep = |id: &TokenId| *id != PAD && (cfg.generation.include_end || *id != END);
            Observation::Sequence {
                pred: generated.activity_ids.iter().copied().filter(keep).collect(),
                target: sample.true_suffix().filter(keep).collect(),
            }
        }
        Task::RemainingIterative => {
            let generated = generate(predictor, sample, cfg, &mut rng)?;
            Observation::Value { pred: remaining_time_iterative(&generated), target: sample.remaining_time_days }
        }
    };
    Ok(ScoredSample { k: sample.k, observation })
}

fn score_range<P: Predictor + ?Sized>(
    predictor: &mut P,
    samples: &[PrefixSample],
    offset: usize,
    task: Task,
    cfg: &EvaluationConfig,
) -> Result<Vec<ScoredSample>, HarnessError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| score_one(predictor, s, offset + i, task, cfg))
        .collect()
}

fn prepare<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[PrefixSample],
    task: Task,
    cfg: &EvaluationConfig,
) -> Result<(), HarnessError> {
    check_samples(samples)?;
    cfg.generation.validate(samples[0].suffix_ids.len())?;
    check_capabilities(predictor, task, &cfg.generation)
}

/// Scores `samples` (test split only) on `task` and builds the per-k report.
/// Sample `i` draws from rng stream `i` of the sampler seed.
pub fn evaluate_task<P: Predictor + ?Sized>(
    predictor: &mut P,
    samples: &[PrefixSample],
    task: Task,
    cfg: &EvaluationConfig,
) -> Result<MetricReport, HarnessError> {
    prepare(predictor, samples, task, cfg)?;
    let scored = score_range(predictor, samples, 0, task, cfg)?;
    Ok(build_report(&scored, task.metrics(), &cfg.metrics)?)
}

/// Like [`evaluate_task`] with `workers` threads over contiguous chunks, each
/// with its own predictor from `factory`. The report does not depend on `workers`.
pub fn evaluate_task_parallel<F>(
    factory: F,
    samples: &[PrefixSample],
    task: Task,
    cfg: &EvaluationConfig,
    workers: usize,
) -> Result<MetricReport, HarnessError>
where
    F: Fn() -> Result<Box<dyn Predictor>, PredictorError> + Sync,
{
    let workers = workers.max(1);
    let mut first = factory()?;
    prepare(&first, samples, task, cfg)?;
    if workers == 1 || samples.len() < 2 {
        let scored = score_range(&mut first, samples, 0, task, cfg)?;
        return Ok(build_report(&scored, task.metrics(), &cfg.metrics)?);
    }
    let chunk = samples.len().div_ceil(workers);
    let results: Vec<Result<Vec<ScoredSample>, HarnessError>> = std::thread::scope(|scope| {
        let mut first = Some(first);
        let handles: Vec<_> = samples
            .chunks(chunk)
            .enumerate()
            .map(|(i, part)| {
                let predictor = first.take();
                let factory = &factory;
                scope.spawn(move || {
                    let mut predictor = match predictor {
                        Some(p) => p,
                        None => factory()?,
                    };
                    score_range(&mut predictor, part, i * chunk, task, cfg)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut scored = Vec::with_capacity(samples.len());
    for part in results {
        scored.extend(part?);
    }
    Ok(build_report(&scored, task.metrics(), &cfg.metrics)?)
}
