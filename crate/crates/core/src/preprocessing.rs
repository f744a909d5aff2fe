//! Encoding of split logs into padded prefix/suffix samples.
//!
//! Everything fitted here (vocabulary, pad size, time scaler) reads the train split
//! only. Validation and test traces are encoded with the fitted artifacts; unseen
//! activities map to `UNK`.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{EventLog, Trace, MS_PER_DAY};
use crate::splitting::{SplitAssignment, SplitLabel, SplitStrategy};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const START: TokenId = 1;
pub const END: TokenId = 2;
pub const UNK: TokenId = 3;
/// First id assigned to an activity token.
pub const FIRST_ACTIVITY: TokenId = 4;

const RESERVED: [&str; 4] = ["<PAD>", "<START>", "<END>", "<UNK>"];

/// Number of per-position time features.
pub const N_TIME_FEATURES: usize = 5;
pub type TimeFeatures = [f64; N_TIME_FEATURES];

pub const TIME_FEATURE_NAMES: [&str; N_TIME_FEATURES] = [
    "delta_since_last_event_days",
    "time_since_case_start_days",
    "time_since_midnight_days",
    "time_since_sunday_midnight_days",
    "position_index",
];

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("no train traces to fit on")]
    EmptyTrain,
    #[error("train split has no events")]
    NoEvents,
    #[error("case `{case_id}`: augmented length {length} does not fit pad size {pad_size}")]
    PadOverflow { case_id: String, length: usize, pad_size: usize },
    #[error("pad size {0} is not a power of two >= 2")]
    InvalidPadSize(usize),
    #[error("n-gram size must be >= 1")]
    InvalidNGram,
    #[error("case `{0}` is empty")]
    EmptyTrace(String),
    #[error("case `{0}` is not in the log")]
    UnknownCase(String),
}

/// Bijective token/id map. Ids 0..4 are reserved; activities follow in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    activities: Vec<String>,
    ids: BTreeMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    activities: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        Self::from_activities(repr.activities.iter().map(String::as_str))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(vocab: Vocabulary) -> Self {
        Self { activities: vocab.activities }
    }
}

impl Vocabulary {
    pub fn from_activities<'a>(activities: impl IntoIterator<Item = &'a str>) -> Self {
        let unique: std::collections::BTreeSet<&str> = activities.into_iter().collect();
        let activities: Vec<String> = unique.into_iter().map(str::to_string).collect();
        let ids = activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), FIRST_ACTIVITY + i as TokenId))
            .collect();
        Self { activities, ids }
    }

    /// Vocabulary over the activities of `train` traces only.
    pub fn build<'a>(train: impl IntoIterator<Item = &'a Trace>) -> Self {
        Self::from_activities(train.into_iter().flat_map(|t| t.activities()))
    }

    /// Total number of ids including the reserved ones.
    pub fn len(&self) -> usize {
        RESERVED.len() + self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_activities(&self) -> usize {
        self.activities.len()
    }

    pub fn encode(&self, activity: &str) -> TokenId {
        self.ids.get(activity).copied().unwrap_or(UNK)
    }

    pub fn decode(&self, id: TokenId) -> Option<&str> {
        let i = id as usize;
        if i < RESERVED.len() {
            Some(RESERVED[i])
        } else {
            self.activities.get(i - RESERVED.len()).map(String::as_str)
        }
    }

    /// Token strings indexed by id.
    pub fn tokens(&self) -> Vec<&str> {
        RESERVED
            .iter()
            .copied()
            .chain(self.activities.iter().map(String::as_str))
            .collect()
    }

    pub fn is_special(id: TokenId) -> bool {
        id < FIRST_ACTIVITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadDerivation {
    PowerOfTwoTrainMax,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadPolicy {
    pub pad_size: usize,
    pub derivation: PadDerivation,
}

impl PadPolicy {
    pub fn fixed(pad_size: usize) -> Result<Self, PreprocessError> {
        if pad_size < 2 || !pad_size.is_power_of_two() {
            return Err(PreprocessError::InvalidPadSize(pad_size));
        }
        Ok(Self { pad_size, derivation: PadDerivation::Fixed })
    }

    /// Smallest power of two strictly greater than `augmented_len` (and at least 2).
    pub fn for_length(augmented_len: usize) -> Self {
        let pad_size = (augmented_len + 1).next_power_of_two().max(2);
        Self { pad_size, derivation: PadDerivation::PowerOfTwoTrainMax }
    }
}

/// `p = 2^s > l` where `l` is the longest train trace plus START and END.
pub fn compute_pad_size<'a>(train: impl IntoIterator<Item = &'a Trace>) -> Result<PadPolicy, PreprocessError> {
    let max_len = train.into_iter().map(Trace::len).max().ok_or(PreprocessError::EmptyTrain)?;
    Ok(PadPolicy::for_length(max_len + 2))
}

/// Means of the raw time features over train events, in days.
///
/// The delta mean runs over inter-event gaps (events with a predecessor, zero gaps
/// included); the other means run over all events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFeatureScaler {
    pub mean_delta_days: f64,
    pub mean_since_case_start_days: f64,
    pub mean_since_midnight_days: f64,
    pub mean_since_sunday_days: f64,
    pub mean_position: f64,
}

impl TimeFeatureScaler {
    pub fn identity() -> Self {
        Self {
            mean_delta_days: 1.0,
            mean_since_case_start_days: 1.0,
            mean_since_midnight_days: 1.0,
            mean_since_sunday_days: 1.0,
            mean_position: 1.0,
        }
    }
}

pub fn fit_time_scaler<'a>(train: impl IntoIterator<Item = &'a Trace>) -> Result<TimeFeatureScaler, PreprocessError> {
    let mut gaps = (0.0, 0usize);
    let mut sums = [0.0; N_TIME_FEATURES];
    let mut n_events = 0usize;
    for trace in train {
        for position in 0..trace.len() {
            let raw = raw_features_at(trace, position);
            if position > 0 {
                gaps.0 += raw[0];
                gaps.1 += 1;
            }
            for (s, v) in sums.iter_mut().zip(raw) {
                *s += v;
            }
            n_events += 1;
        }
    }
    if n_events == 0 {
        return Err(PreprocessError::NoEvents);
    }
    let mean = |s: f64| s / n_events as f64;
    let mean_delta_days = if gaps.1 > 0 { gaps.0 / gaps.1 as f64 } else { 0.0 };
    if mean_delta_days == 0.0 {
        log::warn!("mean inter-event gap is zero; delta features pass through unscaled");
    }
    Ok(TimeFeatureScaler {
        mean_delta_days,
        mean_since_case_start_days: mean(sums[1]),
        mean_since_midnight_days: mean(sums[2]),
        mean_since_sunday_days: mean(sums[3]),
        mean_position: mean(sums[4]),
    })
}

const SUNDAY_EPOCH_OFFSET_MS: i64 = 3 * 86_400_000; // 1970-01-04 was a Sunday
const MS_PER_DAY_I: i64 = 86_400_000;

/// Unscaled features of an event at `timestamp_ms`. `position` is the index in the
/// START-augmented sequence (first event = 1).
pub fn raw_time_features(prev_ms: Option<i64>, case_start_ms: i64, timestamp_ms: i64, position: usize) -> TimeFeatures {
    let delta = prev_ms.map_or(0.0, |p| (timestamp_ms - p) as f64 / MS_PER_DAY);
    let since_start = (timestamp_ms - case_start_ms) as f64 / MS_PER_DAY;
    let since_midnight = timestamp_ms.rem_euclid(MS_PER_DAY_I) as f64 / MS_PER_DAY;
    let since_sunday = (timestamp_ms - SUNDAY_EPOCH_OFFSET_MS).rem_euclid(7 * MS_PER_DAY_I) as f64 / MS_PER_DAY;
    [delta, since_start, since_midnight, since_sunday, position as f64]
}

fn raw_features_at(trace: &Trace, position: usize) -> TimeFeatures {
    let ts = trace.events[position].timestamp_ms();
    let prev = position.checked_sub(1).map(|p| trace.events[p].timestamp_ms());
    raw_time_features(prev, trace.events[0].timestamp_ms(), ts, position + 1)
}

/// Scales raw features with a fitted scaler. By default only the delta and
/// since-case-start features are scaled; `scale_all` also scales the calendar
/// features and the position index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub scaler: TimeFeatureScaler,
    pub scale_all: bool,
}

impl FeatureEncoder {
    pub fn new(scaler: TimeFeatureScaler, scale_all: bool) -> Self {
        Self { scaler, scale_all }
    }

    pub fn encode(&self, raw: TimeFeatures) -> TimeFeatures {
        let div = |v: f64, mean: f64| if mean > 0.0 { v / mean } else { v };
        let s = &self.scaler;
        let mut out = raw;
        out[0] = div(raw[0], s.mean_delta_days);
        out[1] = div(raw[1], s.mean_since_case_start_days);
        if self.scale_all {
            out[2] = div(raw[2], s.mean_since_midnight_days);
            out[3] = div(raw[3], s.mean_since_sunday_days);
            out[4] = div(raw[4], s.mean_position);
        }
        out
    }
}

/// Features of event `position` (0-based) of `trace`.
pub fn extract_time_features(trace: &Trace, position: usize, encoder: &FeatureEncoder) -> TimeFeatures {
    encoder.encode(raw_features_at(trace, position))
}

/// One prefix of a trace with its padded suffix targets.
///
/// `k` counts revealed tokens of the START/END-augmented trace, so `k = 1` reveals
/// only START and the last sample reveals every event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixSample {
    pub case_id: String,
    pub k: usize,
    pub origin: SplitLabel,
    pub input_ids: Vec<TokenId>,
    pub input_time_features: Vec<TimeFeatures>,
    pub suffix_ids: Vec<TokenId>,
    pub suffix_deltas_days: Vec<f64>,
    pub suffix_mask: Vec<bool>,
    pub next_activity_id: TokenId,
    pub next_delta_days: f64,
    pub remaining_time_days: f64,
    /// Timestamp of the last revealed event (the case's first event when `k = 1`).
    pub last_timestamp_ms: i64,
    pub case_start_ms: i64,
}

impl PrefixSample {
    /// Real (unpadded) suffix ids, END included.
    pub fn true_suffix(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.suffix_ids.iter().zip(&self.suffix_mask).filter(|(_, m)| **m).map(|(id, _)| *id)
    }

    /// Index of the last revealed token in the augmented sequence.
    pub fn last_position(&self) -> usize {
        self.k - 1
    }
}

/// Builds the samples of one trace. With `window`, only samples whose target event
/// index (END counts as the last event) lies in the window are produced.
pub fn make_samples(
    trace: &Trace,
    vocab: &Vocabulary,
    pad: &PadPolicy,
    n: usize,
    encoder: &FeatureEncoder,
    window: Option<Range<usize>>,
    origin: SplitLabel,
) -> Result<Vec<PrefixSample>, PreprocessError> {
    if n == 0 {
        return Err(PreprocessError::InvalidNGram);
    }
    if trace.is_empty() {
        return Err(PreprocessError::EmptyTrace(trace.case_id.clone()));
    }
    let len = trace.len();
    let augmented_len = len + 2;
    if augmented_len >= pad.pad_size {
        return Err(PreprocessError::PadOverflow {
            case_id: trace.case_id.clone(),
            length: augmented_len,
            pad_size: pad.pad_size,
        });
    }

    let mut ids = Vec::with_capacity(augmented_len);
    ids.push(START);
    ids.extend(trace.activities().map(|a| vocab.encode(a)));
    ids.push(END);

    // features and delta target per augmented index; START and END carry zeros
    let mut features = vec![[0.0; N_TIME_FEATURES]; augmented_len];
    let mut deltas = vec![0.0; augmented_len];
    for position in 0..len {
        let raw = raw_features_at(trace, position);
        deltas[position + 1] = raw[0];
        features[position + 1] = encoder.encode(raw);
    }
    let stamps: Vec<i64> = trace.events.iter().map(|e| e.timestamp_ms()).collect();
    let last_ms = stamps[len - 1];

    let mut samples = Vec::with_capacity(len + 1);
    for k in 1..augmented_len {
        let target_event = (k - 1).min(len - 1);
        if let Some(w) = &window {
            if !w.contains(&target_event) {
                continue;
            }
        }
        let from = k.saturating_sub(n);
        let mut input_ids = vec![PAD; n - (k - from)];
        let mut input_time_features = vec![[0.0; N_TIME_FEATURES]; n - (k - from)];
        input_ids.extend_from_slice(&ids[from..k]);
        input_time_features.extend_from_slice(&features[from..k]);

        let real = augmented_len - k;
        let mut suffix_ids = vec![PAD; pad.pad_size];
        let mut suffix_deltas_days = vec![0.0; pad.pad_size];
        let mut suffix_mask = vec![false; pad.pad_size];
        suffix_ids[..real].copy_from_slice(&ids[k..]);
        suffix_deltas_days[..real].copy_from_slice(&deltas[k..]);
        suffix_mask[..real].fill(true);

        let last_timestamp_ms = stamps[k.saturating_sub(2)];
        samples.push(PrefixSample {
            case_id: trace.case_id.clone(),
            k,
            origin,
            input_ids,
            input_time_features,
            next_activity_id: suffix_ids[0],
            next_delta_days: suffix_deltas_days[0],
            remaining_time_days: (last_ms - last_timestamp_ms) as f64 / MS_PER_DAY,
            suffix_ids,
            suffix_deltas_days,
            suffix_mask,
            last_timestamp_ms,
            case_start_ms: stamps[0],
        });
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadSetting {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub n_gram: usize,
    pub pad: PadSetting,
    pub scale_all_time_features: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { n_gram: 4, pad: PadSetting::Auto, scale_all_time_features: false }
    }
}

/// The train portion of each train case: whole traces for case-level strategies,
/// the train-window prefix segment for the time-based strategy.
pub fn train_traces(log: &EventLog, assignment: &SplitAssignment) -> Result<Vec<Trace>, PreprocessError> {
    let mut out = Vec::new();
    for id in assignment.cases_in(SplitLabel::Train) {
        let trace = log.trace(id).ok_or_else(|| PreprocessError::UnknownCase(id.to_string()))?;
        match assignment.cuts.get(id).filter(|_| assignment.strategy == SplitStrategy::TimeBased) {
            Some(cuts) => out.push(Trace {
                case_id: trace.case_id.clone(),
                events: trace.events[cuts.window(SplitLabel::Train)].to_vec(),
            }),
            None => out.push(trace.clone()),
        }
    }
    if out.is_empty() {
        return Err(PreprocessError::EmptyTrain);
    }
    Ok(out)
}

/// Artifacts fitted on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessor {
    pub vocab: Vocabulary,
    pub pad: PadPolicy,
    pub encoder: FeatureEncoder,
    pub n_gram: usize,
}

impl FittedPreprocessor {
    pub fn fit(log: &EventLog, assignment: &SplitAssignment, config: &PreprocessConfig) -> Result<Self, PreprocessError> {
        if config.n_gram == 0 {
            return Err(PreprocessError::InvalidNGram);
        }
        let train = train_traces(log, assignment)?;
        let vocab = Vocabulary::build(&train);
        let pad = match config.pad {
            PadSetting::Auto => compute_pad_size(&train)?,
            PadSetting::Fixed(p) => PadPolicy::fixed(p)?,
        };
        let scaler = fit_time_scaler(&train)?;
        Ok(Self {
            vocab,
            pad,
            encoder: FeatureEncoder::new(scaler, config.scale_all_time_features),
            n_gram: config.n_gram,
        })
    }

    /// Samples of every case in `label`'s split, ordered by `(case_id, k)`.
    pub fn samples(
        &self,
        log: &EventLog,
        assignment: &SplitAssignment,
        label: SplitLabel,
    ) -> Result<Vec<PrefixSample>, PreprocessError> {
        let time_based = assignment.strategy == SplitStrategy::TimeBased;
        let mut out = Vec::new();
        if time_based && label == SplitLabel::Train {
            // train targets must not reach past the train window
            for trace in train_traces(log, assignment)? {
                out.extend(make_samples(&trace, &self.vocab, &self.pad, self.n_gram, &self.encoder, None, label)?);
            }
            return Ok(out);
        }
        for id in assignment.cases_in(label) {
            let trace = log.trace(id).ok_or_else(|| PreprocessError::UnknownCase(id.to_string()))?;
            let window = if time_based {
                assignment.cuts.get(id).map(|c| c.window(label))
            } else {
                None
            };
            out.extend(make_samples(trace, &self.vocab, &self.pad, self.n_gram, &self.encoder, window, label)?);
        }
        Ok(out)
    }
}

/// Writes one JSON object per sample per line.
pub fn export_jsonl<W: Write>(samples: &[PrefixSample], mut sink: W) -> std::io::Result<()> {
    for sample in samples {
        serde_json::to_writer(&mut sink, sample)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}
