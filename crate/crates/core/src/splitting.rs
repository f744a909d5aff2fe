//! Train/validation/test assignment under four strategies, and the split file format.
//!
//! Every strategy is a pure function of `(log, fractions, seed)`. Assignments
//! partition the case-id set into train, val, test and dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{EventLog, Trace};
use crate::sampling::stream_rng;

/// Absorbs the representation error of products such as `0.8 * 10`.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("infeasible split: {0}")]
    Infeasible(String),
    #[error("split file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("split does not match log: {0}")]
    Mismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, SplitError> {
        let fractions = Self { train, val, test };
        fractions.validate()?;
        Ok(fractions)
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(SplitError::InvalidFractions(format!("{name} = {v} is not in (0, 1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::InvalidFractions(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    CaseRandom,
    TimeBased,
    Combined,
    StratifiedVariants,
}

impl SplitStrategy {
    pub const ALL: [SplitStrategy; 4] = [
        SplitStrategy::CaseRandom,
        SplitStrategy::TimeBased,
        SplitStrategy::Combined,
        SplitStrategy::StratifiedVariants,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitStrategy::CaseRandom => "case_random",
            SplitStrategy::TimeBased => "time_based",
            SplitStrategy::Combined => "combined",
            SplitStrategy::StratifiedVariants => "stratified_variants",
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Self::ALL.iter().map(|s| s.as_str()).collect();
                format!("unknown split strategy `{s}` (valid: {})", valid.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLabel {
    Train,
    Val,
    Test,
    Dropped,
}

impl SplitLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::Train => "train",
            SplitLabel::Val => "val",
            SplitLabel::Test => "test",
            SplitLabel::Dropped => "dropped",
        }
    }
}

impl fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitLabel::Train),
            "val" => Ok(SplitLabel::Val),
            "test" => Ok(SplitLabel::Test),
            "dropped" => Ok(SplitLabel::Dropped),
            other => Err(format!("unknown split label `{other}`")),
        }
    }
}

/// Event-index cut points of one trace under the time-based strategy.
///
/// Events `[0, val_start)` fall in the train window, `[val_start, test_start)` in the
/// validation window and `[test_start, len)` in the test window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeCuts {
    pub val_start: usize,
    pub test_start: usize,
    pub len: usize,
}

impl TimeCuts {
    /// Event index range of `label`'s window. `Dropped` has no window.
    pub fn window(&self, label: SplitLabel) -> std::ops::Range<usize> {
        match label {
            SplitLabel::Train => 0..self.val_start,
            SplitLabel::Val => self.val_start..self.test_start,
            SplitLabel::Test => self.test_start..self.len,
            SplitLabel::Dropped => 0..0,
        }
    }

    fn label_of_event(&self, index: usize) -> SplitLabel {
        if index < self.val_start {
            SplitLabel::Train
        } else if index < self.test_start {
            SplitLabel::Val
        } else {
            SplitLabel::Test
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub fractions: SplitFractions,
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub dropped: BTreeSet<String>,
    /// Per-case cut indices, populated for the time-based strategy only.
    pub cuts: BTreeMap<String, TimeCuts>,
}

impl SplitAssignment {
    fn empty(strategy: SplitStrategy, seed: u64, fractions: SplitFractions) -> Self {
        Self {
            strategy,
            seed,
            fractions,
            train: BTreeSet::new(),
            val: BTreeSet::new(),
            test: BTreeSet::new(),
            dropped: BTreeSet::new(),
            cuts: BTreeMap::new(),
        }
    }

    pub fn set(&self, label: SplitLabel) -> &BTreeSet<String> {
        match label {
            SplitLabel::Train => &self.train,
            SplitLabel::Val => &self.val,
            SplitLabel::Test => &self.test,
            SplitLabel::Dropped => &self.dropped,
        }
    }

    fn set_mut(&mut self, label: SplitLabel) -> &mut BTreeSet<String> {
        match label {
            SplitLabel::Train => &mut self.train,
            SplitLabel::Val => &mut self.val,
            SplitLabel::Test => &mut self.test,
            SplitLabel::Dropped => &mut self.dropped,
        }
    }

    pub fn label_of(&self, case_id: &str) -> Option<SplitLabel> {
        [SplitLabel::Train, SplitLabel::Val, SplitLabel::Test, SplitLabel::Dropped]
            .into_iter()
            .find(|l| self.set(*l).contains(case_id))
    }

    /// Case ids with at least one event in `label`'s window. For case-level strategies
    /// this is the label's set; for the time-based strategy it is every case whose
    /// trace has a non-empty segment in that window.
    pub fn cases_in(&self, label: SplitLabel) -> Vec<&str> {
        if self.strategy == SplitStrategy::TimeBased && label != SplitLabel::Dropped {
            self.cuts
                .iter()
                .filter(|(_, c)| !c.window(label).is_empty())
                .map(|(id, _)| id.as_str())
                .collect()
        } else {
            self.set(label).iter().map(String::as_str).collect()
        }
    }

    pub fn n_cases(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len() + self.dropped.len()
    }

    /// Checks that the assignment partitions exactly the case ids of `log`.
    pub fn check_against(&self, log: &EventLog) -> Result<(), SplitError> {
        let mut seen = BTreeSet::new();
        for label in [SplitLabel::Train, SplitLabel::Val, SplitLabel::Test, SplitLabel::Dropped] {
            for id in self.set(label) {
                if !seen.insert(id.as_str()) {
                    return Err(SplitError::Mismatch(format!("case `{id}` assigned twice")));
                }
                if log.trace(id).is_none() {
                    return Err(SplitError::Mismatch(format!("case `{id}` not in log")));
                }
            }
        }
        if let Some(missing) = log.case_ids().find(|id| !seen.contains(id)) {
            return Err(SplitError::Mismatch(format!("case `{missing}` has no assignment")));
        }
        if self.strategy == SplitStrategy::TimeBased {
            for trace in log.traces() {
                match self.cuts.get(&trace.case_id) {
                    Some(c) if c.len == trace.len() && c.val_start <= c.test_start && c.test_start <= c.len => {}
                    _ => {
                        return Err(SplitError::Mismatch(format!(
                            "case `{}` has missing or inconsistent cut indices",
                            trace.case_id
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

fn floor_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + FLOOR_EPS).floor() as usize
}

/// Target (train, val, test) sizes: val and test floored, remainder to train.
fn target_sizes(fractions: &SplitFractions, n: usize) -> (usize, usize, usize) {
    let val = floor_count(fractions.val, n);
    let test = floor_count(fractions.test, n);
    (n - val - test, val, test)
}

/// Seeded Fisher-Yates shuffle on the pinned split RNG stream.
fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = stream_rng(seed, 0);
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

fn require_cases(log: &EventLog, min: usize) -> Result<(), SplitError> {
    if log.len() < min {
        return Err(SplitError::Infeasible(format!(
            "need at least {min} cases, log has {}",
            log.len()
        )));
    }
    Ok(())
}

/// Random split by case id: shuffle the sorted ids, then cut into train | val | test.
pub fn split_by_case(log: &EventLog, fractions: SplitFractions, seed: u64) -> Result<SplitAssignment, SplitError> {
    fractions.validate()?;
    require_cases(log, 3)?;
    let mut ids: Vec<&str> = log.case_ids().collect();
    shuffle(&mut ids, seed);
    let (n_train, n_val, _) = target_sizes(&fractions, ids.len());
    let mut out = SplitAssignment::empty(SplitStrategy::CaseRandom, seed, fractions);
    for (i, id) in ids.into_iter().enumerate() {
        let label = if i < n_train {
            SplitLabel::Train
        } else if i < n_train + n_val {
            SplitLabel::Val
        } else {
            SplitLabel::Test
        };
        out.set_mut(label).insert(id.to_string());
    }
    Ok(out)
}

/// Chronological split on whole cases. Cases are ordered by end time; the boundaries
/// are the end timestamps of the last train case and the last validation case. A case
/// whose `[start, end]` interval crosses a boundary is dropped.
pub fn split_combined(log: &EventLog, fractions: SplitFractions) -> Result<SplitAssignment, SplitError> {
    fractions.validate()?;
    require_cases(log, 3)?;
    let mut by_end: Vec<&Trace> = log.traces().collect();
    by_end.sort_by(|a, b| a.end().cmp(&b.end()).then_with(|| a.case_id.cmp(&b.case_id)));
    let n = by_end.len();
    let (n_train, n_val, _) = target_sizes(&fractions, n);
    let boundary = |count: usize| by_end[count.clamp(1, n) - 1].end();
    let b1 = boundary(n_train);
    let b2 = boundary(n_train + n_val).max(b1);

    let mut out = SplitAssignment::empty(SplitStrategy::Combined, 0, fractions);
    for trace in &by_end {
        let label = classify_interval(trace.start(), trace.end(), b1, b2);
        out.set_mut(label).insert(trace.case_id.clone());
    }
    if out.dropped.len() == n {
        return Err(SplitError::Infeasible("every case straddles a window boundary".into()));
    }
    Ok(out)
}

/// Window of a closed interval for train `(-inf, b1]`, val `(b1, b2]`, test `(b2, inf)`;
/// `Dropped` if it crosses a boundary.
pub fn classify_interval(
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    b1: DateTime<Utc>,
    b2: DateTime<Utc>,
) -> SplitLabel {
    if end <= b1 {
        SplitLabel::Train
    } else if start > b1 && end <= b2 {
        SplitLabel::Val
    } else if start > b2 {
        SplitLabel::Test
    } else {
        SplitLabel::Dropped
    }
}

/// Chronological split on events. Two global cutoffs are placed at the train and
/// train+val quantiles of all event timestamps; each trace stores the event indices
/// where it crosses them. The case-level sets record the window of each case's first
/// event.
pub fn split_time_based(log: &EventLog, fractions: SplitFractions) -> Result<SplitAssignment, SplitError> {
    fractions.validate()?;
    if log.is_empty() {
        return Err(SplitError::Infeasible("empty log".into()));
    }
    let mut stamps: Vec<DateTime<Utc>> = log.traces().flat_map(|t| t.events.iter().map(|e| e.timestamp)).collect();
    stamps.sort();
    let n = stamps.len();
    if stamps[0] == stamps[n - 1] {
        return Err(SplitError::Infeasible("all events share one timestamp".into()));
    }
    let train_count = floor_count(fractions.train, n).max(1);
    let val_count = floor_count(fractions.train + fractions.val, n).max(train_count);
    let c1 = stamps[train_count - 1];
    let c2 = stamps[val_count.min(n) - 1];

    let mut out = SplitAssignment::empty(SplitStrategy::TimeBased, 0, fractions);
    for trace in log.traces() {
        let val_start = trace.events.partition_point(|e| e.timestamp <= c1);
        let test_start = trace.events.partition_point(|e| e.timestamp <= c2);
        let cuts = TimeCuts { val_start, test_start, len: trace.len() };
        out.set_mut(cuts.label_of_event(0)).insert(trace.case_id.clone());
        out.cuts.insert(trace.case_id.clone(), cuts);
    }
    Ok(out)
}

/// Variant-level split: all cases sharing an activity sequence land in the same split.
///
/// Variants (ordered by their smallest case id) are shuffled with the seed, stably sorted
/// by case count descending, then assigned greedily: each variant goes to the first
/// split (train, val, test) still below its target size, or to the split with the
/// largest deficit once all targets are met.
pub fn split_stratified_variants(
    log: &EventLog,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    fractions.validate()?;
    let mut variants: BTreeMap<Vec<&str>, Vec<&str>> = BTreeMap::new();
    for trace in log.traces() {
        variants.entry(trace.activities().collect()).or_default().push(&trace.case_id);
    }
    if variants.len() < 3 {
        return Err(SplitError::Infeasible(format!(
            "need at least 3 distinct variants, log has {}",
            variants.len()
        )));
    }
    let mut groups: Vec<Vec<&str>> = variants.into_values().collect();
    // case ids arrive sorted, so groups[i][0] is each variant's smallest id
    groups.sort_by(|a, b| a[0].cmp(b[0]));
    shuffle(&mut groups, seed);
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let (t_train, t_val, t_test) = target_sizes(&fractions, log.len());
    let mut deficits = [t_train as i64, t_val as i64, t_test as i64];
    let labels = [SplitLabel::Train, SplitLabel::Val, SplitLabel::Test];
    let mut out = SplitAssignment::empty(SplitStrategy::StratifiedVariants, seed, fractions);
    for group in groups {
        let best = deficits.iter().position(|d| *d > 0).unwrap_or_else(|| {
            (1..3).fold(0, |best, i| if deficits[i] > deficits[best] { i } else { best })
        });
        deficits[best] -= group.len() as i64;
        out.set_mut(labels[best]).extend(group.into_iter().map(str::to_string));
    }
    Ok(out)
}

/// Dispatches to the strategy's split function. `seed` is ignored by the
/// chronological strategies.
pub fn split(
    log: &EventLog,
    strategy: SplitStrategy,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    match strategy {
        SplitStrategy::CaseRandom => split_by_case(log, fractions, seed),
        SplitStrategy::TimeBased => split_time_based(log, fractions),
        SplitStrategy::Combined => split_combined(log, fractions),
        SplitStrategy::StratifiedVariants => split_stratified_variants(log, fractions, seed),
    }
}

#[derive(Serialize, Deserialize)]
struct SplitHeader {
    strategy: SplitStrategy,
    seed: u64,
    fractions: SplitFractions,
}

/// Writes the split file: one JSON header line, then CSV `case_id,split` rows sorted by
/// case id. Time-based splits carry two extra columns `val_start,test_start,len`.
pub fn persist_split<W: Write>(assignment: &SplitAssignment, mut sink: W) -> Result<(), SplitError> {
    let header = SplitHeader {
        strategy: assignment.strategy,
        seed: assignment.seed,
        fractions: assignment.fractions,
    };
    let header = serde_json::to_string(&header).map_err(|e| SplitError::Format { line: 1, message: e.to_string() })?;
    writeln!(sink, "{header}")?;
    let time_based = assignment.strategy == SplitStrategy::TimeBased;
    let mut rows: Vec<(&str, SplitLabel)> = [SplitLabel::Train, SplitLabel::Val, SplitLabel::Test, SplitLabel::Dropped]
        .into_iter()
        .flat_map(|l| assignment.set(l).iter().map(move |id| (id.as_str(), l)))
        .collect();
    rows.sort();
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    if time_based {
        writer.write_record(["case_id", "split", "val_start", "test_start", "len"])?;
    } else {
        writer.write_record(["case_id", "split"])?;
    }
    for (id, label) in rows {
        if time_based {
            let cuts = assignment.cuts.get(id).ok_or_else(|| SplitError::Format {
                line: 0,
                message: format!("case `{id}` lacks cut indices"),
            })?;
            writer.write_record([
                id,
                label.as_str(),
                &cuts.val_start.to_string(),
                &cuts.test_start.to_string(),
                &cuts.len.to_string(),
            ])?;
        } else {
            writer.write_record([id, label.as_str()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn load_split<R: BufRead>(mut source: R) -> Result<SplitAssignment, SplitError> {
    let mut header_line = String::new();
    source.read_line(&mut header_line)?;
    let header: SplitHeader = serde_json::from_str(header_line.trim()).map_err(|e| SplitError::Format {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    header.fractions.validate()?;
    let time_based = header.strategy == SplitStrategy::TimeBased;
    let mut out = SplitAssignment::empty(header.strategy, header.seed, header.fractions);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let expected: &[&str] = if time_based {
        &["case_id", "split", "val_start", "test_start", "len"]
    } else {
        &["case_id", "split"]
    };
    let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if columns != expected {
        return Err(SplitError::Format {
            line: 2,
            message: format!("expected columns {}, found {}", expected.join(","), columns.join(",")),
        });
    }
    for (i, record) in reader.records().enumerate() {
        let line = i + 3;
        let record = record?;
        let format_err = |message: String| SplitError::Format { line, message };
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(format_err("missing case id".into()));
        }
        let label: SplitLabel = record.get(1).unwrap_or("").parse().map_err(format_err)?;
        if out.label_of(&id).is_some() {
            return Err(format_err(format!("duplicate case id `{id}`")));
        }
        if time_based {
            let num = |col: usize| -> Result<usize, SplitError> {
                record
                    .get(col)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| format_err(format!("bad cut index in column {}", col + 1)))
            };
            let cuts = TimeCuts { val_start: num(2)?, test_start: num(3)?, len: num(4)? };
            if cuts.val_start > cuts.test_start || cuts.test_start > cuts.len {
                return Err(format_err("cut indices out of order".into()));
            }
            out.cuts.insert(id.clone(), cuts);
        }
        out.set_mut(label).insert(id);
    }
    if out.n_cases() == 0 {
        return Err(SplitError::Format { line: 2, message: "no cases".into() });
    }
    Ok(out)
}
