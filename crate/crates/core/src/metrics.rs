//! Classification, regression and sequence metrics, and per-prefix-length reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("fixed K = {k} is smaller than the {observed} observed classes")]
    InvalidK { k: usize, observed: usize },
    #[error("metric `{metric}` cannot be computed from {kind} observations")]
    Incompatible { metric: Metric, kind: &'static str },
}

fn check_lengths(preds: usize, targets: usize) -> Result<(), MetricError> {
    if preds != targets {
        return Err(MetricError::LengthMismatch(preds, targets));
    }
    if preds == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Fraction of exactly correct predictions.
pub fn accuracy<T: PartialEq>(preds: &[T], targets: &[T]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), targets.len())?;
    let correct = preds.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancedMode {
    /// Average recall over classes that occur in the targets.
    #[default]
    PresentClasses,
    /// Divide the recall sum by a fixed class count; absent classes contribute 0.
    FixedK(usize),
}

/// Mean per-class recall.
pub fn balanced_accuracy<T: Ord>(preds: &[T], targets: &[T], mode: BalancedMode) -> Result<f64, MetricError> {
    check_lengths(preds.len(), targets.len())?;
    let mut support: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for (p, t) in preds.iter().zip(targets) {
        let entry = support.entry(t).or_default();
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
        }
    }
    let recall_sum: f64 = support.values().map(|(tp, n)| *tp as f64 / *n as f64).sum();
    let classes = match mode {
        BalancedMode::PresentClasses => support.len(),
        BalancedMode::FixedK(k) => {
            if k < support.len() {
                return Err(MetricError::InvalidK { k, observed: support.len() });
            }
            k
        }
    };
    Ok(recall_sum / classes as f64)
}

/// Unweighted mean of per-class F1 over classes present in targets or predictions.
pub fn f1_macro<T: Ord>(preds: &[T], targets: &[T]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), targets.len())?;
    let classes: BTreeSet<&T> = preds.iter().chain(targets).collect();
    let mut total = 0.0;
    for class in &classes {
        let tp = preds.iter().zip(targets).filter(|(p, t)| p == class && t == class).count() as f64;
        let predicted = preds.iter().filter(|p| p == class).count() as f64;
        let actual = targets.iter().filter(|t| t == class).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / classes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionErrors {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub fn regression_errors(preds: &[f64], targets: &[f64]) -> Result<RegressionErrors, MetricError> {
    check_lengths(preds.len(), targets.len())?;
    let n = preds.len() as f64;
    let (abs, sq) = preds.iter().zip(targets).fold((0.0, 0.0), |(a, s), (p, t)| {
        let e = t - p;
        (a + e.abs(), s + e * e)
    });
    let mse = sq / n;
    Ok(RegressionErrors { mae: abs / n, mse, rmse: mse.sqrt() })
}

/// Unrestricted Damerau-Levenshtein distance with unit costs (Lowrance-Wagner).
///
/// Unlike the optimal-string-alignment variant, substrings may be edited after a
/// transposition, so the result is a true metric.
pub fn dl_distance<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let width = m + 2;
    let max_dist = n + m;
    let mut d = vec![0usize; (n + 2) * width];
    let at = |i: usize, j: usize| i * width + j;
    d[at(0, 0)] = max_dist;
    for i in 0..=n {
        d[at(i + 1, 0)] = max_dist;
        d[at(i + 1, 1)] = i;
    }
    for j in 0..=m {
        d[at(0, j + 1)] = max_dist;
        d[at(1, j + 1)] = j;
    }
    // last row in which each token of `a` occurred
    let mut last_row: HashMap<&T, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_match_col = 0;
        for j in 1..=m {
            let i1 = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let j1 = last_match_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            let substitution = d[at(i, j)] + cost;
            let insertion = d[at(i + 1, j)] + 1;
            let deletion = d[at(i, j + 1)] + 1;
            let transposition = d[at(i1, j1)] + (i - i1 - 1) + 1 + (j - j1 - 1);
            d[at(i + 1, j + 1)] = substitution.min(insertion).min(deletion).min(transposition);
        }
        last_row.insert(&a[i - 1], i);
    }
    d[at(n + 1, m + 1)]
}

/// `1 - d_DL / max(|a|, |b|)`; two empty sequences are identical (1.0).
pub fn dl_similarity<T: Eq + Hash>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - dl_distance(a, b) as f64 / longest as f64
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for gram in seq.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with clipped n-gram precision, uniform weights over
/// `min(max_order, |candidate|, |reference|)` orders and the standard brevity penalty.
/// Any zero precision yields 0 (no smoothing). Two empty sequences score 1.0; an empty
/// candidate or reference against a non-empty one scores 0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_order: usize) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let orders = max_order.min(candidate.len()).min(reference.len());
    if orders == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(gram, c)| (*c).min(refc.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len() - n + 1;
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln() / orders as f64;
    }
    let brevity = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    brevity * log_sum.exp()
}

/// Jaccard similarity of the token sets; two empty sets give 1.0.
pub fn jaccard<T: Eq + Hash>(a: &[T], b: &[T]) -> f64 {
    let sa: std::collections::HashSet<&T> = a.iter().collect();
    let sb: std::collections::HashSet<&T> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    BalancedAccuracy,
    F1Macro,
    Mae,
    Mse,
    Rmse,
    DlSimilarity,
    Bleu,
    Jaccard,
}

impl Metric {
    pub const CLASSIFICATION: [Metric; 3] = [Metric::Accuracy, Metric::BalancedAccuracy, Metric::F1Macro];
    pub const REGRESSION: [Metric; 3] = [Metric::Mae, Metric::Mse, Metric::Rmse];
    pub const SEQUENCE: [Metric; 3] = [Metric::DlSimilarity, Metric::Bleu, Metric::Jaccard];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::F1Macro => "f1_macro",
            Metric::Mae => "mae",
            Metric::Mse => "mse",
            Metric::Rmse => "rmse",
            Metric::DlSimilarity => "dl_similarity",
            Metric::Bleu => "bleu",
            Metric::Jaccard => "jaccard",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::CLASSIFICATION
            .into_iter()
            .chain(Self::REGRESSION)
            .chain(Self::SEQUENCE)
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Class { pred: u32, target: u32 },
    Value { pred: f64, target: f64 },
    Sequence { pred: Vec<u32>, target: Vec<u32> },
}

impl Observation {
    fn kind(&self) -> &'static str {
        match self {
            Observation::Class { .. } => "class",
            Observation::Value { .. } => "value",
            Observation::Sequence { .. } => "sequence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub k: usize,
    pub observation: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub balanced_mode: BalancedMode,
    pub bleu_max_order: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self { balanced_mode: BalancedMode::PresentClasses, bleu_max_order: 4 }
    }
}

fn compute(metric: Metric, samples: &[&ScoredSample], settings: &MetricSettings) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let incompatible = || MetricError::Incompatible { metric, kind: samples[0].observation.kind() };
    match metric {
        Metric::Accuracy | Metric::BalancedAccuracy | Metric::F1Macro => {
            let (preds, targets): (Vec<u32>, Vec<u32>) = samples
                .iter()
                .map(|s| match s.observation {
                    Observation::Class { pred, target } => Some((pred, target)),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(incompatible)?
                .into_iter()
                .unzip();
            match metric {
                Metric::Accuracy => accuracy(&preds, &targets),
                Metric::BalancedAccuracy => balanced_accuracy(&preds, &targets, settings.balanced_mode),
                _ => f1_macro(&preds, &targets),
            }
        }
        Metric::Mae | Metric::Mse | Metric::Rmse => {
            let (preds, targets): (Vec<f64>, Vec<f64>) = samples
                .iter()
                .map(|s| match s.observation {
                    Observation::Value { pred, target } => Some((pred, target)),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(incompatible)?
                .into_iter()
                .unzip();
            let e = regression_errors(&preds, &targets)?;
            Ok(match metric {
                Metric::Mae => e.mae,
                Metric::Mse => e.mse,
                _ => e.rmse,
            })
        }
        Metric::DlSimilarity | Metric::Bleu | Metric::Jaccard => {
            let mut total = 0.0;
            for s in samples {
                let Observation::Sequence { pred, target } = &s.observation else {
                    return Err(incompatible());
                };
                total += match metric {
                    Metric::DlSimilarity => dl_similarity(pred, target),
                    Metric::Bleu => bleu(pred, target, settings.bleu_max_order),
                    _ => jaccard(pred, target),
                };
            }
            Ok(total / samples.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub n_samples: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_k: Vec<KRow>,
    /// Mean over k rows, each row counting once.
    pub aggregate_unweighted: BTreeMap<String, f64>,
    /// Mean over k rows weighted by their sample counts.
    pub aggregate_weighted: BTreeMap<String, f64>,
    /// Metric over the pooled samples.
    pub global: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn n_samples(&self) -> usize {
        self.per_k.iter().map(|r| r.n_samples).sum()
    }

    /// CSV with one row per k, then `unweighted`, `weighted` and `global` rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        self.write_csv_rows(sink, true)
    }

    /// Like [`write_csv`](Self::write_csv), optionally without the per-k rows.
    pub fn write_csv_rows<W: Write>(&self, sink: W, per_k: bool) -> std::io::Result<()> {
        let names: Vec<&String> = self.global.keys().collect();
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        let mut header = vec!["k".to_string(), "n_samples".to_string()];
        header.extend(names.iter().map(|n| n.to_string()));
        w.write_record(&header)?;
        let fmt_row = |label: String, n: usize, values: &BTreeMap<String, f64>| {
            let mut row = vec![label, n.to_string()];
            row.extend(names.iter().map(|m| values.get(*m).map(|v| v.to_string()).unwrap_or_default()));
            row
        };
        for row in self.per_k.iter().filter(|_| per_k) {
            w.write_record(fmt_row(row.k.to_string(), row.n_samples, &row.metrics))?;
        }
        let total = self.n_samples();
        w.write_record(fmt_row("unweighted".into(), total, &self.aggregate_unweighted))?;
        w.write_record(fmt_row("weighted".into(), total, &self.aggregate_weighted))?;
        w.write_record(fmt_row("global".into(), total, &self.global))?;
        w.flush()?;
        Ok(())
    }
}

/// Groups samples by `k` (ascending) and fills both aggregates and the pooled values.
pub fn build_report(
    samples: &[ScoredSample],
    metrics: &[Metric],
    settings: &MetricSettings,
) -> Result<MetricReport, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut groups: BTreeMap<usize, Vec<&ScoredSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.k).or_default().push(s);
    }
    let mut per_k = Vec::with_capacity(groups.len());
    for (k, group) in &groups {
        let mut values = BTreeMap::new();
        for &m in metrics {
            values.insert(m.name().to_string(), compute(m, group, settings)?);
        }
        per_k.push(KRow { k: *k, n_samples: group.len(), metrics: values });
    }
    let pooled: Vec<&ScoredSample> = samples.iter().collect();
    let total = samples.len() as f64;
    let mut aggregate_unweighted = BTreeMap::new();
    let mut aggregate_weighted = BTreeMap::new();
    let mut global = BTreeMap::new();
    for &m in metrics {
        let name = m.name().to_string();
        let unweighted = per_k.iter().map(|r| r.metrics[&name]).sum::<f64>() / per_k.len() as f64;
        let weighted = per_k.iter().map(|r| r.metrics[&name] * r.n_samples as f64).sum::<f64>() / total;
        aggregate_unweighted.insert(name.clone(), unweighted);
        aggregate_weighted.insert(name.clone(), weighted);
        global.insert(name, compute(m, &pooled, settings)?);
    }
    Ok(MetricReport { per_k, aggregate_unweighted, aggregate_weighted, global })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: u32 = 4;
    const B: u32 = 5;
    const C: u32 = 6;
    const D: u32 = 7;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[A, B], &[A, B]).unwrap(), 1.0);
        assert_eq!(accuracy(&[B, A], &[A, B]).unwrap(), 0.0);
        assert_eq!(accuracy(&[A, A, A, A], &[A, A, A, B]).unwrap(), 0.75);
        assert_eq!(accuracy::<u32>(&[], &[]), Err(MetricError::Empty));
        assert_eq!(accuracy(&[A], &[A, B]), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn balanced_accuracy_cases() {
        let (p, t) = ([A, A, A, A], [A, A, A, B]);
        assert_eq!(balanced_accuracy(&p, &t, BalancedMode::PresentClasses).unwrap(), 0.5);
        assert_eq!(balanced_accuracy(&p, &t, BalancedMode::FixedK(4)).unwrap(), 0.25);
        assert_eq!(
            balanced_accuracy(&p, &t, BalancedMode::FixedK(1)),
            Err(MetricError::InvalidK { k: 1, observed: 2 })
        );
        let perfect = [A, B, C, D];
        assert_eq!(balanced_accuracy(&perfect, &perfect, BalancedMode::PresentClasses).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&perfect, &perfect, BalancedMode::FixedK(4)).unwrap(), 1.0);
    }

    #[test]
    fn balanced_equals_plain_on_uniform_symmetric_cases() {
        // two of each class, one error per class, errors rotate through classes
        let targets = [A, A, B, B, C, C];
        let preds = [A, B, B, C, C, A];
        let plain = accuracy(&preds, &targets).unwrap();
        let balanced = balanced_accuracy(&preds, &targets, BalancedMode::PresentClasses).unwrap();
        assert!((plain - balanced).abs() < 1e-12);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_macro(&[A, B], &[A, B]).unwrap(), 1.0);
        assert_eq!(f1_macro(&[B, A], &[A, B]).unwrap(), 0.0);
        assert!((f1_macro(&[A, B, B], &[A, A, B]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn regression_cases() {
        let e = regression_errors(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!((e.mae, e.mse, e.rmse), (1.0, 1.0, 1.0));
        let e = regression_errors(&[-1.0], &[0.0]).unwrap();
        assert_eq!(e.mae, 1.0);
        let e = regression_errors(&[3.0, 4.5], &[3.0, 4.5]).unwrap();
        assert_eq!((e.mae, e.mse, e.rmse), (0.0, 0.0, 0.0));
        assert!(regression_errors(&[], &[]).is_err());
    }

    #[test]
    fn dl_distance_cases() {
        assert_eq!(dl_distance(&[A, B, C], &[A, B, C]), 0);
        assert_eq!(dl_distance::<u32>(&[], &[A, B]), 2);
        assert_eq!(dl_distance(&[A, B], &[B, A]), 1);
        assert_eq!(dl_distance(&[A, B, C], &[A, C]), 1);
        // distinguishes the unrestricted distance from optimal string alignment (OSA gives 3)
        assert_eq!(dl_distance(&[C, A], &[A, B, C]), 2);
    }

    #[test]
    fn dl_similarity_cases() {
        assert_eq!(dl_similarity(&[A, B], &[A, B]), 1.0);
        assert!((dl_similarity(&[A, B, C], &[A, C, B]) - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(dl_similarity::<u32>(&[], &[]), 1.0);
        assert_eq!(dl_similarity(&[A], &[]), 0.0);
    }

    #[test]
    fn bleu_cases() {
        assert!((bleu(&[A, B, C, D, A], &[A, B, C, D, A], 4) - 1.0).abs() < 1e-12);
        let expected = (1.0f64 - 1.5).exp();
        assert!((bleu(&[A, B], &[A, B, C], 4) - expected).abs() < 1e-12);
        assert!((bleu(&[A, B], &[A, B, C], 4) - 0.6065).abs() < 1e-4);
        assert_eq!(bleu(&[A, B], &[C, D], 4), 0.0);
        assert_eq!(bleu::<u32>(&[], &[A], 4), 0.0);
        assert_eq!(bleu::<u32>(&[], &[], 4), 1.0);
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        // candidate repeats A; only one A is in the reference
        let score = bleu(&[A, A], &[A, B], 1);
        assert!((score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bleu_drops_when_correct_token_replaced_by_unseen() {
        let reference = [A, B, C, D];
        let exact = bleu(&reference, &reference, 4);
        let damaged = bleu(&[A, B, 99, D], &reference, 4);
        assert!(damaged <= exact);
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&[A, B], &[B, A]), 1.0);
        assert_eq!(jaccard(&[A], &[B]), 0.0);
        assert_eq!(jaccard(&[A, B, C], &[B, C, D]), 0.5);
        assert_eq!(jaccard::<u32>(&[], &[]), 1.0);
    }

    fn class_samples(k: usize, n: usize, correct: usize) -> Vec<ScoredSample> {
        (0..n)
            .map(|i| ScoredSample {
                k,
                observation: Observation::Class { pred: A, target: if i < correct { A } else { B } },
            })
            .collect()
    }

    #[test]
    fn weighted_versus_unweighted() {
        let mut samples = class_samples(1, 100, 90);
        samples.extend(class_samples(5, 10, 5));
        let report = build_report(&samples, &[Metric::Accuracy], &MetricSettings::default()).unwrap();
        assert_eq!(report.per_k.iter().map(|r| r.k).collect::<Vec<_>>(), [1, 5]);
        assert!((report.aggregate_unweighted["accuracy"] - 0.7).abs() < 1e-12);
        assert!((report.aggregate_weighted["accuracy"] - 95.0 / 110.0).abs() < 1e-12);
        assert!((report.aggregate_weighted["accuracy"] - 0.8636).abs() < 1e-4);
        assert!((report.global["accuracy"] - report.aggregate_weighted["accuracy"]).abs() < 1e-9);
        assert_eq!(report.n_samples(), 110);
    }

    #[test]
    fn single_group_aggregates_agree() {
        let samples = class_samples(3, 10, 7);
        let report = build_report(&samples, &Metric::CLASSIFICATION, &MetricSettings::default()).unwrap();
        assert_eq!(report.aggregate_unweighted, report.aggregate_weighted);
    }

    #[test]
    fn report_rejects_mismatched_observations() {
        let samples = class_samples(1, 3, 3);
        let err = build_report(&samples, &[Metric::Mae], &MetricSettings::default()).unwrap_err();
        assert!(matches!(err, MetricError::Incompatible { metric: Metric::Mae, .. }));
        assert_eq!(build_report(&[], &[Metric::Mae], &MetricSettings::default()), Err(MetricError::Empty));
    }

    #[test]
    fn report_csv_layout() {
        let mut samples = class_samples(1, 4, 2);
        samples.extend(class_samples(2, 2, 2));
        let report = build_report(&samples, &[Metric::Accuracy], &MetricSettings::default()).unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "k,n_samples,accuracy\n1,4,0.5\n2,2,1\nunweighted,6,0.75\nweighted,6,0.6666666666666666\nglobal,6,0.6666666666666666\n"
        );
    }
}
