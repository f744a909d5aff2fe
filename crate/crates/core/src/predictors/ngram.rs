//! Relative-frequency n-gram baseline with additive smoothing.
//!
//! Next-activity probabilities are count ratios over the last `n` window ids; time
//! targets are context-conditional means. Contexts never seen in training fall back
//! to a uniform distribution over non-PAD ids and to global means.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{PredictionQuery, Predictor, PredictorCapabilities, PredictorError};
use crate::preprocessing::{PrefixSample, TokenId, PAD};
use crate::sampling::PredictionDistribution;
use crate::splitting::SplitLabel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct RunningMean {
    sum: f64,
    count: u64,
}

impl RunningMean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModel {
    n: usize,
    alpha: f64,
    vocab_size: usize,
    pad_size: usize,
    counts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>>,
    deltas: BTreeMap<Vec<TokenId>, RunningMean>,
    remaining: BTreeMap<Vec<TokenId>, RunningMean>,
    global_mean_delta: f64,
    global_mean_remaining: f64,
}

impl NGramModel {
    /// Fits on train samples only; any sample tagged with another split is rejected.
    pub fn fit(samples: &[PrefixSample], n: usize, alpha: f64, vocab_size: usize) -> Result<Self, PredictorError> {
        if n == 0 {
            return Err(PredictorError::InvalidN(n));
        }
        let first = samples.first().ok_or(PredictorError::EmptyTraining)?;
        let pad_size = first.suffix_ids.len();
        let mut counts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = BTreeMap::new();
        let mut deltas: BTreeMap<Vec<TokenId>, RunningMean> = BTreeMap::new();
        let mut remaining: BTreeMap<Vec<TokenId>, RunningMean> = BTreeMap::new();
        let mut global_delta = RunningMean::default();
        let mut global_remaining = RunningMean::default();
        for sample in samples {
            if sample.origin != SplitLabel::Train {
                return Err(PredictorError::NotTrainSample(sample.origin.to_string()));
            }
            if sample.input_ids.len() < n {
                return Err(PredictorError::ShortContext { needed: n, got: sample.input_ids.len() });
            }
            if let Some(&id) = sample.input_ids.iter().chain([&sample.next_activity_id]).find(|id| **id as usize >= vocab_size) {
                return Err(PredictorError::TokenOutOfRange { id, size: vocab_size });
            }
            let context = sample.input_ids[sample.input_ids.len() - n..].to_vec();
            *counts.entry(context.clone()).or_default().entry(sample.next_activity_id).or_default() += 1;
            deltas.entry(context.clone()).or_default().push(sample.next_delta_days);
            remaining.entry(context).or_default().push(sample.remaining_time_days);
            global_delta.push(sample.next_delta_days);
            global_remaining.push(sample.remaining_time_days);
        }
        Ok(Self {
            n,
            alpha,
            vocab_size,
            pad_size,
            counts,
            deltas,
            remaining,
            global_mean_delta: global_delta.mean().unwrap_or(0.0),
            global_mean_remaining: global_remaining.mean().unwrap_or(0.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pad_size(&self) -> usize {
        self.pad_size
    }

    pub fn n_contexts(&self) -> usize {
        self.counts.len()
    }

    /// Deterministic serialization of every fitted parameter.
    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Flat<'a> {
            n: usize,
            alpha: f64,
            vocab_size: usize,
            pad_size: usize,
            counts: Vec<(&'a Vec<TokenId>, &'a BTreeMap<TokenId, u64>)>,
            deltas: Vec<(&'a Vec<TokenId>, &'a RunningMean)>,
            remaining: Vec<(&'a Vec<TokenId>, &'a RunningMean)>,
            global_mean_delta: f64,
            global_mean_remaining: f64,
        }
        serde_json::to_vec(&Flat {
            n: self.n,
            alpha: self.alpha,
            vocab_size: self.vocab_size,
            pad_size: self.pad_size,
            counts: self.counts.iter().collect(),
            deltas: self.deltas.iter().collect(),
            remaining: self.remaining.iter().collect(),
            global_mean_delta: self.global_mean_delta,
            global_mean_remaining: self.global_mean_remaining,
        })
        .expect("model serializes")
    }

    fn context<'a>(&self, window: &'a [TokenId]) -> Result<&'a [TokenId], PredictorError> {
        if window.len() < self.n {
            return Err(PredictorError::ShortContext { needed: self.n, got: window.len() });
        }
        if let Some(&id) = window.iter().find(|id| **id as usize >= self.vocab_size) {
            return Err(PredictorError::TokenOutOfRange { id, size: self.vocab_size });
        }
        Ok(&window[window.len() - self.n..])
    }

    /// `(c_a + alpha) / (total + alpha * (V - 1))` for every id except PAD, which gets 0.
    fn probabilities(&self, context: &[TokenId]) -> Vec<f64> {
        let sampleable = (self.vocab_size - 1) as f64;
        let mut probs = vec![0.0; self.vocab_size];
        match self.counts.get(context) {
            Some(table) => {
                let total: u64 = table.values().sum();
                let denom = total as f64 + self.alpha * sampleable;
                for (id, p) in probs.iter_mut().enumerate() {
                    if id as TokenId != PAD {
                        let c = table.get(&(id as TokenId)).copied().unwrap_or(0) as f64;
                        *p = (c + self.alpha) / denom;
                    }
                }
            }
            None => {
                for (id, p) in probs.iter_mut().enumerate() {
                    if id as TokenId != PAD {
                        *p = 1.0 / sampleable;
                    }
                }
            }
        }
        probs
    }

    fn distribution(&self, context: &[TokenId]) -> PredictionDistribution {
        PredictionDistribution {
            probs: self.probabilities(context),
            delta_days: Some(self.deltas.get(context).and_then(RunningMean::mean).unwrap_or(self.global_mean_delta)),
            remaining_days: Some(
                self.remaining
                    .get(context)
                    .and_then(RunningMean::mean)
                    .unwrap_or(self.global_mean_remaining),
            ),
        }
    }

    pub fn predict_window(&self, window: &[TokenId]) -> Result<PredictionDistribution, PredictorError> {
        Ok(self.distribution(self.context(window)?))
    }

    pub fn predict_next(&self, sample: &PrefixSample) -> Result<PredictionDistribution, PredictorError> {
        self.predict_window(&sample.input_ids)
    }

    /// `m` steps by chained greedy expansion: each step's argmax is appended to the
    /// context before the next lookup. A factorized stand-in for a joint multi-step
    /// distribution.
    pub fn predict_multi_window(&self, window: &[TokenId], m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        if m == 0 || m > self.pad_size {
            return Err(PredictorError::StepsOutOfRange { m, max: self.pad_size });
        }
        let mut context = self.context(window)?.to_vec();
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let dist = self.distribution(&context);
            let next = dist.argmax();
            out.push(dist);
            context.remove(0);
            context.push(next);
        }
        Ok(out)
    }

    pub fn predict_multi(&self, sample: &PrefixSample, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        self.predict_multi_window(&sample.input_ids, m)
    }

    /// Mean negative log-likelihood of the next activities of `samples`.
    pub fn nll(&self, samples: &[PrefixSample]) -> Result<f64, PredictorError> {
        let mut total = 0.0;
        for s in samples {
            let probs = self.probabilities(self.context(&s.input_ids)?);
            total -= probs[s.next_activity_id as usize].ln();
        }
        Ok(total / samples.len() as f64)
    }

    fn caps(&self) -> PredictorCapabilities {
        PredictorCapabilities {
            supports_multi_step: true,
            max_m: self.pad_size,
            supports_remaining_time: true,
            supports_time_delta: true,
        }
    }
}

impl Predictor for NGramModel {
    fn capabilities(&self) -> PredictorCapabilities {
        self.caps()
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&mut self, query: &PredictionQuery<'_>, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        self.predict_multi_window(query.input_ids, m)
    }
}

impl Predictor for Arc<NGramModel> {
    fn capabilities(&self) -> PredictorCapabilities {
        self.caps()
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&mut self, query: &PredictionQuery<'_>, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        self.predict_multi_window(query.input_ids, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{Event, Trace, TimestampFormat};
    use crate::preprocessing::{make_samples, FeatureEncoder, PadPolicy, TimeFeatureScaler, Vocabulary, END, START};

    fn chain_trace(case: &str, acts: &[&str]) -> Trace {
        let events = acts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let ts = TimestampFormat::Auto.parse(&format!("2020-01-{:02}T00:00:00Z", i + 1)).unwrap();
                Event::new(case, *a, ts)
            })
            .collect();
        Trace { case_id: case.into(), events }
    }

    fn samples(traces: &[Trace], vocab: &Vocabulary, n: usize) -> Vec<PrefixSample> {
        let enc = FeatureEncoder::new(TimeFeatureScaler::identity(), false);
        let pad = PadPolicy::fixed(8).unwrap();
        traces
            .iter()
            .flat_map(|t| make_samples(t, vocab, &pad, n, &enc, None, SplitLabel::Train).unwrap())
            .collect()
    }

    fn chain_model(alpha: f64) -> (NGramModel, Vocabulary, Vec<PrefixSample>) {
        let traces: Vec<Trace> = (0..3).map(|i| chain_trace(&format!("c{i}"), &["A", "B", "C"])).collect();
        let vocab = Vocabulary::build(&traces);
        let s = samples(&traces, &vocab, 3);
        (NGramModel::fit(&s, 2, alpha, vocab.len()).unwrap(), vocab, s)
    }

    #[test]
    fn deterministic_chain_has_unit_probability() {
        let (model, vocab, s) = chain_model(0.0);
        let d = model.predict_window(&[PAD, START, vocab.encode("A")]).unwrap();
        assert_eq!(d.probs[vocab.encode("B") as usize], 1.0);
        assert_eq!(d.argmax(), vocab.encode("B"));
        assert_eq!(d.delta_days, Some(1.0));
        for sample in &s {
            let d = model.predict_next(sample).unwrap();
            assert_eq!(d.probs[sample.next_activity_id as usize], 1.0);
            d.validate(vocab.len()).unwrap();
        }
    }

    #[test]
    fn additive_smoothing_arithmetic() {
        // vocab of 6 ids -> 5 sampleable; context seen 3 times, always followed by B
        let (model, vocab, _) = chain_model(1.0);
        assert_eq!(vocab.len(), 7);
        let small = NGramModel { vocab_size: 6, ..model.clone() };
        let d = small.predict_window(&[START, vocab.encode("A")]).unwrap();
        assert!((d.probs[vocab.encode("B") as usize] - 0.5).abs() < 1e-12);
        assert_eq!(d.probs[PAD as usize], 0.0);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_context_is_uniform_with_global_means() {
        let (model, vocab, _) = chain_model(0.0);
        let d = model.predict_window(&[vocab.encode("C"), vocab.encode("A")]).unwrap();
        let expected = 1.0 / (vocab.len() - 1) as f64;
        assert_eq!(d.probs[PAD as usize], 0.0);
        assert!(d.probs[1..].iter().all(|p| (p - expected).abs() < 1e-15));
        assert_eq!(d.delta_days, Some(model.global_mean_delta));
        assert_eq!(d.remaining_days, Some(model.global_mean_remaining));
    }

    #[test]
    fn multi_step_chains_argmaxes() {
        let (model, vocab, s) = chain_model(0.0);
        let window = [PAD, START, vocab.encode("A")];
        let steps = model.predict_multi_window(&window, 3).unwrap();
        let argmaxes: Vec<_> = steps.iter().map(PredictionDistribution::argmax).collect();
        assert_eq!(argmaxes, [vocab.encode("B"), vocab.encode("C"), END]);
        assert_eq!(model.predict_multi(&s[1], 1).unwrap(), vec![model.predict_next(&s[1]).unwrap()]);
        assert!(matches!(model.predict_multi_window(&window, 9), Err(PredictorError::StepsOutOfRange { .. })));
        assert!(matches!(model.predict_multi_window(&window, 0), Err(PredictorError::StepsOutOfRange { .. })));
    }

    #[test]
    fn rejects_non_train_samples_and_bad_inputs() {
        let (_, vocab, mut s) = chain_model(0.0);
        assert_eq!(NGramModel::fit(&[], 2, 0.0, vocab.len()), Err(PredictorError::EmptyTraining));
        assert_eq!(NGramModel::fit(&s, 4, 0.0, vocab.len()), Err(PredictorError::ShortContext { needed: 4, got: 3 }));
        let model = NGramModel::fit(&s, 2, 0.0, vocab.len()).unwrap();
        assert!(matches!(model.predict_window(&[START, 99]), Err(PredictorError::TokenOutOfRange { .. })));
        s[0].origin = SplitLabel::Test;
        assert!(matches!(NGramModel::fit(&s, 2, 0.0, vocab.len()), Err(PredictorError::NotTrainSample(_))));
    }

    #[test]
    fn relative_frequencies_minimize_training_nll() {
        let traces = vec![
            chain_trace("a", &["A", "B", "C"]),
            chain_trace("b", &["A", "B", "D"]),
            chain_trace("c", &["A", "C", "D"]),
            chain_trace("d", &["A", "B", "C"]),
            chain_trace("e", &["B", "C"]),
        ];
        let vocab = Vocabulary::build(&traces);
        let s = samples(&traces, &vocab, 2);
        let model = NGramModel::fit(&s, 2, 0.0, vocab.len()).unwrap();
        let best = model.nll(&s).unwrap();
        for (ctx, table) in &model.counts {
            for id in 1..vocab.len() as TokenId {
                for delta in [-1i64, 1] {
                    let mut perturbed = model.clone();
                    let entry = perturbed.counts.get_mut(ctx).unwrap().entry(id).or_insert(0);
                    if *entry as i64 + delta < 0 {
                        continue;
                    }
                    *entry = (*entry as i64 + delta) as u64;
                    if perturbed.counts[ctx].values().all(|c| *c == 0) {
                        perturbed.counts.remove(ctx);
                    }
                    let nll = perturbed.nll(&s).unwrap();
                    assert!(nll >= best - 1e-12, "perturbing {ctx:?}/{id} by {delta} lowered nll {nll} < {best}; {table:?}");
                }
            }
        }
    }
}
