//! A predictor that knows every answer.
//!
//! Replays the true continuation of each case as point masses with the true
//! time deltas. With it, every metric must come out perfect, which makes it
//! the reference for end-to-end identity checks of the evaluation pipeline.

use std::collections::BTreeMap;

use super::{PredictionQuery, Predictor, PredictorCapabilities, PredictorError};
use crate::eventlog::{EventLog, MS_PER_DAY};
use crate::preprocessing::{TokenId, Vocabulary, END, START};
use crate::sampling::PredictionDistribution;

#[derive(Debug, Clone)]
struct CaseTruth {
    ids: Vec<TokenId>,
    deltas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GroundTruthPredictor {
    vocab_size: usize,
    max_m: usize,
    cases: BTreeMap<String, CaseTruth>,
}

impl GroundTruthPredictor {
    pub fn from_log(log: &EventLog, vocab: &Vocabulary, max_m: usize) -> Self {
        let cases = log
            .traces()
            .map(|t| {
                let mut ids = vec![START];
                ids.extend(t.activities().map(|a| vocab.encode(a)));
                ids.push(END);
                let mut deltas = vec![0.0; ids.len()];
                for i in 1..t.len() {
                    deltas[i + 1] = (t.events[i].timestamp_ms() - t.events[i - 1].timestamp_ms()) as f64 / MS_PER_DAY;
                }
                (t.case_id.clone(), CaseTruth { ids, deltas })
            })
            .collect();
        Self { vocab_size: vocab.len(), max_m: max_m.max(1), cases }
    }
}

impl Predictor for GroundTruthPredictor {
    fn capabilities(&self) -> PredictorCapabilities {
        PredictorCapabilities {
            supports_multi_step: self.max_m > 1,
            max_m: self.max_m,
            supports_remaining_time: true,
            supports_time_delta: true,
        }
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&mut self, query: &PredictionQuery<'_>, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        let truth = self
            .cases
            .get(query.case_id)
            .ok_or_else(|| PredictorError::Protocol(format!("unknown case `{}`", query.case_id)))?;
        Ok((0..m)
            .map(|step| {
                let pos = query.prefix_len + step;
                let mut d = PredictionDistribution::point_mass(self.vocab_size, truth.ids.get(pos).copied().unwrap_or(END));
                d.delta_days = Some(truth.deltas.get(pos).copied().unwrap_or(0.0));
                d.remaining_days = Some(truth.deltas.get(pos..).map_or(0.0, |r| r.iter().sum()));
                d
            })
            .collect())
    }
}
