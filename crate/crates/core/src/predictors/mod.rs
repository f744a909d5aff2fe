//! The predictor contract and its implementations.
//!
//! A predictor maps an encoded prefix window to one or more next-step
//! distributions. [`ngram`] is the in-engine frequency baseline, [`external`]
//! bridges to a separate process over the line protocol in [`protocol`], and
//! [`oracle`] replays ground truth for end-to-end identity checks.

pub mod external;
pub mod ngram;
pub mod oracle;
pub mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocessing::{PrefixSample, TimeFeatures, TokenId};
use crate::sampling::PredictionDistribution;

pub use external::{ExternalPredictor, ProcessTransport, Transport};
pub use ngram::NGramModel;
pub use oracle::GroundTruthPredictor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("no training samples")]
    EmptyTraining,
    #[error("sample from the {0} split offered for fitting; only train samples are allowed")]
    NotTrainSample(String),
    #[error("invalid n-gram size {0}")]
    InvalidN(usize),
    #[error("vocabulary size mismatch: engine has {expected}, predictor has {actual}")]
    VocabMismatch { expected: usize, actual: usize },
    #[error("token id {id} outside vocabulary of size {size}")]
    TokenOutOfRange { id: TokenId, size: usize },
    #[error("context window of {got} ids is shorter than model order {needed}")]
    ShortContext { needed: usize, got: usize },
    #[error("m = {m} outside 1..={max}")]
    StepsOutOfRange { m: usize, max: usize },
    #[error("capability error: {0}")]
    Capability(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no reply within {0:?}")]
    Timeout(std::time::Duration),
    #[error("predictor channel closed")]
    ChannelClosed,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PredictorError {
    fn from(e: std::io::Error) -> Self {
        PredictorError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorCapabilities {
    pub supports_multi_step: bool,
    pub max_m: usize,
    pub supports_remaining_time: bool,
    pub supports_time_delta: bool,
}

impl PredictorCapabilities {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.max_m == 0 {
            return Err(PredictorError::Capability("max_m must be >= 1".into()));
        }
        if !self.supports_multi_step && self.max_m > 1 {
            return Err(PredictorError::Capability(format!(
                "max_m = {} declared without multi-step support",
                self.max_m
            )));
        }
        Ok(())
    }
}

/// What a predictor sees of one prefix.
#[derive(Debug, Clone, Copy)]
pub struct PredictionQuery<'a> {
    pub case_id: &'a str,
    /// Revealed tokens of the augmented trace, generated ones included.
    pub prefix_len: usize,
    /// n-gram window, left-padded with PAD.
    pub input_ids: &'a [TokenId],
    pub time_features: &'a [TimeFeatures],
}

impl<'a> PredictionQuery<'a> {
    pub fn from_sample(sample: &'a PrefixSample) -> Self {
        Self {
            case_id: &sample.case_id,
            prefix_len: sample.k,
            input_ids: &sample.input_ids,
            time_features: &sample.input_time_features,
        }
    }
}

pub trait Predictor: Send {
    fn capabilities(&self) -> PredictorCapabilities;

    fn vocab_size(&self) -> usize;

    /// Distributions for the next `m` steps.
    fn predict(&mut self, query: &PredictionQuery<'_>, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn capabilities(&self) -> PredictorCapabilities {
        (**self).capabilities()
    }

    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&mut self, query: &PredictionQuery<'_>, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        (**self).predict(query, m)
    }
}
