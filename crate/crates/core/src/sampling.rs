//! Next-token selection from a predicted distribution.
//!
//! All randomness comes from ChaCha8 streams: one master seed, one stream index per
//! generation task, so results do not depend on scheduling or worker count.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocessing::PAD;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("temperature must be > 0, got {0}")]
    Temperature(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid sampler config: {0}")]
    Config(String),
}

/// Portable RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one `u64`.
fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_days: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_days: Option<f64>,
}

impl PredictionDistribution {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs, delta_days: None, remaining_days: None }
    }

    pub fn point_mass(vocab_size: usize, id: u32) -> Self {
        let mut probs = vec![0.0; vocab_size];
        probs[id as usize] = 1.0;
        Self::new(probs)
    }

    /// Checks non-negativity, finiteness, length and unit mass within 1e-6.
    pub fn validate(&self, vocab_size: usize) -> Result<(), SamplingError> {
        if self.probs.len() != vocab_size {
            return Err(SamplingError::InvalidDistribution(format!(
                "length {} does not match vocabulary size {vocab_size}",
                self.probs.len()
            )));
        }
        if let Some(bad) = self.probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(SamplingError::InvalidDistribution(format!("entry {bad} is not a probability")));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SamplingError::InvalidDistribution(format!("mass {sum} != 1")));
        }
        Ok(())
    }

    /// Lowest id among the maximal entries.
    pub fn argmax(&self) -> u32 {
        argmax(&self.probs)
    }
}

fn argmax(probs: &[f64]) -> u32 {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    #[default]
    Greedy,
    Random,
    TopK,
    TopP,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 4] =
        [SamplingStrategy::Greedy, SamplingStrategy::Random, SamplingStrategy::TopK, SamplingStrategy::TopP];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplingStrategy::Greedy => "greedy",
            SamplingStrategy::Random => "random",
            SamplingStrategy::TopK => "top_k",
            SamplingStrategy::TopP => "top_p",
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| {
            let valid: Vec<_> = Self::ALL.iter().map(|s| s.as_str()).collect();
            format!("unknown sampler strategy `{s}` (valid: {})", valid.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub strategy: SamplingStrategy,
    pub temperature: f64,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { strategy: SamplingStrategy::Greedy, temperature: 1.0, k: None, p: None, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn random(seed: u64) -> Self {
        Self { strategy: SamplingStrategy::Random, seed, ..Self::default() }
    }

    pub fn top_k(k: usize, seed: u64) -> Self {
        Self { strategy: SamplingStrategy::TopK, k: Some(k), seed, ..Self::default() }
    }

    pub fn top_p(p: f64, seed: u64) -> Self {
        Self { strategy: SamplingStrategy::TopP, p: Some(p), seed, ..Self::default() }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(SamplingError::Temperature(self.temperature));
        }
        match self.strategy {
            SamplingStrategy::TopK => match self.k {
                Some(k) if k >= 1 => {}
                _ => return Err(SamplingError::Config("top_k requires k >= 1".into())),
            },
            SamplingStrategy::TopP => match self.p {
                Some(p) if p > 0.0 && p <= 1.0 => {}
                _ => return Err(SamplingError::Config("top_p requires p in (0, 1]".into())),
            },
            _ => {}
        }
        Ok(())
    }
}

/// `probs_i^(1/T)`, renormalized. Computed in log space relative to the maximum so
/// small temperatures do not underflow the leading entry.
pub fn apply_temperature(probs: &[f64], temperature: f64) -> Result<Vec<f64>, SamplingError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(SamplingError::Temperature(temperature));
    }
    if temperature == 1.0 {
        return normalize(probs.to_vec());
    }
    let max_log = probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if max_log == f64::NEG_INFINITY {
        return Err(SamplingError::InvalidDistribution("no positive mass".into()));
    }
    let scaled = probs
        .iter()
        .map(|&p| if p > 0.0 { ((p.ln() - max_log) / temperature).exp() } else { 0.0 })
        .collect();
    normalize(scaled)
}

fn normalize(mut probs: Vec<f64>) -> Result<Vec<f64>, SamplingError> {
    let sum: f64 = probs.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(SamplingError::InvalidDistribution("no positive mass".into()));
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(probs)
}

/// Ids ordered by probability descending, lowest id first among ties.
fn ranked(probs: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..probs.len()).collect();
    ids.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    ids
}

/// The smallest descending-probability prefix of ids whose mass reaches `p`,
/// including the id that crosses the threshold.
pub fn nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut mass = 0.0;
    for id in ranked(probs) {
        if probs[id] <= 0.0 {
            break;
        }
        out.push(id);
        mass += probs[id];
        if mass >= p - 1e-12 {
            break;
        }
    }
    out
}

/// The `k` highest-probability ids with non-zero mass.
pub fn top_k_ids(probs: &[f64], k: usize) -> Vec<usize> {
    ranked(probs).into_iter().take(k).filter(|&i| probs[i] > 0.0).collect()
}

/// The distribution actually sampled from: PAD masked, temperature applied, then
/// truncated to the strategy's support and renormalized.
pub fn effective_distribution(probs: &[f64], config: &SamplerConfig) -> Result<Vec<f64>, SamplingError> {
    config.validate()?;
    let mut masked = probs.to_vec();
    if let Some(pad) = masked.get_mut(PAD as usize) {
        *pad = 0.0;
    }
    if masked.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SamplingError::InvalidDistribution("negative or non-finite entry".into()));
    }
    if masked.iter().sum::<f64>() <= 0.0 {
        return Err(SamplingError::InvalidDistribution("all mass on PAD".into()));
    }
    let tempered = apply_temperature(&masked, config.temperature)?;
    let support = match config.strategy {
        SamplingStrategy::Greedy | SamplingStrategy::Random => return Ok(tempered),
        SamplingStrategy::TopK => top_k_ids(&tempered, config.k.unwrap_or(1)),
        SamplingStrategy::TopP => nucleus(&tempered, config.p.unwrap_or(1.0)),
    };
    let mut truncated = vec![0.0; tempered.len()];
    for id in support {
        truncated[id] = tempered[id];
    }
    normalize(truncated)
}

/// Selects a token id. Greedy ignores temperature and never touches the RNG.
pub fn sample(dist: &PredictionDistribution, config: &SamplerConfig, rng: &mut impl RngCore) -> Result<u32, SamplingError> {
    if config.strategy == SamplingStrategy::Greedy {
        config.validate()?;
        let mut masked = dist.probs.clone();
        if let Some(pad) = masked.get_mut(PAD as usize) {
            *pad = 0.0;
        }
        if masked.iter().any(|p| !p.is_finite() || *p < 0.0) || masked.iter().sum::<f64>() <= 0.0 {
            return Err(SamplingError::InvalidDistribution("no sampleable mass".into()));
        }
        return Ok(argmax(&masked));
    }
    let effective = effective_distribution(&dist.probs, config)?;
    Ok(categorical(&effective, rng))
}

fn categorical(probs: &[f64], rng: &mut impl RngCore) -> u32 {
    let u = uniform01(rng);
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        cumulative += p;
        last_positive = i;
        if u < cumulative {
            return i as u32;
        }
    }
    last_positive as u32
}
