//! Wire messages of the external predictor protocol.
//!
//! Newline-delimited JSON over the predictor process's stdin/stdout, one UTF-8
//! object per line, discriminated by a `type` field:
//!
//! | direction          | type           | fields                                                                  |
//! |--------------------|----------------|-------------------------------------------------------------------------|
//! | engine → predictor | `init`         | `protocol_version`, `vocabulary` (token per id), `pad_size`, `n_gram`, `feature_names` |
//! | predictor → engine | `capabilities` | `vocab_size`, `supports_multi_step`, `max_m`, `supports_remaining_time`, `supports_time_delta` |
//! | engine → predictor | `predict`      | `request_id`, `input_ids`, `time_features`, `m`                          |
//! | predictor → engine | `prediction`   | `request_id`, `distributions` (list of `{probs, delta_days?, remaining_days?}`) |
//! | engine → predictor | `shutdown`     | (none)                                                                  |
//! | predictor → engine | `error`        | `message`, `request_id?`                                                |
//!
//! `request_id` increases by one per `predict`, starting at 1.

use serde::{Deserialize, Serialize};

use crate::preprocessing::{TimeFeatures, TokenId};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDistribution {
    /// `null` entries are accepted by the parser so they can be rejected as non-finite.
    pub probs: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_days: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Init {
        protocol_version: u32,
        vocabulary: Vec<String>,
        pad_size: usize,
        n_gram: usize,
        feature_names: Vec<String>,
    },
    Capabilities {
        vocab_size: usize,
        supports_multi_step: bool,
        max_m: usize,
        supports_remaining_time: bool,
        supports_time_delta: bool,
    },
    Predict {
        request_id: u64,
        input_ids: Vec<TokenId>,
        time_features: Vec<TimeFeatures>,
        m: usize,
    },
    Prediction {
        request_id: u64,
        distributions: Vec<WireDistribution>,
    },
    Shutdown,
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_id: Option<u64>,
    },
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Init { .. } => "init",
            Message::Capabilities { .. } => "capabilities",
            Message::Predict { .. } => "predict",
            Message::Prediction { .. } => "prediction",
            Message::Shutdown => "shutdown",
            Message::Error { .. } => "error",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        serde_json::from_str(line.trim()).map_err(|e| {
            if ["NaN", "Infinity"].iter().any(|t| line.contains(t)) {
                format!("non-finite number in reply: {e}")
            } else {
                format!("malformed reply: {e}")
            }
        })
    }
}
