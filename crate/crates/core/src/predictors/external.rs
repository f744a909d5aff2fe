//! Predictors living in another process, reached over the line protocol.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::protocol::{Message, WireDistribution, PROTOCOL_VERSION};
use super::{PredictionQuery, Predictor, PredictorCapabilities, PredictorError};
use crate::preprocessing::{PadPolicy, TimeFeatures, TokenId, Vocabulary, TIME_FEATURE_NAMES};
use crate::sampling::PredictionDistribution;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Tolerated deviation of a reply's probability mass from 1 before it is rejected.
pub const MASS_TOLERANCE: f64 = 1e-4;

/// A line-oriented duplex channel.
pub trait Transport: Send {
    fn send_line(&mut self, line: &str) -> Result<(), PredictorError>;

    fn recv_line(&mut self, timeout: Duration) -> Result<String, PredictorError>;
}

/// Transport over a child process's stdin/stdout. A reader thread forwards stdout
/// lines so receives can time out.
pub struct ProcessTransport {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl ProcessTransport {
    pub fn spawn(command: &[String]) -> Result<Self, PredictorError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| PredictorError::Io("empty predictor command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PredictorError::Io(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().ok_or(PredictorError::ChannelClosed)?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines: rx })
    }

    /// Waits up to `grace` for the process to exit, then kills it. Returns the exit
    /// status if the process ended on its own.
    pub fn close(&mut self, grace: Duration) -> Option<std::process::ExitStatus> {
        drop(self.stdin.take());
        let deadline = std::time::Instant::now() + grace;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if std::time::Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return None;
                }
            }
        }
    }
}

impl Transport for ProcessTransport {
    fn send_line(&mut self, line: &str) -> Result<(), PredictorError> {
        let stdin = self.stdin.as_mut().ok_or(PredictorError::ChannelClosed)?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|_| PredictorError::ChannelClosed)
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, PredictorError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(e.into()),
            Err(RecvTimeoutError::Timeout) => Err(PredictorError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(PredictorError::ChannelClosed),
        }
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            self.close(Duration::from_millis(200));
        }
    }
}

/// An external predictor after a successful handshake.
pub struct ExternalPredictor {
    transport: Box<dyn Transport>,
    timeout: Duration,
    vocab_size: usize,
    capabilities: PredictorCapabilities,
    last_request_id: u64,
}

impl ExternalPredictor {
    /// Sends `init` and validates the `capabilities` reply.
    pub fn handshake(
        mut transport: Box<dyn Transport>,
        vocab: &Vocabulary,
        pad: &PadPolicy,
        n_gram: usize,
        timeout: Duration,
    ) -> Result<Self, PredictorError> {
        let init = Message::Init {
            protocol_version: PROTOCOL_VERSION,
            vocabulary: vocab.tokens().into_iter().map(str::to_string).collect(),
            pad_size: pad.pad_size,
            n_gram,
            feature_names: TIME_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        transport.send_line(&init.to_line())?;
        let reply = Message::from_line(&transport.recv_line(timeout)?).map_err(PredictorError::Protocol)?;
        let Message::Capabilities {
            vocab_size,
            supports_multi_step,
            max_m,
            supports_remaining_time,
            supports_time_delta,
        } = reply
        else {
            return Err(unexpected("capabilities", &reply));
        };
        if vocab_size != vocab.len() {
            return Err(PredictorError::VocabMismatch { expected: vocab.len(), actual: vocab_size });
        }
        let capabilities = PredictorCapabilities {
            supports_multi_step,
            max_m,
            supports_remaining_time,
            supports_time_delta,
        };
        capabilities.validate()?;
        Ok(Self { transport, timeout, vocab_size, capabilities, last_request_id: 0 })
    }

    /// Starts `command` and performs the handshake.
    pub fn spawn(
        command: &[String],
        vocab: &Vocabulary,
        pad: &PadPolicy,
        n_gram: usize,
        timeout: Duration,
    ) -> Result<Self, PredictorError> {
        let transport = ProcessTransport::spawn(command)?;
        Self::handshake(Box::new(transport), vocab, pad, n_gram, timeout)
    }

    pub fn last_request_id(&self) -> u64 {
        self.last_request_id
    }

    /// One `predict` round trip. Distributions whose mass is within
    /// [`MASS_TOLERANCE`] of 1 are renormalized; anything else is rejected.
    pub fn request(
        &mut self,
        input_ids: &[TokenId],
        time_features: &[TimeFeatures],
        m: usize,
    ) -> Result<Vec<PredictionDistribution>, PredictorError> {
        if m == 0 || m > self.capabilities.max_m {
            return Err(PredictorError::StepsOutOfRange { m, max: self.capabilities.max_m });
        }
        self.last_request_id += 1;
        let request_id = self.last_request_id;
        let message = Message::Predict {
            request_id,
            input_ids: input_ids.to_vec(),
            time_features: time_features.to_vec(),
            m,
        };
        self.transport.send_line(&message.to_line())?;
        let reply = Message::from_line(&self.transport.recv_line(self.timeout)?).map_err(PredictorError::Protocol)?;
        let distributions = match reply {
            Message::Prediction { request_id: echoed, distributions } => {
                if echoed != request_id {
                    return Err(PredictorError::Protocol(format!(
                        "reply request_id {echoed} does not match request {request_id}"
                    )));
                }
                distributions
            }
            Message::Error { message, .. } => return Err(PredictorError::Protocol(format!("predictor error: {message}"))),
            other => return Err(unexpected("prediction", &other)),
        };
        if distributions.len() != m {
            return Err(PredictorError::Protocol(format!(
                "expected {m} distributions, got {}",
                distributions.len()
            )));
        }
        distributions
            .into_iter()
            .map(|d| validate_wire(d, self.vocab_size))
            .collect()
    }

    /// Sends `shutdown`. The transport is dropped afterwards.
    pub fn shutdown(mut self) -> Result<(), PredictorError> {
        self.transport.send_line(&Message::Shutdown.to_line())
    }
}

impl Predictor for ExternalPredictor {
    fn capabilities(&self) -> PredictorCapabilities {
        self.capabilities
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&mut self, query: &PredictionQuery<'_>, m: usize) -> Result<Vec<PredictionDistribution>, PredictorError> {
        self.request(query.input_ids, query.time_features, m)
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let _ = self.transport.send_line(&Message::Shutdown.to_line());
    }
}

fn unexpected(expected: &str, got: &Message) -> PredictorError {
    match got {
        Message::Error { message, .. } => PredictorError::Protocol(format!("predictor error: {message}")),
        other => PredictorError::Protocol(format!("expected `{expected}`, got `{}`", other.type_name())),
    }
}

fn validate_wire(wire: WireDistribution, vocab_size: usize) -> Result<PredictionDistribution, PredictorError> {
    if wire.probs.len() != vocab_size {
        return Err(PredictorError::Protocol(format!(
            "probability vector of length {} for vocabulary of {vocab_size}",
            wire.probs.len()
        )));
    }
    let probs: Vec<f64> = wire
        .probs
        .into_iter()
        .map(|p| p.filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| PredictorError::Protocol("non-finite probability".into()))?;
    if probs.iter().any(|p| *p < 0.0) {
        return Err(PredictorError::Protocol("negative probability".into()));
    }
    let mass: f64 = probs.iter().sum();
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(PredictorError::Protocol(format!("probability mass {mass} deviates from 1 by more than {MASS_TOLERANCE}")));
    }
    for (name, v) in [("delta_days", wire.delta_days), ("remaining_days", wire.remaining_days)] {
        if matches!(v, Some(x) if !x.is_finite()) {
            return Err(PredictorError::Protocol(format!("non-finite {name}")));
        }
    }
    Ok(PredictionDistribution {
        probs: probs.into_iter().map(|p| p / mass).collect(),
        delta_days: wire.delta_days,
        remaining_days: wire.remaining_days,
    })
}
