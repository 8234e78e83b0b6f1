//! Client side of the external-model adapter protocol (version 1).
//!
//! The adapter is a child process speaking line-delimited JSON over its
//! standard streams:
//!
//! ```text
//! runner  → {"type":"hello","protocol":1,"t":90,"horizon":30,"n_sensors":N,"model_config":{…}}
//! adapter → {"type":"ready","name":"…"}
//! runner  → {"type":"predict","id":k,"inputs":[B][t][n]}
//! adapter → {"type":"prediction","id":k,"outputs":[B][horizon][n]}
//! runner  → {"type":"shutdown"}
//! ```
//!
//! Requests are strictly sequential: one in flight per adapter process.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{Dims, ForecastError, Forecaster};
use crate::matrix::Matrix;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("failed to start adapter `{cmd}`: {source}")]
    Spawn {
        cmd: String,
        #[source]
        source: std::io::Error,
    },
    #[error("adapter did not complete the handshake within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("adapter did not answer request {id} within {timeout:?}")]
    ResponseTimeout { id: u64, timeout: Duration },
    #[error("protocol violation: {reason}; message: {message:?}")]
    ProtocolViolation { reason: String, message: String },
    #[error("adapter exited unexpectedly (exit code {code:?}){stderr}")]
    AdapterCrashed { code: Option<i32>, stderr: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello { protocol: u32, t: usize, horizon: usize, n_sensors: usize, model_config: serde_json::Value },
    Ready { name: String },
    Predict { id: u64, inputs: Vec<Vec<Vec<f64>>> },
    Prediction { id: u64, outputs: Vec<Vec<Vec<f64>>> },
    Shutdown,
    Error { message: String },
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("protocol messages serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSettings {
    pub handshake_timeout: Duration,
    pub request_timeout: Duration,
    pub batch_size: usize,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        Self { handshake_timeout: Duration::from_secs(60), request_timeout: Duration::from_secs(600), batch_size: 64 }
    }
}

/// Counts of requests sent and responses accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionStats {
    pub requests: u64,
    pub responses: u64,
    pub predictions: u64,
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    next_id: u64,
    stats: SessionStats,
    closed: bool,
}

impl Session {
    fn send(&mut self, msg: &Message) -> Result<(), AdapterError> {
        let line = msg.to_line();
        let ok = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_ok(),
            None => false,
        };
        if ok {
            Ok(())
        } else {
            Err(self.crashed())
        }
    }

    fn receive(&mut self, timeout: Duration, on_timeout: AdapterError) -> Result<Message, AdapterError> {
        match self.lines.recv_timeout(timeout) {
            Ok(line) => serde_json::from_str::<Message>(&line).map_err(|e| AdapterError::ProtocolViolation {
                reason: format!("malformed message ({e})"),
                message: line,
            }),
            Err(RecvTimeoutError::Timeout) => Err(on_timeout),
            Err(RecvTimeoutError::Disconnected) => Err(self.crashed()),
        }
    }

    /// Collects the exit status after the adapter's stdout closed.
    fn crashed(&mut self) -> AdapterError {
        self.closed = true;
        let status = wait_with_timeout(&mut self.child, Duration::from_secs(5));
        let stderr = self.stderr.lock().map(|s| s.trim().to_string()).unwrap_or_default();
        AdapterError::AdapterCrashed {
            code: status.and_then(|s| s.code()),
            stderr: if stderr.is_empty() { String::new() } else { format!("; stderr: {stderr}") },
        }
    }
}

fn wait_with_timeout(child: &mut Child, timeout: Duration) -> Option<ExitStatus> {
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status),
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
            _ => {
                let _ = child.kill();
                return child.wait().ok();
            }
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if !self.closed {
            let _ = self.send(&Message::Shutdown);
        }
        self.stdin.take();
        wait_with_timeout(&mut self.child, Duration::from_secs(2));
    }
}

/// A forecaster served by an adapter process.
pub struct ExternalForecaster {
    dims: Dims,
    name: String,
    batch_size: usize,
    request_timeout: Duration,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalForecaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalForecaster").field("name", &self.name).field("dims", &self.dims).finish()
    }
}

impl ExternalForecaster {
    /// Starts `cmd` through `sh -c` and performs the handshake.
    pub fn spawn(
        cmd: &str,
        dims: Dims,
        model_config: serde_json::Value,
        settings: &AdapterSettings,
    ) -> Result<Self, AdapterError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| AdapterError::Spawn { cmd: cmd.to_string(), source })?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let stderr_buf = Arc::new(Mutex::new(String::new()));
        if let Some(mut stderr) = child.stderr.take() {
            let buf = Arc::clone(&stderr_buf);
            thread::spawn(move || {
                let mut text = String::new();
                let _ = stderr.read_to_string(&mut text);
                if let Ok(mut b) = buf.lock() {
                    b.push_str(&text);
                }
            });
        }

        let mut session = Session {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            stderr: stderr_buf,
            next_id: 1,
            stats: SessionStats::default(),
            closed: false,
        };
        session.send(&Message::Hello {
            protocol: PROTOCOL_VERSION,
            t: dims.t,
            horizon: dims.horizon,
            n_sensors: dims.n,
            model_config,
        })?;
        let name = match session.receive(settings.handshake_timeout, AdapterError::HandshakeTimeout(settings.handshake_timeout))? {
            Message::Ready { name } => name,
            other => {
                return Err(AdapterError::ProtocolViolation {
                    reason: "expected ready".into(),
                    message: serde_json::to_string(&other).unwrap_or_default(),
                })
            }
        };
        Ok(Self {
            dims,
            name,
            batch_size: settings.batch_size.max(1),
            request_timeout: settings.request_timeout,
            session: Mutex::new(session),
        })
    }

    pub fn adapter_name(&self) -> &str {
        &self.name
    }

    pub fn stats(&self) -> SessionStats {
        self.session.lock().map(|s| s.stats).unwrap_or_default()
    }

    /// One predict round trip for a batch of windows.
    pub fn request(&self, xs: &[Matrix]) -> Result<Vec<Matrix>, AdapterError> {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        if session.closed {
            return Err(AdapterError::AdapterCrashed { code: None, stderr: "; session already closed".into() });
        }
        let id = session.next_id;
        session.next_id += 1;
        session.send(&Message::Predict { id, inputs: xs.iter().map(Matrix::to_rows).collect() })?;
        session.stats.requests += 1;
        let reply = session.receive(self.request_timeout, AdapterError::ResponseTimeout { id, timeout: self.request_timeout })?;
        let violation = |reason: String, msg: &Message| AdapterError::ProtocolViolation {
            reason,
            message: serde_json::to_string(msg).unwrap_or_default(),
        };
        let outputs = match &reply {
            Message::Prediction { id: got, outputs } if *got == id => outputs,
            Message::Prediction { id: got, .. } => return Err(violation(format!("expected id {id}, got {got}"), &reply)),
            Message::Error { message } => return Err(violation(format!("adapter error: {message}"), &reply)),
            _ => return Err(violation("expected prediction".into(), &reply)),
        };
        if outputs.len() != xs.len() {
            return Err(violation(format!("expected {} outputs, got {}", xs.len(), outputs.len()), &reply));
        }
        let mut preds = Vec::with_capacity(outputs.len());
        for out in outputs {
            match Matrix::from_rows(out) {
                Some(m) if m.shape() == (self.dims.horizon, self.dims.n) && m.is_finite() => preds.push(m),
                _ => {
                    return Err(violation(
                        format!("output shape must be [{}][{}] finite values", self.dims.horizon, self.dims.n),
                        &reply,
                    ))
                }
            }
        }
        session.stats.responses += 1;
        session.stats.predictions += preds.len() as u64;
        Ok(preds)
    }

    /// Sends shutdown and waits for the process to exit.
    pub fn shutdown(self) -> Result<Option<i32>, AdapterError> {
        let mut session = self.session.into_inner().unwrap_or_else(|e| e.into_inner());
        session.send(&Message::Shutdown)?;
        session.closed = true;
        session.stdin.take();
        Ok(wait_with_timeout(&mut session.child, Duration::from_secs(10)).and_then(|s| s.code()))
    }
}

impl Forecaster for ExternalForecaster {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.dims.check_input(x)?;
        Ok(self.request(std::slice::from_ref(x))?.pop().expect("one prediction per input"))
    }

    fn predict_batch(&self, xs: &[Matrix]) -> Result<Vec<Matrix>, ForecastError> {
        for x in xs {
            self.dims.check_input(x)?;
        }
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(self.batch_size) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_grammar() {
        let hello = Message::Hello {
            protocol: 1,
            t: 90,
            horizon: 30,
            n_sensors: 7,
            model_config: serde_json::json!({}),
        };
        assert_eq!(
            hello.to_line(),
            "{\"type\":\"hello\",\"protocol\":1,\"t\":90,\"horizon\":30,\"n_sensors\":7,\"model_config\":{}}\n"
        );
        assert_eq!(Message::Shutdown.to_line(), "{\"type\":\"shutdown\"}\n");
        let predict = Message::Predict { id: 3, inputs: vec![vec![vec![1.5, -2.0]]] };
        assert_eq!(predict.to_line(), "{\"type\":\"predict\",\"id\":3,\"inputs\":[[[1.5,-2.0]]]}\n");
        let parsed: Message = serde_json::from_str(r#"{"type":"prediction","id":3,"outputs":[[[1,2]]]}"#).unwrap();
        assert_eq!(parsed, Message::Prediction { id: 3, outputs: vec![vec![vec![1.0, 2.0]]] });
        let ready: Message = serde_json::from_str(r#"{"type":"ready","name":"persistence"}"#).unwrap();
        assert_eq!(ready, Message::Ready { name: "persistence".into() });
    }
}
