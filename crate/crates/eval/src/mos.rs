//! Client for an external mean-opinion-score predictor.
//!
//! The scorer contract: given one audio file path it answers with a single
//! decimal score on one line.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{bootstrap_ci, mean};
use crate::EvalError;

/// Failure of a single request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackendError {
    /// Worth retrying (timeouts, connection errors, non-zero exits).
    pub transient: bool,
    pub message: String,
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            transient: true,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            transient: false,
            message: message.into(),
        }
    }
}

pub trait MosBackend: Send + Sync {
    /// Raw response for one file.
    fn query(&self, path: &Path) -> Result<String, BackendError>;
}

#[derive(Debug, Error, PartialEq)]
pub enum MosError {
    #[error("unparseable score for `{id}`: {payload:?}")]
    Unparseable { id: String, payload: String },
    #[error("scoring failed for {}", .failures.iter().map(|(id, m)| format!("{id} ({m})")).collect::<Vec<_>>().join(", "))]
    Failed { failures: Vec<(String, String)> },
}

/// Runs `program args... <path>` and reads the score from stdout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubprocessBackend {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    pub timeout_secs: f64,
}

impl MosBackend for SubprocessBackend {
    fn query(&self, path: &Path) -> Result<String, BackendError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(path)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::fatal(format!("spawn {}: {e}", self.program.display())))?;
        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(s)) => break s,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(BackendError::transient(format!("timed out after {}s", self.timeout_secs)));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(BackendError::transient(e.to_string())),
            }
        };
        let mut out = String::new();
        if let Some(mut s) = child.stdout.take() {
            s.read_to_string(&mut out)
                .map_err(|e| BackendError::transient(e.to_string()))?;
        }
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                let _ = s.read_to_string(&mut err);
            }
            return Err(BackendError::transient(format!("{status}: {}", err.trim())));
        }
        Ok(out)
    }
}

/// POSTs the file path as plain text and reads the score from the body.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HttpBackend {
    pub url: String,
    pub timeout_secs: f64,
}

impl MosBackend for HttpBackend {
    fn query(&self, path: &Path) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(self.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&self.url)
            .content_type("text/plain")
            .send(path.display().to_string())
            .map_err(|e| BackendError::transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::transient(e.to_string()))?;
        match status {
            200..=299 => Ok(body),
            500..=599 | 408 | 429 => Err(BackendError::transient(format!("HTTP {status}"))),
            _ => Err(BackendError::fatal(format!("HTTP {status}: {}", body.trim()))),
        }
    }
}

pub struct MosClient {
    pub backend: Box<dyn MosBackend>,
    /// Extra attempts after a transient failure.
    pub retries: usize,
    /// Concurrent requests.
    pub workers: usize,
}

fn parse_score(payload: &str) -> Option<f64> {
    let mut lines = payload.lines().filter(|l| !l.trim().is_empty());
    let v: f64 = lines.next()?.trim().parse().ok()?;
    (lines.next().is_none() && v.is_finite()).then_some(v)
}

impl MosClient {
    fn score_one(&self, id: &str, path: &Path) -> Result<f64, MosError> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.backend.query(path) {
                Ok(payload) => {
                    return parse_score(&payload).ok_or_else(|| MosError::Unparseable {
                        id: id.to_string(),
                        payload,
                    })
                }
                Err(e) => {
                    log::debug!("mos {id} attempt {attempt}: {}", e.message);
                    last = e.message;
                    if !e.transient {
                        break;
                    }
                }
            }
        }
        Err(MosError::Failed {
            failures: vec![(id.to_string(), last)],
        })
    }

    /// One score per `(id, path)`, in input order. Any failure fails the
    /// whole call; every failed id is listed.
    pub fn score(&self, files: &[(String, PathBuf)]) -> Result<Vec<f64>, MosError> {
        let results: Vec<Mutex<Option<Result<f64, MosError>>>> = files.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.workers.clamp(1, files.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((id, path)) = files.get(i) else {
                        break;
                    };
                    *results[i].lock().unwrap() = Some(self.score_one(id, path));
                });
            }
        });
        let mut scores = Vec::with_capacity(files.len());
        let mut failures = Vec::new();
        for r in results {
            match r.into_inner().unwrap().expect("every file scored") {
                Ok(v) => scores.push(v),
                Err(MosError::Failed { failures: f }) => failures.extend(f),
                Err(e) => return Err(e),
            }
        }
        if failures.is_empty() {
            Ok(scores)
        } else {
            Err(MosError::Failed { failures })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosSummary {
    pub mean: f64,
    pub ci: (f64, f64),
}

/// Mean and percentile-bootstrap interval of per-file scores.
pub fn summarize(scores: &[f64], level: f64, resamples: usize, seed: u64) -> Result<MosSummary, EvalError> {
    let ci = bootstrap_ci(scores, level, resamples, seed)?;
    Ok(MosSummary { mean: mean(scores), ci })
}
