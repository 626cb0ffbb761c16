//! File-exchange adapter for a completer running in another process.
//!
//! A request is `input.ply` (normalized cloud with normals) followed by
//! `params.json`; the peer answers with `output.ply` in the normalized
//! frame. All files are written through a temporary name and renamed.

use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{disjoint, BeliefState, Completer, CompleterInput, FitDiagnostics};
use crate::error::{Error, Result};
use crate::files;
use crate::geometry::{denormalize_cloud, ply};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeParams {
    pub n_out: usize,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalCompleter {
    pub dir: PathBuf,
    pub timeout: Duration,
    pub poll: Duration,
}

impl ExternalCompleter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ExternalCompleter {
            dir: dir.into(),
            timeout: Duration::from_secs(60),
            poll: Duration::from_millis(20),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn input_path(&self) -> PathBuf {
        self.dir.join("input.ply")
    }

    pub fn params_path(&self) -> PathBuf {
        self.dir.join("params.json")
    }

    pub fn output_path(&self) -> PathBuf {
        self.dir.join("output.ply")
    }
}

impl Completer for ExternalCompleter {
    fn complete(&self, input: &CompleterInput, n_out: usize, seed: u64) -> Result<BeliefState> {
        input.check()?;
        files::create_dir(&self.dir)?;
        let out_path = self.output_path();
        if out_path.exists() {
            std::fs::remove_file(&out_path).map_err(|e| Error::io(&out_path, e))?;
        }
        // compare against what the peer actually reads, not the in-memory bits
        let text = ply::to_string(&input.cloud);
        let sent = ply::from_str(&text)?;
        files::write_atomic(&self.input_path(), text.as_bytes())?;
        let params = ExchangeParams {
            n_out,
            lambda: input.params.lambda,
            seed,
        };
        files::write_json(&self.params_path(), &params)?;

        let start = Instant::now();
        while !out_path.exists() {
            if start.elapsed() >= self.timeout {
                return Err(Error::Timeout {
                    path: out_path,
                    seconds: self.timeout.as_secs_f64(),
                });
            }
            thread::sleep(self.poll);
        }
        let out = ply::read(&out_path)?;
        std::fs::remove_file(&out_path).map_err(|e| Error::io(&out_path, e))?;
        if out.len() != n_out {
            return Err(Error::ContractViolation(format!(
                "expected {n_out} points, got {}",
                out.len()
            )));
        }
        if !disjoint(&sent, &out) || !disjoint(&input.cloud, &out) {
            return Err(Error::ContractViolation(
                "output reuses input points".into(),
            ));
        }
        let cloud = denormalize_cloud(&out, &input.params);
        if !disjoint(&input.measured, &cloud) {
            return Err(Error::ContractViolation(
                "output reuses measured points".into(),
            ));
        }
        Ok(BeliefState {
            cloud,
            fit: None,
            diagnostics: FitDiagnostics::default(),
            generation: 0,
        })
    }
}
