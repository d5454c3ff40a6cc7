//! Posterior providers backed by external programs, and a rayon chunk
//! executor.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Condvar, Mutex};

use bookalign_core::realign::ChunkExecutor;
use bookalign_core::{AlignmentResult, FrameRange, PosteriorMatrix, PosteriorProvider, ProviderError, RealignError};
use rayon::prelude::*;
use thiserror::Error;

use crate::ctcp::{read_posteriors, CtcpError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("command template is empty")]
    EmptyTemplate,
    #[error("command template has no {{out}} placeholder")]
    MissingOut,
    #[error("could not start {program}: {source}")]
    Spawn { program: String, source: std::io::Error },
    #[error("{program} exited with {status}: {stderr}")]
    Exit { program: String, status: std::process::ExitStatus, stderr: String },
    #[error("could not read command output: {0}")]
    Output(#[from] CtcpError),
    #[error("temporary file: {0}")]
    Temp(std::io::Error),
    #[error("{0}")]
    Mismatch(String),
}

/// Blocks callers once `limit` permits are out.
#[derive(Debug)]
pub struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(limit: usize) -> Self {
        Self { free: Mutex::new(limit.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Runs a command per requested range. The template is split on whitespace
/// (no shell) and `{wav}`, `{start_sec}`, `{end_sec}` and `{out}` are
/// substituted in every argument. The command must write a CTCP file to
/// `{out}` and exit with status 0.
///
/// The full-range matrix is fetched once at construction; it fixes the
/// frame shift, token table and frame count that later calls must match.
#[derive(Debug)]
pub struct CommandProvider {
    template: Vec<String>,
    wav: PathBuf,
    full: PosteriorMatrix,
    permits: Semaphore,
}

fn seconds(x: f64) -> String {
    format!("{x:.6}")
}

impl CommandProvider {
    pub fn new(template: &str, wav: impl Into<PathBuf>, duration: f64, max_parallel: usize) -> Result<Self, CommandError> {
        let template: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if template.is_empty() {
            return Err(CommandError::EmptyTemplate);
        }
        if !template.iter().any(|a| a.contains("{out}")) {
            return Err(CommandError::MissingOut);
        }
        let wav = wav.into();
        let full = run(&template, &wav, 0.0, duration)?;
        Ok(Self { template, wav, full, permits: Semaphore::new(max_parallel) })
    }

    pub fn full_matrix(&self) -> &PosteriorMatrix {
        &self.full
    }

    fn fetch(&self, range: FrameRange) -> Result<PosteriorMatrix, CommandError> {
        let shift = self.full.frame_shift();
        let m = {
            let _permit = self.permits.acquire();
            run(&self.template, &self.wav, range.start as f64 * shift, range.end as f64 * shift)?
        };
        if m.frame_shift() != shift || m.tokens() != self.full.tokens() || m.blank() != self.full.blank() {
            return Err(CommandError::Mismatch("frame shift or token table differs from the full-range output".into()));
        }
        let want = range.len();
        match m.frames() {
            f if f == want || f + 1 == want => Ok(m),
            f if f == want + 1 => Ok(m.slice_frames(0, want).map_err(CtcpError::from)?),
            f => Err(CommandError::Mismatch(format!("returned {f} frames for a {want}-frame range"))),
        }
    }
}

fn run(template: &[String], wav: &Path, start: f64, end: f64) -> Result<PosteriorMatrix, CommandError> {
    let dir = tempfile::tempdir().map_err(CommandError::Temp)?;
    let out = dir.path().join("posteriors.ctcp");
    let fill = |arg: &str| {
        arg.replace("{wav}", &wav.to_string_lossy())
            .replace("{start_sec}", &seconds(start))
            .replace("{end_sec}", &seconds(end))
            .replace("{out}", &out.to_string_lossy())
    };
    let program = fill(&template[0]);
    let output = Command::new(&program)
        .args(template[1..].iter().map(|a| fill(a)))
        .output()
        .map_err(|source| CommandError::Spawn { program: program.clone(), source })?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr).trim().to_string();
        return Err(CommandError::Exit { program, status: output.status, stderr });
    }
    Ok(read_posteriors(&out)?)
}

impl PosteriorProvider for CommandProvider {
    fn frame_shift(&self) -> f64 {
        self.full.frame_shift()
    }

    fn total_frames(&self) -> usize {
        self.full.frames()
    }

    fn posteriors(&self, range: FrameRange) -> Result<PosteriorMatrix, ProviderError> {
        if range.start == 0 && range.end == self.full.frames() {
            return Ok(self.full.clone());
        }
        self.fetch(range).map_err(|e| ProviderError { range, message: e.to_string() })
    }
}

/// Aligns a pass's chunks on the current rayon pool. Results keep chunk
/// order, so output does not depend on the thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl ChunkExecutor for RayonExecutor {
    fn map(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<AlignmentResult, RealignError> + Sync)) -> Vec<Result<AlignmentResult, RealignError>> {
        (0..jobs).into_par_iter().map(job).collect()
    }
}
