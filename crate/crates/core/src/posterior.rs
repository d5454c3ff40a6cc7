//! Frame-level CTC log-posteriors: the boundary to the acoustic model.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::span::TimeSpan;

/// Allowed range for a row's log-sum-exp.
pub const ROW_LSE_RANGE: (f64, f64) = (-0.1, 0.01);

/// Probability mass synthetic frames put on their target token.
pub const SYNTH_TARGET_MASS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("posterior invariant violated: {0}")]
    InvariantViolation(String),
    #[error("bad timeline: {0}")]
    BadTimeline(String),
    #[error("unknown characters {}", fmt_unknown(.0))]
    UnknownToken(Vec<(char, usize)>),
    #[error("sentence produced no tokens")]
    EmptySentence,
    #[error("token table is empty")]
    EmptyTokenTable,
}

fn fmt_unknown(list: &[(char, usize)]) -> String {
    let parts: Vec<String> = list.iter().map(|(c, p)| format!("{c:?}@{p}")).collect();
    parts.join(", ")
}

/// `T × V` log-probabilities, row-major, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    logp: Vec<f32>,
    frames: usize,
    frame_shift: f64,
    tokens: Vec<String>,
    blank: usize,
}

impl PosteriorMatrix {
    /// Builds and validates a matrix; `logp.len()` must equal
    /// `frames * tokens.len()`.
    pub fn new(logp: Vec<f32>, frames: usize, frame_shift: f64, tokens: Vec<String>, blank: usize) -> Result<Self, PosteriorError> {
        let m = Self { logp, frames, frame_shift, tokens, blank };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PosteriorError> {
        let bad = |msg: String| Err(PosteriorError::InvariantViolation(msg));
        let v = self.tokens.len();
        if self.frames == 0 {
            return bad("matrix has no frames".into());
        }
        if v < 2 {
            return bad(format!("vocabulary size {v} < 2"));
        }
        if self.blank >= v {
            return bad(format!("blank index {} outside vocabulary of {v}", self.blank));
        }
        if !(self.frame_shift.is_finite() && self.frame_shift > 0.0) {
            return bad(format!("frame shift {} is not positive", self.frame_shift));
        }
        if self.logp.len() != self.frames * v {
            return bad(format!("{} values for a {}x{v} matrix", self.logp.len(), self.frames));
        }
        for t in 0..self.frames {
            let row = self.row(t);
            if let Some(x) = row.iter().find(|x| x.is_nan() || **x > 0.0) {
                return bad(format!("frame {t} has entry {x} > 0"));
            }
            let lse = log_sum_exp(row.iter().map(|&x| x as f64));
            if !(ROW_LSE_RANGE.0..=ROW_LSE_RANGE.1).contains(&lse) {
                return bad(format!("frame {t} log-sum-exp {lse} is not normalized"));
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.tokens.len()
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    /// Raw row-major values.
    pub fn values(&self) -> &[f32] {
        &self.logp
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let v = self.vocab();
        &self.logp[t * v..(t + 1) * v]
    }

    #[inline]
    pub fn get(&self, t: usize, token: usize) -> f64 {
        self.logp[t * self.vocab() + token] as f64
    }

    /// Duration covered by the matrix in seconds.
    pub fn duration(&self) -> f64 {
        self.frames as f64 * self.frame_shift
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self, PosteriorError> {
        if start >= end || end > self.frames {
            return Err(PosteriorError::InvariantViolation(format!("slice {start}..{end} outside 0..{}", self.frames)));
        }
        let v = self.vocab();
        Ok(Self {
            logp: self.logp[start * v..end * v].to_vec(),
            frames: end - start,
            frame_shift: self.frame_shift,
            tokens: self.tokens.clone(),
            blank: self.blank,
        })
    }

    /// Per-frame argmax token.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.frames)
            .map(|t| {
                let row = self.row(t);
                let mut best = 0;
                for (i, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Token ids of one sentence; never empty, never the blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    token_ids: Vec<usize>,
}

impl TokenizedSentence {
    pub fn new(token_ids: Vec<usize>, vocab: usize, blank: usize) -> Result<Self, PosteriorError> {
        if token_ids.is_empty() {
            return Err(PosteriorError::EmptySentence);
        }
        if let Some(&id) = token_ids.iter().find(|&&id| id >= vocab || id == blank) {
            return Err(PosteriorError::InvariantViolation(format!("token id {id} is blank or outside 0..{vocab}")));
        }
        Ok(Self { token_ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.token_ids
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Greedy longest-match tokenization, left to right, skipping whitespace.
/// Every character no token covers is reported with its char position.
pub fn tokenize(text: &str, tokens: &[String], blank: usize) -> Result<TokenizedSentence, PosteriorError> {
    if tokens.is_empty() {
        return Err(PosteriorError::EmptyTokenTable);
    }
    let mut candidates: Vec<(usize, &str)> = tokens.iter().enumerate().filter(|(i, t)| *i != blank && !t.is_empty()).map(|(i, t)| (i, t.as_str())).collect();
    // longest first; stable sort keeps table order among equal lengths
    candidates.sort_by_key(|c| core::cmp::Reverse(c.1.len()));

    let mut ids = Vec::new();
    let mut unknown = Vec::new();
    let mut rest = text;
    let mut pos = 0usize;
    while let Some(ch) = rest.chars().next() {
        if ch.is_whitespace() {
            rest = &rest[ch.len_utf8()..];
            pos += 1;
            continue;
        }
        match candidates.iter().find(|(_, t)| rest.starts_with(t)) {
            Some(&(id, t)) => {
                ids.push(id);
                pos += t.chars().count();
                rest = &rest[t.len()..];
            }
            None => {
                unknown.push((ch, pos));
                pos += 1;
                rest = &rest[ch.len_utf8()..];
            }
        }
    }
    if !unknown.is_empty() {
        return Err(PosteriorError::UnknownToken(unknown));
    }
    TokenizedSentence::new(ids, tokens.len(), blank)
}

/// One token occupying frames `start_frame..end_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineEntry {
    pub token: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl TimelineEntry {
    pub fn span(&self, frame_shift: f64) -> TimeSpan {
        TimeSpan { start: self.start_frame as f64 * frame_shift, end: self.end_frame as f64 * frame_shift }
    }
}

/// Generates posteriors that follow `timeline`: frames inside a token's span
/// put [`SYNTH_TARGET_MASS`] on that token, all other frames on the blank,
/// the rest is spread evenly. Log-probabilities are perturbed by Gaussian
/// noise of scale `noise_sigma` and renormalized.
pub fn synth_posteriors<R: Rng + ?Sized>(
    timeline: &[TimelineEntry],
    frames: usize,
    tokens: Vec<String>,
    blank: usize,
    frame_shift: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<PosteriorMatrix, PosteriorError> {
    let v = tokens.len();
    if v < 2 || blank >= v {
        return Err(PosteriorError::InvariantViolation(format!("vocabulary {v} with blank {blank}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(PosteriorError::BadTimeline(format!("noise sigma {noise_sigma}")));
    }
    let mut target = vec![blank; frames];
    let mut prev_end = 0;
    for (i, e) in timeline.iter().enumerate() {
        if e.start_frame >= e.end_frame || e.end_frame > frames {
            return Err(PosteriorError::BadTimeline(format!("entry {i} spans {}..{} of {frames} frames", e.start_frame, e.end_frame)));
        }
        if e.start_frame < prev_end {
            return Err(PosteriorError::BadTimeline(format!("entry {i} overlaps or precedes its predecessor")));
        }
        if e.token >= v || e.token == blank {
            return Err(PosteriorError::BadTimeline(format!("entry {i} has token {}", e.token)));
        }
        target[e.start_frame..e.end_frame].fill(e.token);
        prev_end = e.end_frame;
    }

    let on = libm::log(SYNTH_TARGET_MASS);
    let off = libm::log((1.0 - SYNTH_TARGET_MASS) / (v - 1) as f64);
    let mut logp = Vec::with_capacity(frames * v);
    let mut row = vec![0.0f64; v];
    for &tgt in &target {
        for (k, x) in row.iter_mut().enumerate() {
            let base = if k == tgt { on } else { off };
            let noise: f64 = if noise_sigma > 0.0 { rng.sample::<f64, _>(StandardNormal) * noise_sigma } else { 0.0 };
            *x = base + noise;
        }
        normalize_log_row(&mut row);
        logp.extend(row.iter().map(|&x| x as f32));
    }
    PosteriorMatrix::new(logp, frames, frame_shift, tokens, blank)
}

/// Log-softmax in place.
pub(crate) fn normalize_log_row(row: &mut [f64]) {
    let lse = log_sum_exp(row.iter().copied());
    for x in row.iter_mut() {
        *x = (*x - lse).min(0.0);
    }
}
