//! Recursive split-and-realign driver.
//!
//! Each pass picks the best-scoring sentences of the current alignment as
//! anchors, freezes their spans, and re-aligns the sentences between
//! consecutive anchors against posteriors computed for just that stretch of
//! audio. Passes repeat until the average score stops improving.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::align::{align_with, score_sentences, AlignError, AlignOptions, AlignmentResult, SentenceAlignment};
use crate::posterior::{PosteriorMatrix, TokenizedSentence};
use crate::span::TimeSpan;

/// Half-open range of posterior frames on the provider's global frame grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seconds(&self, frame_shift: f64) -> TimeSpan {
        TimeSpan { start: self.start as f64 * frame_shift, end: self.end as f64 * frame_shift }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("posterior provider failed for frames {}..{}: {message}", range.start, range.end)]
pub struct ProviderError {
    pub range: FrameRange,
    pub message: String,
}

/// Source of posteriors for arbitrary stretches of one recording.
pub trait PosteriorProvider {
    /// Seconds per frame; constant across calls.
    fn frame_shift(&self) -> f64;

    /// Frames covering the whole recording.
    fn total_frames(&self) -> usize;

    /// Posteriors for `range`. The returned matrix may differ from the
    /// requested length by at most one frame.
    fn posteriors(&self, range: FrameRange) -> Result<PosteriorMatrix, ProviderError>;
}

/// Serves slices of one precomputed matrix.
#[derive(Debug, Clone)]
pub struct MatrixSliceProvider {
    matrix: PosteriorMatrix,
}

impl MatrixSliceProvider {
    pub fn new(matrix: PosteriorMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &PosteriorMatrix {
        &self.matrix
    }
}

impl PosteriorProvider for MatrixSliceProvider {
    fn frame_shift(&self) -> f64 {
        self.matrix.frame_shift()
    }

    fn total_frames(&self) -> usize {
        self.matrix.frames()
    }

    fn posteriors(&self, range: FrameRange) -> Result<PosteriorMatrix, ProviderError> {
        let end = range.end.min(self.matrix.frames());
        self.matrix.slice_frames(range.start, end).map_err(|e| ProviderError { range, message: format!("{e}") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealignConfig {
    /// Anchors picked per pass.
    pub n_best: usize,
    /// Upper bound on alignment passes, the initial one included.
    pub max_iters: usize,
    /// Stop once a pass improves the average score by less than this.
    pub min_improvement: f64,
    /// Trellis size above which alignment switches to a band.
    pub max_full_cells: usize,
}

impl Default for RealignConfig {
    fn default() -> Self {
        Self { n_best: 5, max_iters: 10, min_improvement: 1e-4, max_full_cells: 50_000_000 }
    }
}

impl RealignConfig {
    pub fn validate(&self) -> Result<(), RealignError> {
        if self.n_best == 0 {
            return Err(RealignError::InvalidConfig("n_best must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(RealignError::InvalidConfig("max_iters must be at least 1"));
        }
        if self.min_improvement.is_nan() || self.min_improvement < 0.0 {
            return Err(RealignError::InvalidConfig("min_improvement must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RealignError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    ProviderFailure(#[from] ProviderError),
    #[error("chunk of {frames} frames cannot hold its {tokens} tokens")]
    ChunkTooShort { frames: usize, tokens: usize },
    #[error("invalid realign config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealignOutcome {
    /// Best-scoring pass.
    pub result: AlignmentResult,
    /// Average score of every pass, in order; index 0 is the full-range pass.
    pub iteration_scores: Vec<f64>,
    pub best_iteration: usize,
}

/// Runs the independent chunk alignments of one pass.
pub trait ChunkExecutor {
    fn map(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<AlignmentResult, RealignError> + Sync)) -> Vec<Result<AlignmentResult, RealignError>>;
}

/// Runs chunks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChunkExecutor for Sequential {
    fn map(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<AlignmentResult, RealignError> + Sync)) -> Vec<Result<AlignmentResult, RealignError>> {
        (0..jobs).map(job).collect()
    }
}

/// [`recursive_align_with`] on the calling thread.
pub fn recursive_align<P: PosteriorProvider + Sync>(
    provider: &P,
    sentences: &[TokenizedSentence],
    cfg: &RealignConfig,
) -> Result<RealignOutcome, RealignError> {
    recursive_align_with(provider, sentences, cfg, &Sequential)
}

pub fn recursive_align_with<P, E>(provider: &P, sentences: &[TokenizedSentence], cfg: &RealignConfig, exec: &E) -> Result<RealignOutcome, RealignError>
where
    P: PosteriorProvider + Sync,
    E: ChunkExecutor + ?Sized,
{
    cfg.validate()?;
    if sentences.is_empty() {
        return Err(AlignError::EmptySentences.into());
    }
    let full = FrameRange { start: 0, end: provider.total_frames() };
    let matrix = provider.posteriors(full)?;
    let tokens: usize = sentences.iter().map(TokenizedSentence::len).sum();
    let opts = AlignOptions::auto(matrix.frames(), tokens, cfg.max_full_cells);
    let mut current = align_with(&matrix, sentences, opts)?;
    drop(matrix);

    let mut scores = alloc::vec![current.avg_score];
    let mut best = current.clone();
    let mut best_iteration = 0;
    for iteration in 1..cfg.max_iters {
        let next = realign_pass(provider, sentences, &current, cfg, exec)?;
        let improvement = next.avg_score - current.avg_score;
        scores.push(next.avg_score);
        if next.avg_score > best.avg_score {
            best = next.clone();
            best_iteration = iteration;
        }
        current = next;
        // a NaN improvement also stops
        if improvement.is_nan() || improvement < cfg.min_improvement {
            break;
        }
    }
    Ok(RealignOutcome { result: best, iteration_scores: scores, best_iteration })
}

#[derive(Debug, Clone)]
struct Chunk {
    frames: FrameRange,
    sentences: Range<usize>,
    /// Positions in the anchor list of the delimiting anchors.
    left: Option<usize>,
    right: Option<usize>,
}

fn to_frame(seconds: f64, shift: f64) -> usize {
    let f = libm::round(seconds / shift);
    if f <= 0.0 {
        0
    } else {
        f as usize
    }
}

fn chunks_between(anchors: &[usize], current: &AlignmentResult, n: usize, total: usize, shift: f64) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut sent_lo = 0usize;
    let mut frame_lo = 0usize;
    let mut left = None;
    for (k, &a) in anchors.iter().enumerate() {
        let span = current.entries[a].span;
        let frame_hi = to_frame(span.start, shift).max(frame_lo).min(total);
        if a > sent_lo {
            out.push(Chunk { frames: FrameRange { start: frame_lo, end: frame_hi }, sentences: sent_lo..a, left, right: Some(k) });
        }
        sent_lo = a + 1;
        frame_lo = to_frame(span.end, shift).max(frame_hi).min(total);
        left = Some(k);
    }
    if sent_lo < n {
        out.push(Chunk { frames: FrameRange { start: frame_lo, end: total }, sentences: sent_lo..n, left, right: None });
    }
    out
}

fn realign_pass<P, E>(
    provider: &P,
    sentences: &[TokenizedSentence],
    current: &AlignmentResult,
    cfg: &RealignConfig,
    exec: &E,
) -> Result<AlignmentResult, RealignError>
where
    P: PosteriorProvider + Sync,
    E: ChunkExecutor + ?Sized,
{
    let shift = provider.frame_shift();
    let total = provider.total_frames();
    let n = sentences.len();
    let mut anchors = score_sentences(current, cfg.n_best);

    loop {
        let chunks = chunks_between(&anchors, current, n, total, shift);
        let token_count = |c: &Chunk| sentences[c.sentences.clone()].iter().map(TokenizedSentence::len).sum::<usize>();

        if let Some(c) = chunks.iter().find(|c| token_count(c) > c.frames.len()) {
            match c.right.or(c.left) {
                Some(k) => {
                    anchors.remove(k);
                    continue;
                }
                None => return Err(RealignError::ChunkTooShort { frames: c.frames.len(), tokens: token_count(c) }),
            }
        }

        let job = |i: usize| -> Result<AlignmentResult, RealignError> {
            let c = &chunks[i];
            let matrix = provider.posteriors(c.frames)?;
            let part = &sentences[c.sentences.clone()];
            let tokens = part.iter().map(TokenizedSentence::len).sum::<usize>();
            if tokens > matrix.frames() {
                return Err(RealignError::ChunkTooShort { frames: matrix.frames(), tokens });
            }
            let opts = AlignOptions::auto(matrix.frames(), tokens, cfg.max_full_cells);
            Ok(align_with(&matrix, part, opts)?)
        };
        let results = exec.map(chunks.len(), &job);

        let mut retry = None;
        for (c, r) in chunks.iter().zip(&results) {
            match r {
                Err(RealignError::ChunkTooShort { frames, tokens }) => {
                    retry = Some((c.right.or(c.left), *frames, *tokens));
                    break;
                }
                Err(e) => return Err(e.clone()),
                Ok(_) => {}
            }
        }
        if let Some((anchor, frames, tokens)) = retry {
            match anchor {
                Some(k) => {
                    anchors.remove(k);
                    continue;
                }
                None => return Err(RealignError::ChunkTooShort { frames, tokens }),
            }
        }

        let mut entries: Vec<Option<SentenceAlignment>> = alloc::vec![None; n];
        for &a in &anchors {
            entries[a] = Some(current.entries[a]);
        }
        for (c, r) in chunks.iter().zip(results) {
            let part = r?;
            let offset = c.frames.start as f64 * shift;
            for e in part.entries {
                let idx = c.sentences.start + e.sentence_index;
                entries[idx] = Some(SentenceAlignment {
                    sentence_index: idx,
                    span: TimeSpan { start: e.span.start + offset, end: e.span.end + offset },
                    ctc_score: e.ctc_score,
                });
            }
        }
        let entries = entries.into_iter().map(|e| e.expect("every sentence is an anchor or inside a chunk")).collect();
        return Ok(AlignmentResult::from_entries(entries));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{synth_posteriors, TimelineEntry};
    use alloc::string::ToString;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tokens() -> Vec<String> {
        ["_", "a", "b", "c"].iter().map(|s| s.to_string()).collect()
    }

    /// Sentences of three tokens each, one token every 4 frames, 10 frames
    /// of blank between sentences.
    fn layout(n: usize) -> (Vec<TokenizedSentence>, Vec<TimelineEntry>, usize) {
        let mut sentences = Vec::new();
        let mut timeline = Vec::new();
        let mut frame = 5;
        for i in 0..n {
            let ids = vec![1 + i % 3, 1 + (i + 1) % 3, 1 + (i + 2) % 3];
            for &id in &ids {
                timeline.push(TimelineEntry { token: id, start_frame: frame, end_frame: frame + 2 });
                frame += 4;
            }
            sentences.push(TokenizedSentence::new(ids, 4, 0).unwrap());
            frame += 10;
        }
        (sentences, timeline, frame + 5)
    }

    #[test]
    fn perfect_posteriors_converge_after_one_realignment() {
        let (sentences, timeline, frames) = layout(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = synth_posteriors(&timeline, frames, tokens(), 0, 0.04, 0.0, &mut rng).unwrap();
        let provider = MatrixSliceProvider::new(m);
        let out = recursive_align(&provider, &sentences, &RealignConfig::default()).unwrap();
        assert_eq!(out.iteration_scores.len(), 2);
        assert!((out.iteration_scores[1] - out.iteration_scores[0]).abs() < 1e-4);
        assert!(out.result.is_well_ordered());
        assert_eq!(out.result.entries.len(), 8);
    }

    #[test]
    fn max_iters_one_is_initial_alignment_only() {
        let (sentences, timeline, frames) = layout(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = synth_posteriors(&timeline, frames, tokens(), 0, 0.04, 0.5, &mut rng).unwrap();
        let provider = MatrixSliceProvider::new(m.clone());
        let cfg = RealignConfig { max_iters: 1, ..RealignConfig::default() };
        let out = recursive_align(&provider, &sentences, &cfg).unwrap();
        assert_eq!(out.iteration_scores.len(), 1);
        assert_eq!(out.result, crate::align::align(&m, &sentences).unwrap());
    }

    #[test]
    fn chunks_cover_non_anchor_sentences() {
        let entries =
            (0..6).map(|i| SentenceAlignment { sentence_index: i, span: TimeSpan { start: i as f64, end: i as f64 + 0.5 }, ctc_score: -1.0 }).collect();
        let cur = AlignmentResult::from_entries(entries);
        let chunks = chunks_between(&[1, 2, 4], &cur, 6, 70, 0.1);
        let ranges: Vec<_> = chunks.iter().map(|c| (c.sentences.clone(), c.frames.start, c.frames.end)).collect();
        assert_eq!(ranges, vec![(0..1, 0, 10), (3..4, 25, 40), (5..6, 45, 70)]);
        assert_eq!((chunks[1].left, chunks[1].right), (Some(1), Some(2)));
    }

    struct Failing;

    impl PosteriorProvider for Failing {
        fn frame_shift(&self) -> f64 {
            0.04
        }
        fn total_frames(&self) -> usize {
            10
        }
        fn posteriors(&self, range: FrameRange) -> Result<PosteriorMatrix, ProviderError> {
            Err(ProviderError { range, message: "boom".into() })
        }
    }

    #[test]
    fn provider_failure_propagates() {
        let s = vec![TokenizedSentence::new(vec![1], 4, 0).unwrap()];
        let err = recursive_align(&Failing, &s, &RealignConfig::default()).unwrap_err();
        assert!(matches!(err, RealignError::ProviderFailure(ProviderError { range: FrameRange { start: 0, end: 10 }, .. })));
    }

    #[test]
    fn invalid_config() {
        let s = vec![TokenizedSentence::new(vec![1], 4, 0).unwrap()];
        let cfg = RealignConfig { n_best: 0, ..RealignConfig::default() };
        assert!(matches!(recursive_align(&Failing, &s, &cfg), Err(RealignError::InvalidConfig(_))));
    }
}
