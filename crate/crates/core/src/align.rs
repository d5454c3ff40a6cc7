//! CTC segmentation: monotone alignment of a token sequence to frame-level
//! log-posteriors, and per-sentence spans and scores derived from it.
//!
//! The trellis `k[t][j]` holds the best log-probability of having emitted
//! the first `j` tokens within the first `t` frames:
//!
//! ```text
//! k[t][0] = 0                                  (leading frames are free)
//! k[0][j] = -inf                               for j >= 1
//! k[t][j] = max( k[t-1][j]   + max(p[t-1][blank], p[t-1][c_j]),   stay
//!                k[t-1][j-1] + p[t-1][c_j] )                      advance
//! ```
//!
//! The path is read back from `k[T][S]`; on ties the advance wins, which
//! places an emission at the latest possible frame. A token's emission frame
//! is the frame of its advance transition.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::posterior::{PosteriorMatrix, TokenizedSentence};
use crate::span::TimeSpan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("no sentences to align")]
    EmptySentences,
    #[error("{tokens} tokens do not fit into {frames} frames")]
    TooManyTokens { tokens: usize, frames: usize },
    #[error("token id {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("best path touches the band edge at frame {frame}, token {token}; widen the band")]
    DiagonalEscape { frame: usize, token: usize },
    #[error("no finite-probability path exists")]
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceAlignment {
    pub sentence_index: usize,
    pub span: TimeSpan,
    /// Mean log-probability of the sentence's token emissions.
    pub ctc_score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentResult {
    pub entries: Vec<SentenceAlignment>,
    pub avg_score: f64,
}

impl AlignmentResult {
    /// Wraps entries and computes `avg_score` as their mean score.
    pub fn from_entries(entries: Vec<SentenceAlignment>) -> Self {
        let avg_score = if entries.is_empty() { 0.0 } else { entries.iter().map(|e| e.ctc_score).sum::<f64>() / entries.len() as f64 };
        Self { entries, avg_score }
    }

    pub fn spans(&self) -> impl Iterator<Item = TimeSpan> + '_ {
        self.entries.iter().map(|e| e.span)
    }

    /// True when entries are ordered and spans are valid and disjoint.
    pub fn is_well_ordered(&self) -> bool {
        self.entries.iter().all(|e| e.span.is_valid())
            && self.entries.windows(2).all(|w| w[0].sentence_index < w[1].sentence_index && w[0].span.end <= w[1].span.start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AlignOptions {
    /// Half-width of the band around the trellis diagonal, in tokens.
    /// `None` computes the full trellis.
    pub band_width: Option<usize>,
}

impl AlignOptions {
    pub fn full() -> Self {
        Self { band_width: None }
    }

    pub fn banded(width: usize) -> Self {
        Self { band_width: Some(width) }
    }

    /// Full trellis up to `max_cells` cells, otherwise a band wide enough for
    /// a 10% drift from the diagonal (and never narrower than 256 tokens).
    pub fn auto(frames: usize, tokens: usize, max_cells: usize) -> Self {
        if frames.saturating_mul(tokens) <= max_cells {
            Self::full()
        } else {
            Self::banded((tokens / 10).max(256))
        }
    }
}

/// Best monotone path of a token sequence through a posterior matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPath {
    /// `k[T][S]`.
    pub score: f64,
    /// Emission frame per token, strictly increasing.
    pub emission_frames: Vec<usize>,
}

struct Band {
    lo: Vec<usize>,
    hi: Vec<usize>,
    /// Whether the band (rather than feasibility) cut each row's bounds.
    cut_lo: Vec<bool>,
    cut_hi: Vec<bool>,
}

impl Band {
    /// Token bounds (`j >= 1`) for rows `t = 1..=T`; index `t` in the vectors.
    fn new(frames: usize, tokens: usize, width: Option<usize>) -> Self {
        let mut band = Band { lo: vec![1; frames + 1], hi: vec![0; frames + 1], cut_lo: vec![false; frames + 1], cut_hi: vec![false; frames + 1] };
        for t in 1..=frames {
            let feas_lo = (tokens + t).saturating_sub(frames).max(1);
            let feas_hi = t.min(tokens);
            let (mut lo, mut hi) = (feas_lo, feas_hi);
            if let Some(w) = width {
                let center = t * tokens / frames;
                let band_lo = center.saturating_sub(w).max(1);
                let band_hi = (center + w).min(tokens);
                if band_lo > lo {
                    lo = band_lo;
                    band.cut_lo[t] = true;
                }
                if band_hi < hi {
                    hi = band_hi;
                    band.cut_hi[t] = true;
                }
            }
            band.lo[t] = lo;
            band.hi[t] = hi;
        }
        band
    }

    fn row_len(&self, t: usize) -> usize {
        (self.hi[t] + 1).saturating_sub(self.lo[t])
    }
}

/// Aligns a flat token sequence and returns the optimal path.
pub fn align_tokens(posteriors: &PosteriorMatrix, tokens: &[usize], opts: AlignOptions) -> Result<TokenPath, AlignError> {
    let frames = posteriors.frames();
    let s = tokens.len();
    let vocab = posteriors.vocab();
    let blank = posteriors.blank();
    if s == 0 {
        return Err(AlignError::EmptySentences);
    }
    if s > frames {
        return Err(AlignError::TooManyTokens { tokens: s, frames });
    }
    if let Some(&token) = tokens.iter().find(|&&c| c >= vocab) {
        return Err(AlignError::TokenOutOfRange { token, vocab });
    }

    let band = Band::new(frames, s, opts.band_width);
    let mut offsets = Vec::with_capacity(frames + 2);
    offsets.push(0usize);
    offsets.push(0usize);
    for t in 1..=frames {
        let last = offsets[t];
        offsets.push(last + band.row_len(t));
    }
    let mut advance = vec![false; offsets[frames + 1]];

    let mut prev = vec![f64::NEG_INFINITY; s + 1];
    let mut cur = vec![f64::NEG_INFINITY; s + 1];
    let (mut prev_lo, mut prev_hi) = (1usize, 0usize);
    for t in 1..=frames {
        let f = t - 1;
        let blank_lp = posteriors.get(f, blank);
        let (lo, hi) = (band.lo[t], band.hi[t]);
        let at = |row: &[f64], j: usize, lo: usize, hi: usize| -> f64 {
            if j == 0 {
                0.0
            } else if lo <= j && j <= hi {
                row[j]
            } else {
                f64::NEG_INFINITY
            }
        };
        for j in lo..=hi {
            let emit = posteriors.get(f, tokens[j - 1]);
            let stay = at(&prev, j, prev_lo, prev_hi) + blank_lp.max(emit);
            let adv = at(&prev, j - 1, prev_lo, prev_hi) + emit;
            let take_advance = adv >= stay || stay.is_nan();
            cur[j] = if take_advance { adv } else { stay };
            advance[offsets[t] + (j - lo)] = take_advance;
        }
        core::mem::swap(&mut prev, &mut cur);
        prev_lo = lo;
        prev_hi = hi;
    }

    let score = if prev_lo <= s && s <= prev_hi { prev[s] } else { f64::NEG_INFINITY };
    if score == f64::NEG_INFINITY || score.is_nan() {
        return Err(AlignError::Unreachable);
    }

    let mut emission_frames = vec![0usize; s];
    let mut j = s;
    let mut t = frames;
    while j > 0 {
        let (lo, hi) = (band.lo[t], band.hi[t]);
        debug_assert!(lo <= j && j <= hi);
        if (band.cut_lo[t] && j == lo) || (band.cut_hi[t] && j == hi) {
            return Err(AlignError::DiagonalEscape { frame: t - 1, token: j - 1 });
        }
        if advance[offsets[t] + (j - lo)] {
            emission_frames[j - 1] = t - 1;
            j -= 1;
        }
        t -= 1;
    }
    Ok(TokenPath { score, emission_frames })
}

/// Aligns sentences with the full trellis.
pub fn align(posteriors: &PosteriorMatrix, sentences: &[TokenizedSentence]) -> Result<AlignmentResult, AlignError> {
    align_with(posteriors, sentences, AlignOptions::default())
}

/// Aligns sentences and derives each sentence's span and score.
///
/// A sentence starts at the emission frame of its first token and ends one
/// frame after the emission of its last token; its score is the mean
/// log-probability of its token emissions.
pub fn align_with(posteriors: &PosteriorMatrix, sentences: &[TokenizedSentence], opts: AlignOptions) -> Result<AlignmentResult, AlignError> {
    if sentences.is_empty() {
        return Err(AlignError::EmptySentences);
    }
    let flat: Vec<usize> = sentences.iter().flat_map(|s| s.ids().iter().copied()).collect();
    let path = align_tokens(posteriors, &flat, opts)?;
    let shift = posteriors.frame_shift();

    let mut entries = Vec::with_capacity(sentences.len());
    let mut first = 0usize;
    for (i, sentence) in sentences.iter().enumerate() {
        let last = first + sentence.len() - 1;
        let frames = &path.emission_frames[first..=last];
        let ctc_score = frames.iter().zip(&flat[first..=last]).map(|(&f, &c)| posteriors.get(f, c)).sum::<f64>() / sentence.len() as f64;
        entries.push(SentenceAlignment {
            sentence_index: i,
            span: TimeSpan { start: frames[0] as f64 * shift, end: (frames[frames.len() - 1] + 1) as f64 * shift },
            ctc_score,
        });
        first = last + 1;
    }
    Ok(AlignmentResult::from_entries(entries))
}

/// Sentence indices of the `n` best-scoring entries, in sentence order.
/// Ties go to the earlier sentence.
pub fn score_sentences(result: &AlignmentResult, n: usize) -> Vec<usize> {
    let mut order: Vec<&SentenceAlignment> = result.entries.iter().collect();
    order.sort_by(|a, b| b.ctc_score.total_cmp(&a.ctc_score).then(a.sentence_index.cmp(&b.sentence_index)));
    let mut picked: Vec<usize> = order.into_iter().take(n).map(|e| e.sentence_index).collect();
    picked.sort_unstable();
    picked
}
