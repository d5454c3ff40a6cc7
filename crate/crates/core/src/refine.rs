//! Snaps CTC sentence boundaries to nearby voice-segment edges.

use alloc::vec::Vec;

use thiserror::Error;

use crate::align::{AlignmentResult, SentenceAlignment};
use crate::audio::AudioBuffer;
use crate::span::TimeSpan;
use crate::vad::{detect_voice, VadConfig, VadError, VoiceSegments};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error("sentence {index} span [{}, {}] is outside the {duration} s recording", span.start, span.end)]
    SpanOutOfRange { index: usize, span: TimeSpan, duration: f64 },
    #[error("invalid refine config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Vad(#[from] VadError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub vad: VadConfig,
    /// VAD runs over `[end - search_window, end + search_window]`, widened
    /// to reach `search_window` past the next sentence's start.
    pub search_window: f64,
    /// Padding added outside each refined span.
    pub margin: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { vad: VadConfig::default(), search_window: 1.0, margin: 0.05 }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        self.vad.validate()?;
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(RefineError::InvalidConfig("margin must be non-negative"));
        }
        if !(self.search_window > self.margin && self.search_window.is_finite()) {
            return Err(RefineError::InvalidConfig("search_window must exceed margin"));
        }
        Ok(())
    }
}

/// Net movement of one sentence's boundaries, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryShift {
    pub sentence_index: usize,
    pub start_shift: f64,
    pub end_shift: f64,
    /// No voice was found around the end; only margins moved it.
    pub end_without_voice: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub alignment: AlignmentResult,
    pub shifts: Vec<BoundaryShift>,
}

/// Spans are accepted up to this far past the end of the audio.
const DURATION_SLACK: f64 = 1e-6;

/// Refines boundaries: each end moves to the end of the voice segment it
/// falls in (or back to the previous segment's end when it falls in
/// silence); the next start moves to the first voice segment after it.
/// The first sentence's start moves to the onset of the segment it falls
/// in, or of the next one. Starts are searched up to `search_window` past
/// their original position, even across long pauses. Segment edges created
/// by cutting the search window are ignored. Margins are then added,
/// colliding margins split at the midpoint, and everything is clamped to
/// the recording. Scores are kept.
pub fn refine(alignment: &AlignmentResult, audio: &AudioBuffer, cfg: &RefineConfig) -> Result<Refined, RefineError> {
    cfg.validate()?;
    let duration = audio.duration();
    for (index, e) in alignment.entries.iter().enumerate() {
        if !e.span.is_valid() || e.span.end > duration + DURATION_SLACK {
            return Err(RefineError::SpanOutOfRange { index, span: e.span, duration });
        }
    }

    let n = alignment.entries.len();
    let orig_start: Vec<f64> = alignment.entries.iter().map(|e| e.span.start).collect();
    let orig_end: Vec<f64> = alignment.entries.iter().map(|e| e.span.end.min(duration)).collect();
    let mut start = orig_start.clone();
    let mut end = orig_end.clone();
    let mut no_voice = alloc::vec![false; n];
    let w = cfg.search_window;

    // the first start has no preceding end to anchor it
    if n > 0 {
        let s0 = orig_start[0];
        let win = voice_around(audio, s0, w, &cfg.vad)?;
        let inside = win.segs.segments.iter().find(|s| s.start <= s0 && s0 <= s.end);
        let after = win.segs.segments.iter().find(|s| s.start > s0);
        match (inside, after) {
            (Some(s), _) if !win.clipped_start(s) => start[0] = s.start,
            (None, Some(s)) if s.start < orig_end[0] => start[0] = s.start,
            _ => {}
        }
    }

    for i in 0..n {
        let e = orig_end[i];
        let win = voice_around(audio, e, w, &cfg.vad)?;
        let segs = &win.segs;
        let inside = segs.segments.iter().find(|s| s.start <= e && e <= s.end);
        let before = segs.segments.iter().rev().find(|s| s.end < e);
        let new_e = match (inside, before) {
            (Some(s), _) if win.clipped_end(s, cfg.vad.hop) => e,
            (Some(s), _) => s.end,
            (None, Some(s)) => s.end,
            (None, None) => {
                no_voice[i] = true;
                e
            }
        };
        end[i] = new_e.max(start[i]);

        if i + 1 < n {
            // anchored at the snapped end so a second pass sees the same frame grid;
            // reaches past the next original start across long pauses
            let reach = (orig_start[i + 1] + w).max(new_e + w);
            let around = if new_e == e && reach == e + w { win } else { voice_between(audio, new_e - w, reach, &cfg.vad)? };
            if let Some(s) = around.segs.segments.iter().find(|s| s.start > end[i]) {
                let next = s.start;
                if next < orig_end[i + 1] && (next - orig_start[i + 1]).abs() <= w {
                    start[i + 1] = next;
                }
            }
        }
    }

    for i in 0..n {
        start[i] -= cfg.margin;
        end[i] += cfg.margin;
    }
    for i in 0..n.saturating_sub(1) {
        if end[i] > start[i + 1] {
            let mid = 0.5 * (end[i] + start[i + 1]);
            end[i] = mid;
            start[i + 1] = mid;
        }
    }
    // clamp and enforce s0 <= e0 <= s1 <= e1 <= ...
    let mut floor = 0.0f64;
    for i in 0..n {
        start[i] = start[i].clamp(0.0, duration).max(floor);
        end[i] = end[i].clamp(0.0, duration).max(start[i]);
        floor = end[i];
    }

    let mut entries = Vec::with_capacity(n);
    let mut shifts = Vec::with_capacity(n);
    for (i, e) in alignment.entries.iter().enumerate() {
        entries.push(SentenceAlignment { span: TimeSpan { start: start[i], end: end[i] }, ..*e });
        shifts.push(BoundaryShift {
            sentence_index: e.sentence_index,
            start_shift: start[i] - orig_start[i],
            end_shift: end[i] - e.span.end,
            end_without_voice: no_voice[i],
        });
    }
    Ok(Refined { alignment: AlignmentResult { entries, avg_score: alignment.avg_score }, shifts })
}

/// Voice segments found in a window, with the window bounds in seconds.
struct Window {
    segs: VoiceSegments,
    lo: f64,
    hi: f64,
}

impl Window {
    /// The segment runs into the window's left edge, so its true onset is
    /// unknown.
    fn clipped_start(&self, s: &TimeSpan) -> bool {
        s.start <= self.lo
    }

    /// The segment runs into the window's right edge.
    fn clipped_end(&self, s: &TimeSpan, hop: f64) -> bool {
        s.end + hop > self.hi
    }
}

fn voice_around(audio: &AudioBuffer, t: f64, window: f64, vad: &VadConfig) -> Result<Window, RefineError> {
    voice_between(audio, t - window, t + window, vad)
}

fn voice_between(audio: &AudioBuffer, from: f64, to: f64, vad: &VadConfig) -> Result<Window, RefineError> {
    let sr = audio.sample_rate() as f64;
    let lo = audio.index_at(from);
    let hi = audio.index_at(to);
    let (lo_s, hi_s) = (lo as f64 / sr, hi as f64 / sr);
    let slice = audio.slice_seconds(lo_s, hi_s);
    let frame = libm::round(vad.frame_len * sr) as usize;
    let segs = if slice.len() < frame.max(1) { VoiceSegments::default() } else { detect_voice(&slice, vad)?.offset(lo_s) };
    // at the recording's own edges the voice really does start or stop
    let lo_edge = if lo == 0 { f64::NEG_INFINITY } else { lo_s };
    let hi_edge = if hi >= audio.len() { f64::INFINITY } else { hi_s };
    Ok(Window { segs, lo: lo_edge, hi: hi_edge })
}
