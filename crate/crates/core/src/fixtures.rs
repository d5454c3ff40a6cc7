//! Deterministic synthetic audiobooks with known ground truth.
//!
//! Sentences are tone bursts separated by silence, all placed on the
//! posterior frame grid so that audio, text, timeline and posteriors agree
//! exactly. Each sentence's tokens are short spikes spread evenly across the
//! burst, the first starting at the burst onset and the last ending at its
//! offset.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioBuffer;
use crate::posterior::{synth_posteriors, tokenize, PosteriorMatrix, TimelineEntry, TokenizedSentence};
use crate::realign::{FrameRange, PosteriorProvider, ProviderError};
use crate::span::TimeSpan;
use crate::text::{parse_plain_text, ParseRules, StructuredBook};

pub const BLANK_TOKEN: &str = "<blank>";

/// Token table used by fixtures: blank, `a`..`z`, `.`.
pub fn fixture_tokens() -> Vec<String> {
    let mut t = vec![BLANK_TOKEN.to_string()];
    t.extend(('a'..='z').map(|c| c.to_string()));
    t.push(".".to_string());
    t
}

/// Layout of a synthetic audiobook. Durations are in posterior frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TonePlan {
    pub frame_shift: f64,
    pub lead_frames: (usize, usize),
    pub tone_frames: (usize, usize),
    pub gap_frames: (usize, usize),
    pub tail_frames: usize,
    pub tokens_per_sentence: (usize, usize),
    /// Frames each token spike occupies.
    pub token_frames: usize,
    pub amplitude: f32,
    pub noise_sigma: f64,
}

impl Default for TonePlan {
    fn default() -> Self {
        Self {
            frame_shift: 0.04,
            lead_frames: (25, 50),
            tone_frames: (75, 125),
            gap_frames: (25, 50),
            tail_frames: 25,
            tokens_per_sentence: (6, 12),
            token_frames: 2,
            amplitude: 0.5,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAudiobook {
    pub audio: AudioBuffer,
    /// The plain text the book was parsed from.
    pub text: String,
    pub book: StructuredBook,
    /// True voiced span of each sentence.
    pub truth: Vec<TimeSpan>,
    /// Token spikes behind the posteriors.
    pub timeline: Vec<TimelineEntry>,
    pub posteriors: PosteriorMatrix,
    pub sentences: Vec<TokenizedSentence>,
}

impl SyntheticAudiobook {
    pub fn frame_shift(&self) -> f64 {
        self.posteriors.frame_shift()
    }

    /// True span of each sentence in frames.
    pub fn truth_frames(&self) -> Vec<FrameRange> {
        let shift = self.frame_shift();
        self.truth.iter().map(|s| FrameRange { start: libm::round(s.start / shift) as usize, end: libm::round(s.end / shift) as usize }).collect()
    }
}

fn pick<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Builds an audiobook of `n_sentences` tone bursts. Identical arguments give
/// identical output.
///
/// # Panics
///
/// If `n_sentences` is zero, or the plan's bursts are too short for their
/// tokens, or one posterior frame is not a whole number of samples.
pub fn make_synthetic_audiobook(seed: u64, n_sentences: usize, sample_rate: u32, plan: &TonePlan) -> SyntheticAudiobook {
    assert!(n_sentences >= 1, "need at least one sentence");
    let spf_f = plan.frame_shift * sample_rate as f64;
    let spf = libm::round(spf_f) as usize;
    assert!((spf_f - spf as f64).abs() < 1e-9 && spf > 0, "frame shift must be a whole number of samples");
    assert!(plan.tone_frames.0 >= plan.tokens_per_sentence.1 * plan.token_frames, "bursts too short for their tokens");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = fixture_tokens();
    let letters: Vec<char> = ('a'..='z').collect();

    let mut frame = pick(&mut rng, plan.lead_frames);
    let mut truth_frames = Vec::with_capacity(n_sentences);
    let mut texts = Vec::with_capacity(n_sentences);
    for i in 0..n_sentences {
        let len = pick(&mut rng, plan.tone_frames);
        truth_frames.push((frame, frame + len));
        frame += len;
        if i + 1 < n_sentences {
            frame += pick(&mut rng, plan.gap_frames);
        }
        let n_tokens = pick(&mut rng, plan.tokens_per_sentence).max(2);
        let mut s = String::new();
        let mut prev = '.';
        for _ in 0..n_tokens - 1 {
            let mut c = letters[rng.random_range(0..letters.len())];
            while c == prev {
                c = letters[rng.random_range(0..letters.len())];
            }
            s.push(c);
            prev = c;
        }
        s.push('.');
        texts.push(s);
    }
    let total_frames = frame + plan.tail_frames;

    // 1-3 sentences per paragraph, 4 paragraphs per chapter
    let mut text = String::new();
    let mut i = 0;
    let mut paragraphs = 0;
    while i < n_sentences {
        let take = rng.random_range(1..=3usize).min(n_sentences - i);
        if paragraphs > 0 {
            text.push_str(if paragraphs % 4 == 0 { "\n\n" } else { "\n" });
        }
        text.push('\u{3000}');
        text.push_str(&texts[i..i + take].join(" "));
        i += take;
        paragraphs += 1;
    }
    text.push('\n');
    let book = parse_plain_text(&text, &ParseRules::default()).expect("fixture text parses");
    debug_assert_eq!(book.sentence_count(), n_sentences);

    let mut samples = vec![0.0f32; total_frames * spf];
    for (k, &(a, b)) in truth_frames.iter().enumerate() {
        let freq = 180.0 + 35.0 * (k % 20) as f64;
        for (n, x) in samples.iter_mut().enumerate().take(b * spf).skip(a * spf) {
            let t = n as f64 / sample_rate as f64;
            *x = (plan.amplitude as f64 * libm::sin(2.0 * PI * freq * t)) as f32;
        }
    }
    let audio = AudioBuffer::new(samples, sample_rate).expect("tone amplitude within [-1, 1]");

    let mut timeline = Vec::new();
    let mut sentences = Vec::with_capacity(n_sentences);
    for (text, &(a, b)) in texts.iter().zip(&truth_frames) {
        let tok = tokenize(text, &tokens, 0).expect("fixture text uses fixture tokens");
        let n = tok.len();
        let span = b - a - plan.token_frames;
        for (j, &id) in tok.ids().iter().enumerate() {
            let start = a + if n > 1 { libm::round((j * span) as f64 / (n - 1) as f64) as usize } else { 0 };
            timeline.push(TimelineEntry { token: id, start_frame: start, end_frame: start + plan.token_frames });
        }
        sentences.push(tok);
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let posteriors =
        synth_posteriors(&timeline, total_frames, tokens, 0, plan.frame_shift, plan.noise_sigma, &mut noise_rng).expect("fixture timeline is well-formed");

    let truth = truth_frames.iter().map(|&(a, b)| TimeSpan { start: a as f64 * plan.frame_shift, end: b as f64 * plan.frame_shift }).collect();

    SyntheticAudiobook { audio, text, book, truth, timeline, posteriors, sentences }
}

/// Accompaniment stem: a steady low tone whose power over `regions` sits
/// `snr_db` below the voice's power there.
pub fn accompaniment_for_snr(voice: &AudioBuffer, regions: &[TimeSpan], snr_db: f64) -> AudioBuffer {
    let s = voice.samples();
    let mut power = 0.0;
    let mut count = 0usize;
    for r in regions {
        let (a, b) = (voice.index_at(r.start), voice.index_at(r.end));
        power += s[a..b].iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
        count += b - a;
    }
    let power = power / count.max(1) as f64;
    let amplitude = libm::sqrt(2.0 * power / libm::pow(10.0, snr_db / 10.0));
    let sr = voice.sample_rate() as f64;
    let samples = (0..voice.len()).map(|n| (amplitude * libm::sin(2.0 * PI * 97.0 * n as f64 / sr)) as f32).collect();
    AudioBuffer::from_clipped(samples, voice.sample_rate()).expect("positive sample rate")
}

/// Regenerates posteriors for any requested range from a fixed timeline,
/// with noise that depends on how long the range is: ranges shorter than
/// `short_range_secs` get `short_sigma`, longer ones `long_sigma`. This
/// mimics an acoustic model that degrades on long inputs.
#[derive(Debug, Clone)]
pub struct RangeNoiseProvider {
    pub timeline: Vec<TimelineEntry>,
    pub total_frames: usize,
    pub frame_shift: f64,
    pub short_range_secs: f64,
    pub short_sigma: f64,
    pub long_sigma: f64,
    pub seed: u64,
}

impl RangeNoiseProvider {
    pub fn for_audiobook(book: &SyntheticAudiobook, short_range_secs: f64, short_sigma: f64, long_sigma: f64, seed: u64) -> Self {
        Self {
            timeline: book.timeline.clone(),
            total_frames: book.posteriors.frames(),
            frame_shift: book.frame_shift(),
            short_range_secs,
            short_sigma,
            long_sigma,
            seed,
        }
    }

    pub fn sigma_for(&self, range: FrameRange) -> f64 {
        if (range.len() as f64) * self.frame_shift < self.short_range_secs {
            self.short_sigma
        } else {
            self.long_sigma
        }
    }
}

impl PosteriorProvider for RangeNoiseProvider {
    fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    fn total_frames(&self) -> usize {
        self.total_frames
    }

    fn posteriors(&self, range: FrameRange) -> Result<PosteriorMatrix, ProviderError> {
        if range.is_empty() || range.end > self.total_frames {
            return Err(ProviderError { range, message: format!("range outside 0..{}", self.total_frames) });
        }
        let local: Vec<TimelineEntry> = self
            .timeline
            .iter()
            .filter(|e| e.end_frame > range.start && e.start_frame < range.end)
            .map(|e| TimelineEntry {
                token: e.token,
                start_frame: e.start_frame.max(range.start) - range.start,
                end_frame: e.end_frame.min(range.end) - range.start,
            })
            .collect();
        let seed = self.seed ^ ((range.start as u64) << 32) ^ range.end as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        synth_posteriors(&local, range.len(), fixture_tokens(), 0, self.frame_shift, self.sigma_for(range), &mut rng)
            .map_err(|e| ProviderError { range, message: format!("{e}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vad::{detect_voice, VadConfig};

    #[test]
    fn deterministic() {
        let a = make_synthetic_audiobook(11, 4, 8000, &TonePlan::default());
        let b = make_synthetic_audiobook(11, 4, 8000, &TonePlan::default());
        assert_eq!(a, b);
        let c = make_synthetic_audiobook(12, 4, 8000, &TonePlan::default());
        assert_ne!(a.audio, c.audio);
    }

    #[test]
    fn parts_agree() {
        let f = make_synthetic_audiobook(5, 7, 8000, &TonePlan::default());
        assert_eq!(f.book.sentence_count(), 7);
        assert_eq!(f.sentences.len(), 7);
        assert_eq!(f.truth.len(), 7);
        assert!((f.audio.duration() - f.posteriors.duration()).abs() < 1e-9);
        let tokens: usize = f.sentences.iter().map(|s| s.len()).sum();
        assert_eq!(f.timeline.len(), tokens);
        for (node, s) in f.book.sentences().zip(&f.sentences) {
            assert_eq!(tokenize(&node.text, &fixture_tokens(), 0).unwrap(), *s);
        }
    }

    #[test]
    fn single_sentence_vad_matches_truth() {
        let f = make_synthetic_audiobook(2, 1, 16000, &TonePlan::default());
        let cfg = VadConfig::default();
        let segs = detect_voice(&f.audio, &cfg).unwrap();
        assert_eq!(segs.segments.len(), 1);
        let (got, want) = (segs.segments[0], f.truth[0]);
        assert!((got.start - want.start).abs() <= cfg.frame_len, "{got:?} vs {want:?}");
        assert!((got.end - want.end).abs() <= cfg.frame_len, "{got:?} vs {want:?}");
    }

    #[test]
    fn range_provider_is_deterministic_per_range() {
        let f = make_synthetic_audiobook(2, 3, 8000, &TonePlan::default());
        let p = RangeNoiseProvider::for_audiobook(&f, 30.0, 0.2, 1.0, 9);
        let r = FrameRange { start: 10, end: 200 };
        assert_eq!(p.posteriors(r).unwrap(), p.posteriors(r).unwrap());
        assert_eq!(p.posteriors(r).unwrap().frames(), 190);
        assert!(p.posteriors(FrameRange { start: 0, end: p.total_frames + 1 }).is_err());
    }
}
