//! Energy-threshold voice activity detection with hangover.

use alloc::vec::Vec;

use thiserror::Error;

use crate::audio::{frame_energy, AudioBuffer, AudioError};
use crate::span::TimeSpan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VadError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("invalid VAD config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    /// Analysis frame length in seconds.
    pub frame_len: f64,
    /// Frame hop in seconds.
    pub hop: f64,
    /// Frames at or above this level (dBFS) are voiced.
    pub threshold_db: f64,
    /// Voiced runs shorter than this are dropped.
    pub min_voice: f64,
    /// Silent gaps shorter than this are bridged.
    pub min_silence: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self { frame_len: 0.03, hop: 0.01, threshold_db: -40.0, min_voice: 0.10, min_silence: 0.20 }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.frame_len) || !positive(self.hop) {
            return Err(VadError::InvalidConfig("frame_len and hop must be positive"));
        }
        if self.hop > self.frame_len {
            return Err(VadError::InvalidConfig("hop must not exceed frame_len"));
        }
        if !positive(self.min_voice) || !positive(self.min_silence) {
            return Err(VadError::InvalidConfig("min_voice and min_silence must be positive"));
        }
        if !self.threshold_db.is_finite() {
            return Err(VadError::InvalidConfig("threshold_db must be finite"));
        }
        Ok(())
    }
}

/// Ordered voiced intervals with `seg[i].end < seg[i + 1].start`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoiceSegments {
    pub segments: Vec<TimeSpan>,
}

impl VoiceSegments {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(TimeSpan::duration).sum()
    }

    /// Shifts every segment by `offset` seconds.
    pub fn offset(mut self, offset: f64) -> Self {
        for s in &mut self.segments {
            s.start += offset;
            s.end += offset;
        }
        self
    }

    pub fn is_well_ordered(&self) -> bool {
        self.segments.iter().all(|s| s.start <= s.end) && self.segments.windows(2).all(|w| w[0].end < w[1].start)
    }
}

/// Per-frame voiced/unvoiced decisions, before smoothing.
pub fn classify_frames(audio: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<bool>, VadError> {
    cfg.validate()?;
    let energy = frame_energy(audio, cfg.frame_len, cfg.hop)?;
    Ok(energy.into_iter().map(|e| e >= cfg.threshold_db).collect())
}

/// Detects voiced segments. A segment runs from the first voiced frame's
/// start to the last voiced frame's start plus one frame length.
pub fn detect_voice(audio: &AudioBuffer, cfg: &VadConfig) -> Result<VoiceSegments, VadError> {
    let voiced = classify_frames(audio, cfg)?;
    let (frame, step) = audio.frame_geometry(cfg.frame_len, cfg.hop)?;
    let sr = audio.sample_rate() as f64;
    let frame_secs = frame as f64 / sr;
    let hop_secs = step as f64 / sr;

    let mut runs: Vec<TimeSpan> = Vec::new();
    let mut i = 0;
    while i < voiced.len() {
        if !voiced[i] {
            i += 1;
            continue;
        }
        let first = i;
        while i + 1 < voiced.len() && voiced[i + 1] {
            i += 1;
        }
        let span = TimeSpan { start: first as f64 * hop_secs, end: i as f64 * hop_secs + frame_secs };
        match runs.last_mut() {
            Some(prev) if span.start - prev.end < cfg.min_silence => prev.end = span.end,
            _ => runs.push(span),
        }
        i += 1;
    }
    let duration = audio.duration();
    let segments = runs.into_iter().filter(|s| s.duration() >= cfg.min_voice).map(|s| TimeSpan { start: s.start, end: s.end.min(duration) }).collect();
    Ok(VoiceSegments { segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    const SR: u32 = 16000;

    /// Sine bursts at full scale over the given spans, silence elsewhere.
    fn bursts(total: f64, spans: &[(f64, f64)]) -> AudioBuffer {
        let n = (total * SR as f64) as usize;
        let mut samples = vec![0.0f32; n];
        for &(a, b) in spans {
            let (a, b) = ((a * SR as f64) as usize, (b * SR as f64) as usize);
            for (i, s) in samples.iter_mut().enumerate().take(b).skip(a) {
                *s = libm::sin(2.0 * PI * 440.0 * i as f64 / SR as f64) as f32;
            }
        }
        AudioBuffer::new(samples, SR).unwrap()
    }

    /// Independent oracle: mark every frame that overlaps a burst by at
    /// least one sample with non-negligible energy.
    fn oracle_voiced(audio: &AudioBuffer, cfg: &VadConfig) -> Vec<bool> {
        let frame = (cfg.frame_len * SR as f64).round() as usize;
        let hop = (cfg.hop * SR as f64).round() as usize;
        let s = audio.samples();
        (0..=(s.len() - frame) / hop)
            .map(|i| {
                let w = &s[i * hop..i * hop + frame];
                let mean_sq = w.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / frame as f64;
                mean_sq > 0.0 && 10.0 * mean_sq.log10() >= cfg.threshold_db
            })
            .collect()
    }

    #[test]
    fn silence_has_no_segments() {
        let audio = AudioBuffer::new(vec![0.0; SR as usize], SR).unwrap();
        assert!(detect_voice(&audio, &VadConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn single_burst_is_found() {
        let audio = bursts(3.0, &[(1.0, 2.0)]);
        let cfg = VadConfig::default();
        let frames = classify_frames(&audio, &cfg).unwrap();
        assert_eq!(frames, oracle_voiced(&audio, &cfg));
        let segs = detect_voice(&audio, &cfg).unwrap();
        assert_eq!(segs.segments.len(), 1);
        let s = segs.segments[0];
        assert!((s.start - 1.0).abs() <= cfg.frame_len, "{s:?}");
        assert!((s.end - 2.0).abs() <= cfg.frame_len, "{s:?}");
    }

    #[test]
    fn short_gap_is_bridged() {
        let audio = bursts(3.0, &[(1.0, 1.5), (1.55, 2.0)]);
        let segs = detect_voice(&audio, &VadConfig::default()).unwrap();
        assert_eq!(segs.segments.len(), 1);
    }

    #[test]
    fn long_gap_splits_and_short_runs_drop() {
        let audio = bursts(4.0, &[(0.5, 1.0), (1.5, 2.0), (3.0, 3.04)]);
        let segs = detect_voice(&audio, &VadConfig::default()).unwrap();
        assert_eq!(segs.segments.len(), 2);
        assert!(segs.is_well_ordered());
    }

    #[test]
    fn too_short_audio_errors() {
        let audio = AudioBuffer::new(vec![0.0; 10], SR).unwrap();
        assert!(matches!(detect_voice(&audio, &VadConfig::default()), Err(VadError::Audio(AudioError::EmptyAudio { .. }))));
    }

    #[test]
    fn config_validation() {
        let bad = VadConfig { hop: 0.05, ..VadConfig::default() };
        assert!(bad.validate().is_err());
        let bad = VadConfig { min_silence: 0.0, ..VadConfig::default() };
        assert!(bad.validate().is_err());
        assert!(VadConfig::default().validate().is_ok());
    }
}
