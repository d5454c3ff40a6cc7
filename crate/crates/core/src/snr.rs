//! Voice-to-accompaniment SNR over voiced regions of separated stems.

use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::vad::{detect_voice, VadConfig, VadError, VoiceSegments};

/// Upper cap, reported when the accompaniment is silent in the regions.
pub const SNR_CAP_DB: f64 = 100.0;
/// Lower cap, reported when the voice is silent in the regions.
pub const SNR_FLOOR_DB: f64 = -100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnrError {
    #[error("stem lengths differ: voice {voice} samples @ {voice_rate} Hz, accompaniment {accomp} samples @ {accomp_rate} Hz")]
    LengthMismatch { voice: usize, voice_rate: u32, accomp: usize, accomp_rate: u32 },
    #[error("no voiced regions to measure")]
    EmptyRegions,
    #[error("threshold must be finite, got {0}")]
    NonFiniteThreshold(f64),
    #[error(transparent)]
    Vad(#[from] VadError),
}

/// SNR measurement before thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrMeasurement {
    pub snr_db: f64,
    /// Total duration of the samples that entered the sums, in seconds.
    pub voiced_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrReport {
    pub snr_db: f64,
    pub voiced_duration: f64,
    pub threshold_db: f64,
    pub pass: bool,
}

/// Pooled SNR `10·log10(Σ voice² / Σ accomp²)` over samples inside `regions`.
pub fn compute_snr(voice: &AudioBuffer, accomp: &AudioBuffer, regions: &VoiceSegments) -> Result<SnrMeasurement, SnrError> {
    if voice.len() != accomp.len() || voice.sample_rate() != accomp.sample_rate() {
        return Err(SnrError::LengthMismatch { voice: voice.len(), voice_rate: voice.sample_rate(), accomp: accomp.len(), accomp_rate: accomp.sample_rate() });
    }
    if regions.is_empty() {
        return Err(SnrError::EmptyRegions);
    }
    let (v, a) = (voice.samples(), accomp.samples());
    let mut signal = 0.0f64;
    let mut noise = 0.0f64;
    let mut count = 0usize;
    for span in &regions.segments {
        let lo = voice.index_at(span.start);
        let hi = voice.index_at(span.end).max(lo);
        for i in lo..hi {
            signal += (v[i] as f64) * (v[i] as f64);
            noise += (a[i] as f64) * (a[i] as f64);
        }
        count += hi - lo;
    }
    if count == 0 {
        return Err(SnrError::EmptyRegions);
    }
    let snr_db = if signal == 0.0 {
        SNR_FLOOR_DB
    } else if noise == 0.0 {
        SNR_CAP_DB
    } else {
        (10.0 * libm::log10(signal / noise)).clamp(SNR_FLOOR_DB, SNR_CAP_DB)
    };
    Ok(SnrMeasurement { snr_db, voiced_duration: count as f64 / voice.sample_rate() as f64 })
}

/// Applies the inclusive threshold: passes iff `snr_db >= threshold_db`.
pub fn filter_audiobook(measurement: SnrMeasurement, threshold_db: f64) -> Result<SnrReport, SnrError> {
    if !threshold_db.is_finite() {
        return Err(SnrError::NonFiniteThreshold(threshold_db));
    }
    Ok(SnrReport { snr_db: measurement.snr_db, voiced_duration: measurement.voiced_duration, threshold_db, pass: measurement.snr_db >= threshold_db })
}

/// Runs VAD on the voice stem, measures SNR in the detected regions and
/// applies the threshold.
pub fn assess_stems(voice: &AudioBuffer, accomp: &AudioBuffer, vad: &VadConfig, threshold_db: f64) -> Result<SnrReport, SnrError> {
    let regions = detect_voice(voice, vad)?;
    let m = compute_snr(voice, accomp, &regions)?;
    filter_audiobook(m, threshold_db)
}
