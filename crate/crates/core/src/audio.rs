use alloc::vec::Vec;

use thiserror::Error;

/// Energy reported for frames with zero RMS.
pub const DBFS_FLOOR: f64 = -120.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("audio has {samples} samples, fewer than one frame of {frame} samples")]
    EmptyAudio { samples: usize, frame: usize },
    #[error("invalid framing: frame {frame_len} s, hop {hop} s at {sample_rate} Hz")]
    InvalidFraming { frame_len: f64, hop: f64, sample_rate: u32 },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample {index} = {value} is outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f32 },
}

/// Mono PCM audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, s)| !(-1.0..=1.0).contains(*s)) {
            return Err(AudioError::SampleOutOfRange { index, value });
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a buffer, clipping samples into `[-1, 1]` (NaN becomes 0).
    pub fn from_clipped(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        let samples = samples.into_iter().map(|s| if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) }).collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sample index for a time in seconds, clamped to `[0, len]`.
    pub fn index_at(&self, seconds: f64) -> usize {
        let idx = libm::round(seconds * self.sample_rate as f64);
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.samples.len())
        }
    }

    /// Copy of the samples between two times (clamped to the buffer).
    pub fn slice_seconds(&self, start: f64, end: f64) -> AudioBuffer {
        let a = self.index_at(start);
        let b = self.index_at(end).max(a);
        AudioBuffer { samples: self.samples[a..b].to_vec(), sample_rate: self.sample_rate }
    }

    /// Frame and hop sizes in samples for the given durations.
    pub fn frame_geometry(&self, frame_len: f64, hop: f64) -> Result<(usize, usize), AudioError> {
        let invalid = AudioError::InvalidFraming { frame_len, hop, sample_rate: self.sample_rate };
        if !(frame_len.is_finite() && hop.is_finite()) || hop <= 0.0 || hop > frame_len {
            return Err(invalid);
        }
        let sr = self.sample_rate as f64;
        let frame = libm::round(frame_len * sr);
        let step = libm::round(hop * sr);
        if frame < 1.0 || step < 1.0 {
            return Err(invalid);
        }
        Ok((frame as usize, step as usize))
    }
}

/// Converts an RMS amplitude to dBFS, flooring silence at [`DBFS_FLOOR`].
pub fn rms_to_dbfs(rms: f64) -> f64 {
    if rms > 0.0 {
        (20.0 * libm::log10(rms)).max(DBFS_FLOOR)
    } else {
        DBFS_FLOOR
    }
}

/// Per-frame RMS level in dBFS without padding: `(N - L) / H + 1` frames.
pub fn frame_energy(audio: &AudioBuffer, frame_len: f64, hop: f64) -> Result<Vec<f64>, AudioError> {
    let (frame, step) = audio.frame_geometry(frame_len, hop)?;
    let n = audio.len();
    if n < frame {
        return Err(AudioError::EmptyAudio { samples: n, frame });
    }
    let count = (n - frame) / step + 1;
    let samples = audio.samples();
    Ok((0..count)
        .map(|i| {
            let window = &samples[i * step..i * step + frame];
            let sum: f64 = window.iter().map(|&s| (s as f64) * (s as f64)).sum();
            rms_to_dbfs(libm::sqrt(sum / frame as f64))
        })
        .collect())
}
