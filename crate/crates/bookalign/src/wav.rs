//! RIFF/WAVE input and output.

use std::io::{Read, Seek, Write};
use std::path::{Path, PathBuf};

use bookalign_core::{AudioBuffer, AudioError};
use hound::{SampleFormat, WavSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: unsupported format ({detail})")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{path}: corrupt header ({detail})")]
    CorruptHeader { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Audio { path: PathBuf, source: AudioError },
}

/// Sample encoding for written files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// Reads 16-bit PCM or 32-bit float WAV with one or two channels into mono.
/// Channels are averaged; 16-bit samples are scaled by 1/32768 and float
/// samples are clipped to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| WavError::Io { path: path.into(), source })?;
    decode(std::io::BufReader::new(file), path)
}

/// Like [`read_wav`] over any seekable reader; `label` names it in errors.
pub fn decode<R: Read + Seek>(reader: R, label: &Path) -> Result<AudioBuffer, WavError> {
    let reader = hound::WavReader::new(reader).map_err(|e| map_hound(e, label))?;
    let spec = reader.spec();
    let unsupported = |detail: String| WavError::UnsupportedFormat { path: label.into(), detail };
    if !(1..=2).contains(&spec.channels) {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => {
            reader.into_samples::<i16>().map(|s| s.map(|v| v as f32 / 32768.0)).collect::<Result<_, _>>().map_err(|e| map_hound(e, label))?
        }
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>().map_err(|e| map_hound(e, label))?,
        (fmt, bits) => return Err(unsupported(format!("{bits}-bit {fmt:?}"))),
    };
    let channels = spec.channels as usize;
    let mono: Vec<f32> = if channels == 1 { interleaved } else { interleaved.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect() };
    AudioBuffer::from_clipped(mono, spec.sample_rate).map_err(|source| WavError::Audio { path: label.into(), source })
}

fn map_hound(e: hound::Error, path: &Path) -> WavError {
    match e {
        hound::Error::IoError(source) => WavError::Io { path: path.into(), source },
        hound::Error::FormatError(msg) => WavError::CorruptHeader { path: path.into(), detail: msg.into() },
        hound::Error::Unsupported => WavError::UnsupportedFormat { path: path.into(), detail: "codec not supported".into() },
        other => WavError::UnsupportedFormat { path: path.into(), detail: other.to_string() },
    }
}

/// Writes mono audio.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, encoding: WavEncoding) -> Result<(), WavError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| WavError::Io { path: path.into(), source })?;
    encode(std::io::BufWriter::new(file), audio, encoding, path)
}

pub fn encode<W: Write + Seek>(writer: W, audio: &AudioBuffer, encoding: WavEncoding, label: &Path) -> Result<(), WavError> {
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels: 1, sample_rate: audio.sample_rate(), bits_per_sample, sample_format };
    let mut w = hound::WavWriter::new(writer, spec).map_err(|e| map_hound(e, label))?;
    for &s in audio.samples() {
        let r = match encoding {
            WavEncoding::Pcm16 => w.write_sample((s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            WavEncoding::Float32 => w.write_sample(s),
        };
        r.map_err(|e| map_hound(e, label))?;
    }
    w.finalize().map_err(|e| map_hound(e, label))
}
