//! `CTCP` posterior files.
//!
//! Layout, little-endian: magic `CTCP`, version `u32` (1), frames `u64`,
//! vocabulary size `u32`, blank index `u32`, frame shift `f64`, then each
//! token as a `u32` byte length followed by UTF-8, then `frames * vocab`
//! `f32` log-probabilities in row-major order.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use bookalign_core::{PosteriorError, PosteriorMatrix};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CTCP";
pub const VERSION: u32 = 1;
/// Bytes before the token table.
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CtcpError {
    #[error("not a CTCP file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("CTCP version {0} is not supported")]
    VersionUnsupported(u32),
    #[error("file ends early while reading {0}")]
    TruncatedFile(&'static str),
    #[error("posterior data is invalid: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<PosteriorError> for CtcpError {
    fn from(e: PosteriorError) -> Self {
        CtcpError::InvariantViolation(e.to_string())
    }
}

/// Exact size of the encoded matrix.
pub fn encoded_len(m: &PosteriorMatrix) -> usize {
    HEADER_LEN + m.tokens().iter().map(|t| 4 + t.len()).sum::<usize>() + 4 * m.values().len()
}

pub fn write_to<W: Write>(mut w: W, m: &PosteriorMatrix) -> Result<(), CtcpError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.frames() as u64).to_le_bytes())?;
    w.write_all(&(m.vocab() as u32).to_le_bytes())?;
    w.write_all(&(m.blank() as u32).to_le_bytes())?;
    w.write_all(&m.frame_shift().to_le_bytes())?;
    for t in m.tokens() {
        let len = u32::try_from(t.len()).map_err(|_| CtcpError::InvariantViolation("token longer than 4 GiB".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(t.as_bytes())?;
    }
    for v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), CtcpError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CtcpError::TruncatedFile(what),
        _ => CtcpError::Io(e),
    })
}

fn take<const N: usize, R: Read>(r: &mut R, what: &'static str) -> Result<[u8; N], CtcpError> {
    let mut b = [0u8; N];
    fill(r, &mut b, what)?;
    Ok(b)
}

/// Decodes one matrix and checks its invariants. Bytes after the matrix are
/// an error.
pub fn read_from<R: Read>(mut r: R) -> Result<PosteriorMatrix, CtcpError> {
    let magic = take::<4, _>(&mut r, "magic")?;
    if &magic != MAGIC {
        return Err(CtcpError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(take(&mut r, "version")?);
    if version != VERSION {
        return Err(CtcpError::VersionUnsupported(version));
    }
    let frames = u64::from_le_bytes(take(&mut r, "frame count")?);
    let vocab = u32::from_le_bytes(take(&mut r, "vocabulary size")?) as usize;
    let blank = u32::from_le_bytes(take(&mut r, "blank index")?) as usize;
    let frame_shift = f64::from_le_bytes(take(&mut r, "frame shift")?);

    let mut tokens = Vec::with_capacity(vocab.min(1 << 16));
    for _ in 0..vocab {
        let len = u32::from_le_bytes(take(&mut r, "token length")?) as usize;
        let mut bytes = Vec::new();
        (&mut r).take(len as u64).read_to_end(&mut bytes)?;
        if bytes.len() < len {
            return Err(CtcpError::TruncatedFile("token text"));
        }
        tokens.push(String::from_utf8(bytes).map_err(|_| CtcpError::InvariantViolation("token is not UTF-8".into()))?);
    }

    let frames = usize::try_from(frames).map_err(|_| CtcpError::InvariantViolation("frame count overflows".into()))?;
    let cells = frames.checked_mul(vocab).ok_or_else(|| CtcpError::InvariantViolation("matrix size overflows".into()))?;
    let mut logp = Vec::with_capacity(cells.min(1 << 24));
    let mut row = vec![0u8; 4 * vocab];
    for _ in 0..frames {
        fill(&mut r, &mut row, "log-probabilities")?;
        logp.extend(row.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(CtcpError::InvariantViolation("trailing bytes after matrix".into()));
    }
    Ok(PosteriorMatrix::new(logp, frames, frame_shift, tokens, blank)?)
}

pub fn write_posteriors(m: &PosteriorMatrix, path: impl AsRef<Path>) -> Result<(), CtcpError> {
    write_to(BufWriter::new(std::fs::File::create(path)?), m)
}

pub fn read_posteriors(path: impl AsRef<Path>) -> Result<PosteriorMatrix, CtcpError> {
    read_from(BufReader::new(std::fs::File::open(path)?))
}
