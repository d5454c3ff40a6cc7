#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bookalign::ctcp::write_posteriors;
use bookalign::wav::{write_wav, WavEncoding};
use bookalign_core::fixtures::{accompaniment_for_snr, make_synthetic_audiobook, SyntheticAudiobook, TonePlan};

pub const SR: u32 = 8000;

/// How a fixture book's posteriors are delivered.
#[derive(Clone, Copy)]
pub enum Source {
    File,
    /// Served by the binary's slice helper through the command provider.
    Command,
}

pub struct BookSpec {
    pub id: &'static str,
    pub seed: u64,
    pub sentences: usize,
    pub snr_db: f64,
    pub plan: TonePlan,
    pub source: Source,
    /// Replace the text with something the token table cannot spell.
    pub bad_text: bool,
}

impl BookSpec {
    pub fn new(id: &'static str, seed: u64) -> Self {
        Self { id, seed, sentences: 6, snr_db: 40.0, plan: TonePlan { noise_sigma: 0.3, ..TonePlan::default() }, source: Source::File, bad_text: false }
    }
}

/// Writes every input file of `book` into `dir` and returns its
/// `[[audiobook]]` TOML block.
pub fn write_book(dir: &Path, spec: &BookSpec) -> (SyntheticAudiobook, String) {
    let f = make_synthetic_audiobook(spec.seed, spec.sentences, SR, &spec.plan);
    let id = spec.id;
    let text = if spec.bad_text { f.text.to_uppercase() } else { f.text.clone() };
    std::fs::write(dir.join(format!("{id}.txt")), text).unwrap();
    write_wav(dir.join(format!("{id}.wav")), &f.audio, WavEncoding::Float32).unwrap();
    write_wav(dir.join(format!("{id}_voice.wav")), &f.audio, WavEncoding::Float32).unwrap();
    let accomp = accompaniment_for_snr(&f.audio, &f.truth, spec.snr_db);
    write_wav(dir.join(format!("{id}_accomp.wav")), &accomp, WavEncoding::Float32).unwrap();
    write_posteriors(&f.posteriors, dir.join(format!("{id}.ctcp"))).unwrap();
    let source = match spec.source {
        Source::File => format!("posteriors = \"{id}.ctcp\""),
        Source::Command => format!(
            "command = \"{} slice-posteriors --input {} --start-sec {{start_sec}} --end-sec {{end_sec}} --out {{out}}\"",
            env!("CARGO_BIN_EXE_bookalign"),
            dir.join(format!("{id}.ctcp")).display()
        ),
    };
    let block = format!(
        "[[audiobook]]\nid = \"{id}\"\ntext = \"{id}.txt\"\naudio = \"{id}.wav\"\nvoice_stem = \"{id}_voice.wav\"\naccompaniment_stem = \"{id}_accomp.wav\"\n{source}\n"
    );
    (f, block)
}

/// Writes `config.toml` with the given global settings and book blocks.
pub fn write_config(dir: &Path, globals: &str, blocks: &[String]) -> PathBuf {
    let path = dir.join("config.toml");
    let mut body = globals.to_string();
    body.push('\n');
    for b in blocks {
        body.push_str(b);
        body.push('\n');
    }
    std::fs::write(&path, body).unwrap();
    path
}

pub fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
