//! TOML pipeline configuration.
//!
//! ```toml
//! output_dir = "corpus"
//! snr_threshold_db = 20.0
//! min_avg_ctc_score = -4.0   # optional
//! parallelism = 4            # optional
//! cut_audio = false          # optional
//!
//! [vad]                      # optional sections: vad, realign, refine, parse, report
//! threshold_db = -40.0
//!
//! [[audiobook]]
//! id = "kumo"
//! text = "kumo.txt"
//! audio = "kumo.wav"
//! voice_stem = "kumo_voice.wav"
//! accompaniment_stem = "kumo_accomp.wav"
//! posteriors = "kumo.ctcp"   # or: command = "asr-ctc {wav} {start_sec} {end_sec} {out}"
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use bookalign_core::{ParseRules, RealignConfig, RefineConfig, VadConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("audiobook {id}: {field} path {path} does not exist")]
    MissingPath { id: String, field: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VadSection {
    pub frame_len: f64,
    pub hop: f64,
    pub threshold_db: f64,
    pub min_voice: f64,
    pub min_silence: f64,
}

impl Default for VadSection {
    fn default() -> Self {
        let d = VadConfig::default();
        Self { frame_len: d.frame_len, hop: d.hop, threshold_db: d.threshold_db, min_voice: d.min_voice, min_silence: d.min_silence }
    }
}

impl From<&VadSection> for VadConfig {
    fn from(v: &VadSection) -> Self {
        VadConfig { frame_len: v.frame_len, hop: v.hop, threshold_db: v.threshold_db, min_voice: v.min_voice, min_silence: v.min_silence }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealignSection {
    pub n_best: usize,
    pub max_iters: usize,
    pub min_improvement: f64,
    pub max_full_cells: usize,
}

impl Default for RealignSection {
    fn default() -> Self {
        let d = RealignConfig::default();
        Self { n_best: d.n_best, max_iters: d.max_iters, min_improvement: d.min_improvement, max_full_cells: d.max_full_cells }
    }
}

impl From<&RealignSection> for RealignConfig {
    fn from(r: &RealignSection) -> Self {
        RealignConfig { n_best: r.n_best, max_iters: r.max_iters, min_improvement: r.min_improvement, max_full_cells: r.max_full_cells }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub search_window: f64,
    pub margin: f64,
    /// VAD used for refinement; the global `[vad]` when absent.
    pub vad: Option<VadSection>,
}

impl Default for RefineSection {
    fn default() -> Self {
        let d = RefineConfig::default();
        Self { search_window: d.search_window, margin: d.margin, vad: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParseSection {
    pub blank_line_chapters: bool,
    pub chapter_pattern: Option<String>,
    /// Each character marks an indented line.
    pub indent_chars: String,
    /// Two-character strings, opening mark then closing mark.
    pub quote_pairs: Vec<String>,
    pub terminals: String,
}

impl Default for ParseSection {
    fn default() -> Self {
        let d = ParseRules::default();
        Self {
            blank_line_chapters: d.blank_line_chapters,
            chapter_pattern: d.chapter_pattern,
            indent_chars: d.indent_chars.iter().collect(),
            quote_pairs: d.quote_pairs.iter().map(|(o, c)| [*o, *c].iter().collect()).collect(),
            terminals: d.terminals.iter().collect(),
        }
    }
}

impl ParseSection {
    pub fn rules(&self) -> Result<ParseRules, ConfigError> {
        let quote_pairs = self
            .quote_pairs
            .iter()
            .map(|p| {
                let cs: Vec<char> = p.chars().collect();
                match cs[..] {
                    [o, c] => Ok((o, c)),
                    _ => Err(ConfigError::Invalid(format!("quote pair {p:?} must be exactly two characters"))),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(ParseRules {
            blank_line_chapters: self.blank_line_chapters,
            chapter_pattern: self.chapter_pattern.clone(),
            indent_chars: self.indent_chars.chars().collect(),
            quote_pairs,
            terminals: self.terminals.chars().collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub snr_bin_db: f64,
    pub shift_bin_sec: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { snr_bin_db: 20.0, shift_bin_sec: 0.05 }
    }
}

/// Where an audiobook's posteriors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorSource {
    File(PathBuf),
    Command(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudiobookEntry {
    pub id: String,
    pub text: PathBuf,
    pub audio: PathBuf,
    pub voice_stem: PathBuf,
    pub accompaniment_stem: PathBuf,
    pub posteriors: PosteriorSource,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    text: PathBuf,
    audio: PathBuf,
    voice_stem: PathBuf,
    accompaniment_stem: PathBuf,
    posteriors: Option<PathBuf>,
    command: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: PathBuf,
    snr_threshold_db: f64,
    #[serde(default = "default_min_ctc")]
    min_avg_ctc_score: f64,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    #[serde(default)]
    cut_audio: bool,
    #[serde(default)]
    vad: VadSection,
    #[serde(default)]
    realign: RealignSection,
    #[serde(default)]
    refine: RefineSection,
    #[serde(default)]
    parse: ParseSection,
    #[serde(default)]
    report: ReportSection,
    #[serde(default)]
    audiobook: Vec<RawEntry>,
}

fn default_min_ctc() -> f64 {
    -4.0
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub snr_threshold_db: f64,
    pub min_avg_ctc_score: f64,
    pub parallelism: usize,
    pub cut_audio: bool,
    pub vad: VadConfig,
    pub realign: RealignConfig,
    pub refine: RefineConfig,
    pub parse: ParseRules,
    pub report: ReportSection,
    pub audiobooks: Vec<AudiobookEntry>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.into(), message },
            other => other,
        })
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.to_string() })?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        for (name, v) in [("snr_threshold_db", raw.snr_threshold_db), ("min_avg_ctc_score", raw.min_avg_ctc_score)] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be finite")));
            }
        }
        if raw.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(raw.report.snr_bin_db) || !positive(raw.report.shift_bin_sec) {
            return Err(ConfigError::Invalid("report bin widths must be positive".into()));
        }
        let vad = VadConfig::from(&raw.vad);
        vad.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let realign = RealignConfig::from(&raw.realign);
        realign.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let refine = RefineConfig {
            vad: raw.refine.vad.as_ref().map(VadConfig::from).unwrap_or(vad),
            search_window: raw.refine.search_window,
            margin: raw.refine.margin,
        };
        refine.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let parse = raw.parse.rules()?;

        let mut seen = HashSet::new();
        let mut audiobooks = Vec::with_capacity(raw.audiobook.len());
        for e in raw.audiobook {
            if e.id.is_empty() || e.id.contains(['/', '\\', '\t', '\n']) || e.id.starts_with('.') {
                return Err(ConfigError::Invalid(format!("audiobook id {:?} is not usable as a file name", e.id)));
            }
            if !seen.insert(e.id.clone()) {
                return Err(ConfigError::Invalid(format!("duplicate audiobook id {:?}", e.id)));
            }
            let check = |field: &'static str, p: &Path| {
                let p = resolve(p);
                if p.exists() {
                    Ok(p)
                } else {
                    Err(ConfigError::MissingPath { id: e.id.clone(), field, path: p })
                }
            };
            let posteriors = match (&e.posteriors, &e.command) {
                (Some(p), None) => PosteriorSource::File(check("posteriors", p)?),
                (None, Some(c)) if !c.trim().is_empty() => PosteriorSource::Command(c.clone()),
                _ => return Err(ConfigError::Invalid(format!("audiobook {}: give exactly one of posteriors or command", e.id))),
            };
            audiobooks.push(AudiobookEntry {
                text: check("text", &e.text)?,
                audio: check("audio", &e.audio)?,
                voice_stem: check("voice_stem", &e.voice_stem)?,
                accompaniment_stem: check("accompaniment_stem", &e.accompaniment_stem)?,
                posteriors,
                id: e.id,
            });
        }

        Ok(Self {
            output_dir: resolve(&raw.output_dir),
            snr_threshold_db: raw.snr_threshold_db,
            min_avg_ctc_score: raw.min_avg_ctc_score,
            parallelism: raw.parallelism,
            cut_audio: raw.cut_audio,
            vad,
            realign,
            refine,
            parse,
            report: raw.report,
            audiobooks,
        })
    }
}
