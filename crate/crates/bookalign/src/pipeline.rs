//! Batch runner: text, SNR gate, recursive alignment, refinement, corpus
//! output and the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bookalign_core::realign::MatrixSliceProvider;
use bookalign_core::snr::assess_stems;
use bookalign_core::text::SentencePath;
use bookalign_core::{
    attach_times, parse_plain_text, recursive_align_with, refine, tokenize, AudioBuffer, BoundaryShift, FrameRange, ParseRules, PosteriorError,
    PosteriorMatrix, PosteriorProvider, ProviderError, RealignError, RealignOutcome, RefineError, SnrError, StructuredBook, TextError, TokenizedSentence,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{AudiobookEntry, PipelineConfig, PosteriorSource};
use crate::corpus::{serialize_yaml, CorpusError};
use crate::ctcp::{read_posteriors, CtcpError};
use crate::provider::{CommandError, CommandProvider, RayonExecutor};
use crate::report::{emit_report, ReportData, ReportError, ShiftKind};
use crate::wav::{read_wav, write_wav, WavEncoding, WavError};

pub const MANIFEST: &str = "manifest.tsv";
pub const SHIFTS: &str = "shifts.tsv";
pub const ITERATIONS: &str = "iterations.tsv";
pub const ERRORS: &str = "errors.tsv";

#[derive(Debug, Error)]
pub enum BookError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("text: {0}")]
    Text(#[from] TextError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("snr: {0}")]
    Snr(#[from] SnrError),
    #[error("posteriors: {0}")]
    Ctcp(#[from] CtcpError),
    #[error("posterior command: {0}")]
    Command(#[from] CommandError),
    #[error("sentence {index}: {source}")]
    Tokenize { index: usize, source: PosteriorError },
    #[error("alignment: {0}")]
    Realign(#[from] RealignError),
    #[error("refinement: {0}")]
    Refine(#[from] RefineError),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("sample rates differ: audio {audio} Hz, voice {voice} Hz, accompaniment {accomp} Hz")]
    SampleRateMismatch { audio: u32, voice: u32, accomp: u32 },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean,
    SnrRejected,
    CtcRejected,
    Error,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Clean => "clean",
            Status::SnrRejected => "snr_rejected",
            Status::CtcRejected => "ctc_rejected",
            Status::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Status::Clean, Status::SnrRejected, Status::CtcRejected, Status::Error].into_iter().find(|st| st.as_str() == s)
    }
}

/// Everything recorded about one audiobook.
#[derive(Debug, Clone, PartialEq)]
pub struct BookReport {
    pub id: String,
    pub status: Status,
    pub snr_db: Option<f64>,
    /// Average CTC score of every alignment pass.
    pub iteration_scores: Vec<f64>,
    /// Score of the returned pass.
    pub avg_ctc_score: Option<f64>,
    pub shifts: Vec<BoundaryShift>,
    pub error: Option<String>,
}

impl BookReport {
    fn new(id: &str) -> Self {
        Self { id: id.into(), status: Status::Error, snr_db: None, iteration_scores: Vec::new(), avg_ctc_score: None, shifts: Vec::new(), error: None }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BookError + '_ {
    move |source| BookError::Io { path: path.into(), source }
}

pub fn load_book(path: &Path, rules: &ParseRules) -> Result<StructuredBook, BookError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_plain_text(&text, rules)?)
}

/// Tokenizes every sentence against the provider's token table.
pub fn tokenize_book(book: &StructuredBook, m: &PosteriorMatrix) -> Result<Vec<TokenizedSentence>, BookError> {
    book.sentences().enumerate().map(|(index, s)| tokenize(&s.text, m.tokens(), m.blank()).map_err(|source| BookError::Tokenize { index, source })).collect()
}

/// File-backed or command-backed posteriors for one recording.
pub enum Posteriors {
    Matrix(MatrixSliceProvider),
    Command(CommandProvider),
}

impl Posteriors {
    pub fn open(source: &PosteriorSource, audio_path: &Path, audio_duration: f64, parallelism: usize) -> Result<Self, BookError> {
        Ok(match source {
            PosteriorSource::File(p) => Posteriors::Matrix(MatrixSliceProvider::new(read_posteriors(p)?)),
            PosteriorSource::Command(t) => Posteriors::Command(CommandProvider::new(t, audio_path, audio_duration, parallelism)?),
        })
    }

    pub fn full(&self) -> &PosteriorMatrix {
        match self {
            Posteriors::Matrix(p) => p.matrix(),
            Posteriors::Command(p) => p.full_matrix(),
        }
    }
}

impl PosteriorProvider for Posteriors {
    fn frame_shift(&self) -> f64 {
        self.full().frame_shift()
    }

    fn total_frames(&self) -> usize {
        self.full().frames()
    }

    fn posteriors(&self, range: FrameRange) -> Result<PosteriorMatrix, ProviderError> {
        match self {
            Posteriors::Matrix(p) => p.posteriors(range),
            Posteriors::Command(p) => p.posteriors(range),
        }
    }
}

/// `<id>_cNNN_pNNN_sNNN_tNNN.wav`: chapter, paragraph, style, sentence.
pub fn cut_name(id: &str, p: &SentencePath) -> String {
    format!("{id}_c{:03}_p{:03}_s{:03}_t{:03}.wav", p.chapter, p.paragraph, p.style, p.sentence)
}

fn process(entry: &AudiobookEntry, cfg: &PipelineConfig, report: &mut BookReport) -> Result<(), BookError> {
    let book = load_book(&entry.text, &cfg.parse)?;
    let voice = read_wav(&entry.voice_stem)?;
    let accomp = read_wav(&entry.accompaniment_stem)?;
    let audio = read_wav(&entry.audio)?;
    if voice.sample_rate() != audio.sample_rate() || accomp.sample_rate() != audio.sample_rate() {
        return Err(BookError::SampleRateMismatch { audio: audio.sample_rate(), voice: voice.sample_rate(), accomp: accomp.sample_rate() });
    }

    let snr = assess_stems(&voice, &accomp, &cfg.vad, cfg.snr_threshold_db)?;
    report.snr_db = Some(snr.snr_db);
    if !snr.pass {
        report.status = Status::SnrRejected;
        return Ok(());
    }

    let provider = Posteriors::open(&entry.posteriors, &entry.audio, audio.duration(), cfg.parallelism)?;
    let sentences = tokenize_book(&book, provider.full())?;
    let RealignOutcome { result, iteration_scores, .. } = recursive_align_with(&provider, &sentences, &cfg.realign, &RayonExecutor)?;
    report.iteration_scores = iteration_scores;
    report.avg_ctc_score = Some(result.avg_score);

    let refined = refine(&result, &audio, &cfg.refine)?;
    if result.avg_score < cfg.min_avg_ctc_score {
        report.status = Status::CtcRejected;
        return Ok(());
    }
    report.shifts = refined.shifts;

    let timed = attach_times(&book, &refined.alignment)?;
    let yaml_path = cfg.output_dir.join(format!("{}.yaml", entry.id));
    std::fs::write(&yaml_path, serialize_yaml(&timed)?).map_err(io_err(&yaml_path))?;
    if cfg.cut_audio {
        write_cuts(&entry.id, &timed, &audio, &cfg.output_dir)?;
    }
    report.status = Status::Clean;
    Ok(())
}

fn write_cuts(id: &str, book: &StructuredBook, audio: &AudioBuffer, dir: &Path) -> Result<(), BookError> {
    for (path, node) in book.sentence_paths() {
        if let Some(t) = node.time {
            write_wav(dir.join(cut_name(id, &path)), &audio.slice_seconds(t.start, t.end), WavEncoding::Pcm16)?;
        }
    }
    Ok(())
}

/// Runs one audiobook; failures land in the report, never in the caller.
pub fn run_audiobook(entry: &AudiobookEntry, cfg: &PipelineConfig) -> BookReport {
    let mut report = BookReport::new(&entry.id);
    // a rerun must not leave an older corpus file behind
    let _ = std::fs::remove_file(cfg.output_dir.join(format!("{}.yaml", entry.id)));
    if let Err(e) = process(entry, cfg, &mut report) {
        report.status = Status::Error;
        report.error = Some(e.to_string());
    }
    report
}

/// Processes every audiobook on a pool of `cfg.parallelism` threads and
/// writes `<id>.yaml` files, the manifest, the intermediate score and
/// shift tables, and the histogram reports.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<BookReport>, PipelineError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build().map_err(|e| PipelineError::Pool(e.to_string()))?;
    let reports: Vec<BookReport> = pool.install(|| cfg.audiobooks.par_iter().map(|e| run_audiobook(e, cfg)).collect());

    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| PipelineError::Io { path, source })
    };
    write(MANIFEST, manifest_tsv(&reports))?;
    write(ITERATIONS, iterations_tsv(&reports))?;
    write(SHIFTS, shifts_tsv(&reports))?;
    write(ERRORS, errors_tsv(&reports))?;

    let data = ReportData::from_reports(&reports);
    match emit_report(dir, &data, &cfg.report) {
        Ok(()) | Err(ReportError::NoData) => {}
        Err(e) => return Err(e.into()),
    }
    Ok(reports)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

pub fn manifest_tsv(reports: &[BookReport]) -> String {
    let mut s = String::from("id\tsnr_db\titerations\tavg_ctc_score\tstatus\n");
    for r in reports {
        let iters = if r.iteration_scores.is_empty() { "NA".to_string() } else { r.iteration_scores.len().to_string() };
        writeln!(s, "{}\t{}\t{}\t{}\t{}", r.id, opt(r.snr_db), iters, opt(r.avg_ctc_score), r.status.as_str()).unwrap();
    }
    s
}

pub fn iterations_tsv(reports: &[BookReport]) -> String {
    let mut s = String::from("audiobook_id\titeration\tavg_score\n");
    for r in reports {
        for (i, v) in r.iteration_scores.iter().enumerate() {
            writeln!(s, "{}\t{i}\t{v:.6}", r.id).unwrap();
        }
    }
    s
}

pub fn shifts_tsv(reports: &[BookReport]) -> String {
    let mut s = String::from("audiobook_id\tsentence\tstart_shift\tend_shift\tend_without_voice\n");
    for r in reports {
        for b in &r.shifts {
            writeln!(s, "{}\t{}\t{:.6}\t{:.6}\t{}", r.id, b.sentence_index, b.start_shift, b.end_shift, b.end_without_voice).unwrap();
        }
    }
    s
}

fn errors_tsv(reports: &[BookReport]) -> String {
    let mut s = String::from("id\terror\n");
    for r in reports {
        if let Some(e) = &r.error {
            writeln!(s, "{}\t{}", r.id, e.replace(['\t', '\n'], " ")).unwrap();
        }
    }
    s
}

impl ReportData {
    pub fn from_reports(reports: &[BookReport]) -> Self {
        let mut d = ReportData::default();
        for r in reports {
            d.snr_db.extend(r.snr_db);
            d.iterations.extend(r.iteration_scores.iter().enumerate().map(|(i, &v)| (r.id.clone(), i, v)));
            for s in &r.shifts {
                d.shifts.push((ShiftKind::Start, s.start_shift));
                d.shifts.push((ShiftKind::End, s.end_shift));
            }
        }
        d
    }
}
