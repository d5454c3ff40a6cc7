use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bookalign::config::{ConfigError, PipelineConfig, ReportSection};
use bookalign::corpus::{parse_yaml, serialize_yaml};
use bookalign::ctcp::{read_posteriors, write_posteriors};
use bookalign::pipeline::{load_book, run_pipeline, shifts_tsv, tokenize_book, BookReport, Posteriors, Status};
use bookalign::provider::RayonExecutor;
use bookalign::report::{emit_report, ReportData};
use bookalign::wav::read_wav;
use bookalign_core::realign::MatrixSliceProvider;
use bookalign_core::snr::assess_stems;
use bookalign_core::{attach_times, recursive_align_with, refine, AlignmentResult, ParseRules, RealignConfig, RefineConfig, SentenceAlignment, VadConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bookalign", version, about = "Build sentence-aligned audiobook corpora")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config (TOML); stage settings default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Structure plain book text and print corpus YAML.
    ParseText {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Voice/accompaniment SNR over the voiced regions of the voice stem.
    Snr {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        voice: PathBuf,
        #[arg(long)]
        accompaniment: PathBuf,
        /// Overrides snr_threshold_db from the config.
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<f64>,
    },
    /// Align book text to a CTCP posterior file and print timed YAML.
    Align {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        posteriors: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Skip recursive re-alignment.
        #[arg(long)]
        single_pass: bool,
    },
    /// Snap the times of a timed corpus YAML to voice segments.
    Refine {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Shift table destination (TSV).
        #[arg(long)]
        shifts: Option<PathBuf>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        search_window: Option<f64>,
    },
    /// Run the whole batch described by the config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Also write one WAV per sentence.
        #[arg(long)]
        cut_audio: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Rebuild the histogram reports of a finished run.
    Report {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Run directory; the config's output_dir when omitted.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        snr_bin: Option<f64>,
        #[arg(long)]
        shift_bin: Option<f64>,
    },
    /// Write frames [start, end) of a CTCP file, addressed in seconds.
    #[command(hide = true)]
    SlicePosteriors {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        start_sec: f64,
        #[arg(long)]
        end_sec: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

/// Stage settings from an optional config.
struct Stage {
    parse: ParseRules,
    vad: VadConfig,
    realign: RealignConfig,
    refine: RefineConfig,
    snr_threshold: Option<f64>,
    report: ReportSection,
    output_dir: Option<PathBuf>,
}

fn stage(arg: &ConfigArg) -> Result<Stage, Failure> {
    Ok(match &arg.config {
        Some(p) => {
            let c = PipelineConfig::load(p)?;
            Stage {
                parse: c.parse,
                vad: c.vad,
                realign: c.realign,
                refine: c.refine,
                snr_threshold: Some(c.snr_threshold_db),
                report: c.report,
                output_dir: Some(c.output_dir),
            }
        }
        None => Stage {
            parse: ParseRules::default(),
            vad: VadConfig::default(),
            realign: RealignConfig::default(),
            refine: RefineConfig::default(),
            snr_threshold: None,
            report: ReportSection::default(),
            output_dir: None,
        },
    })
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| Failure::Run(format!("{}: {e}", p.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn execute(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::ParseText { cfg, input, output } => {
            let s = stage(&cfg)?;
            let book = load_book(&input, &s.parse).map_err(run_err)?;
            emit(output.as_deref(), &serialize_yaml(&book).map_err(run_err)?)
        }
        Cmd::Snr { cfg, voice, accompaniment, threshold } => {
            let s = stage(&cfg)?;
            let threshold = threshold.or(s.snr_threshold).ok_or_else(|| Failure::Config("no SNR threshold: pass --threshold or --config".into()))?;
            let v = read_wav(&voice).map_err(run_err)?;
            let a = read_wav(&accompaniment).map_err(run_err)?;
            let r = assess_stems(&v, &a, &s.vad, threshold).map_err(run_err)?;
            println!("snr_db\tvoiced_sec\tthreshold_db\tpass");
            println!("{:.6}\t{:.6}\t{}\t{}", r.snr_db, r.voiced_duration, r.threshold_db, r.pass);
            Ok(())
        }
        Cmd::Align { cfg, text, posteriors, output, single_pass } => {
            let s = stage(&cfg)?;
            let book = load_book(&text, &s.parse).map_err(run_err)?;
            let provider = Posteriors::Matrix(MatrixSliceProvider::new(read_posteriors(&posteriors).map_err(run_err)?));
            let sentences = tokenize_book(&book, provider.full()).map_err(run_err)?;
            let rc = if single_pass { RealignConfig { max_iters: 1, ..s.realign } } else { s.realign };
            let outcome = recursive_align_with(&provider, &sentences, &rc, &RayonExecutor).map_err(run_err)?;
            for (i, v) in outcome.iteration_scores.iter().enumerate() {
                eprintln!("iteration {i}: avg score {v:.6}");
            }
            let timed = attach_times(&book, &outcome.result).map_err(run_err)?;
            emit(output.as_deref(), &serialize_yaml(&timed).map_err(run_err)?)
        }
        Cmd::Refine { cfg, alignment, audio, output, shifts, margin, search_window } => {
            let s = stage(&cfg)?;
            let rc = RefineConfig { margin: margin.unwrap_or(s.refine.margin), search_window: search_window.unwrap_or(s.refine.search_window), ..s.refine };
            let yaml = std::fs::read_to_string(&alignment).map_err(|e| Failure::Run(format!("{}: {e}", alignment.display())))?;
            let book = parse_yaml(&yaml).map_err(run_err)?;
            let entries = book
                .sentences()
                .enumerate()
                .map(|(i, n)| n.time.map(|span| SentenceAlignment { sentence_index: i, span, ctc_score: 0.0 }))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Failure::Run("every sentence needs a time to refine".into()))?;
            let wav = read_wav(&audio).map_err(run_err)?;
            let refined = refine(&AlignmentResult::from_entries(entries), &wav, &rc).map_err(run_err)?;
            let report = BookReport {
                id: book_id(&alignment),
                status: Status::Clean,
                snr_db: None,
                iteration_scores: vec![],
                avg_ctc_score: None,
                shifts: refined.shifts.clone(),
                error: None,
            };
            match shifts {
                Some(p) => emit(Some(&p), &shifts_tsv(&[report]))?,
                None => eprint!("{}", shifts_tsv(&[report])),
            }
            let timed = attach_times(&book, &refined.alignment).map_err(run_err)?;
            emit(output.as_deref(), &serialize_yaml(&timed).map_err(run_err)?)
        }
        Cmd::Pipeline { config, parallelism, cut_audio, output_dir } => {
            let mut c = PipelineConfig::load(&config)?;
            if let Some(p) = parallelism {
                if p == 0 {
                    return Err(Failure::Config("parallelism must be at least 1".into()));
                }
                c.parallelism = p;
            }
            c.cut_audio |= cut_audio;
            if let Some(d) = output_dir {
                c.output_dir = d;
            }
            let reports = run_pipeline(&c).map_err(run_err)?;
            for r in &reports {
                match &r.error {
                    Some(e) => eprintln!("{}: error: {e}", r.id),
                    None => eprintln!("{}: {}", r.id, r.status.as_str()),
                }
            }
            Ok(())
        }
        Cmd::Report { cfg, dir, snr_bin, shift_bin } => {
            let s = stage(&cfg)?;
            let dir = dir.or(s.output_dir).ok_or_else(|| Failure::Config("pass --dir or --config".into()))?;
            let bins = ReportSection { snr_bin_db: snr_bin.unwrap_or(s.report.snr_bin_db), shift_bin_sec: shift_bin.unwrap_or(s.report.shift_bin_sec) };
            if !(bins.snr_bin_db > 0.0 && bins.shift_bin_sec > 0.0) {
                return Err(Failure::Config("bin widths must be positive".into()));
            }
            let data = ReportData::load(&dir).map_err(run_err)?;
            emit_report(&dir, &data, &bins).map_err(run_err)
        }
        Cmd::SlicePosteriors { input, start_sec, end_sec, out } => {
            let m = read_posteriors(&input).map_err(run_err)?;
            let frame = |s: f64| ((s / m.frame_shift()).round().max(0.0) as usize).min(m.frames());
            let sliced = m.slice_frames(frame(start_sec), frame(end_sec)).map_err(run_err)?;
            write_posteriors(&sliced, &out).map_err(run_err)
        }
    }
}

fn book_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "book".into(), |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
