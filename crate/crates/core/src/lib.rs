//! Core algorithms for building sentence-aligned audiobook speech corpora.
//!
//! Everything here is pure computation over in-memory values and only needs
//! `alloc`: text structuring, frame energies, voice activity detection,
//! stem SNR, CTC segmentation, recursive re-alignment and VAD-based boundary
//! refinement. File formats, audio decoding and the batch pipeline live in the
//! `bookalign` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod align;
pub mod audio;
pub mod fixtures;
pub mod posterior;
pub mod realign;
pub mod refine;
pub mod snr;
pub mod text;
pub mod vad;

mod span;

pub use align::{align, align_with, score_sentences, AlignError, AlignOptions, AlignmentResult, SentenceAlignment};
pub use audio::{frame_energy, AudioBuffer, AudioError, DBFS_FLOOR};
pub use posterior::{synth_posteriors, tokenize, PosteriorError, PosteriorMatrix, TimelineEntry, TokenizedSentence};
pub use realign::{recursive_align, recursive_align_with, FrameRange, PosteriorProvider, ProviderError, RealignConfig, RealignError, RealignOutcome};
pub use refine::{refine, BoundaryShift, RefineConfig, RefineError, Refined};
pub use snr::{compute_snr, filter_audiobook, SnrError, SnrReport};
pub use span::{SpanError, TimeSpan};
pub use text::{attach_times, parse_plain_text, ParseRules, SentenceNode, StructuredBook, StyleKind, TextError};
pub use vad::{detect_voice, VadConfig, VadError, VoiceSegments};
