use bookalign_core::align::{align, align_tokens, AlignOptions};
use bookalign_core::audio::{frame_energy, AudioBuffer, DBFS_FLOOR};
use bookalign_core::fixtures::{make_synthetic_audiobook, TonePlan};
use bookalign_core::posterior::{synth_posteriors, PosteriorMatrix, TimelineEntry, TokenizedSentence};
use bookalign_core::realign::{recursive_align, MatrixSliceProvider, RealignConfig};
use bookalign_core::refine::{refine, RefineConfig};
use bookalign_core::snr::compute_snr;
use bookalign_core::text::{parse_plain_text, Chapter, Paragraph, ParseRules, SentenceNode, StructuredBook, Style, StyleKind};
use bookalign_core::vad::{classify_frames, detect_voice, VadConfig, VoiceSegments};
use bookalign_core::{AlignmentResult, SentenceAlignment, TimeSpan};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tokens(v: usize) -> Vec<String> {
    (0..v).map(|i| format!("t{i}")).collect()
}

fn normalized(rows: &[Vec<f64>], shift: f64) -> PosteriorMatrix {
    let v = rows[0].len();
    let mut logp = Vec::new();
    for r in rows {
        let lse = r.iter().map(|x| x.exp()).sum::<f64>().ln();
        logp.extend(r.iter().map(|x| (x - lse) as f32));
    }
    PosteriorMatrix::new(logp, rows.len(), shift, tokens(v), 0).unwrap()
}

/// Every assignment of strictly increasing emission frames, scored directly.
fn enumerate(m: &PosteriorMatrix, seq: &[usize]) -> f64 {
    fn go(m: &PosteriorMatrix, seq: &[usize], from: usize, picked: &mut Vec<usize>, best: &mut f64) {
        if picked.len() == seq.len() {
            let mut score = 0.0;
            let mut j = 0;
            for t in picked[0]..m.frames() {
                if j < seq.len() && picked[j] == t {
                    score += m.get(t, seq[j]);
                    j += 1;
                } else {
                    score += m.get(t, m.blank()).max(m.get(t, seq[j - 1]));
                }
            }
            *best = best.max(score);
            return;
        }
        for t in from..m.frames() {
            picked.push(t);
            go(m, seq, t + 1, picked, best);
            picked.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(m, seq, 0, &mut Vec::new(), &mut best);
    best
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..=3, 1usize..=8).prop_flat_map(|(v, t)| {
        let rows = prop::collection::vec(prop::collection::vec(-4.0f64..4.0, v), t);
        let seq = prop::collection::vec(1..v, 1..=t.min(4));
        (rows, seq)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn trellis_equals_enumeration((rows, seq) in instance()) {
        let m = normalized(&rows, 0.1);
        let path = align_tokens(&m, &seq, AlignOptions::full()).unwrap();
        let best = enumerate(&m, &seq);
        prop_assert!((path.score - best).abs() < 1e-9, "{} vs {}", path.score, best);
        prop_assert!(path.emission_frames.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn uniform_positive_shift_keeps_frame_zero_paths((rows, seq) in instance(), c in 0.0001f64..0.01) {
        let m = normalized(&rows, 0.1);
        let path = align_tokens(&m, &seq, AlignOptions::full()).unwrap();
        prop_assume!(path.emission_frames[0] == 0);
        let shifted: Vec<f32> = m.values().iter().map(|&x| (x as f64 + c) as f32).collect();
        let ms = PosteriorMatrix::new(shifted, m.frames(), 0.1, m.tokens().to_vec(), 0);
        prop_assume!(ms.is_ok());
        let ms = ms.unwrap();
        let moved = align_tokens(&ms, &seq, AlignOptions::full()).unwrap();
        prop_assert_eq!(&moved.emission_frames, &path.emission_frames);
        let expected = path.score + m.frames() as f64 * c;
        prop_assert!((moved.score - expected).abs() < 1e-5);
    }

    #[test]
    fn sentence_spans_are_ordered_and_scores_non_positive((rows, seq) in instance(), cut in 0usize..4) {
        let m = normalized(&rows, 0.1);
        let cut = cut.min(seq.len() - 1);
        let sentences: Vec<_> = if cut == 0 {
            vec![TokenizedSentence::new(seq.clone(), m.vocab(), 0).unwrap()]
        } else {
            vec![
                TokenizedSentence::new(seq[..cut].to_vec(), m.vocab(), 0).unwrap(),
                TokenizedSentence::new(seq[cut..].to_vec(), m.vocab(), 0).unwrap(),
            ]
        };
        let r = align(&m, &sentences).unwrap();
        prop_assert!(r.is_well_ordered());
        prop_assert!(r.avg_score <= 0.0);
        prop_assert!(r.entries.iter().all(|e| e.ctc_score <= 0.0));
    }

    #[test]
    fn banded_agrees_with_full_when_no_escape((rows, seq) in instance(), w in 1usize..4) {
        let m = normalized(&rows, 0.1);
        let full = align_tokens(&m, &seq, AlignOptions::full()).unwrap();
        if let Ok(b) = align_tokens(&m, &seq, AlignOptions::banded(w)) {
            prop_assert!(b.score <= full.score + 1e-12);
            if (b.score - full.score).abs() < 1e-12 {
                prop_assert_eq!(b.emission_frames, full.emission_frames);
            }
        }
    }
}

#[test]
fn noisy_synthetic_spans_recovered_within_one_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    use rand::Rng;
    for trial in 0..40 {
        let v = 6;
        let mut timeline = Vec::new();
        let mut frame = rng.random_range(0..6);
        let mut prev = 0;
        for _ in 0..rng.random_range(3..12) {
            let mut tok = rng.random_range(1..v);
            while tok == prev {
                tok = rng.random_range(1..v);
            }
            let len = rng.random_range(3..7);
            timeline.push(TimelineEntry { token: tok, start_frame: frame, end_frame: frame + len });
            frame += len + rng.random_range(0..5);
            prev = tok;
        }
        let total = frame + rng.random_range(0..6);
        let m = synth_posteriors(&timeline, total, tokens(v), 0, 0.04, 0.5, &mut rng).unwrap();
        let seq: Vec<usize> = timeline.iter().map(|e| e.token).collect();
        let path = align_tokens(&m, &seq, AlignOptions::full()).unwrap();
        // leading frames are free, so the first token lands late in its span
        let (first, f0) = (&timeline[0], path.emission_frames[0]);
        assert!((first.start_frame..first.end_frame).contains(&f0), "trial {trial}: {first:?} emitted at {f0}");
        for (e, &f) in timeline.iter().zip(&path.emission_frames).skip(1) {
            assert!(e.start_frame.abs_diff(f) <= 1, "trial {trial}: {e:?} emitted at {f}");
        }
    }
}

#[test]
fn noiseless_synthetic_scores_are_log_point_nine() {
    let f = make_synthetic_audiobook(4, 6, 8000, &TonePlan::default());
    let r = align(&f.posteriors, &f.sentences).unwrap();
    let truth = f.truth_frames();
    for (i, (e, t)) in r.entries.iter().zip(&truth).enumerate() {
        assert!((e.ctc_score - 0.9f64.ln()).abs() < 1e-6);
        let start = (e.span.start / f.frame_shift()).round() as usize;
        if i == 0 {
            assert_eq!(start, t.start + TonePlan::default().token_frames - 1);
        } else {
            assert_eq!(start, t.start);
        }
    }
}

fn sine_audio(sr: u32, len: usize, amp: f64) -> AudioBuffer {
    let samples = (0..len).map(|i| (amp * (i as f64 * 0.3).sin()) as f32).collect();
    AudioBuffer::new(samples, sr).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_count_formula(n in 1usize..3000, frame in 1usize..200, hop_frac in 0.05f64..=1.0) {
        let hop = ((frame as f64 * hop_frac).round() as usize).max(1);
        prop_assume!(n >= frame);
        let audio = AudioBuffer::new(vec![0.25; n], 1000).unwrap();
        let e = frame_energy(&audio, frame as f64 / 1000.0, hop as f64 / 1000.0).unwrap();
        prop_assert_eq!(e.len(), (n - frame) / hop + 1);
    }

    #[test]
    fn gain_shifts_energy(g in 0.01f64..1.0) {
        let base = sine_audio(8000, 4000, 0.9);
        let scaled = AudioBuffer::new(base.samples().iter().map(|&s| (s as f64 * g) as f32).collect(), 8000).unwrap();
        let a = frame_energy(&base, 0.03, 0.01).unwrap();
        let b = frame_energy(&scaled, 0.03, 0.01).unwrap();
        for (x, y) in a.iter().zip(&b) {
            if *x > DBFS_FLOOR && *y > DBFS_FLOOR {
                prop_assert!((y - x - 20.0 * g.log10()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn vad_segments_ordered_and_deterministic(bursts in prop::collection::vec((0.0f64..3.0, 0.01f64..0.6, 0.001f64..1.0), 0..6)) {
        let sr = 8000;
        let mut samples = vec![0.0f32; 3 * sr as usize];
        for (start, len, amp) in &bursts {
            let a = (start * sr as f64) as usize;
            let b = (((start + len) * sr as f64) as usize).min(samples.len());
            for (i, s) in samples.iter_mut().enumerate().take(b).skip(a) {
                *s = (amp * (i as f64 * 0.21).sin()) as f32;
            }
        }
        let audio = AudioBuffer::new(samples, sr).unwrap();
        let cfg = VadConfig::default();
        let segs = detect_voice(&audio, &cfg).unwrap();
        prop_assert!(segs.is_well_ordered());
        prop_assert!(segs.segments.iter().all(|s| s.start >= 0.0 && s.end <= audio.duration()));
        prop_assert_eq!(&segs, &detect_voice(&audio, &cfg).unwrap());
        let lower = VadConfig { threshold_db: cfg.threshold_db - 10.0, ..cfg };
        let hi = classify_frames(&audio, &cfg).unwrap();
        let lo = classify_frames(&audio, &lower).unwrap();
        prop_assert!(hi.iter().zip(&lo).all(|(h, l)| !*h || *l));
    }

    #[test]
    fn snr_scale_invariance_and_gain_law(g in 0.01f64..10.0, va in 0.01f64..0.09, aa in 0.0001f64..0.09) {
        let n = 4000;
        let voice: Vec<f64> = (0..n).map(|i| va * (i as f64 * 0.37).sin()).collect();
        let accomp: Vec<f64> = (0..n).map(|i| aa * (i as f64 * 0.11).cos()).collect();
        let buf = |v: &[f64], k: f64| AudioBuffer::new(v.iter().map(|x| (x * k) as f32).collect(), 1000).unwrap();
        let regions = VoiceSegments { segments: vec![TimeSpan { start: 0.5, end: 1.5 }, TimeSpan { start: 2.0, end: 3.5 }] };
        let base = compute_snr(&buf(&voice, 1.0), &buf(&accomp, 1.0), &regions).unwrap().snr_db;
        let both = compute_snr(&buf(&voice, g), &buf(&accomp, g), &regions).unwrap().snr_db;
        let voice_only = compute_snr(&buf(&voice, g), &buf(&accomp, 1.0), &regions).unwrap().snr_db;
        prop_assert!((both - base).abs() < 0.01);
        prop_assert!((voice_only - base - 20.0 * g.log10()).abs() < 0.01);
    }
}

#[test]
fn snr_ignores_audio_outside_regions() {
    let n = 3000;
    let voice: Vec<f32> = (0..n).map(|i| 0.1 * ((i as f32) * 0.3).sin()).collect();
    let mut a1: Vec<f32> = (0..n).map(|i| 0.01 * ((i as f32) * 0.2).sin()).collect();
    let regions = VoiceSegments { segments: vec![TimeSpan { start: 1.0, end: 2.0 }] };
    let first = compute_snr(&AudioBuffer::new(voice.clone(), 1000).unwrap(), &AudioBuffer::new(a1.clone(), 1000).unwrap(), &regions).unwrap();
    for (i, s) in a1.iter_mut().enumerate() {
        if !(1000..2000).contains(&i) {
            *s = 0.9;
        }
    }
    let second = compute_snr(&AudioBuffer::new(voice, 1000).unwrap(), &AudioBuffer::new(a1, 1000).unwrap(), &regions).unwrap();
    assert_eq!(first, second);
}

fn sentence_text() -> impl Strategy<Value = String> {
    ("[a-z]{1,6}( [a-z]{1,6}){0,2}", prop::sample::select(vec![".", "!", "?", "。"])).prop_map(|(w, t)| format!("{w}{t}"))
}

fn book_strategy() -> impl Strategy<Value = StructuredBook> {
    let style = (any::<bool>(), prop::collection::vec(sentence_text(), 1..4));
    let paragraph = prop::collection::vec(style, 1..4);
    let chapter = prop::collection::vec(paragraph, 1..4);
    prop::collection::vec(chapter, 1..4).prop_map(|chapters| {
        let chapters = chapters
            .into_iter()
            .map(|paras| Chapter {
                paragraphs: paras
                    .into_iter()
                    .map(|styles| {
                        let mut out: Vec<Style> = Vec::new();
                        for (spoken, sents) in styles {
                            let kind = if spoken { StyleKind::Spoken } else { StyleKind::Narrative };
                            // adjacent narrative runs merge when rendered
                            if kind == StyleKind::Narrative && out.last().is_some_and(|s| s.kind == StyleKind::Narrative) {
                                continue;
                            }
                            out.push(Style { kind, sentences: sents.into_iter().map(SentenceNode::new).collect() });
                        }
                        Paragraph { styles: out }
                    })
                    .collect(),
            })
            .collect();
        StructuredBook { chapters }
    })
}

fn render(book: &StructuredBook) -> String {
    let mut chapters = Vec::new();
    for c in &book.chapters {
        let mut paras = Vec::new();
        for p in &c.paragraphs {
            let mut line = String::from("\u{3000}");
            for s in &p.styles {
                let body: Vec<&str> = s.sentences.iter().map(|n| n.text.as_str()).collect();
                match s.kind {
                    StyleKind::Spoken => line.push_str(&format!("「{}」", body.join(" "))),
                    StyleKind::Narrative => line.push_str(&format!(" {} ", body.join(" "))),
                }
            }
            paras.push(line);
        }
        chapters.push(paras.join("\n"));
    }
    chapters.join("\n\n")
}

proptest! {
    #[test]
    fn parsing_rendered_books_recovers_structure(book in book_strategy()) {
        let parsed = parse_plain_text(&render(&book), &ParseRules::default()).unwrap();
        prop_assert_eq!(parsed, book);
    }

    #[test]
    fn parsing_preserves_content(text in "[a-z .「」\n\u{3000}]{0,80}") {
        if let Ok(book) = parse_plain_text(&text, &ParseRules::default()) {
            let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace() && !"「」".contains(*c)).collect::<String>();
            let joined: String = book.sentences().map(|s| s.text.as_str()).collect();
            prop_assert_eq!(strip(&joined), strip(&text));
            prop_assert!(book.validate().is_ok());
        }
    }
}

fn perturbed(truth: &[TimeSpan], offsets: &[(f64, f64)], duration: f64) -> AlignmentResult {
    let entries = truth
        .iter()
        .zip(offsets)
        .enumerate()
        .map(|(i, (t, (ds, de)))| {
            let start = (t.start + ds).clamp(0.0, duration);
            let end = (t.end + de).clamp(start, duration);
            SentenceAlignment { sentence_index: i, span: TimeSpan { start, end }, ctc_score: -0.2 }
        })
        .collect();
    AlignmentResult::from_entries(entries)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_invariants(seed in 0u64..1000, offsets in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 5), margin in 0.0f64..0.2) {
        let f = make_synthetic_audiobook(seed, 5, 8000, &TonePlan::default());
        let al = perturbed(&f.truth, &offsets, f.audio.duration());
        prop_assume!(al.is_well_ordered());
        let cfg = RefineConfig { margin, ..RefineConfig::default() };
        let r = refine(&al, &f.audio, &cfg).unwrap();
        prop_assert!(r.alignment.is_well_ordered());
        let bound = cfg.search_window + cfg.margin + 1e-9;
        for s in &r.shifts {
            prop_assert!(s.start_shift.abs() <= bound && s.end_shift.abs() <= bound, "{:?}", s);
        }
        // every refined span keeps some voice
        for e in &r.alignment.entries {
            let inner = f.audio.slice_seconds(e.span.start, e.span.end);
            prop_assert!(inner.samples().iter().any(|&x| x != 0.0));
        }
        let again = refine(&r.alignment, &f.audio, &cfg).unwrap();
        let tol = cfg.margin + cfg.vad.hop + 1e-9;
        for s in &again.shifts {
            prop_assert!(s.start_shift.abs() <= tol && s.end_shift.abs() <= tol, "{:?}", s);
        }
    }

    #[test]
    fn realignment_covers_every_sentence(seed in 0u64..1000, n in 1usize..12, sigma in 0.0f64..1.0) {
        let plan = TonePlan { noise_sigma: sigma, ..TonePlan::default() };
        let f = make_synthetic_audiobook(seed, n, 8000, &plan);
        let provider = MatrixSliceProvider::new(f.posteriors.clone());
        let cfg = RealignConfig { n_best: 2, max_iters: 4, ..RealignConfig::default() };
        let out = recursive_align(&provider, &f.sentences, &cfg).unwrap();
        prop_assert!(out.iteration_scores.len() <= cfg.max_iters);
        prop_assert_eq!(out.result.entries.len(), n);
        prop_assert!(out.result.entries.iter().enumerate().all(|(i, e)| e.sentence_index == i));
        prop_assert!(out.result.is_well_ordered());
        prop_assert!(out.result.avg_score >= out.iteration_scores[0]);
        let best = out.iteration_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.result.avg_score, best);
        prop_assert!(out.iteration_scores[..=out.best_iteration].windows(2).all(|w| w[0] <= w[1]));
    }
}
