//! Book text structure: chapter → paragraph → style → sentence.
//!
//! [`parse_plain_text`] turns flattened reference text into a
//! [`StructuredBook`]. Chapters are separated by blank lines and/or heading
//! lines matching a configurable pattern; paragraphs start at indented lines
//! (or lines opening with a quotation mark); quoted spans become spoken
//! styles; sentences end after terminal punctuation, which stays attached.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use regex_automata::meta::Regex;
use thiserror::Error;

use crate::align::AlignmentResult;
use crate::span::TimeSpan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextError {
    #[error("input has no text content")]
    EmptyInput,
    #[error("quotation opened on line {line} is not closed before the paragraph ends")]
    UnbalancedQuote { line: usize },
    #[error("invalid chapter pattern: {0}")]
    BadChapterPattern(String),
    #[error("alignment has {got} entries but the book has {expected} sentences")]
    CountMismatch { expected: usize, got: usize },
    #[error("book invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StyleKind {
    Narrative,
    Spoken,
}

impl StyleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StyleKind::Narrative => "narrative",
            StyleKind::Spoken => "spoken",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "narrative" => Some(StyleKind::Narrative),
            "spoken" => Some(StyleKind::Spoken),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceNode {
    /// Sentence text including its terminal punctuation.
    pub text: String,
    pub time: Option<TimeSpan>,
}

impl SentenceNode {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), time: None }
    }

    pub fn timed(text: impl Into<String>, time: TimeSpan) -> Self {
        Self { text: text.into(), time: Some(time) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    pub kind: StyleKind,
    pub sentences: Vec<SentenceNode>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paragraph {
    pub styles: Vec<Style>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chapter {
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StructuredBook {
    pub chapters: Vec<Chapter>,
}

/// Location of a sentence inside a book: chapter, paragraph, style and
/// sentence-within-style indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentencePath {
    pub chapter: usize,
    pub paragraph: usize,
    pub style: usize,
    pub sentence: usize,
}

impl StructuredBook {
    pub fn sentence_count(&self) -> usize {
        self.sentences().count()
    }

    /// Sentences in reading order.
    pub fn sentences(&self) -> impl Iterator<Item = &SentenceNode> + '_ {
        self.chapters.iter().flat_map(|c| c.paragraphs.iter()).flat_map(|p| p.styles.iter()).flat_map(|s| s.sentences.iter())
    }

    pub fn sentences_mut(&mut self) -> impl Iterator<Item = &mut SentenceNode> + '_ {
        self.chapters.iter_mut().flat_map(|c| c.paragraphs.iter_mut()).flat_map(|p| p.styles.iter_mut()).flat_map(|s| s.sentences.iter_mut())
    }

    /// Sentences in reading order together with their structural location.
    pub fn sentence_paths(&self) -> Vec<(SentencePath, &SentenceNode)> {
        let mut out = Vec::new();
        for (ci, c) in self.chapters.iter().enumerate() {
            for (pi, p) in c.paragraphs.iter().enumerate() {
                for (si, s) in p.styles.iter().enumerate() {
                    for (ti, node) in s.sentences.iter().enumerate() {
                        let path = SentencePath { chapter: ci, paragraph: pi, style: si, sentence: ti };
                        out.push((path, node));
                    }
                }
            }
        }
        out
    }

    /// Checks the structural invariants: every level non-empty, sentence
    /// texts non-blank, times well-formed.
    pub fn validate(&self) -> Result<(), TextError> {
        let fail = |msg: &str| Err(TextError::Invariant(msg.to_string()));
        if self.chapters.is_empty() {
            return fail("book has no chapters");
        }
        for c in &self.chapters {
            if c.paragraphs.is_empty() {
                return fail("chapter has no paragraphs");
            }
            for p in &c.paragraphs {
                if p.styles.is_empty() {
                    return fail("paragraph has no styles");
                }
                for s in &p.styles {
                    if s.sentences.is_empty() {
                        return fail("style has no sentences");
                    }
                    for n in &s.sentences {
                        if n.text.trim().is_empty() {
                            return fail("sentence text is blank");
                        }
                        if let Some(t) = n.time {
                            if !t.is_valid() {
                                return fail("sentence time is not a valid span");
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Layout conventions of the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseRules {
    /// A run of blank lines ends the current chapter.
    pub blank_line_chapters: bool,
    /// Lines (trimmed) matching this regex are chapter headings. The heading
    /// line starts a new chapter and is not part of the content.
    pub chapter_pattern: Option<String>,
    /// Characters that mark an indented line, i.e. a new paragraph.
    pub indent_chars: Vec<char>,
    /// Open/close quotation mark pairs delimiting spoken styles.
    pub quote_pairs: Vec<(char, char)>,
    /// Characters ending a sentence.
    pub terminals: Vec<char>,
}

impl Default for ParseRules {
    fn default() -> Self {
        Self {
            blank_line_chapters: true,
            chapter_pattern: None,
            indent_chars: vec!['\u{3000}', ' ', '\t'],
            quote_pairs: vec![('「', '」'), ('『', '』'), ('“', '”')],
            terminals: vec!['.', '!', '?', '。', '！', '？'],
        }
    }
}

impl ParseRules {
    fn close_for(&self, ch: char) -> Option<char> {
        self.quote_pairs.iter().find(|(o, _)| *o == ch).map(|(_, c)| *c)
    }

    fn is_open(&self, ch: char) -> bool {
        self.quote_pairs.iter().any(|(o, _)| *o == ch)
    }

    fn is_close(&self, ch: char) -> bool {
        self.quote_pairs.iter().any(|(_, c)| *c == ch)
    }
}

type Line = (usize, String);

/// Parses flattened book text into chapters, paragraphs, styles and
/// sentences.
pub fn parse_plain_text(text: &str, rules: &ParseRules) -> Result<StructuredBook, TextError> {
    if text.trim().is_empty() {
        return Err(TextError::EmptyInput);
    }
    let heading = match &rules.chapter_pattern {
        Some(p) => Some(Regex::new(p).map_err(|e| TextError::BadChapterPattern(e.to_string()))?),
        None => None,
    };

    let mut chapters: Vec<Vec<Vec<Line>>> = Vec::new();
    let mut chapter: Vec<Vec<Line>> = Vec::new();
    let mut paragraph: Vec<Line> = Vec::new();

    fn close_paragraph(paragraph: &mut Vec<Line>, chapter: &mut Vec<Vec<Line>>) {
        if !paragraph.is_empty() {
            chapter.push(core::mem::take(paragraph));
        }
    }
    fn close_chapter(chapter: &mut Vec<Vec<Line>>, chapters: &mut Vec<Vec<Vec<Line>>>) {
        if !chapter.is_empty() {
            chapters.push(core::mem::take(chapter));
        }
    }

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            close_paragraph(&mut paragraph, &mut chapter);
            if rules.blank_line_chapters {
                close_chapter(&mut chapter, &mut chapters);
            }
            continue;
        }
        if let Some(re) = &heading {
            if re.is_match(trimmed) {
                close_paragraph(&mut paragraph, &mut chapter);
                close_chapter(&mut chapter, &mut chapters);
                continue;
            }
        }
        let first = raw.chars().next().unwrap_or(' ');
        let starts_paragraph = rules.indent_chars.contains(&first) || rules.is_open(first);
        if starts_paragraph {
            close_paragraph(&mut paragraph, &mut chapter);
        }
        let body = raw.trim_start_matches(|c: char| rules.indent_chars.contains(&c) || c.is_whitespace());
        paragraph.push((line_no, body.trim_end().to_string()));
    }
    close_paragraph(&mut paragraph, &mut chapter);
    close_chapter(&mut chapter, &mut chapters);

    let mut book = StructuredBook::default();
    for lines in chapters {
        let mut out = Chapter::default();
        for para in lines {
            let styles = split_styles(&para, rules)?;
            if !styles.is_empty() {
                out.paragraphs.push(Paragraph { styles });
            }
        }
        if !out.paragraphs.is_empty() {
            book.chapters.push(out);
        }
    }
    if book.chapters.is_empty() {
        return Err(TextError::EmptyInput);
    }
    Ok(book)
}

/// Splits one paragraph into narrative and spoken styles. Only the
/// outermost quotation marks are structural; nested quotes stay in the text.
fn split_styles(lines: &[Line], rules: &ParseRules) -> Result<Vec<Style>, TextError> {
    struct OpenQuote {
        open: char,
        close: char,
        depth: usize,
        line: usize,
    }

    let mut styles = Vec::new();
    let mut buf = String::new();
    let mut quote: Option<OpenQuote> = None;

    let push_style = |styles: &mut Vec<Style>, buf: &mut String, kind: StyleKind| {
        let sentences = split_sentences(buf, rules);
        if !sentences.is_empty() {
            styles.push(Style { kind, sentences });
        }
        buf.clear();
    };

    for (n, (line_no, line)) in lines.iter().enumerate() {
        if n > 0 {
            buf.push(' ');
        }
        for ch in line.chars() {
            match quote.as_mut() {
                None => {
                    if let Some(close) = rules.close_for(ch) {
                        push_style(&mut styles, &mut buf, StyleKind::Narrative);
                        quote = Some(OpenQuote { open: ch, close, depth: 0, line: *line_no });
                    } else {
                        buf.push(ch);
                    }
                }
                Some(q) => {
                    if ch == q.close && q.depth == 0 {
                        push_style(&mut styles, &mut buf, StyleKind::Spoken);
                        quote = None;
                    } else {
                        if ch == q.open && q.open != q.close {
                            q.depth += 1;
                        } else if ch == q.close {
                            q.depth -= 1;
                        }
                        buf.push(ch);
                    }
                }
            }
        }
    }
    if let Some(q) = quote {
        return Err(TextError::UnbalancedQuote { line: q.line });
    }
    push_style(&mut styles, &mut buf, StyleKind::Narrative);
    Ok(styles)
}

/// Splits after each run of terminal characters outside nested quotes.
fn split_sentences(text: &str, rules: &ParseRules) -> Vec<SentenceNode> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0usize;
    let mut chars = text.chars().peekable();

    let mut flush = |cur: &mut String| {
        let t = cur.trim();
        if !t.is_empty() {
            out.push(SentenceNode::new(t));
        }
        cur.clear();
    };

    while let Some(ch) = chars.next() {
        cur.push(ch);
        if rules.is_open(ch) {
            depth += 1;
        } else if rules.is_close(ch) {
            depth = depth.saturating_sub(1);
        } else if depth == 0 && rules.terminals.contains(&ch) {
            while let Some(&next) = chars.peek() {
                if rules.terminals.contains(&next) {
                    cur.push(next);
                    chars.next();
                } else {
                    break;
                }
            }
            flush(&mut cur);
        }
    }
    flush(&mut cur);
    out
}

/// Copies aligned spans onto the book's sentences in reading order,
/// overwriting any existing times.
pub fn attach_times(book: &StructuredBook, alignment: &AlignmentResult) -> Result<StructuredBook, TextError> {
    let expected = book.sentence_count();
    let got = alignment.entries.len();
    if expected != got {
        return Err(TextError::CountMismatch { expected, got });
    }
    let mut out = book.clone();
    for (node, entry) in out.sentences_mut().zip(&alignment.entries) {
        node.time = Some(entry.span);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::SentenceAlignment;

    fn texts(style: &Style) -> Vec<&str> {
        style.sentences.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn blank_line_chapters_and_quotes() {
        let book = parse_plain_text("A.\n\n「B。」C.", &ParseRules::default()).unwrap();
        assert_eq!(book.chapters.len(), 2);
        let styles = &book.chapters[1].paragraphs[0].styles;
        assert_eq!(styles.len(), 2);
        assert_eq!(styles[0].kind, StyleKind::Spoken);
        assert_eq!(texts(&styles[0]), ["B。"]);
        assert_eq!(styles[1].kind, StyleKind::Narrative);
        assert_eq!(texts(&styles[1]), ["C."]);
    }

    #[test]
    fn sentences_keep_delimiters() {
        let book = parse_plain_text("X. Y.", &ParseRules::default()).unwrap();
        assert_eq!(book.chapters.len(), 1);
        let styles = &book.chapters[0].paragraphs[0].styles;
        assert_eq!(styles.len(), 1);
        assert_eq!(texts(&styles[0]), ["X.", "Y."]);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_plain_text("", &ParseRules::default()), Err(TextError::EmptyInput));
        assert_eq!(parse_plain_text(" \n\u{3000}\n", &ParseRules::default()), Err(TextError::EmptyInput));
    }

    #[test]
    fn unbalanced_quote_reports_line() {
        let err = parse_plain_text("First.\n\u{3000}Then 「she said.\n", &ParseRules::default()).unwrap_err();
        assert_eq!(err, TextError::UnbalancedQuote { line: 2 });
    }

    #[test]
    fn indentation_starts_paragraphs() {
        let text = "\u{3000}One. Two.\ncontinued here.\n\u{3000}Three.";
        let book = parse_plain_text(text, &ParseRules::default()).unwrap();
        let paras = &book.chapters[0].paragraphs;
        assert_eq!(paras.len(), 2);
        assert_eq!(texts(&paras[0].styles[0]), ["One.", "Two.", "continued here."]);
        assert_eq!(texts(&paras[1].styles[0]), ["Three."]);
    }

    #[test]
    fn nested_quotes_stay_inside_spoken_sentence() {
        let text = "「彼は『はい。』と言った。」";
        let book = parse_plain_text(text, &ParseRules::default()).unwrap();
        let styles = &book.chapters[0].paragraphs[0].styles;
        assert_eq!(styles.len(), 1);
        assert_eq!(styles[0].kind, StyleKind::Spoken);
        assert_eq!(texts(&styles[0]), ["彼は『はい。』と言った。"]);
    }

    #[test]
    fn heading_pattern_splits_chapters() {
        let rules = ParseRules { blank_line_chapters: false, chapter_pattern: Some(r"^第.+章$".into()), ..ParseRules::default() };
        let text = "第一章\n\u{3000}あ。\n\n\u{3000}い。\n第二章\n\u{3000}う。";
        let book = parse_plain_text(text, &rules).unwrap();
        assert_eq!(book.chapters.len(), 2);
        assert_eq!(book.chapters[0].paragraphs.len(), 2);
        assert_eq!(book.sentence_count(), 3);
    }

    #[test]
    fn bad_pattern_is_reported() {
        let rules = ParseRules { chapter_pattern: Some("(".into()), ..ParseRules::default() };
        assert!(matches!(parse_plain_text("a.", &rules), Err(TextError::BadChapterPattern(_))));
    }

    #[test]
    fn repeated_terminals_stay_together() {
        let book = parse_plain_text("Really?! Yes.", &ParseRules::default()).unwrap();
        assert_eq!(texts(&book.chapters[0].paragraphs[0].styles[0]), ["Really?!", "Yes."]);
    }

    fn alignment(spans: &[(f64, f64)]) -> AlignmentResult {
        let entries =
            spans.iter().enumerate().map(|(i, &(s, e))| SentenceAlignment { sentence_index: i, span: TimeSpan::new(s, e).unwrap(), ctc_score: -0.5 }).collect();
        AlignmentResult::from_entries(entries)
    }

    #[test]
    fn attach_copies_in_order() {
        let book = parse_plain_text("A. B.\n\nC.", &ParseRules::default()).unwrap();
        let al = alignment(&[(0.0, 1.0), (1.5, 2.0), (2.5, 3.0)]);
        let timed = attach_times(&book, &al).unwrap();
        let times: Vec<_> = timed.sentences().map(|s| s.time.unwrap()).collect();
        let expected: Vec<_> = al.entries.iter().map(|e| e.span).collect();
        assert_eq!(times, expected);
    }

    #[test]
    fn attach_count_mismatch() {
        let book = parse_plain_text("A. B. C.", &ParseRules::default()).unwrap();
        let al = alignment(&[(0.0, 1.0), (1.5, 2.0)]);
        assert_eq!(attach_times(&book, &al), Err(TextError::CountMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn attach_overwrites_existing_times() {
        let book = parse_plain_text("A. B. C.", &ParseRules::default()).unwrap();
        let first = attach_times(&book, &alignment(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)])).unwrap();
        let second_al = alignment(&[(0.5, 0.9), (1.2, 1.8), (2.2, 2.4)]);
        let second = attach_times(&first, &second_al).unwrap();
        for (node, entry) in second.sentences().zip(&second_al.entries) {
            assert_eq!(node.time, Some(entry.span));
        }
    }
}
