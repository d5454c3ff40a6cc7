//! Corpus YAML: the chapter/paragraph/style/sentence tree with optional
//! per-sentence times.
//!
//! ```yaml
//! chapt000:
//!   parag000:
//!     style000:
//!       kind: narrative
//!       sents:
//!         - sent: "It happened one day."
//!           time: [0.96, 3.32]
//! ```
//!
//! The reader also accepts a style given directly as a list of sentence
//! entries (taken as narrative), and `time` written as a block list.

use std::fmt::Write as _;

use bookalign_core::text::{Chapter, Paragraph, Style};
use bookalign_core::{SentenceNode, StructuredBook, StyleKind, TimeSpan};
use serde_yaml::{Mapping, Value};
use thiserror::Error;

/// Largest index a level key can carry.
pub const MAX_INDEX: usize = 999;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("YAML syntax: {0}")]
    Syntax(String),
    #[error("schema error at {at}: {reason}")]
    Schema { at: String, reason: String },
}

fn schema(at: impl Into<String>, reason: impl Into<String>) -> CorpusError {
    CorpusError::Schema { at: at.into(), reason: reason.into() }
}

/// Renders the book in canonical form.
pub fn serialize_yaml(book: &StructuredBook) -> Result<String, CorpusError> {
    book.validate().map_err(|e| schema("book", e.to_string()))?;
    let check = |n: usize, at: String| if n > MAX_INDEX + 1 { Err(schema(at, format!("{n} entries exceed index {MAX_INDEX}"))) } else { Ok(()) };
    check(book.chapters.len(), "book".into())?;
    let mut out = String::new();
    for (ci, c) in book.chapters.iter().enumerate() {
        check(c.paragraphs.len(), format!("chapt{ci:03}"))?;
        writeln!(out, "chapt{ci:03}:").unwrap();
        for (pi, p) in c.paragraphs.iter().enumerate() {
            check(p.styles.len(), format!("chapt{ci:03}/parag{pi:03}"))?;
            writeln!(out, "  parag{pi:03}:").unwrap();
            for (si, s) in p.styles.iter().enumerate() {
                writeln!(out, "    style{si:03}:").unwrap();
                writeln!(out, "      kind: {}", s.kind.as_str()).unwrap();
                writeln!(out, "      sents:").unwrap();
                for n in &s.sentences {
                    writeln!(out, "        - sent: {}", quote(&n.text)).unwrap();
                    if let Some(t) = n.time {
                        writeln!(out, "          time: [{}, {}]", number(t.start), number(t.end)).unwrap();
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Shortest round-tripping decimal that YAML reads as a float.
fn number(x: f64) -> String {
    let s = format!("{x:?}");
    match s.find('e') {
        Some(i) if !s[..i].contains('.') => format!("{}.0{}", &s[..i], &s[i..]),
        _ => s,
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() || matches!(c, '\u{2028}' | '\u{2029}' | '\u{feff}' | '\u{fffe}' | '\u{ffff}') => {
                write!(out, "\\u{:04X}", c as u32).unwrap();
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn parse_yaml(text: &str) -> Result<StructuredBook, CorpusError> {
    let root: Value = serde_yaml::from_str(text).map_err(|e| CorpusError::Syntax(e.to_string()))?;
    let chapters = indexed(&root, "chapt", "book")?;
    let mut book = StructuredBook::default();
    for (ci, cv) in chapters.into_iter().enumerate() {
        let at = format!("chapt{ci:03}");
        let mut chapter = Chapter::default();
        for (pi, pv) in indexed(cv, "parag", &at)?.into_iter().enumerate() {
            let at = format!("{at}/parag{pi:03}");
            let mut paragraph = Paragraph::default();
            for (si, sv) in indexed(pv, "style", &at)?.into_iter().enumerate() {
                paragraph.styles.push(style(sv, &format!("{at}/style{si:03}"))?);
            }
            chapter.paragraphs.push(paragraph);
        }
        book.chapters.push(chapter);
    }
    book.validate().map_err(|e| schema("book", e.to_string()))?;
    Ok(book)
}

/// Children of a level mapping keyed `<prefix>000`, `<prefix>001`, ...
fn indexed<'a>(v: &'a Value, prefix: &str, at: &str) -> Result<Vec<&'a Value>, CorpusError> {
    let map = v.as_mapping().ok_or_else(|| schema(at, format!("expected a mapping of {prefix}NNN keys")))?;
    if map.is_empty() {
        return Err(schema(at, format!("no {prefix}NNN entries")));
    }
    let mut out = Vec::with_capacity(map.len());
    for (i, (k, child)) in map.iter().enumerate() {
        let key = k.as_str().ok_or_else(|| schema(at, format!("non-string key {k:?}")))?;
        let index = key
            .strip_prefix(prefix)
            .filter(|d| d.len() == 3 && d.bytes().all(|b| b.is_ascii_digit()))
            .map(|d| d.parse::<usize>().unwrap())
            .ok_or_else(|| schema(at, format!("unknown key {key:?}")))?;
        if index != i {
            return Err(schema(at, format!("key {key:?} out of order, expected {prefix}{i:03}")));
        }
        out.push(child);
    }
    Ok(out)
}

fn style(v: &Value, at: &str) -> Result<Style, CorpusError> {
    let (kind, sents) = match v {
        Value::Sequence(items) => (StyleKind::Narrative, items),
        Value::Mapping(map) => {
            reject_unknown(map, &["kind", "sents"], at)?;
            let kind = match map.get("kind") {
                None => StyleKind::Narrative,
                Some(k) => k.as_str().and_then(StyleKind::parse).ok_or_else(|| schema(at, format!("kind must be narrative or spoken, got {k:?}")))?,
            };
            let sents = map.get("sents").and_then(Value::as_sequence).ok_or_else(|| schema(at, "missing sents list"))?;
            (kind, sents)
        }
        _ => return Err(schema(at, "expected a style mapping or sentence list")),
    };
    let sentences = sents.iter().enumerate().map(|(i, s)| sentence(s, &format!("{at}/sents[{i}]"))).collect::<Result<Vec<_>, _>>()?;
    Ok(Style { kind, sentences })
}

fn sentence(v: &Value, at: &str) -> Result<SentenceNode, CorpusError> {
    let map = v.as_mapping().ok_or_else(|| schema(at, "expected a sentence entry"))?;
    reject_unknown(map, &["sent", "time"], at)?;
    let text = map.get("sent").and_then(Value::as_str).ok_or_else(|| schema(at, "missing string `sent`"))?;
    let time = match map.get("time") {
        None => None,
        Some(t) => Some(time_pair(t, at)?),
    };
    Ok(SentenceNode { text: text.to_string(), time })
}

fn time_pair(v: &Value, at: &str) -> Result<TimeSpan, CorpusError> {
    let bad = || schema(at, format!("time must be [start, end] seconds, got {v:?}"));
    let pair = v.as_sequence().filter(|s| s.len() == 2).ok_or_else(bad)?;
    let start = pair[0].as_f64().ok_or_else(bad)?;
    let end = pair[1].as_f64().ok_or_else(bad)?;
    TimeSpan::new(start, end).map_err(|e| schema(at, e.to_string()))
}

fn reject_unknown(map: &Mapping, allowed: &[&str], at: &str) -> Result<(), CorpusError> {
    for k in map.keys() {
        if !k.as_str().is_some_and(|k| allowed.contains(&k)) {
            return Err(schema(at, format!("unknown key {k:?}")));
        }
    }
    Ok(())
}
