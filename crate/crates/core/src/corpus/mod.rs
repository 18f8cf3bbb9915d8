//! Caption ingestion, chapter alignment, splits, statistics, the titles
//! view and synthetic corpora.

mod align;
mod ingest;
mod sentences;
mod splits;
mod stats;
mod synth;
mod vtt;

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_chapters, sanity_check, ChapterMark, Rejection};
pub use ingest::{ingest_dir, ingest_video, ChapterFile, IngestOutcome};
pub use sentences::{split_sentences, RuleTokenizer, SentenceTokenizer};
pub use splits::{make_splits, Partition, SplitAssignment};
pub use stats::{build_titles_view, concentration_index, corpus_stats, MeanSd, StatsReport, TitleExample, MAX_TITLE_CHARS};
pub use synth::{gen_synthetic, SynthConfig};
pub use vtt::{parse_vtt, repair_cues};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("malformed VTT: {0}")]
    MalformedVtt(String),
    #[error("unfixable timestamps: {0}")]
    UnfixableTimestamps(String),
    #[error("transcript lacks punctuation ({marks} terminal marks for {words} words)")]
    NoPunctuation { words: usize, marks: usize },
    #[error("no sentences survive")]
    EmptyDocument,
    #[error("document has no chapters")]
    NoChapters,
    #[error("no chapter file for {0}")]
    MissingChapters(String),
    #[error("bad chapter file: {0}")]
    BadChapters(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty input")]
    EmptyInput,
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("document rejected: {0:?}")]
    Rejected(Rejection),
    #[error("io: {0}")]
    Io(String),
    #[error("json: {0}")]
    Json(String),
}

impl CorpusError {
    /// Short key used in exclusion reports.
    pub fn reason(&self) -> String {
        match self {
            CorpusError::MalformedVtt(_) => "MalformedVtt".into(),
            CorpusError::UnfixableTimestamps(_) => "UnfixableTimestamps".into(),
            CorpusError::NoPunctuation { .. } => "NoPunctuation".into(),
            CorpusError::EmptyDocument => "EmptyDocument".into(),
            CorpusError::NoChapters => "NoChapters".into(),
            CorpusError::MissingChapters(_) => "MissingChapters".into(),
            CorpusError::BadChapters(_) => "BadChapters".into(),
            CorpusError::Rejected(r) => format!("{r:?}"),
            other => format!("{other:?}").split(['(', ' ', '{']).next().unwrap_or("Other").to_string(),
        }
    }
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CorpusError {
    fn from(e: serde_json::Error) -> Self {
        CorpusError::Json(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionCue {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

impl CaptionCue {
    pub fn new(start: f64, end: f64, text: impl Into<String>) -> Self {
        Self {
            start,
            end,
            text: text.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chapter {
    pub title: String,
    pub start: f64,
    pub end: f64,
}

/// A sentence-aligned document. `labels[i]` is set when sentence `i` ends
/// a chapter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub channel: String,
    pub sentences: Vec<Sentence>,
    #[serde(with = "labels01")]
    pub labels: Vec<bool>,
    pub chapters: Vec<Chapter>,
}

impl Document {
    /// Sentence index ranges of each segment, read off the labels.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, &l) in self.labels.iter().enumerate() {
            if l || i + 1 == self.labels.len() {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        out
    }

    pub fn texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.text.as_str()).collect()
    }
}

mod labels01 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&b| b as u8).collect::<Vec<u8>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let raw = Vec::<u8>::deserialize(d)?;
        raw.into_iter()
            .map(|x| match x {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
            })
            .collect()
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), CorpusError> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Json(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}
