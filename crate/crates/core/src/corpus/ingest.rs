use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{align_chapters, parse_vtt, repair_cues, sanity_check, split_sentences, ChapterMark, CorpusError, Document, SentenceTokenizer};

/// Chapter list on disk: either a bare array, or an object that also names
/// the channel. Without a channel the video id is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChapterFile {
    List(Vec<ChapterMark>),
    Tagged {
        #[serde(default)]
        channel: Option<String>,
        chapters: Vec<ChapterMark>,
    },
}

impl ChapterFile {
    pub fn marks(&self) -> &[ChapterMark] {
        match self {
            ChapterFile::List(m) => m,
            ChapterFile::Tagged { chapters, .. } => chapters,
        }
    }

    pub fn channel(&self) -> Option<&str> {
        match self {
            ChapterFile::Tagged { channel: Some(c), .. } => Some(c),
            _ => None,
        }
    }
}

/// Runs one video through parse, repair, sentence split, alignment and
/// the sanity checks.
pub fn ingest_video(id: &str, vtt: &[u8], chapters: &ChapterFile, tokenizer: &dyn SentenceTokenizer) -> Result<Document, CorpusError> {
    let cues = repair_cues(parse_vtt(vtt)?)?;
    let sentences = split_sentences(&cues, tokenizer)?;
    let channel = chapters.channel().unwrap_or(id);
    let doc = align_chapters(id, channel, sentences, chapters.marks())?;
    sanity_check(&doc).map_err(CorpusError::Rejected)?;
    Ok(doc)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestOutcome {
    pub documents: Vec<Document>,
    /// `(video id, reason)` for every excluded video.
    pub excluded: Vec<(String, String)>,
}

impl IngestOutcome {
    /// Exclusion counts per reason.
    pub fn report(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (_, r) in &self.excluded {
            *out.entry(r.clone()).or_default() += 1;
        }
        out
    }

    pub fn exclusion_rate(&self) -> f64 {
        let n = self.documents.len() + self.excluded.len();
        if n == 0 {
            0.0
        } else {
            self.excluded.len() as f64 / n as f64
        }
    }
}

/// Ingests every `<id>.vtt` in `vtt_dir` with its `<id>.json` chapter list
/// from `chapters_dir`, in id order, videos in parallel. Per-video failures become exclusions;
/// only directory-level I/O errors are returned.
pub fn ingest_dir(vtt_dir: &Path, chapters_dir: &Path, tokenizer: &dyn SentenceTokenizer) -> Result<IngestOutcome, CorpusError> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(vtt_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("vtt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();

    let results: Vec<Result<Document, CorpusError>> = ids
        .par_iter()
        .map(|id| {
            let vtt = std::fs::read(vtt_dir.join(format!("{id}.vtt")))?;
            let chapter_path = chapters_dir.join(format!("{id}.json"));
            if !chapter_path.exists() {
                return Err(CorpusError::MissingChapters(id.clone()));
            }
            let raw = std::fs::read_to_string(chapter_path)?;
            let chapters: ChapterFile = serde_json::from_str(&raw).map_err(|e| CorpusError::BadChapters(e.to_string()))?;
            ingest_video(id, &vtt, &chapters, tokenizer)
        })
        .collect();
    let mut out = IngestOutcome::default();
    for (id, result) in ids.into_iter().zip(results) {
        match result {
            Ok(doc) => out.documents.push(doc),
            Err(e) => out.excluded.push((id, e.reason())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RuleTokenizer;

    #[test]
    fn chapter_file_shapes() {
        let a: ChapterFile = serde_json::from_str(r#"[{"title":"A","start_seconds":0}]"#).unwrap();
        assert_eq!(a.marks().len(), 1);
        assert_eq!(a.channel(), None);
        let b: ChapterFile =
            serde_json::from_str(r#"{"channel":"c1","chapters":[{"title":"A","start_seconds":0,"end_seconds":9.5}]}"#).unwrap();
        assert_eq!(b.channel(), Some("c1"));
        assert_eq!(b.marks()[0].end_seconds, Some(9.5));
    }

    #[test]
    fn video_pipeline() {
        let vtt = b"WEBVTT\n\n00:00.000 --> 00:04.000\nHello there. This is\n\n00:04.000 --> 00:08.000\na test. Bye now.\n";
        let ch: ChapterFile = serde_json::from_str(r#"[{"title":"Start","start_seconds":0},{"title":"End","start_seconds":6}]"#).unwrap();
        let d = ingest_video("v1", vtt, &ch, &RuleTokenizer::default()).unwrap();
        assert_eq!(d.channel, "v1");
        assert_eq!(d.texts(), vec!["Hello there.", "This is a test.", "Bye now."]);
        assert_eq!(d.labels, vec![false, true, true]);
        let e = ingest_video("v1", b"nope", &ch, &RuleTokenizer::default()).unwrap_err();
        assert_eq!(e.reason(), "MalformedVtt");
    }
}
