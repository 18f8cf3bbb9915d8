use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Document, Partition, SplitAssignment};
use crate::metrics::mean_std;

/// Longest title kept in the titles view, in characters.
pub const MAX_TITLE_CHARS: usize = 75;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(xs: &[f64]) -> Self {
        let (mean, sd) = mean_std(xs);
        Self { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub documents: usize,
    pub document_sentences: MeanSd,
    pub segment_sentences: MeanSd,
    pub segments_per_document: MeanSd,
    pub segment_minutes: MeanSd,
    pub title_words: MeanSd,
    pub concentration_n: usize,
    pub concentration_index: f64,
}

/// Share of all titles taken by the `n` most frequent ones. Titles are
/// compared after trimming surrounding whitespace, case-sensitively.
pub fn concentration_index<'a>(titles: impl IntoIterator<Item = &'a str>, n: usize) -> Result<f64, CorpusError> {
    if n == 0 {
        return Err(CorpusError::BadConfig("concentration index needs n >= 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0usize;
    for t in titles {
        *counts.entry(t.trim()).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(CorpusError::EmptyInput);
    }
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable_by(|a, b| b.cmp(a));
    Ok(c.iter().take(n).sum::<usize>() as f64 / total as f64)
}

/// Corpus statistics with population standard deviations. Segment
/// duration runs from the first sentence's start to the last sentence's
/// end, in minutes.
pub fn corpus_stats(docs: &[Document]) -> Result<StatsReport, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut doc_len = Vec::new();
    let mut seg_len = Vec::new();
    let mut segs = Vec::new();
    let mut minutes = Vec::new();
    let mut title_words = Vec::new();
    for d in docs {
        doc_len.push(d.sentences.len() as f64);
        let ranges = d.segments();
        segs.push(ranges.len() as f64);
        for r in ranges {
            seg_len.push(r.len() as f64);
            let (a, b) = (&d.sentences[r.start], &d.sentences[r.end - 1]);
            minutes.push((b.end - a.start) / 60.0);
        }
        title_words.extend(d.chapters.iter().map(|c| c.title.split_whitespace().count() as f64));
    }
    let n = 20;
    let ci = concentration_index(docs.iter().flat_map(|d| d.chapters.iter().map(|c| c.title.as_str())), n)?;
    Ok(StatsReport {
        documents: docs.len(),
        document_sentences: MeanSd::of(&doc_len),
        segment_sentences: MeanSd::of(&seg_len),
        segments_per_document: MeanSd::of(&segs),
        segment_minutes: MeanSd::of(&minutes),
        title_words: MeanSd::of(&title_words),
        concentration_n: n,
        concentration_index: ci,
    })
}

/// One (section, title) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TitleExample {
    pub video_id: String,
    pub section_index: usize,
    pub sentences: Vec<String>,
    pub section_text: String,
    pub title: String,
    pub previous_titles: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
}

/// One example per chapter whose title fits in [`MAX_TITLE_CHARS`].
/// `previous_titles` lists every earlier chapter title of the video, kept
/// or not; each example takes its video's partition.
pub fn build_titles_view(docs: &[Document], split: &SplitAssignment) -> Vec<TitleExample> {
    let mut out = Vec::new();
    for d in docs {
        for (i, (range, ch)) in d.segments().into_iter().zip(&d.chapters).enumerate() {
            if ch.title.chars().count() > MAX_TITLE_CHARS {
                continue;
            }
            let sentences: Vec<String> = d.sentences[range].iter().map(|s| s.text.clone()).collect();
            out.push(TitleExample {
                video_id: d.id.clone(),
                section_index: i,
                section_text: sentences.join(" "),
                sentences,
                title: ch.title.clone(),
                previous_titles: d.chapters[..i].iter().map(|c| c.title.clone()).collect(),
                partition: split.get(&d.id).copied(),
            });
        }
    }
    out
}
