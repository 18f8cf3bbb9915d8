use serde::{Deserialize, Serialize};

use super::{Chapter, CorpusError, Document, Sentence};

/// A chapter as listed by the uploader.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChapterMark {
    pub title: String,
    pub start_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_seconds: Option<f64>,
}

impl ChapterMark {
    pub fn new(title: impl Into<String>, start_seconds: f64) -> Self {
        Self {
            title: title.into(),
            start_seconds,
            end_seconds: None,
        }
    }
}

/// Why an assembled document is excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rejection {
    NoChapters,
    NoSentences,
    LabelMismatch,
    NonMonotoneTimes,
}

fn overlap(s: &Sentence, c: &Chapter) -> f64 {
    (s.end.min(c.end) - s.start.max(c.start)).max(0.0)
}

/// Assigns sentences to chapters by largest time overlap and derives the
/// segment-final labels.
///
/// Chapter ends are the next chapter's start; the last one ends at its
/// explicit end or at the end of the last sentence. An "Intro" is added
/// when the first chapter starts after the first sentence and an "Outro"
/// when the last chapter stops before the last sentence ends. Chapters that
/// receive no sentence are dropped.
pub fn align_chapters(
    id: &str,
    channel: &str,
    sentences: Vec<Sentence>,
    marks: &[ChapterMark],
) -> Result<Document, CorpusError> {
    if sentences.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    if marks.is_empty() {
        return Err(CorpusError::NoChapters);
    }
    let first = sentences[0].start;
    let last = sentences.iter().map(|s| s.end).fold(f64::NEG_INFINITY, f64::max);

    let mut chapters: Vec<Chapter> = marks
        .iter()
        .enumerate()
        .map(|(i, m)| Chapter {
            title: m.title.clone(),
            start: m.start_seconds,
            end: match marks.get(i + 1) {
                Some(next) => next.start_seconds,
                None => m.end_seconds.unwrap_or(last.max(m.start_seconds)),
            },
        })
        .collect();
    if chapters[0].start > first {
        let end = chapters[0].start;
        chapters.insert(0, Chapter { title: "Intro".into(), start: first, end });
    }
    let tail = chapters.last().unwrap().end;
    if tail < last {
        chapters.push(Chapter { title: "Outro".into(), start: tail, end: last });
    }

    let mut assign = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let mut best = 0;
        let mut best_ov = overlap(s, &chapters[0]);
        for (j, c) in chapters.iter().enumerate().skip(1) {
            let ov = overlap(s, c);
            if ov > best_ov {
                best = j;
                best_ov = ov;
            }
        }
        if best_ov == 0.0 {
            // no overlap anywhere (e.g. a zero-length sentence): use the
            // chapter holding the midpoint
            let mid = 0.5 * (s.start + s.end);
            best = chapters.iter().rposition(|c| c.start <= mid).unwrap_or(0);
        }
        let floor = assign.last().copied().unwrap_or(0);
        assign.push(best.max(floor));
    }

    let mut used = vec![false; chapters.len()];
    for &a in &assign {
        used[a] = true;
    }
    let mut kept: Vec<Chapter> = chapters
        .iter()
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|(c, _)| c.clone())
        .collect();
    for i in 0..kept.len().saturating_sub(1) {
        kept[i].end = kept[i + 1].start;
    }
    let labels = (0..assign.len())
        .map(|i| i + 1 == assign.len() || assign[i] != assign[i + 1])
        .collect();

    Ok(Document {
        id: id.to_string(),
        channel: channel.to_string(),
        sentences,
        labels,
        chapters: kept,
    })
}

/// Structural checks run on every assembled document.
pub fn sanity_check(doc: &Document) -> Result<(), Rejection> {
    if doc.chapters.is_empty() {
        return Err(Rejection::NoChapters);
    }
    if doc.sentences.is_empty() {
        return Err(Rejection::NoSentences);
    }
    let ones = doc.labels.iter().filter(|&&l| l).count();
    if doc.labels.len() != doc.sentences.len() || ones != doc.chapters.len() || !doc.labels.last().copied().unwrap_or(false) {
        return Err(Rejection::LabelMismatch);
    }
    let bad_time = doc.sentences.iter().any(|s| !(s.end >= s.start))
        || doc.sentences.windows(2).any(|w| w[1].start < w[0].start);
    if bad_time {
        return Err(Rejection::NonMonotoneTimes);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(s: f64, e: f64) -> Sentence {
        Sentence { text: "x.".into(), start: s, end: e }
    }

    fn titles(d: &Document) -> Vec<&str> {
        d.chapters.iter().map(|c| c.title.as_str()).collect()
    }

    #[test]
    fn overlap_assignment() {
        let marks = [ChapterMark::new("A", 0.0), ChapterMark::new("B", 6.0)];
        let d = align_chapters("v", "c", vec![sent(0.0, 10.0), sent(10.0, 20.0)], &marks).unwrap();
        assert_eq!(d.labels, vec![true, true]);
        assert_eq!(titles(&d), vec!["A", "B"]);

        // tie goes to the earlier chapter
        let marks = [ChapterMark::new("A", 0.0), ChapterMark::new("B", 7.0)];
        let d = align_chapters("v", "c", vec![sent(2.0, 12.0)], &marks).unwrap();
        assert_eq!(titles(&d), vec!["A"]);
    }

    #[test]
    fn intro_and_outro() {
        let marks = [ChapterMark::new("Main", 30.0)];
        let d = align_chapters("v", "c", vec![sent(0.0, 25.0), sent(25.0, 45.0), sent(45.0, 50.0)], &marks).unwrap();
        assert_eq!(titles(&d), vec!["Intro", "Main"]);
        assert_eq!((d.chapters[0].start, d.chapters[0].end), (0.0, 30.0));
        assert_eq!(d.labels, vec![true, false, true]);

        let marks = [ChapterMark { title: "Main".into(), start_seconds: 0.0, end_seconds: Some(20.0) }];
        let d = align_chapters("v", "c", vec![sent(0.0, 15.0), sent(15.0, 50.0)], &marks).unwrap();
        assert_eq!(titles(&d), vec!["Main", "Outro"]);
        assert_eq!(d.labels, vec![true, true]);
    }

    #[test]
    fn already_covered_document_is_unchanged() {
        let marks = [ChapterMark::new("A", 0.0), ChapterMark::new("B", 10.0)];
        let ss = vec![sent(0.0, 5.0), sent(5.0, 10.0), sent(10.0, 15.0)];
        let d = align_chapters("v", "c", ss.clone(), &marks).unwrap();
        let again: Vec<ChapterMark> = d.chapters.iter().map(|c| ChapterMark::new(c.title.clone(), c.start)).collect();
        let d2 = align_chapters("v", "c", ss, &again).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn empty_chapters_dropped_and_contiguous() {
        let marks = [ChapterMark::new("A", 0.0), ChapterMark::new("B", 5.0), ChapterMark::new("C", 5.5)];
        let d = align_chapters("v", "c", vec![sent(0.0, 5.0), sent(6.0, 9.0)], &marks).unwrap();
        assert_eq!(titles(&d), vec!["A", "C"]);
        assert_eq!(d.chapters[0].end, 5.5);
        assert_eq!(sanity_check(&d), Ok(()));
    }

    #[test]
    fn zero_length_sentence_uses_midpoint() {
        let marks = [ChapterMark::new("A", 0.0), ChapterMark::new("B", 4.0)];
        let d = align_chapters("v", "c", vec![sent(1.0, 3.0), sent(5.0, 5.0), sent(5.0, 8.0)], &marks).unwrap();
        assert_eq!(d.labels, vec![true, false, true]);
    }

    #[test]
    fn errors_and_sanity() {
        assert_eq!(align_chapters("v", "c", vec![], &[ChapterMark::new("A", 0.0)]), Err(CorpusError::EmptyDocument));
        assert_eq!(align_chapters("v", "c", vec![sent(0.0, 1.0)], &[]), Err(CorpusError::NoChapters));

        let good = align_chapters(
            "v",
            "c",
            vec![sent(0.0, 1.0), sent(1.0, 2.0)],
            &[ChapterMark::new("A", 0.0), ChapterMark::new("B", 1.0)],
        )
        .unwrap();
        assert_eq!(sanity_check(&good), Ok(()));

        let mut d = good.clone();
        d.chapters.clear();
        assert_eq!(sanity_check(&d), Err(Rejection::NoChapters));
        let mut d = good.clone();
        d.sentences.push(sent(2.0, 3.0));
        d.labels.push(true);
        assert_eq!(sanity_check(&d), Err(Rejection::LabelMismatch));
        let mut d = good.clone();
        d.sentences[1].start = -1.0;
        assert_eq!(sanity_check(&d), Err(Rejection::NonMonotoneTimes));
        let mut d = good;
        d.sentences.clear();
        d.labels.clear();
        assert_eq!(sanity_check(&d), Err(Rejection::NoSentences));
    }
}
