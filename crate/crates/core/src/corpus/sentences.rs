use std::collections::HashSet;

use super::{CaptionCue, CorpusError, Sentence};

/// Splits text into sentences, returned as half-open character spans with
/// no leading or trailing whitespace.
pub trait SentenceTokenizer: Sync {
    fn spans(&self, text: &str) -> Vec<(usize, usize)>;
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "inc", "ltd", "co", "no", "vol",
    "fig", "approx", "dept", "est", "mt", "u.s", "u.k", "a.m", "p.m",
];

/// Splits after `.`, `!` or `?` (plus any closing quotes or brackets) when
/// followed by whitespace and an uppercase letter or an opening quote.
/// Known abbreviations and single-letter initials never end a sentence.
#[derive(Clone, Debug)]
pub struct RuleTokenizer {
    abbreviations: HashSet<String>,
}

impl Default for RuleTokenizer {
    fn default() -> Self {
        Self::with_abbreviations(ABBREVIATIONS.iter().copied())
    }
}

impl RuleTokenizer {
    pub fn with_abbreviations<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            abbreviations: words.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// True when the word ending at the period is an abbreviation or initial.
    fn protected(&self, chars: &[char], dot: usize) -> bool {
        let mut start = dot;
        while start > 0 && !chars[start - 1].is_whitespace() {
            start -= 1;
        }
        let word: String = chars[start..dot]
            .iter()
            .collect::<String>()
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if word.chars().count() == 1 && word.chars().all(char::is_alphabetic) {
            return true;
        }
        self.abbreviations.contains(&word)
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}')
}

impl SentenceTokenizer for RuleTokenizer {
    fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let n = chars.len();
        let mut cuts = Vec::new();
        let mut i = 0;
        while i < n {
            if !is_terminal(chars[i]) {
                i += 1;
                continue;
            }
            let first = i;
            while i < n && is_terminal(chars[i]) {
                i += 1;
            }
            while i < n && is_closer(chars[i]) {
                i += 1;
            }
            let end = i;
            let mut j = i;
            while j < n && chars[j].is_whitespace() {
                j += 1;
            }
            if j == end || j == n {
                continue;
            }
            if !(chars[j].is_uppercase() || is_opener(chars[j])) {
                continue;
            }
            if chars[first] == '.' && end - first == 1 && self.protected(&chars, first) {
                continue;
            }
            cuts.push(end);
        }
        cuts.push(n);

        let mut spans = Vec::new();
        let mut start = 0;
        for cut in cuts {
            let mut a = start;
            let mut b = cut;
            while a < b && chars[a].is_whitespace() {
                a += 1;
            }
            while b > a && chars[b - 1].is_whitespace() {
                b -= 1;
            }
            if a < b {
                spans.push((a, b));
            }
            start = cut;
        }
        spans
    }
}

/// Joins cue texts with single spaces, re-splits them into sentences and
/// maps each sentence's character span back to time by linear
/// interpolation inside the cue holding each endpoint.
pub fn split_sentences(cues: &[CaptionCue], tokenizer: &dyn SentenceTokenizer) -> Result<Vec<Sentence>, CorpusError> {
    let mut text = String::new();
    // (char offset, char length) of each cue in the joined text
    let mut layout = Vec::with_capacity(cues.len());
    let mut offset = 0;
    for (i, c) in cues.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            offset += 1;
        }
        let len = c.text.chars().count();
        layout.push((offset, len));
        text.push_str(&c.text);
        offset += len;
    }

    let words = text.split_whitespace().count();
    let marks = text.chars().filter(|&c| is_terminal(c)).count();
    if marks * 100 < words {
        return Err(CorpusError::NoPunctuation { words, marks });
    }

    let chars: Vec<char> = text.chars().collect();
    // index of the cue that owns character x
    let owner = |x: usize| layout.partition_point(|&(o, _)| o <= x) - 1;
    let time = |cue: usize, x: usize| {
        let (o, len) = layout[cue];
        let c = &cues[cue];
        c.start + (c.end - c.start) * (x - o) as f64 / len as f64
    };

    let mut out = Vec::new();
    for (a, b) in tokenizer.spans(&text) {
        let ca = owner(a);
        let cb = owner(b - 1);
        out.push(Sentence {
            text: chars[a..b].iter().collect(),
            start: time(ca, a),
            end: time(cb, b),
        });
    }
    Ok(out)
}
