//! Title-generation inputs, an extractive baseline titler and ROUGE.

mod rouge;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TitleExample;

pub use rouge::{rouge_all, rouge_l, rouge_n, rouge_tokens, RougeScore, RougeSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TitlingError {
    #[error("section has no words")]
    EmptySection,
    #[error("bad titling config: {0}")]
    BadConfig(String),
}

/// Decoding settings kept for a neural generator; the extractive baseline
/// ignores them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodingDefaults {
    pub beam_size: usize,
    pub top_k: usize,
    pub top_p: f64,
}

pub const DECODING: DecodingDefaults = DecodingDefaults {
    beam_size: 5,
    top_k: 50,
    top_p: 0.95,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    #[default]
    None,
    PreviousTitles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TitlingConfig {
    /// Leading sentences of the section to keep; `None` keeps all.
    pub input_span: Option<usize>,
    pub context: ContextMode,
    /// Character cap on the whole input; only section text is cut.
    pub max_input_chars: Option<usize>,
    pub delimiter: String,
    pub separator: String,
}

impl Default for TitlingConfig {
    fn default() -> Self {
        Self {
            input_span: None,
            context: ContextMode::None,
            max_input_chars: None,
            delimiter: " | ".into(),
            separator: "\n\n".into(),
        }
    }
}

impl TitlingConfig {
    pub fn validate(&self) -> Result<(), TitlingError> {
        if self.input_span == Some(0) {
            return Err(TitlingError::BadConfig("input_span must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator input: optional previous titles, then the first sentences of
/// the section.
pub fn build_title_input(example: &TitleExample, cfg: &TitlingConfig) -> String {
    let take = cfg.input_span.unwrap_or(usize::MAX).min(example.sentences.len());
    let mut section = example.sentences[..take].join(" ");
    let prefix = match cfg.context {
        ContextMode::PreviousTitles if !example.previous_titles.is_empty() => {
            format!("{}{}", example.previous_titles.join(&cfg.delimiter), cfg.separator)
        }
        _ => String::new(),
    };
    if let Some(cap) = cfg.max_input_chars {
        let room = cap.saturating_sub(prefix.chars().count());
        if let Some((cut, _)) = section.char_indices().nth(room) {
            section.truncate(cut);
        }
    }
    prefix + &section
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he", "her", "his", "i",
    "if", "in", "into", "is", "it", "its", "me", "my", "no", "not", "of", "on", "or", "our", "she", "so", "that",
    "the", "their", "them", "then", "there", "these", "they", "this", "to", "up", "us", "was", "we", "were", "what",
    "when", "which", "who", "will", "with", "you", "your",
];

fn words(text: &str) -> Vec<String> {
    rouge_tokens(text)
}

/// Document frequencies over a corpus of sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    documents: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_sections<'a>(sections: impl IntoIterator<Item = &'a str>) -> Self {
        let mut t = Self::default();
        for s in sections {
            t.documents += 1;
            for w in words(s).into_iter().collect::<HashSet<_>>() {
                *t.df.entry(w).or_default() += 1;
            }
        }
        t
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, word: &str) -> f64 {
        let df = self.df.get(word).copied().unwrap_or(0);
        ((1 + self.documents) as f64 / (1 + df) as f64).ln() + 1.0
    }
}

fn title_case(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Picks the `k` highest tf·idf content words of the section (ties go to
/// the earlier word) and returns them title-cased in reading order.
/// Stopwords are only used when the section has nothing else.
pub fn extractive_title(sentences: &[String], k: usize, idf: &IdfTable) -> Result<String, TitlingError> {
    if k == 0 {
        return Err(TitlingError::BadConfig("k must be at least 1".into()));
    }
    let tokens = words(&sentences.join(" "));
    if tokens.is_empty() {
        return Err(TitlingError::EmptySection);
    }
    let stop: HashSet<&str> = STOPWORDS.iter().copied().collect();
    let content: Vec<&String> = tokens.iter().filter(|w| !stop.contains(w.as_str())).collect();
    let pool: Vec<&String> = if content.is_empty() { tokens.iter().collect() } else { content };

    let mut order: Vec<&str> = Vec::new();
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for w in &pool {
        let e = tf.entry(w.as_str()).or_insert(0);
        if *e == 0 {
            order.push(w.as_str());
        }
        *e += 1;
    }
    let mut ranked: Vec<(usize, f64)> = order
        .iter()
        .enumerate()
        .map(|(i, w)| (i, tf[w] as f64 * idf.idf(w)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked.iter().take(k).map(|&(i, _)| i).collect();
    chosen.sort_unstable();
    Ok(chosen.iter().map(|&i| title_case(order[i])).collect::<Vec<_>>().join(" "))
}

/// Titles view example turned into a generator training pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TitlePair {
    pub input: String,
    pub target: String,
}

pub fn title_pairs(examples: &[TitleExample], cfg: &TitlingConfig) -> Vec<TitlePair> {
    examples
        .iter()
        .map(|e| TitlePair {
            input: build_title_input(e, cfg),
            target: e.title.clone(),
        })
        .collect()
}
