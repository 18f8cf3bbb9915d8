use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

pub const PAD: usize = 0;
pub const OOV: usize = 1;

/// Lowercased alphanumeric runs.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Word list with reserved PAD (0) and OOV (1) ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Keeps words seen at least `min_count` times, most frequent first
    /// (ties alphabetical), up to `max_size` entries including the two
    /// reserved ones.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize, max_size: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in word_tokens(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut words = vec!["<pad>".to_string(), "<oov>".to_string()];
        words.extend(ranked.into_iter().take(max_size.saturating_sub(2)).map(|(w, _)| w));
        words.into()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        match self.index.get(word) {
            Some(&i) if i > OOV => i,
            _ => OOV,
        }
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Token ids of a sentence, truncated to `max_tokens`.
    pub fn encode(&self, text: &str, max_tokens: usize) -> Vec<usize> {
        word_tokens(text).iter().take(max_tokens).map(|w| self.id(w)).collect()
    }
}

/// Hex SHA-256 of the sentence text.
pub fn sentence_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// One line of a frozen-embedding file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenRecord {
    pub sentence_hash: String,
    pub vector: Vec<f64>,
}

/// Precomputed sentence vectors keyed by [`sentence_hash`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrozenEmbeddings {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl FrozenEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self { dim, table: HashMap::new() }
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f64>) -> Result<(), ModelError> {
        self.insert_hash(sentence_hash(text), vector)
    }

    fn insert_hash(&mut self, hash: String, vector: Vec<f64>) -> Result<(), ModelError> {
        if vector.len() != self.dim || vector.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::BadConfig(format!("frozen vector for {hash} must hold {} finite values", self.dim)));
        }
        self.table.insert(hash, vector);
        Ok(())
    }

    /// Reads JSONL of `{sentence_hash, vector}`; every vector must have `dim`
    /// entries.
    pub fn read_jsonl<R: BufRead>(r: R, dim: usize) -> Result<Self, ModelError> {
        let mut out = Self::new(dim);
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FrozenRecord =
                serde_json::from_str(&line).map_err(|e| ModelError::Format(format!("line {}: {e}", n + 1)))?;
            out.insert_hash(rec.sentence_hash, rec.vector)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, text: &str) -> Result<&[f64], ModelError> {
        let h = sentence_hash(text);
        self.table.get(&h).map(Vec::as_slice).ok_or(ModelError::MissingEmbedding(h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_ids() {
        let v = Vocab::build(["b a a", "c a b"], 1, 10);
        assert_eq!(v.word(2), Some("a"));
        assert_eq!(v.word(3), Some("b"));
        assert_eq!(v.encode("A, zzz c!", 8), vec![2, OOV, 4]);
        assert_eq!(v.encode("a a a", 2).len(), 2);
        assert_eq!(v.id("<pad>"), OOV);
        let small = Vocab::build(["b a a", "c a b"], 2, 3);
        assert_eq!(small.len(), 3);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }

    #[test]
    fn frozen_table() {
        let h = sentence_hash("Hi.");
        assert_eq!(h.len(), 64);
        let line = format!("{{\"sentence_hash\":\"{h}\",\"vector\":[0.5,-1.0]}}\n");
        let t = FrozenEmbeddings::read_jsonl(line.as_bytes(), 2).unwrap();
        assert_eq!(t.get("Hi.").unwrap(), &[0.5, -1.0]);
        assert!(matches!(t.get("Bye."), Err(ModelError::MissingEmbedding(_))));
        assert!(FrozenEmbeddings::read_jsonl(line.as_bytes(), 3).is_err());
    }
}
