use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(hit: usize, cand: usize, reference: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(hit, cand);
        let recall = ratio(hit, reference);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }
}

/// R1, R2 and RL for one pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeSet {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rougel: RougeScore,
}

/// Lowercased alphanumeric runs.
pub fn rouge_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Clipped n-gram overlap.
pub fn rouge_n(reference: &str, candidate: &str, n: usize) -> RougeScore {
    let r = rouge_tokens(reference);
    let c = rouge_tokens(candidate);
    let rg = ngrams(&r, n);
    let cg = ngrams(&c, n);
    let hit = cg.iter().map(|(g, &k)| k.min(rg.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_counts(hit, cg.values().sum(), rg.values().sum())
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence precision, recall and F1.
pub fn rouge_l(reference: &str, candidate: &str) -> RougeScore {
    let r = rouge_tokens(reference);
    let c = rouge_tokens(candidate);
    RougeScore::from_counts(lcs(&r, &c), c.len(), r.len())
}

pub fn rouge_all(reference: &str, candidate: &str) -> RougeSet {
    RougeSet {
        rouge1: rouge_n(reference, candidate, 1),
        rouge2: rouge_n(reference, candidate, 2),
        rougel: rouge_l(reference, candidate),
    }
}
