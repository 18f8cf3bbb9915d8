use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Chapter, CorpusError, Document, Sentence};

/// Topic-concatenation corpus generator settings. Ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub documents: usize,
    pub vocab_size: usize,
    pub topics: usize,
    pub segment_len: [usize; 2],
    pub segments_per_doc: [usize; 2],
    pub sentence_len: [usize; 2],
    /// Probability that a token is drawn uniformly from the whole
    /// vocabulary instead of the segment's topic.
    pub noise: f64,
    pub channels: usize,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            documents: 100,
            vocab_size: 500,
            topics: 5,
            segment_len: [3, 11],
            segments_per_doc: [6, 6],
            sentence_len: [4, 8],
            noise: 0.2,
            channels: 40,
            id_prefix: "synth".into(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::BadConfig(m.into()));
        for (name, [lo, hi]) in [
            ("segment_len", self.segment_len),
            ("segments_per_doc", self.segments_per_doc),
            ("sentence_len", self.sentence_len),
        ] {
            if lo == 0 || lo > hi {
                return bad(&format!("{name} range {lo}..={hi} is empty"));
            }
        }
        if self.topics < 2 {
            return bad("need at least 2 topics");
        }
        if self.vocab_size < self.topics {
            return bad("vocabulary smaller than topic count");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if self.channels == 0 {
            return bad("need at least one channel");
        }
        Ok(())
    }
}

pub(crate) fn word(i: usize) -> String {
    format!("w{i:03}")
}

/// Generates documents made of topic-homogeneous segments. Topic `t` owns
/// the `t`-th contiguous slice of the vocabulary, with Zipf-like word
/// weights inside the slice; neighbouring segments never share a topic.
pub fn gen_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Vec<Document>, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slice = cfg.vocab_size / cfg.topics;
    let zipf = WeightedIndex::new((0..slice).map(|r| 1.0 / (r + 1) as f64)).expect("non-empty slice");

    let mut docs = Vec::with_capacity(cfg.documents);
    for d in 0..cfg.documents {
        let n_segs = rng.gen_range(cfg.segments_per_doc[0]..=cfg.segments_per_doc[1]);
        let mut sentences = Vec::new();
        let mut labels = Vec::new();
        let mut chapters = Vec::new();
        let mut t = 0.0;
        let mut prev_topic = None;
        for _ in 0..n_segs {
            let topic = loop {
                let k = rng.gen_range(0..cfg.topics);
                if Some(k) != prev_topic {
                    break k;
                }
            };
            prev_topic = Some(topic);
            let len = rng.gen_range(cfg.segment_len[0]..=cfg.segment_len[1]);
            let start = t;
            for k in 0..len {
                let n_words = rng.gen_range(cfg.sentence_len[0]..=cfg.sentence_len[1]);
                let words: Vec<String> = (0..n_words)
                    .map(|_| {
                        if rng.gen::<f64>() < cfg.noise {
                            word(rng.gen_range(0..cfg.vocab_size))
                        } else {
                            word(topic * slice + zipf.sample(&mut rng))
                        }
                    })
                    .collect();
                let dur = 0.4 * n_words as f64;
                sentences.push(Sentence {
                    text: format!("{}.", words.join(" ")),
                    start: t,
                    end: t + dur,
                });
                labels.push(k + 1 == len);
                t += dur;
            }
            chapters.push(Chapter {
                title: format!("Topic {topic}"),
                start,
                end: t,
            });
        }
        docs.push(Document {
            id: format!("{}-{d:05}", cfg.id_prefix),
            channel: format!("ch{:02}", rng.gen_range(0..cfg.channels)),
            sentences,
            labels,
            chapters,
        });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sanity_check;

    #[test]
    fn single_segment_has_one_positive() {
        let cfg = SynthConfig {
            documents: 3,
            topics: 2,
            segments_per_doc: [1, 1],
            ..Default::default()
        };
        for d in gen_synthetic(&cfg, 1).unwrap() {
            let n = d.labels.len();
            assert!(d.labels[..n - 1].iter().all(|&l| !l));
            assert!(d.labels[n - 1]);
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig { documents: 20, ..Default::default() };
        let a = gen_synthetic(&cfg, 9).unwrap();
        assert_eq!(a, gen_synthetic(&cfg, 9).unwrap());
        assert_ne!(a, gen_synthetic(&cfg, 10).unwrap());
        for d in &a {
            assert_eq!(sanity_check(d), Ok(()));
            assert_eq!(d.chapters.len(), 6);
            assert!(d.chapters.windows(2).all(|w| w[0].title != w[1].title));
        }
    }

    #[test]
    fn topic_words_come_from_own_slice() {
        let cfg = SynthConfig { documents: 5, noise: 0.0, ..Default::default() };
        for d in gen_synthetic(&cfg, 2).unwrap() {
            for (r, ch) in d.segments().into_iter().zip(&d.chapters) {
                let topic: usize = ch.title.trim_start_matches("Topic ").parse().unwrap();
                for s in &d.sentences[r] {
                    for w in s.text.trim_end_matches('.').split(' ') {
                        let idx: usize = w[1..].parse().unwrap();
                        assert_eq!(idx / 100, topic);
                    }
                }
            }
        }
    }

    #[test]
    fn bad_configs() {
        for cfg in [
            SynthConfig { topics: 1, ..Default::default() },
            SynthConfig { segment_len: [5, 4], ..Default::default() },
            SynthConfig { sentence_len: [0, 4], ..Default::default() },
            SynthConfig { noise: 1.5, ..Default::default() },
        ] {
            assert!(matches!(gen_synthetic(&cfg, 0), Err(CorpusError::BadConfig(_))));
        }
    }
}
