use serde::{Deserialize, Serialize};

use super::{MaskSchedule, ModelError};

/// Where sentence vectors come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SentenceSource {
    /// Trainable token-level encoder.
    #[default]
    Scratch,
    /// Fixed vectors looked up by sentence hash.
    FrozenEmbeddings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub sent_layers: usize,
    pub sent_heads: usize,
    pub sent_width: usize,
    pub max_tokens: usize,
    pub doc_layers: usize,
    pub doc_heads: usize,
    pub doc_width: usize,
    /// Feed-forward hidden size as a multiple of the layer width.
    pub ffn_multiplier: usize,
    pub dropout: f64,
    pub rope_base: f64,
    pub schedule: MaskSchedule,
    pub sentence_source: SentenceSource,
}

impl ModelConfig {
    /// Small CPU-sized model.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            sent_layers: 2,
            sent_heads: 2,
            sent_width: 32,
            max_tokens: 32,
            doc_layers: 4,
            doc_heads: 4,
            doc_width: 64,
            ffn_multiplier: 2,
            dropout: 0.1,
            rope_base: 10000.0,
            schedule: MaskSchedule::offline(4),
            sentence_source: SentenceSource::Scratch,
        }
    }

    /// Published sizes: 12-layer, 8-head, 384-wide encoders.
    pub fn paper(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            sent_layers: 12,
            sent_heads: 8,
            sent_width: 384,
            max_tokens: 128,
            doc_layers: 12,
            doc_heads: 8,
            doc_width: 384,
            ffn_multiplier: 4,
            dropout: 0.1,
            rope_base: 10000.0,
            schedule: MaskSchedule::offline(12),
            sentence_source: SentenceSource::Scratch,
        }
    }

    /// Replaces the schedule, keeping its layer count in line with the
    /// document encoder.
    pub fn with_schedule(mut self, schedule: MaskSchedule) -> Result<Self, ModelError> {
        self.schedule = schedule.with_layers(self.doc_layers)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        if self.vocab_size < 2 {
            return bad("vocabulary needs the PAD and OOV entries".into());
        }
        for (name, w, h) in [("sentence", self.sent_width, self.sent_heads), ("document", self.doc_width, self.doc_heads)] {
            if h == 0 || w == 0 || w % h != 0 {
                return bad(format!("{name} width {w} not divisible by {h} heads"));
            }
        }
        if !(self.doc_width / self.doc_heads).is_multiple_of(2) {
            return bad("document head size must be even for rotary embeddings".into());
        }
        if self.sent_layers == 0 || self.doc_layers == 0 || self.max_tokens == 0 || self.ffn_multiplier == 0 {
            return bad("layer counts, max_tokens and ffn_multiplier must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.schedule.validate()?;
        if self.schedule.layers() != self.doc_layers {
            return bad(format!(
                "schedule covers {} layers, document encoder has {}",
                self.schedule.layers(),
                self.doc_layers
            ));
        }
        Ok(())
    }
}
