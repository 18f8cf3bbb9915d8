//! Hierarchical segmenter: a token-level sentence encoder whose mean-pooled
//! outputs feed a rotary document encoder, one boundary probability per
//! sentence. Per-layer attention masks select offline, causal or
//! bounded-future behaviour; [`StreamSession`] runs the bounded-future
//! variant one sentence at a time.

mod config;
mod schedule;
mod segmenter;
mod stream;
mod vocab;

use thiserror::Error;

use crate::autograd::AutogradError;

pub use config::{ModelConfig, SentenceSource};
pub use schedule::{MaskSchedule, PRESETS};
pub use segmenter::{labels_from_probs, ModelFile, Prepared, Segmenter, MODEL_FORMAT, MODEL_VERSION};
pub use stream::{StreamDecision, StreamSession};
pub use vocab::{sentence_hash, word_tokens, FrozenEmbeddings, FrozenRecord, Vocab, OOV, PAD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bad mask schedule: {0}")]
    BadSchedule(String),
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("document has no sentences")]
    EmptyDocument,
    #[error("no frozen embedding for sentence hash {0}")]
    MissingEmbedding(String),
    #[error("stream session already closed")]
    SessionClosed,
    #[error("streaming needs an online schedule")]
    OfflineStreaming,
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error("model file: {0}")]
    Format(String),
}
