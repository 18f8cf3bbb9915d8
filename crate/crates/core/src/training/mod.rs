//! Supervised fitting of the segmenter: class-weighted cross-entropy,
//! per-document gradient sampling through the sentence encoder, AdamW with
//! a cosine learning-rate decay, token-budget batches and per-epoch
//! validation F1 for model selection.

mod adamw;
mod trainer;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::AutogradError;
use crate::metrics::MetricError;
use crate::model::ModelError;

pub use adamw::AdamW;
pub use trainer::{
    batch_gradients, evaluate_checkpoint, evaluate_model, fit, train, validation_f1, Checkpoint, HistoryRecord,
    OptimizerState, TrainDoc, TrainOutcome, TrainState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("document #{index} has {tokens} tokens, over the batch budget of {budget}")]
    DocumentTooLarge { index: usize, tokens: usize, budget: usize },
    #[error("non-finite loss on document {id} at step {step}")]
    NonFiniteLoss { id: String, step: u64 },
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("training and validation splits must be non-empty")]
    EmptySplit,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("checkpoint: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Cosine,
    Constant,
}

/// Training hyperparameters. On disk this is a flat TOML table whose keys
/// are the field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cross-entropy weights for negative and positive positions.
    pub loss_weights: [f64; 2],
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    /// Maximum sentence-encoder tokens per batch.
    pub token_budget: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Fraction of documents that backpropagate into the sentence encoder.
    pub gradient_sampling_rate: f64,
    pub seed: u64,
    /// Decision threshold for validation F1.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_weights: [1.0, 2.0],
            learning_rate: 2.5e-5,
            lr_schedule: LrSchedule::Cosine,
            token_budget: 115_000,
            epochs: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            dropout: 0.1,
            gradient_sampling_rate: 0.5,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::BadConfig(m));
        if !(0.0..=1.0).contains(&self.gradient_sampling_rate) {
            return bad(format!("gradient_sampling_rate {} outside [0, 1]", self.gradient_sampling_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.loss_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad(format!("loss weights {:?} must be positive", self.loss_weights));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("AdamW needs betas in [0, 1) and a positive eps".into());
        }
        if self.weight_decay < 0.0 || self.token_budget == 0 {
            return bad("weight_decay must be non-negative and token_budget positive".into());
        }
        Ok(())
    }
}

/// One independent Bernoulli(`rate`) draw per document.
pub fn sample_gradient_flags<R: Rng + ?Sized>(doc_count: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    (0..doc_count).map(|_| rng.gen::<f64>() < rate).collect()
}

/// Half-cosine decay from `base` at step 0 to zero at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, base: f64) -> f64 {
    if total_steps == 0 {
        return base;
    }
    let x = step.min(total_steps) as f64 / total_steps as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
}

/// Shuffles document indices with `seed` and packs them greedily in that
/// order: a batch is closed as soon as the next document would push its
/// token count over `token_budget`.
pub fn make_batches(token_counts: &[usize], token_budget: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if let Some((index, &tokens)) = token_counts.iter().enumerate().find(|(_, &t)| t > token_budget) {
        return Err(TrainError::DocumentTooLarge {
            index,
            tokens,
            budget: token_budget,
        });
    }
    let mut order: Vec<usize> = (0..token_counts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut used = 0;
    for i in order {
        if !cur.is_empty() && used + token_counts[i] > token_budget {
            batches.push(std::mem::take(&mut cur));
            used = 0;
        }
        used += token_counts[i];
        cur.push(i);
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    Ok(batches)
}
