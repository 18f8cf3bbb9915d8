use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cosine_lr, make_batches, sample_gradient_flags, AdamW, LrSchedule, TrainConfig, TrainError};
use crate::autograd::{Graph, ParamStore, ParamsFile, Tensor};
use crate::corpus::Document;
use crate::metrics::{evaluate, BoundaryCounts, MetricConfig, MetricReport, Segmentation};
use crate::model::{labels_from_probs, ModelFile, Prepared, Segmenter};
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "chaptering-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A document ready for the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainDoc<T> {
    pub id: String,
    pub input: Prepared<T>,
    pub labels: Vec<bool>,
}

impl<T: Scalar> TrainDoc<T> {
    pub fn new(model: &Segmenter<T>, doc: &Document) -> Result<Self, TrainError> {
        Ok(Self {
            id: doc.id.clone(),
            input: model.prepare(&doc.texts())?,
            labels: doc.labels.clone(),
        })
    }
}

/// Loss and parameter gradients of one document; `None` for a
/// single-sentence document, which has no scored position.
fn doc_gradients<T: Scalar>(
    model: &Segmenter<T>,
    doc: &TrainDoc<T>,
    weights: [f64; 2],
    detach: bool,
    dropout_seed: Option<u64>,
) -> Result<Option<(f64, Vec<Option<Tensor<T>>>)>, TrainError> {
    let n = doc.labels.len();
    if n < 2 {
        return Ok(None);
    }
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let (_, probs) = model.forward(&mut g, &p, &doc.input, &model.config.schedule, detach, rng.as_mut())?;
    // the final sentence is always a boundary and carries no signal
    let scored = g.slice_rows(probs, 0, n - 1)?;
    let loss = g.weighted_bce(scored, &doc.labels[..n - 1], weights)?;
    let value = g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
    g.backward(loss)?;
    Ok(Some((value, p.values().map(|&v| g.grad(v)).collect())))
}

/// Mean loss and mean parameter gradients over `docs`. `flags[i] == false`
/// detaches the sentence vectors of document `i`. Gradients are summed in
/// the order of `docs` regardless of how the forward passes are scheduled.
pub fn batch_gradients<T: Scalar>(
    model: &Segmenter<T>,
    docs: &[&TrainDoc<T>],
    flags: &[bool],
    weights: [f64; 2],
    dropout_seeds: Option<&[u64]>,
) -> Result<(f64, ParamStore<T>), TrainError> {
    let per_doc: Vec<_> = docs
        .par_iter()
        .enumerate()
        .map(|(i, d)| doc_gradients(model, d, weights, !flags[i], dropout_seeds.map(|s| s[i])))
        .collect::<Result<_, _>>()?;
    let mut sums: Vec<Vec<T>> = model.params.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
    let mut loss = 0.0;
    let mut count = 0usize;
    for (i, r) in per_doc.into_iter().enumerate() {
        let Some((l, grads)) = r else { continue };
        if !l.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                id: docs[i].id.clone(),
                step: 0,
            });
        }
        loss += l;
        count += 1;
        for (acc, g) in sums.iter_mut().zip(grads) {
            if let Some(g) = g {
                for (a, &b) in acc.iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }
    let scale = if count == 0 { T::zero() } else { T::one() / T::from_usize(count).unwrap() };
    let grads = model
        .params
        .iter()
        .zip(sums)
        .map(|((k, t), s)| {
            let data = s.into_iter().map(|x| x * scale).collect();
            (k.clone(), Tensor::new(t.shape().to_vec(), data).expect("same shape"))
        })
        .collect();
    Ok((if count == 0 { 0.0 } else { loss / count as f64 }, grads))
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T: Scalar> {
    pub model: Segmenter<T>,
    pub optimizer: AdamW<T>,
    pub step: u64,
    pub epochs_done: usize,
    pub best_val_f1: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl<T: Scalar> TrainState<T> {
    /// Fresh state; the model's dropout is taken from `cfg`.
    pub fn new(mut model: Segmenter<T>, cfg: &TrainConfig) -> Self {
        model.config.dropout = cfg.dropout;
        let optimizer = AdamW::new(&model.params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
        Self {
            model,
            optimizer,
            step: 0,
            epochs_done: 0,
            best_val_f1: None,
            best_epoch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: ParamsFile,
    pub v: ParamsFile,
    pub t: u64,
}

/// Serialized [`TrainState`] plus the config it was trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelFile,
    pub train_config: TrainConfig,
    pub optimizer: OptimizerState,
    pub step: u64,
    pub total_steps: u64,
    pub epochs_done: usize,
    pub best_val_f1: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn capture<T: Scalar>(state: &TrainState<T>, cfg: &TrainConfig, total_steps: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: state.model.to_file(),
            train_config: cfg.clone(),
            optimizer: OptimizerState {
                m: state.optimizer.m.to_file(),
                v: state.optimizer.v.to_file(),
                t: state.optimizer.t,
            },
            step: state.step,
            total_steps,
            epochs_done: state.epochs_done,
            best_val_f1: state.best_val_f1,
            best_epoch: state.best_epoch,
        }
    }

    /// Rebuilds the training state. A frozen-embedding table, if the model
    /// uses one, has to be attached again by the caller.
    pub fn restore<T: Scalar>(&self) -> Result<TrainState<T>, TrainError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(TrainError::Format(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let model = Segmenter::from_file(&self.model)?;
        let c = &self.train_config;
        let mut optimizer = AdamW::new(&model.params, c.adam_beta1, c.adam_beta2, c.adam_eps, c.weight_decay);
        optimizer.m = ParamStore::from_file(&self.optimizer.m)?;
        optimizer.v = ParamStore::from_file(&self.optimizer.v)?;
        optimizer.t = self.optimizer.t;
        Ok(TrainState {
            model,
            optimizer,
            step: self.step,
            epochs_done: self.epochs_done,
            best_val_f1: self.best_val_f1,
            best_epoch: self.best_epoch,
        })
    }

    pub fn model<T: Scalar>(&self) -> Result<Segmenter<T>, TrainError> {
        Ok(Segmenter::from_file(&self.model)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        serde_json::from_str(text).map_err(|e| TrainError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_json()).map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Checkpoint of the epoch with the highest validation F1 (earliest on
    /// ties).
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<HistoryRecord>,
}

/// Per-epoch random stream: batch order seed first, then gradient flags,
/// then one dropout seed per document in processing order.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(epoch as u64 + 1);
    r
}

/// Boundary F1 of thresholded predictions, pooled over documents.
pub fn validation_f1<T: Scalar>(model: &Segmenter<T>, docs: &[TrainDoc<T>], threshold: f64) -> Result<f64, TrainError> {
    let counts: Vec<BoundaryCounts> = docs
        .par_iter()
        .map(|d| {
            let mut g = Graph::new();
            let p = model.params.bind_constant(&mut g);
            let (_, probs) = model.forward(&mut g, &p, &d.input, &model.config.schedule, false, None)?;
            let hyp = labels_from_probs(g.value(probs).data(), threshold);
            let r = Segmentation::from_labels(&d.labels)?;
            let h = Segmentation::from_labels(&hyp)?;
            Ok(BoundaryCounts::between(&r, &h)?)
        })
        .collect::<Result<_, TrainError>>()?;
    Ok(counts.into_iter().fold(BoundaryCounts::default(), BoundaryCounts::add).prf().f1)
}

/// Trains a freshly initialized model for `cfg.epochs` epochs.
pub fn train<T: Scalar>(
    model: Segmenter<T>,
    train_docs: &[Document],
    val_docs: &[Document],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    fit(TrainState::new(model, cfg), None, train_docs, val_docs, cfg, None)
}

/// Continues `state` up to `cfg.epochs` epochs, or until `stop_after`
/// epochs have been completed in total. `best` is the best checkpoint seen
/// before this call, if any.
pub fn fit<T: Scalar>(
    mut state: TrainState<T>,
    best: Option<Checkpoint>,
    train_docs: &[Document],
    val_docs: &[Document],
    cfg: &TrainConfig,
    stop_after: Option<usize>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_docs.is_empty() || val_docs.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let model = &state.model;
    let train_set: Vec<TrainDoc<T>> = train_docs.iter().map(|d| TrainDoc::new(model, d)).collect::<Result<_, _>>()?;
    let val_set: Vec<TrainDoc<T>> = val_docs.iter().map(|d| TrainDoc::new(model, d)).collect::<Result<_, _>>()?;
    let sizes: Vec<usize> = train_set.iter().map(|d| d.input.token_count()).collect();

    let plans: Vec<Vec<Vec<usize>>> = (0..cfg.epochs)
        .map(|e| make_batches(&sizes, cfg.token_budget, epoch_rng(cfg.seed, e).next_u64()))
        .collect::<Result<_, _>>()?;
    let total_steps: u64 = plans.iter().map(|p| p.len() as u64).sum();
    let end = stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));

    let mut best = best;
    let mut history = Vec::new();
    for epoch in state.epochs_done..end {
        let mut rng = epoch_rng(cfg.seed, epoch);
        rng.next_u64();
        let flags = sample_gradient_flags(train_set.len(), cfg.gradient_sampling_rate, &mut rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in &plans[epoch] {
            let mut idx = batch.clone();
            idx.sort_unstable();
            let docs: Vec<&TrainDoc<T>> = idx.iter().map(|&i| &train_set[i]).collect();
            let doc_flags: Vec<bool> = idx.iter().map(|&i| flags[i]).collect();
            let seeds: Vec<u64> = idx.iter().map(|_| rng.next_u64()).collect();
            let (loss, grads) = batch_gradients(&state.model, &docs, &doc_flags, cfg.loss_weights, Some(&seeds))
                .map_err(|e| match e {
                    TrainError::NonFiniteLoss { id, .. } => TrainError::NonFiniteLoss { id, step: state.step },
                    e => e,
                })?;
            lr = match cfg.lr_schedule {
                LrSchedule::Cosine => cosine_lr(state.step, total_steps, cfg.learning_rate),
                LrSchedule::Constant => cfg.learning_rate,
            };
            state.optimizer.step(&mut state.model.params, &grads, lr);
            state.step += 1;
            loss_sum += loss;
        }
        state.epochs_done = epoch + 1;
        let val_f1 = validation_f1(&state.model, &val_set, cfg.threshold)?;
        history.push(HistoryRecord {
            epoch: epoch + 1,
            step: state.step,
            loss: loss_sum / plans[epoch].len().max(1) as f64,
            lr,
            val_f1,
        });
        if state.best_val_f1.is_none_or(|b| val_f1 > b) {
            state.best_val_f1 = Some(val_f1);
            state.best_epoch = Some(epoch + 1);
            best = Some(Checkpoint::capture(&state, cfg, total_steps));
        }
    }
    let last = Checkpoint::capture(&state, cfg, total_steps);
    Ok(TrainOutcome {
        best: best.unwrap_or_else(|| last.clone()),
        last,
        history,
    })
}

/// Thresholded predictions scored with the full metric suite.
pub fn evaluate_model<T: Scalar>(
    model: &Segmenter<T>,
    docs: &[Document],
    threshold: f64,
    cfg: &MetricConfig,
) -> Result<MetricReport, TrainError> {
    let pairs: Vec<(Segmentation, Segmentation)> = docs
        .par_iter()
        .map(|d| {
            let hyp = model.predict(d, threshold)?;
            Ok((Segmentation::from_labels(&d.labels)?, Segmentation::from_labels(&hyp)?))
        })
        .collect::<Result<_, TrainError>>()?;
    Ok(evaluate(&pairs, cfg)?)
}

pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    docs: &[Document],
    threshold: f64,
    cfg: &MetricConfig,
) -> Result<MetricReport, TrainError> {
    evaluate_model(&checkpoint.model::<f64>()?, docs, threshold, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, SynthConfig};
    use crate::model::{ModelConfig, Vocab};

    fn setup(docs: usize) -> (Segmenter<f64>, Vec<Document>) {
        let cfg = SynthConfig {
            documents: docs,
            vocab_size: 40,
            topics: 4,
            segment_len: [2, 4],
            segments_per_doc: [2, 3],
            ..Default::default()
        };
        let corpus = gen_synthetic(&cfg, 1).unwrap();
        let vocab = Vocab::build(corpus.iter().flat_map(|d| d.texts()), 1, 100);
        let mut mc = ModelConfig::toy(vocab.len());
        mc.sent_layers = 1;
        mc.doc_layers = 2;
        mc.schedule = crate::model::MaskSchedule::offline(2);
        (Segmenter::init(mc, vocab, 0).unwrap(), corpus)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (m, docs) = setup(6);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 1, token_budget: 200, ..Default::default() };
        let out = train(m.clone(), &docs[..4], &docs[4..], &cfg).unwrap();
        let after: Segmenter<f64> = out.last.model().unwrap();
        assert_eq!(after.params, m.params);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn overfits_one_batch() {
        let (m, docs) = setup(3);
        let cfg = TrainConfig { learning_rate: 3e-3, dropout: 0.0, weight_decay: 0.0, gradient_sampling_rate: 1.0, ..Default::default() };
        let mut state = TrainState::new(m, &cfg);
        let set: Vec<TrainDoc<f64>> = docs.iter().map(|d| TrainDoc::new(&state.model, d).unwrap()).collect();
        let refs: Vec<&TrainDoc<f64>> = set.iter().collect();
        let flags = vec![true; refs.len()];
        let mut losses = Vec::new();
        for _ in 0..200 {
            let (l, g) = batch_gradients(&state.model, &refs, &flags, cfg.loss_weights, None).unwrap();
            losses.push(l);
            state.optimizer.step(&mut state.model.params, &g, cfg.learning_rate);
        }
        for w in losses.windows(50) {
            assert!(w[49] < w[0], "{} -> {}", w[0], w[49]);
        }
        assert!(losses[199] < 0.1 * losses[0]);
    }

    #[test]
    fn gradient_flags_gate_sentence_encoder() {
        let (mut m, docs) = setup(3);
        m.perturb(5, 0.1);
        let set: Vec<TrainDoc<f64>> = docs.iter().map(|d| TrainDoc::new(&m, d).unwrap()).collect();
        let refs: Vec<&TrainDoc<f64>> = set.iter().collect();
        let (_, off) = batch_gradients(&m, &refs, &[false; 3], [1.0, 2.0], None).unwrap();
        let (_, on) = batch_gradients(&m, &refs, &[true; 3], [1.0, 2.0], None).unwrap();
        for (k, t) in off.iter() {
            if k.starts_with("sent.") {
                assert!(t.data().iter().all(|&x| x == 0.0), "{k}");
                assert!(on.get(k).unwrap().data().iter().any(|&x| x != 0.0), "{k}");
            } else {
                assert_eq!(t, on.get(k).unwrap(), "{k}");
            }
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (m, docs) = setup(7);
        let cfg = TrainConfig { learning_rate: 1e-3, epochs: 3, token_budget: 120, seed: 4, ..Default::default() };
        let full = train(m.clone(), &docs[..5], &docs[5..], &cfg).unwrap();
        let first = fit(TrainState::new(m, &cfg), None, &docs[..5], &docs[5..], &cfg, Some(1)).unwrap();
        let reloaded = Checkpoint::from_json(&first.last.to_json()).unwrap();
        let best = Checkpoint::from_json(&first.best.to_json()).unwrap();
        let rest = fit(reloaded.restore::<f64>().unwrap(), Some(best), &docs[..5], &docs[5..], &cfg, None).unwrap();
        assert_eq!(rest.last.to_json(), full.last.to_json());
        assert_eq!(rest.best.to_json(), full.best.to_json());
        assert_eq!(first.history[..], full.history[..1]);
        assert_eq!(rest.history[..], full.history[1..]);
    }

    #[test]
    fn perfect_and_empty_predictors() {
        let (_, docs) = setup(5);
        let pairs: Vec<_> = docs
            .iter()
            .map(|d| (Segmentation::from_labels(&d.labels).unwrap(), Segmentation::from_labels(&d.labels).unwrap()))
            .collect();
        let r = evaluate(&pairs, &MetricConfig::default()).unwrap();
        assert_eq!((r.f1.value, r.pk.value), (1.0, 0.0));
        let none: Vec<_> = docs
            .iter()
            .map(|d| {
                let n = d.labels.len();
                (Segmentation::from_labels(&d.labels).unwrap(), Segmentation::from_masses(vec![n]).unwrap())
            })
            .collect();
        assert_eq!(evaluate(&none, &MetricConfig::default()).unwrap().recall.value, 0.0);
    }

    #[test]
    fn empty_split_rejected() {
        let (m, docs) = setup(2);
        assert_eq!(train(m, &docs, &[], &TrainConfig::default()), Err(TrainError::EmptySplit));
    }
}
