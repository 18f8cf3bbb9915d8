//! Short end-to-end training runs on a small synthetic corpus.

use chaptering::corpus::{gen_synthetic, Document, SynthConfig};
use chaptering::metrics::MetricConfig;
use chaptering::model::{MaskSchedule, ModelConfig, Segmenter, Vocab};
use chaptering::training::{evaluate_checkpoint, fit, train, Checkpoint, TrainConfig, TrainState};

fn corpus() -> (Vec<Document>, Vec<Document>) {
    let cfg = SynthConfig {
        documents: 60,
        vocab_size: 60,
        topics: 3,
        segment_len: [2, 4],
        segments_per_doc: [2, 3],
        ..Default::default()
    };
    let mut docs = gen_synthetic(&cfg, 5).unwrap();
    let val = docs.split_off(48);
    (docs, val)
}

fn model<T: chaptering::Scalar>(train: &[Document], seed: u64) -> Segmenter<T> {
    let vocab = Vocab::build(train.iter().flat_map(|d| d.texts()), 1, 1000);
    let mut cfg = ModelConfig::toy(vocab.len());
    cfg.doc_layers = 2;
    cfg.schedule = MaskSchedule::preset(1, 2).unwrap();
    Segmenter::init(cfg, vocab, seed).unwrap()
}

fn cfg() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        token_budget: 600,
        epochs: 4,
        dropout: 0.0,
        ..Default::default()
    }
}

#[test]
fn training_improves_on_untrained_model_and_checkpoint_reloads() {
    let (tr, val) = corpus();
    let untrained = {
        let m = model::<f64>(&tr, 0);
        let ck = Checkpoint::capture(&TrainState::new(m, &cfg()), &cfg(), 0);
        evaluate_checkpoint(&ck, &val, 0.5, &MetricConfig::default()).unwrap()
    };
    let out = train(model::<f64>(&tr, 0), &tr, &val, &cfg()).unwrap();
    assert_eq!(out.history.len(), 4);
    let best_epoch = out.best.best_epoch.unwrap();
    let best_f1 = out.history.iter().map(|h| h.val_f1).fold(f64::MIN, f64::max);
    assert_eq!(out.history[best_epoch - 1].val_f1, best_f1);

    let reloaded = Checkpoint::from_json(&out.best.to_json()).unwrap();
    assert_eq!(reloaded, out.best);
    let report = evaluate_checkpoint(&reloaded, &val, 0.5, &MetricConfig::default()).unwrap();
    assert!(report.f1.value > untrained.f1.value, "{} vs {}", report.f1.value, untrained.f1.value);
}

#[test]
fn interrupted_run_resumes_to_identical_checkpoint() {
    let (tr, val) = corpus();
    let full = train(model::<f64>(&tr, 1), &tr, &val, &cfg()).unwrap();
    let first = fit(TrainState::new(model::<f64>(&tr, 1), &cfg()), None, &tr, &val, &cfg(), Some(2)).unwrap();
    let state = Checkpoint::from_json(&first.last.to_json()).unwrap().restore::<f64>().unwrap();
    let rest = fit(state, Some(first.best), &tr, &val, &cfg(), None).unwrap();
    assert_eq!(rest.last.to_json(), full.last.to_json());
    assert_eq!(rest.best.to_json(), full.best.to_json());
}

#[test]
fn single_precision_training_stays_finite() {
    let (tr, val) = corpus();
    let out = train(model::<f32>(&tr, 2), &tr, &val, &TrainConfig { epochs: 2, ..cfg() }).unwrap();
    assert!(out.history.iter().all(|h| h.loss.is_finite()));
    assert!(out.last.model::<f32>().unwrap().params.all_finite());
}
