use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FrozenEmbeddings, MaskSchedule, ModelConfig, ModelError, SentenceSource, Vocab, OOV, PAD};
use crate::autograd::{AttnMask, AutogradError, Graph, ParamStore, ParamsFile, Tensor, Var};
use crate::corpus::Document;
use crate::Scalar;

pub const MODEL_FORMAT: &str = "chaptering-model";
pub const MODEL_VERSION: u32 = 1;

const LN_EPS: f64 = 1e-5;

type Bound = BTreeMap<String, Var>;

/// Sentence-encoder input for one document.
#[derive(Clone, Debug, PartialEq)]
pub enum Prepared<T> {
    /// Token ids per sentence, PAD-free, each non-empty.
    Tokens(Vec<Vec<usize>>),
    /// Precomputed sentence vectors, one row per sentence.
    Vectors(Tensor<T>),
}

impl<T: Scalar> Prepared<T> {
    pub fn sentences(&self) -> usize {
        match self {
            Prepared::Tokens(t) => t.len(),
            Prepared::Vectors(v) => v.rows(),
        }
    }

    /// Sentence-encoder tokens; one per sentence for precomputed vectors.
    pub fn token_count(&self) -> usize {
        match self {
            Prepared::Tokens(t) => t.iter().map(Vec::len).sum(),
            Prepared::Vectors(v) => v.rows(),
        }
    }
}

/// On-disk model: config echo, vocabulary and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamsFile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmenter<T: Scalar> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
    frozen: Option<FrozenEmbeddings>,
}

fn xavier<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::uniform(&[rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
}

fn get(p: &Bound, name: &str) -> Result<Var, AutogradError> {
    p.get(name).copied().ok_or_else(|| AutogradError::UnknownParam(name.to_string()))
}

fn layer_norm<T: Scalar>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var, AutogradError> {
    let gain = get(p, &format!("{prefix}.g"))?;
    let bias = get(p, &format!("{prefix}.b"))?;
    g.layer_norm(x, gain, bias, LN_EPS)
}

/// Label rule shared by batch and streaming prediction: strictly above the
/// threshold, last sentence always closes a segment.
pub fn labels_from_probs<T: Scalar>(probs: &[T], threshold: f64) -> Vec<bool> {
    let mut out: Vec<bool> = probs.iter().map(|p| p.to_f64().unwrap_or(0.0) > threshold).collect();
    if let Some(last) = out.last_mut() {
        *last = true;
    }
    out
}

impl<T: Scalar> Segmenter<T> {
    pub fn init(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(ModelError::BadConfig(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let ws = config.sent_width;
        let wd = config.doc_width;
        let ones = |d: usize| Tensor::filled(&[d], T::one());
        let zeros = |d: usize| Tensor::<T>::zeros(&[d]);

        if config.sentence_source == SentenceSource::Scratch {
            params.insert("sent.tok_emb", Tensor::uniform(&[config.vocab_size, ws], 1.0, &mut rng));
            params.insert("sent.pos_emb", Tensor::uniform(&[config.max_tokens, ws], 0.1, &mut rng));
            let hidden = ws * config.ffn_multiplier;
            for i in 0..config.sent_layers {
                let pre = format!("sent.l{i}");
                params.insert(format!("{pre}.ln1.g"), ones(ws));
                params.insert(format!("{pre}.ln1.b"), zeros(ws));
                for w in ["wq", "wk", "wv"] {
                    params.insert(format!("{pre}.{w}"), xavier(ws, ws, &mut rng));
                }
                params.insert(format!("{pre}.wo"), Tensor::zeros(&[ws, ws]));
                params.insert(format!("{pre}.ln2.g"), ones(ws));
                params.insert(format!("{pre}.ln2.b"), zeros(ws));
                params.insert(format!("{pre}.w1"), xavier(ws, hidden, &mut rng));
                params.insert(format!("{pre}.b1"), zeros(hidden));
                params.insert(format!("{pre}.w2"), Tensor::zeros(&[hidden, ws]));
                params.insert(format!("{pre}.b2"), zeros(ws));
            }
            params.insert("sent.ln_f.g", ones(ws));
            params.insert("sent.ln_f.b", zeros(ws));
        }

        params.insert("doc.proj.w", xavier(ws, wd, &mut rng));
        params.insert("doc.proj.b", zeros(wd));
        let hidden = wd * config.ffn_multiplier;
        for i in 0..config.doc_layers {
            let pre = format!("doc.l{i}");
            params.insert(format!("{pre}.ln1.g"), ones(wd));
            params.insert(format!("{pre}.ln1.b"), zeros(wd));
            for w in ["wq", "wk", "wv", "wo"] {
                params.insert(format!("{pre}.{w}"), xavier(wd, wd, &mut rng));
            }
            params.insert(format!("{pre}.ln2.g"), ones(wd));
            params.insert(format!("{pre}.ln2.b"), zeros(wd));
            params.insert(format!("{pre}.w1"), xavier(wd, hidden, &mut rng));
            params.insert(format!("{pre}.b1"), zeros(hidden));
            params.insert(format!("{pre}.w2"), xavier(hidden, wd, &mut rng));
            params.insert(format!("{pre}.b2"), zeros(wd));
        }
        params.insert("doc.ln_f.g", ones(wd));
        params.insert("doc.ln_f.b", zeros(wd));
        params.insert("doc.out.w", xavier(wd, 1, &mut rng));
        params.insert("doc.out.b", zeros(1));

        Ok(Self {
            config,
            vocab,
            params,
            frozen: None,
        })
    }

    /// Attaches the lookup table used by the frozen-embedding source.
    pub fn with_frozen(mut self, table: FrozenEmbeddings) -> Result<Self, ModelError> {
        if self.config.sentence_source != SentenceSource::FrozenEmbeddings {
            return Err(ModelError::BadConfig("model does not use frozen embeddings".into()));
        }
        if table.dim() != self.config.sent_width {
            return Err(ModelError::BadConfig(format!(
                "frozen vectors have {} values, sentence width is {}",
                table.dim(),
                self.config.sent_width
            )));
        }
        self.frozen = Some(table);
        Ok(self)
    }

    /// Adds uniform noise in `[-scale, scale)` to every parameter, so that
    /// zero-initialized projections become active. Used by randomized tests.
    pub fn perturb(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.params = self
            .params
            .iter()
            .map(|(k, t)| {
                let data = t.data().iter().map(|&x| x + T::lit(rng.gen_range(-scale..scale))).collect();
                (k.clone(), Tensor::new(t.shape().to_vec(), data).expect("same shape"))
            })
            .collect();
    }

    /// Same model with a different document-encoder schedule.
    pub fn with_schedule(&self, schedule: MaskSchedule) -> Result<Self, ModelError> {
        let mut out = self.clone();
        out.config = out.config.with_schedule(schedule)?;
        Ok(out)
    }

    /// Drops PAD ids and truncates; `None` when nothing remains.
    fn clean_ids(&self, ids: &[usize]) -> Option<Vec<usize>> {
        let v: Vec<usize> = ids.iter().copied().filter(|&i| i != PAD).take(self.config.max_tokens).collect();
        (!v.is_empty()).then_some(v)
    }

    /// Sentence-encoder input for a document's sentences. A sentence
    /// without any word becomes a single OOV token.
    pub fn prepare<S: AsRef<str>>(&self, texts: &[S]) -> Result<Prepared<T>, ModelError> {
        if texts.is_empty() {
            return Err(ModelError::EmptyDocument);
        }
        match self.config.sentence_source {
            SentenceSource::Scratch => Ok(Prepared::Tokens(
                texts
                    .iter()
                    .map(|t| {
                        let ids = self.vocab.encode(t.as_ref(), self.config.max_tokens);
                        self.clean_ids(&ids).unwrap_or_else(|| vec![OOV])
                    })
                    .collect(),
            )),
            SentenceSource::FrozenEmbeddings => {
                let table = self
                    .frozen
                    .as_ref()
                    .ok_or_else(|| ModelError::BadConfig("frozen-embedding table not loaded".into()))?;
                let mut data = Vec::with_capacity(texts.len() * table.dim());
                for t in texts {
                    data.extend(table.get(t.as_ref())?.iter().map(|&x| T::lit(x)));
                }
                Ok(Prepared::Vectors(Tensor::new(vec![texts.len(), table.dim()], data)?))
            }
        }
    }

    fn dropout(&self, g: &mut Graph<T>, x: Var, drop: &mut Option<&mut ChaCha8Rng>) -> Result<Var, AutogradError> {
        let rate = self.config.dropout;
        let Some(rng) = drop.as_deref_mut() else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let n = g.value(x).numel();
        let mask: Arc<[T]> = (0..n).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect();
        g.mul_const(x, mask)
    }

    /// Pre-norm transformer layer.
    #[allow(clippy::too_many_arguments)]
    fn block(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        pre: &str,
        x: Var,
        heads: usize,
        mask: &AttnMask,
        rotary: bool,
        drop: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<Var, AutogradError> {
        let h = layer_norm(g, p, &format!("{pre}.ln1"), x)?;
        let mut q = g.matmul(h, get(p, &format!("{pre}.wq"))?)?;
        let mut k = g.matmul(h, get(p, &format!("{pre}.wk"))?)?;
        let v = g.matmul(h, get(p, &format!("{pre}.wv"))?)?;
        if rotary {
            q = g.rope(q, heads, self.config.rope_base)?;
            k = g.rope(k, heads, self.config.rope_base)?;
        }
        let a = g.attention(q, k, v, heads, mask)?;
        let a = g.matmul(a, get(p, &format!("{pre}.wo"))?)?;
        let a = self.dropout(g, a, drop)?;
        let x = g.add(x, a)?;

        let h = layer_norm(g, p, &format!("{pre}.ln2"), x)?;
        let f = g.matmul(h, get(p, &format!("{pre}.w1"))?)?;
        let f = g.add_row(f, get(p, &format!("{pre}.b1"))?)?;
        let f = g.gelu(f);
        let f = g.matmul(f, get(p, &format!("{pre}.w2"))?)?;
        let f = g.add_row(f, get(p, &format!("{pre}.b2"))?)?;
        let f = self.dropout(g, f, drop)?;
        g.add(x, f)
    }

    /// `[sentences, sent_width]` sentence vectors. All sentences of the
    /// document are packed into one sequence; attention stays inside each
    /// sentence and pooling averages its tokens.
    pub fn sentence_vectors(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        input: &Prepared<T>,
        mut drop: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        let sents = match input {
            Prepared::Vectors(v) => return Ok(g.constant(v.clone())),
            Prepared::Tokens(s) => s,
        };
        if sents.is_empty() {
            return Err(ModelError::EmptyDocument);
        }
        let mut ids = Vec::new();
        let mut pos = Vec::new();
        let mut blocks = Vec::with_capacity(sents.len());
        let mut segments = Vec::with_capacity(sents.len());
        for s in sents {
            if s.is_empty() || s.len() > self.config.max_tokens {
                return Err(ModelError::EmptySentence);
            }
            let start = ids.len();
            ids.extend_from_slice(s);
            pos.extend(0..s.len());
            blocks.push((start, s.len()));
            segments.push((start..start + s.len()).collect());
        }
        let tok = g.embedding(get(p, "sent.tok_emb")?, &ids)?;
        let pe = g.embedding(get(p, "sent.pos_emb")?, &pos)?;
        let mut x = g.add(tok, pe)?;
        let mask = if blocks.len() == 1 { AttnMask::Full } else { AttnMask::Blocks(blocks) };
        for i in 0..self.config.sent_layers {
            x = self.block(g, p, &format!("sent.l{i}"), x, self.config.sent_heads, &mask, false, &mut drop)?;
        }
        let x = layer_norm(g, p, "sent.ln_f", x)?;
        Ok(g.segment_mean(x, segments)?)
    }

    /// `[n, 1]` boundary logits from `[n, sent_width]` sentence vectors.
    pub fn document_logits(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        vectors: Var,
        schedule: &MaskSchedule,
        mut drop: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        if schedule.layers() != self.config.doc_layers {
            return Err(ModelError::BadSchedule(format!(
                "schedule covers {} layers, document encoder has {}",
                schedule.layers(),
                self.config.doc_layers
            )));
        }
        let shape = g.value(vectors).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.sent_width || shape[0] == 0 {
            return Err(AutogradError::ShapeMismatch {
                op: "document_logits",
                detail: format!("sentence vectors {:?}, width {}", shape, self.config.sent_width),
            }
            .into());
        }
        let n = shape[0];
        let x = g.matmul(vectors, get(p, "doc.proj.w")?)?;
        let mut x = g.add_row(x, get(p, "doc.proj.b")?)?;
        for l in 1..=self.config.doc_layers {
            let mask = schedule.mask_for_layer(l, n)?;
            x = self.block(g, p, &format!("doc.l{}", l - 1), x, self.config.doc_heads, &mask, true, &mut drop)?;
        }
        let x = layer_norm(g, p, "doc.ln_f", x)?;
        let x = g.matmul(x, get(p, "doc.out.w")?)?;
        Ok(g.add_row(x, get(p, "doc.out.b")?)?)
    }

    /// Full forward pass; returns `(logits, probabilities)`, both `[n, 1]`.
    /// With `detach_sentences` no gradient reaches the sentence encoder.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        input: &Prepared<T>,
        schedule: &MaskSchedule,
        detach_sentences: bool,
        mut drop: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Var), ModelError> {
        let mut v = self.sentence_vectors(g, p, input, drop.as_deref_mut())?;
        if detach_sentences {
            v = g.detach(v);
        }
        let logits = self.document_logits(g, p, v, schedule, drop)?;
        let probs = g.sigmoid(logits);
        Ok((logits, probs))
    }

    /// Inference sentence vectors.
    pub fn sentence_matrix(&self, input: &Prepared<T>) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new();
        let p = self.params.bind_constant(&mut g);
        let v = self.sentence_vectors(&mut g, &p, input, None)?;
        Ok(g.value(v).clone())
    }

    pub fn logits_from_vectors(&self, vectors: &Tensor<T>, schedule: &MaskSchedule) -> Result<Vec<T>, ModelError> {
        let mut g = Graph::new();
        let p = self.params.bind_constant(&mut g);
        let v = g.constant(vectors.clone());
        let l = self.document_logits(&mut g, &p, v, schedule, None)?;
        Ok(g.value(l).to_vec())
    }

    pub fn probabilities_from_vectors(&self, vectors: &Tensor<T>, schedule: &MaskSchedule) -> Result<Vec<T>, ModelError> {
        let logits = self.logits_from_vectors(vectors, schedule)?;
        Ok(logits.into_iter().map(|z| T::one() / (T::one() + (-z).exp())).collect())
    }

    /// Boundary probabilities under the configured schedule.
    pub fn probabilities<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<T>, ModelError> {
        self.probabilities_with(texts, &self.config.schedule)
    }

    pub fn probabilities_with<S: AsRef<str>>(&self, texts: &[S], schedule: &MaskSchedule) -> Result<Vec<T>, ModelError> {
        let input = self.prepare(texts)?;
        let mut g = Graph::new();
        let p = self.params.bind_constant(&mut g);
        let (_, probs) = self.forward(&mut g, &p, &input, schedule, false, None)?;
        Ok(g.value(probs).to_vec())
    }

    /// Pooled vector of one sentence given token ids. PAD ids are ignored
    /// and the sequence is cut at `max_tokens`.
    pub fn encode_sentence(&self, tokens: &[usize]) -> Result<Vec<T>, ModelError> {
        let ids = self.clean_ids(tokens).ok_or(ModelError::EmptySentence)?;
        Ok(self.sentence_matrix(&Prepared::Tokens(vec![ids]))?.to_vec())
    }

    /// Vector of one sentence given its text, from either source.
    pub fn encode_text(&self, text: &str) -> Result<Vec<T>, ModelError> {
        if self.config.sentence_source == SentenceSource::Scratch && self.vocab.encode(text, 1).is_empty() {
            return Err(ModelError::EmptySentence);
        }
        Ok(self.sentence_matrix(&self.prepare(&[text])?)?.to_vec())
    }

    pub fn predict(&self, doc: &Document, threshold: f64) -> Result<Vec<bool>, ModelError> {
        Ok(labels_from_probs(&self.probabilities(&doc.texts())?, threshold))
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.to_file(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, ModelError> {
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported model file {} v{}", file.format, file.version)));
        }
        file.config.validate()?;
        let params = ParamStore::from_file(&file.params)?;
        let reference = Self::init(file.config.clone(), file.vocab.clone(), 0)?;
        let same_layout = reference.params.len() == params.len()
            && reference
                .params
                .iter()
                .all(|(k, t)| params.get(k).map(|s| s.shape() == t.shape()).unwrap_or(false));
        if !same_layout {
            return Err(ModelError::Format("parameter layout does not match the config".into()));
        }
        if !params.all_finite() {
            return Err(ModelError::Format("non-finite parameter".into()));
        }
        Ok(Self {
            config: file.config.clone(),
            vocab: file.vocab.clone(),
            params,
            frozen: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(&self.to_file()).map_err(|e| ModelError::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_str(&raw).map_err(|e| ModelError::Format(e.to_string()))?;
        Self::from_file(&file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build(["alpha beta gamma delta epsilon zeta eta theta"], 1, 100)
    }

    fn toy() -> Segmenter<f64> {
        let v = vocab();
        Segmenter::init(ModelConfig::toy(v.len()), v, 3).unwrap()
    }

    #[test]
    fn single_token_is_normalized_embedding() {
        let m = toy();
        let id = m.vocab.id("gamma");
        let got = m.encode_sentence(&[PAD, id, PAD]).unwrap();
        let emb = m.params.get("sent.tok_emb").unwrap().row(id);
        let pos = m.params.get("sent.pos_emb").unwrap().row(0);
        let x: Vec<f64> = emb.iter().zip(pos).map(|(a, b)| a + b).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        for (g, v) in got.iter().zip(&x) {
            assert!((g - (v - mean) / (var + LN_EPS).sqrt()).abs() < 1e-12);
        }
        assert_eq!(m.encode_sentence(&[PAD, PAD]), Err(ModelError::EmptySentence));
    }

    #[test]
    fn pad_positions_do_not_matter() {
        let mut m = toy();
        m.perturb(1, 0.3);
        let (a, b, c) = (m.vocab.id("alpha"), m.vocab.id("beta"), m.vocab.id("delta"));
        let base = m.encode_sentence(&[a, b, c]).unwrap();
        assert_eq!(m.encode_sentence(&[PAD, a, PAD, b, c, PAD]).unwrap(), base);
        assert_ne!(m.encode_sentence(&[b, a, c]).unwrap(), base);
    }

    #[test]
    fn packed_sentences_match_one_at_a_time() {
        let mut m = toy();
        m.perturb(2, 0.3);
        let texts = ["alpha beta gamma.", "delta.", "epsilon zeta eta theta alpha."];
        let all = m.sentence_matrix(&m.prepare(&texts).unwrap()).unwrap();
        for (i, t) in texts.iter().enumerate() {
            let one = m.encode_text(t).unwrap();
            for (a, b) in all.row(i).iter().zip(&one) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn document_shapes_and_thresholds() {
        let m = toy();
        let p = m.probabilities(&["alpha."]).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0] > 0.0 && p[0] < 1.0);
        let texts = ["alpha beta.", "gamma.", "", "delta zeta."];
        let p = m.probabilities(&texts).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(labels_from_probs(&p, 1.0), vec![false, false, false, true]);
        assert_eq!(labels_from_probs(&p, 0.0), vec![true; 4]);
        assert!(matches!(m.probabilities::<&str>(&[]), Err(ModelError::EmptyDocument)));
    }

    #[test]
    fn offline_output_depends_on_appended_sentences() {
        let mut m = toy();
        m.perturb(4, 0.3);
        let short = ["alpha beta.", "gamma delta."];
        let long = ["alpha beta.", "gamma delta.", "zeta eta theta."];
        let a = m.probabilities(&short).unwrap();
        let b = m.probabilities(&long).unwrap();
        assert_ne!(a[0], b[0]);

        let mut one = ModelConfig::toy(m.vocab.len());
        one.doc_layers = 1;
        one.schedule = MaskSchedule::causal(1);
        let mut c = Segmenter::<f64>::init(one, m.vocab.clone(), 5).unwrap();
        c.perturb(6, 0.3);
        let a = c.probabilities(&short).unwrap();
        let b = c.probabilities(&long).unwrap();
        assert_eq!(a[..], b[..2]);
    }

    #[test]
    fn schedule_must_match_layers() {
        let m = toy();
        let v = m.prepare(&["alpha."]).unwrap();
        let s = m.sentence_matrix(&v).unwrap();
        assert!(matches!(m.logits_from_vectors(&s, &MaskSchedule::causal(3)), Err(ModelError::BadSchedule(_))));
        let wrong = Tensor::zeros(&[1, 5]);
        assert!(m.logits_from_vectors(&wrong, &MaskSchedule::causal(4)).is_err());
    }

    #[test]
    fn frozen_source() {
        let v = vocab();
        let mut cfg = ModelConfig::toy(v.len());
        cfg.sentence_source = SentenceSource::FrozenEmbeddings;
        let m = Segmenter::<f64>::init(cfg, v, 0).unwrap();
        assert!(!m.params.contains("sent.tok_emb"));
        let mut t = FrozenEmbeddings::new(32);
        t.insert("Hi.", vec![0.25; 32]).unwrap();
        assert!(m.prepare(&["Hi."]).is_err());
        let m = m.with_frozen(t).unwrap();
        assert_eq!(m.encode_text("Hi.").unwrap(), vec![0.25; 32]);
        assert!(matches!(m.prepare(&["Bye."]), Err(ModelError::MissingEmbedding(_))));
        assert_eq!(m.probabilities(&["Hi.", "Hi."]).unwrap().len(), 2);
        assert!(toy().with_frozen(FrozenEmbeddings::new(32)).is_err());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let mut m = toy();
        m.perturb(7, 0.1);
        let back = Segmenter::<f64>::from_file(&serde_json::from_str(&serde_json::to_string(&m.to_file()).unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut f = m.to_file();
        f.params.params.remove("doc.out.b");
        assert!(Segmenter::<f64>::from_file(&f).is_err());
    }

    #[test]
    fn f32_model_tracks_f64() {
        let mut m = toy();
        m.perturb(8, 0.2);
        let m32 = Segmenter::<f32> {
            config: m.config.clone(),
            vocab: m.vocab.clone(),
            params: m.params.cast(),
            frozen: None,
        };
        let texts = ["alpha beta.", "gamma.", "delta zeta."];
        let a = m.probabilities(&texts).unwrap();
        let b = m32.probabilities(&texts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
