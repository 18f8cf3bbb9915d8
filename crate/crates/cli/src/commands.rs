use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chaptering::corpus::{
    build_titles_view, corpus_stats, gen_synthetic, ingest_dir, make_splits, read_jsonl, write_jsonl, Document,
    Partition, RuleTokenizer, SplitAssignment, SynthConfig,
};
use chaptering::metrics::{MetricConfig, PkWindow};
use chaptering::model::{
    labels_from_probs, FrozenEmbeddings, MaskSchedule, ModelConfig, ModelFile, Segmenter, SentenceSource,
    StreamSession, Vocab, MODEL_FORMAT,
};
use chaptering::titling::{build_title_input, extractive_title, rouge_all, ContextMode, IdfTable, RougeScore, TitlingConfig};
use chaptering::training::{evaluate_model, fit, Checkpoint, TrainConfig, TrainState, CHECKPOINT_FORMAT};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::manifest::{beside, ManifestBuilder};

pub const VERSION_LINE: &str = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format 1, model format 1)");

#[derive(Debug, Parser)]
#[command(name = "chaptering", version = VERSION_LINE, about = "Caption ingestion, segmentation training and evaluation")]
pub struct Cli {
    /// Worker threads for per-document work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn VTT captions and chapter lists into a labeled corpus.
    Ingest(IngestArgs),
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Channel-disjoint train/validation/test split.
    Split(SplitArgs),
    /// Generate a synthetic topic-concatenation corpus.
    Synth(SynthArgs),
    /// Train a segmenter.
    Train(Box<TrainArgs>),
    /// Score a model on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Label documents read as JSONL.
    Segment(SegmentArgs),
    /// Label sentences read one per line, with bounded latency.
    Stream(StreamArgs),
    /// Build title-generation inputs from a corpus.
    TitlesPrep(TitlesPrepArgs),
    /// ROUGE between line-aligned reference and candidate files.
    Rouge(RougeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of `<id>.vtt` files.
    #[arg(long)]
    vtt: PathBuf,
    /// Directory of `<id>.json` chapter lists.
    #[arg(long)]
    chapters: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Exclusion report; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.85, 0.075, 0.075])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives splits.json and one JSONL file per partition.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with SynthConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    documents: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    segment_len: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    segments_per_doc: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    sentence_len: Option<Vec<usize>>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    id_prefix: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Offline,
    Online,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Toy,
    Paper,
}

/// Attention schedule selection shared by several subcommands.
#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Per-layer future offsets, e.g. `2,1`; implies online mode.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<usize>>,
}

impl ScheduleArgs {
    /// `None` keeps whatever the model already has.
    fn resolve(&self, layers: usize) -> Result<Option<MaskSchedule>> {
        Ok(match (self.mode, &self.alpha) {
            (Some(Mode::Offline), Some(_)) => bail!("--alpha only applies to online mode"),
            (Some(Mode::Offline), None) => Some(MaskSchedule::offline(layers)),
            (Some(Mode::Online), None) => Some(MaskSchedule::causal(layers)),
            (_, Some(a)) => Some(MaskSchedule::online(a.clone(), layers)?),
            (None, None) => None,
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// Output directory for best.json, last.json, history.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with TrainConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint, keeping its training config.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many completed epochs (the schedule still spans `epochs`).
    #[arg(long)]
    stop_after: Option<usize>,

    #[arg(long, value_delimiter = ',')]
    loss_weights: Option<Vec<f64>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    token_budget: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    gradient_sampling_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,

    #[arg(long, value_enum, default_value_t = Preset::Toy)]
    preset: Preset,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    sent_layers: Option<usize>,
    #[arg(long)]
    sent_heads: Option<usize>,
    #[arg(long)]
    sent_width: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    doc_layers: Option<usize>,
    #[arg(long)]
    doc_heads: Option<usize>,
    #[arg(long)]
    doc_width: Option<usize>,
    /// Frozen sentence vectors (JSONL of {sentence_hash, vector}) instead
    /// of the trainable sentence encoder.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    vocab_min_count: usize,
    #[arg(long, default_value_t = 50_000)]
    vocab_max_size: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint or model file.
    #[arg(long)]
    model: PathBuf,
    /// Frozen sentence vectors, for models trained with them.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    corpus: PathBuf,
    /// P_k window: `auto` or a positive integer.
    #[arg(long, default_value = "auto")]
    pk_window: String,
    #[arg(long, default_value_t = 2)]
    transposition_window: usize,
    #[arg(long, default_value_t = 100)]
    bootstrap_count: usize,
    /// Bootstrap resampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// JSONL documents; standard input when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct TitlesPrepArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// splits.json from `split`, to tag each example with its partition.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    input_span: Option<usize>,
    #[arg(long, value_enum, default_value_t = ContextArg::None)]
    context: ContextArg,
    #[arg(long)]
    max_input_chars: Option<usize>,
    /// Also emit an extractive baseline title of this many words.
    #[arg(long)]
    extractive: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ContextArg {
    None,
    PreviousTitles,
}

#[derive(Debug, Args)]
pub struct RougeArgs {
    /// One reference per line.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// One candidate per line, aligned with the references.
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Split(a) => split(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(*a),
        Command::Evaluate(a) => evaluate(a),
        Command::Segment(a) => segment(a),
        Command::Stream(a) => stream(a),
        Command::TitlesPrep(a) => titles_prep(a),
        Command::Rouge(a) => rouge(a),
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_corpus<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_jsonl(&mut w, items)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Exclusion<'a> {
    id: &'a str,
    reason: &'a str,
}

#[derive(Serialize)]
struct ExclusionReport<'a> {
    documents: usize,
    excluded: usize,
    exclusion_rate: f64,
    reasons: BTreeMap<String, usize>,
    excluded_ids: Vec<Exclusion<'a>>,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let m = ManifestBuilder::new("ingest").input(&a.vtt).input(&a.chapters);
    let out = ingest_dir(&a.vtt, &a.chapters, &RuleTokenizer::default())?;
    for (id, reason) in &out.excluded {
        eprintln!("excluded {id}: {reason}");
    }
    write_corpus(&a.out, &out.documents)?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    });
    let report = ExclusionReport {
        documents: out.documents.len(),
        excluded: out.excluded.len(),
        exclusion_rate: out.exclusion_rate(),
        reasons: out.report(),
        excluded_ids: out.excluded.iter().map(|(id, r)| Exclusion { id, reason: r }).collect(),
    };
    write_json(Some(&report_path), &report)?;
    m.output(&a.out).output(&report_path).write(&beside(&a.out))
}

fn stats(a: StatsArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let report = corpus_stats(&docs)?;
    write_json(a.out.as_deref(), &report)?;
    if let Some(out) = &a.out {
        ManifestBuilder::new("stats").input(&a.corpus).output(out).write(&beside(out))?;
    }
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let ratios: [f64; 3] = fixed("--ratios", &a.ratios)?;
    let pairs: Vec<(String, String)> = docs.iter().map(|d| (d.id.clone(), d.channel.clone())).collect();
    let assignment = make_splits(&pairs, ratios, a.seed)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let splits_path = a.out_dir.join("splits.json");
    write_json(Some(&splits_path), &assignment)?;
    let mut m = ManifestBuilder::new("split")
        .config(serde_json::json!({ "ratios": ratios }))
        .seed("split", a.seed)
        .input(&a.corpus)
        .output(&splits_path);
    for p in Partition::ALL {
        let part: Vec<&Document> = docs.iter().filter(|d| assignment[&d.id] == p).collect();
        let path = a.out_dir.join(format!("{}.jsonl", partition_name(p)));
        write_corpus(&path, &part)?;
        m = m.output(&path);
    }
    m.write(&a.out_dir.join("manifest.json"))
}

/// Comma-separated flag values as an array of exactly `N`.
fn fixed<const N: usize, T: Copy>(flag: &str, v: &[T]) -> Result<[T; N]> {
    v.try_into().map_err(|_| anyhow!("{flag} takes {N} comma-separated values, got {}", v.len()))
}

fn partition_name(p: Partition) -> &'static str {
    match p {
        Partition::Train => "train",
        Partition::Validation => "validation",
        Partition::Test => "test",
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.documents {
        cfg.documents = v;
    }
    if let Some(v) = a.vocab_size {
        cfg.vocab_size = v;
    }
    if let Some(v) = a.topics {
        cfg.topics = v;
    }
    if let Some(v) = &a.segment_len {
        cfg.segment_len = fixed("--segment-len", v)?;
    }
    if let Some(v) = &a.segments_per_doc {
        cfg.segments_per_doc = fixed("--segments-per-doc", v)?;
    }
    if let Some(v) = &a.sentence_len {
        cfg.sentence_len = fixed("--sentence-len", v)?;
    }
    if let Some(v) = a.noise {
        cfg.noise = v;
    }
    if let Some(v) = a.channels {
        cfg.channels = v;
    }
    if let Some(v) = &a.id_prefix {
        cfg.id_prefix = v.clone();
    }
    let docs = gen_synthetic(&cfg, a.seed)?;
    write_corpus(&a.out, &docs)?;
    ManifestBuilder::new("synth").config(&cfg).seed("synth", a.seed).output(&a.out).write(&beside(&a.out))
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &a.config {
        Some(p) => TrainConfig::from_toml(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = &a.loss_weights {
        c.loss_weights = fixed("--loss-weights", v)?;
    }
    if let Some(v) = a.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = a.token_budget {
        c.token_budget = v;
    }
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.weight_decay {
        c.weight_decay = v;
    }
    if let Some(v) = a.dropout {
        c.dropout = v;
    }
    if let Some(v) = a.gradient_sampling_rate {
        c.gradient_sampling_rate = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.threshold {
        c.threshold = v;
    }
    c.validate()?;
    Ok(c)
}

fn model_config(a: &TrainArgs, vocab_size: usize) -> Result<ModelConfig> {
    let mut c = match a.preset {
        Preset::Toy => ModelConfig::toy(vocab_size),
        Preset::Paper => ModelConfig::paper(vocab_size),
    };
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut c.sent_layers, a.sent_layers);
    set(&mut c.sent_heads, a.sent_heads);
    set(&mut c.sent_width, a.sent_width);
    set(&mut c.max_tokens, a.max_tokens);
    set(&mut c.doc_layers, a.doc_layers);
    set(&mut c.doc_heads, a.doc_heads);
    set(&mut c.doc_width, a.doc_width);
    c.schedule = a.schedule.resolve(c.doc_layers)?.unwrap_or(MaskSchedule::offline(c.doc_layers));
    if a.embeddings.is_some() {
        c.sentence_source = SentenceSource::FrozenEmbeddings;
    }
    c.validate()?;
    Ok(c)
}

fn load_frozen(path: &Path, dim: usize) -> Result<FrozenEmbeddings> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(FrozenEmbeddings::read_jsonl(BufReader::new(f), dim)?)
}

fn attach_frozen(model: Segmenter<f64>, embeddings: Option<&Path>) -> Result<Segmenter<f64>> {
    match (model.config.sentence_source.clone(), embeddings) {
        (SentenceSource::FrozenEmbeddings, Some(p)) => {
            let table = load_frozen(p, model.config.sent_width)?;
            Ok(model.with_frozen(table)?)
        }
        (SentenceSource::FrozenEmbeddings, None) => bail!("model uses frozen embeddings; pass --embeddings"),
        (SentenceSource::Scratch, Some(_)) => bail!("model has its own sentence encoder; --embeddings does not apply"),
        (SentenceSource::Scratch, None) => Ok(model),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let train_docs = read_corpus(&a.train)?;
    let val_docs = read_corpus(&a.val)?;
    std::fs::create_dir_all(&a.out)?;
    let best_path = a.out.join("best.json");
    let last_path = a.out.join("last.json");
    let history_path = a.out.join("history.jsonl");

    let (state, best, cfg) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let mut cfg = ck.train_config.clone();
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            let mut state = ck.restore::<f64>()?;
            state.model = attach_frozen(state.model, a.embeddings.as_deref())?;
            let best = if best_path.exists() { Some(Checkpoint::load(&best_path)?) } else { None };
            (state, best, cfg)
        }
        None => {
            let cfg = train_config(&a)?;
            let vocab = Vocab::build(
                train_docs.iter().flat_map(|d| d.texts()),
                a.vocab_min_count,
                a.vocab_max_size,
            );
            let mc = model_config(&a, vocab.len())?;
            let model = attach_frozen(Segmenter::init(mc, vocab, cfg.seed)?, a.embeddings.as_deref())?;
            (TrainState::new(model, &cfg), None, cfg)
        }
    };
    let outcome = fit(state, best, &train_docs, &val_docs, &cfg, a.stop_after)?;
    for h in &outcome.history {
        eprintln!(
            "epoch {} step {} loss {:.5} lr {:.3e} val_f1 {:.4}",
            h.epoch, h.step, h.loss, h.lr, h.val_f1
        );
    }
    outcome.best.save(&best_path)?;
    outcome.last.save(&last_path)?;
    let mut hist = if a.resume.is_some() && history_path.exists() {
        std::fs::read_to_string(&history_path)?
    } else {
        String::new()
    };
    for h in &outcome.history {
        hist.push_str(&serde_json::to_string(h)?);
        hist.push('\n');
    }
    std::fs::write(&history_path, hist)?;
    let mut m = ManifestBuilder::new("train")
        .config(serde_json::json!({ "train": cfg, "model": outcome.last.model.config }))
        .seed("train", cfg.seed)
        .input(&a.train)
        .input(&a.val);
    if let Some(p) = &a.resume {
        m = m.input(p);
    }
    m.output(&best_path).output(&last_path).output(&history_path).write(&a.out.join("manifest.json"))
}

/// Loads a checkpoint or bare model file and applies schedule overrides.
fn load_model(a: &ModelArgs) -> Result<Segmenter<f64>> {
    let text = std::fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.model.display()))?;
    let model = match value.get("format").and_then(|f| f.as_str()) {
        Some(CHECKPOINT_FORMAT) => Checkpoint::from_json(&text)?.model::<f64>()?,
        Some(MODEL_FORMAT) => Segmenter::from_file(&serde_json::from_str::<ModelFile>(&text)?)?,
        other => bail!("{} is not a model or checkpoint (format {:?})", a.model.display(), other),
    };
    let mut model = attach_frozen(model, a.embeddings.as_deref())?;
    if let Some(s) = a.schedule.resolve(model.config.doc_layers)? {
        model = model.with_schedule(s)?;
    }
    Ok(model)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let docs = read_corpus(&a.corpus)?;
    let pk_window = match a.pk_window.as_str() {
        "auto" => PkWindow::Auto,
        k => PkWindow::Fixed(k.parse().map_err(|_| anyhow!("--pk-window must be `auto` or an integer, got {k}"))?),
    };
    let cfg = MetricConfig {
        pk_window,
        transposition_window: a.transposition_window,
        bootstrap_count: a.bootstrap_count,
        bootstrap_seed: a.seed,
    };
    let report = evaluate_model(&model, &docs, a.model.threshold, &cfg)?;
    write_json(a.out.as_deref(), &report)?;
    if let Some(out) = &a.out {
        ManifestBuilder::new("evaluate")
            .config(serde_json::json!({ "metrics": cfg, "threshold": a.model.threshold, "schedule": model.config.schedule }))
            .seed("bootstrap", a.seed)
            .input(&a.model.model)
            .input(&a.corpus)
            .output(out)
            .write(&beside(out))?;
    }
    Ok(())
}

/// `segment` input: a corpus document or just an id and sentence texts.
#[derive(Deserialize)]
#[serde(untagged)]
enum SegmentInput {
    Document(Document),
    Plain { id: String, sentences: Vec<String> },
}

#[derive(Serialize)]
struct SegmentOutput {
    id: String,
    labels: Vec<u8>,
}

fn segment(a: SegmentArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let reader: Box<dyn BufRead> = match &a.input {
        Some(p) => Box::new(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?)),
        None => Box::new(BufReader::new(io::stdin())),
    };
    let inputs: Vec<SegmentInput> = read_jsonl(reader)?;
    let mut out = Vec::with_capacity(inputs.len());
    for input in inputs {
        let (id, texts) = match input {
            SegmentInput::Document(d) => (d.id.clone(), d.texts().into_iter().map(str::to_string).collect()),
            SegmentInput::Plain { id, sentences } => (id, sentences),
        };
        let probs = model.probabilities(&texts).with_context(|| format!("document {id}"))?;
        let labels = labels_from_probs(&probs, a.model.threshold).into_iter().map(u8::from).collect();
        out.push(SegmentOutput { id, labels });
    }
    match &a.out {
        Some(p) => {
            write_corpus(p, &out)?;
            let mut m = ManifestBuilder::new("segment")
                .config(serde_json::json!({ "threshold": a.model.threshold, "schedule": model.config.schedule }))
                .input(&a.model.model)
                .output(p);
            if let Some(i) = &a.input {
                m = m.input(i);
            }
            m.write(&beside(p))
        }
        None => {
            let stdout = io::stdout();
            write_jsonl(stdout.lock(), &out)?;
            Ok(())
        }
    }
}

fn stream(a: StreamArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut session = StreamSession::new(&model, model.config.schedule.clone(), a.model.threshold)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let emit = |ds: Vec<chaptering::model::StreamDecision>, out: &mut io::StdoutLock| -> Result<()> {
        for d in ds {
            writeln!(out, "{}\t{}", d.index, u8::from(d.label))?;
        }
        out.flush()?;
        Ok(())
    };
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ds = session.push(&line).with_context(|| format!("sentence {}", session.received()))?;
        emit(ds, &mut out)?;
    }
    let ds = session.finish()?;
    emit(ds, &mut out)
}

#[derive(Serialize)]
struct TitleRecord {
    video_id: String,
    section_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<Partition>,
    input: String,
    target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    extractive: Option<String>,
}

fn titles_prep(a: TitlesPrepArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let split: SplitAssignment = match &a.splits {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SplitAssignment::new(),
    };
    let cfg = TitlingConfig {
        input_span: a.input_span,
        context: match a.context {
            ContextArg::None => ContextMode::None,
            ContextArg::PreviousTitles => ContextMode::PreviousTitles,
        },
        max_input_chars: a.max_input_chars,
        ..Default::default()
    };
    cfg.validate()?;
    let view = build_titles_view(&docs, &split);
    let idf = IdfTable::from_sections(view.iter().map(|e| e.section_text.as_str()));
    let mut out = Vec::with_capacity(view.len());
    for e in &view {
        let extractive = match a.extractive {
            Some(k) => Some(extractive_title(&e.sentences, k, &idf)?),
            None => None,
        };
        out.push(TitleRecord {
            video_id: e.video_id.clone(),
            section_index: e.section_index,
            partition: e.partition,
            input: build_title_input(e, &cfg),
            target: e.title.clone(),
            extractive,
        });
    }
    write_corpus(&a.out, &out)?;
    let mut m = ManifestBuilder::new("titles-prep").config(&cfg).input(&a.corpus).output(&a.out);
    if let Some(p) = &a.splits {
        m = m.input(p);
    }
    m.write(&beside(&a.out))
}

#[derive(Serialize)]
struct RougeReport {
    pairs: usize,
    rouge1: RougeScore,
    rouge2: RougeScore,
    rougel: RougeScore,
}

fn rouge(a: RougeArgs) -> Result<()> {
    let refs: Vec<String> = std::fs::read_to_string(&a.reference)?.lines().map(str::to_string).collect();
    let hyps: Vec<String> = std::fs::read_to_string(&a.hyp)?.lines().map(str::to_string).collect();
    if refs.len() != hyps.len() {
        bail!("{} references but {} candidates", refs.len(), hyps.len());
    }
    if refs.is_empty() {
        bail!("no pairs to score");
    }
    let n = refs.len() as f64;
    let mut sums = [[0.0; 3]; 3];
    for (r, h) in refs.iter().zip(&hyps) {
        let s = rouge_all(r, h);
        for (acc, sc) in sums.iter_mut().zip([s.rouge1, s.rouge2, s.rougel]) {
            acc[0] += sc.precision;
            acc[1] += sc.recall;
            acc[2] += sc.f1;
        }
    }
    let mean = |s: [f64; 3]| RougeScore {
        precision: s[0] / n,
        recall: s[1] / n,
        f1: s[2] / n,
    };
    let report = RougeReport {
        pairs: refs.len(),
        rouge1: mean(sums[0]),
        rouge2: mean(sums[1]),
        rougel: mean(sums[2]),
    };
    write_json(a.out.as_deref(), &report)?;
    if let Some(out) = &a.out {
        ManifestBuilder::new("rouge").input(&a.reference).input(&a.hyp).output(out).write(&beside(out))?;
    }
    Ok(())
}
