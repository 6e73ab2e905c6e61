//! `schemagraph`: batch front end for knowledge-graph ingestion, grounding, schema-graph
//! extraction and expansion, training, evaluation and scoring.

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use schemagraph::dataset::{load_dataset, DatasetSplit};
use schemagraph::encoder::EncoderKind;
use schemagraph::grounding::GroundedRecord;
use schemagraph::kg::{KnowledgeGraph, LoadOptions};
use schemagraph::model::{evaluate, score_statements, write_predictions_csv, Model, QuestionExamples, TrainConfig};
use schemagraph::numerics::OptimizerKind;
use schemagraph::pipeline::{
    assemble, expand_graphs, extract_graphs, ground_split, read_jsonl, schema_graphs, train_examples, write_jsonl,
};
use schemagraph::schema::{ExtractionConfig, GraphRecord, DEFAULT_K, DEFAULT_MAX_PATHS_PER_PAIR};
use schemagraph::selftest::run_selftest;
use schemagraph::text::{FileEmbeddings, PrecomputedVectors, StatementEncoder, TextEncoder};

use config::RunConfig;
use manifest::{sidecar, Manifest};

#[derive(Debug, Parser)]
#[command(name = "schemagraph", version, about = "Schema-graph reasoning over a commonsense knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a tab-separated triple file and write a binary knowledge-graph snapshot.
    Ingest(IngestArgs),
    /// Ground every question/choice statement of a dataset to concepts.
    Ground(GroundArgs),
    /// Extract schema graphs from grounded statements.
    Extract(ExtractArgs),
    /// Attach IsA neighbours of grounded concepts to schema graphs.
    Expand(ExpandArgs),
    /// Train a model and keep the best dev checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled split and write predictions.
    Eval(EvalArgs),
    /// Write the probability of every statement of a split.
    Score(EvalArgs),
    /// Run the built-in oracle and gradient checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Triple file: relation, head, tail, weight per tab-separated line.
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    language: String,
    /// Comma-separated relations to keep.
    #[arg(long, value_delimiter = ',')]
    relations: Option<Vec<String>>,
    #[arg(long)]
    min_weight: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct GroundArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    grounded: Option<PathBuf>,
    /// Maximum path length in edges.
    #[arg(long)]
    k: Option<usize>,
    /// Path cap per (question concept, answer concept) pair.
    #[arg(long)]
    max_paths: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ExpandArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TextArgs {
    /// Word-vector text file; statements are encoded as the mean of their token vectors.
    #[arg(long, conflicts_with = "vectors")]
    embeddings: Option<PathBuf>,
    /// Precomputed statement vectors, one `{"statement_id", "vector"}` object per line.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelFlags {
    #[arg(long, value_parser = ["kagnet", "mhgrn", "none"])]
    encoder: Option<String>,
    /// Schema graph expansion when graphs are built in-process.
    #[arg(long, value_parser = ["on", "off"])]
    sge: Option<String>,
    #[arg(long, value_parser = ["adam", "radam"])]
    optimizer: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_hop: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    /// Training split.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dev split used for model selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Schema graphs of the training split; built in-process when absent.
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[arg(long)]
    dev_graphs: Option<PathBuf>,
    /// Output directory for the checkpoint, training log and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    text: TextArgs,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Schema graphs of the split; built in-process with the checkpoint's settings when absent.
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    text: TextArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Data(e)
    }
}

impl From<schemagraph::Error> for Failure {
    fn from(e: schemagraph::Error) -> Self {
        Self::Data(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCHEMAGRAPH_LOG", "info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Ground(a) => ground(a),
        Command::Extract(a) => extract(a),
        Command::Expand(a) => expand(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a, false),
        Command::Score(a) => eval(a, true),
        Command::Selftest(a) => selftest(a),
    }
}

fn setup(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let cfg = match &common.config {
        Some(p) => {
            require_file(p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = common.threads.or(cfg.threads) {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(cfg)
}

fn pick(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> std::result::Result<PathBuf, Failure> {
    flag.or_else(|| from_config.clone())
        .ok_or_else(|| Failure::Usage(format!("missing required option --{name}")))
}

fn require_file(p: &Path) -> std::result::Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("input file not found: {}", p.display())))
    }
}

fn require_all(paths: &[&Path]) -> Outcome {
    paths.iter().try_for_each(|p| require_file(p))
}

fn load_kg(p: &Path) -> anyhow::Result<KnowledgeGraph> {
    let kg = KnowledgeGraph::load(p, &LoadOptions::default())
        .with_context(|| format!("loading knowledge graph {}", p.display()))?;
    log::info!("{}: {} concepts, {} triples", p.display(), kg.concept_count(), kg.triples().len());
    Ok(kg)
}

fn load_split(p: &Path) -> anyhow::Result<DatasetSplit> {
    load_dataset(p).with_context(|| format!("loading dataset {}", p.display()))
}

fn ensure_parent(p: &Path) -> anyhow::Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Outcome {
    let cfg = setup(&a.common)?;
    let input = pick(a.kg, &cfg.kg, "kg")?;
    let out = pick(a.out, &cfg.out, "out")?;
    require_file(&input)?;
    let opts = LoadOptions {
        language_prefix: a.language.clone(),
        relation_allowlist: a.relations.clone(),
        min_weight: a.min_weight,
    };
    let kg = KnowledgeGraph::load(&input, &opts).with_context(|| format!("loading {}", input.display()))?;
    ensure_parent(&out)?;
    kg.save_snapshot(&out)?;
    let s = kg.stats();
    println!("{} concepts, {} relations, {} triples", s.concepts, s.relations, s.triples);
    let settings = json!({"language": a.language, "relations": a.relations, "min_weight": a.min_weight});
    Manifest::new("ingest", settings, &[&input], &[&out])?.write(&sidecar(&out))?;
    Ok(())
}

fn ground(a: GroundArgs) -> Outcome {
    let cfg = setup(&a.common)?;
    let kg_path = pick(a.kg, &cfg.kg, "kg")?;
    let data = pick(a.dataset, &cfg.dataset, "dataset")?;
    let out = pick(a.out, &cfg.out, "out")?;
    require_all(&[&kg_path, &data])?;
    let kg = load_kg(&kg_path)?;
    let split = load_split(&data)?;
    let grounded = ground_split(&kg, &split)?;
    ensure_parent(&out)?;
    write_jsonl(&out, &grounded)?;
    println!("{} statements grounded", grounded.len());
    Manifest::new("ground", json!({}), &[&kg_path, &data], &[&out])?.write(&sidecar(&out))?;
    Ok(())
}

fn extract(a: ExtractArgs) -> Outcome {
    let cfg = setup(&a.common)?;
    let kg_path = pick(a.kg, &cfg.kg, "kg")?;
    let input = pick(a.grounded, &cfg.grounded, "grounded")?;
    let out = pick(a.out, &cfg.out, "out")?;
    require_all(&[&kg_path, &input])?;
    let model = cfg.model.clone().unwrap_or_default();
    let ext = ExtractionConfig {
        k: a.k.unwrap_or(if cfg.model.is_some() { model.k } else { DEFAULT_K }),
        max_paths_per_pair: a.max_paths.unwrap_or(if cfg.model.is_some() {
            model.max_paths_per_pair
        } else {
            DEFAULT_MAX_PATHS_PER_PAIR
        }),
    };
    if ext.k == 0 || ext.max_paths_per_pair == 0 {
        return Err(Failure::Usage("--k and --max-paths must be positive".into()));
    }
    let kg = load_kg(&kg_path)?;
    let grounded: Vec<GroundedRecord> = read_jsonl(&input)?;
    let graphs = extract_graphs(&kg, &grounded, &ext);
    ensure_parent(&out)?;
    write_jsonl(&out, &graphs)?;
    let truncated = graphs.iter().filter(|g| g.truncated).count();
    println!("{} schema graphs ({truncated} truncated)", graphs.len());
    Manifest::new("extract", serde_json::to_value(ext).map_err(anyhow::Error::from)?, &[&kg_path, &input], &[&out])?
        .write(&sidecar(&out))?;
    Ok(())
}

fn expand(a: ExpandArgs) -> Outcome {
    let cfg = setup(&a.common)?;
    let kg_path = pick(a.kg, &cfg.kg, "kg")?;
    let input = pick(a.graphs, &cfg.graphs, "graphs")?;
    let out = pick(a.out, &cfg.out, "out")?;
    require_all(&[&kg_path, &input])?;
    let seed = a.seed.or(cfg.model.as_ref().map(|m| m.seed)).unwrap_or(0);
    let kg = load_kg(&kg_path)?;
    let graphs: Vec<GraphRecord> = read_jsonl(&input)?;
    let expanded = expand_graphs(&kg, &graphs, seed)?;
    let added: usize = expanded.iter().zip(&graphs).map(|(e, g)| e.nodes.len() - g.nodes.len()).sum();
    ensure_parent(&out)?;
    write_jsonl(&out, &expanded)?;
    println!("{} schema graphs, {added} nodes added", expanded.len());
    Manifest::new("expand", json!({ "seed": seed }), &[&kg_path, &input], &[&out])?.write(&sidecar(&out))?;
    Ok(())
}

fn apply_flags(m: &ModelFlags, cfg: &mut TrainConfig) -> Outcome {
    let bad = |e: schemagraph::Error| Failure::Usage(e.to_string());
    if let Some(e) = &m.encoder {
        cfg.encoder = e.parse::<EncoderKind>().map_err(bad)?;
    }
    if let Some(o) = &m.optimizer {
        cfg.optimizer = o.parse::<OptimizerKind>().map_err(bad)?;
    }
    if let Some(s) = &m.sge {
        cfg.sge = s == "on";
    }
    macro_rules! set {
        ($($f:ident => $field:ident),*) => { $(if let Some(v) = m.$f { cfg.$field = v; })* };
    }
    set!(seed => seed, k => k, k_hop => k_hop, lr => learning_rate, batch_size => batch_size,
         max_epochs => max_epochs, patience => patience);
    cfg.validate().map_err(bad)
}

/// Statement encoder from flags; `d_s` is the dimension the model expects, if known.
fn text_encoder(
    text: &TextArgs,
    cfg: &RunConfig,
    d_s: usize,
    inputs: &mut Vec<PathBuf>,
) -> std::result::Result<StatementEncoder, Failure> {
    let vectors = text.vectors.clone().or_else(|| cfg.vectors.clone());
    let embeddings = text.embeddings.clone().or_else(|| cfg.embeddings.clone());
    let enc = match (vectors, embeddings) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--vectors and --embeddings are mutually exclusive".into())),
        (Some(v), None) => {
            require_file(&v)?;
            inputs.push(v.clone());
            StatementEncoder::Precomputed(PrecomputedVectors::load(&v)?)
        }
        (None, Some(e)) => {
            require_file(&e)?;
            inputs.push(e.clone());
            StatementEncoder::Text(Box::new(FileEmbeddings::load(&e)?))
        }
        (None, None) => StatementEncoder::hashed(d_s)?,
    };
    if enc.dim() != d_s {
        return Err(Failure::Data(anyhow!(
            "statement vectors have dimension {}, the model expects {d_s}",
            enc.dim()
        )));
    }
    Ok(enc)
}

fn examples(
    kg: &KnowledgeGraph,
    split: &DatasetSplit,
    graphs: Option<&Path>,
    cfg: &TrainConfig,
    enc: &StatementEncoder,
) -> anyhow::Result<Vec<QuestionExamples>> {
    let graphs: Vec<GraphRecord> = match graphs {
        Some(p) => read_jsonl(p)?,
        None => schema_graphs(kg, split, cfg)?,
    };
    Ok(assemble(kg, split, &graphs, enc)?)
}

fn train(a: TrainArgs) -> Outcome {
    let rc = setup(&a.common)?;
    let kg_path = pick(a.kg, &rc.kg, "kg")?;
    let train_path = pick(a.dataset, &rc.dataset, "dataset")?;
    let dev_path = pick(a.dev, &rc.dev, "dev")?;
    let out = pick(a.out, &rc.out, "out")?;
    let graphs = a.graphs.or_else(|| rc.graphs.clone());
    let dev_graphs = a.dev_graphs.or_else(|| rc.dev_graphs.clone());
    if graphs.is_some() != dev_graphs.is_some() {
        return Err(Failure::Usage("--graphs and --dev-graphs must be given together".into()));
    }
    let mut inputs: Vec<PathBuf> = vec![kg_path.clone(), train_path.clone(), dev_path.clone()];
    inputs.extend(graphs.iter().chain(&dev_graphs).cloned());
    require_all(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let mut cfg = rc.model.clone().unwrap_or_default();
    apply_flags(&a.model, &mut cfg)?;
    if let Some(e) = a.text.embeddings.as_ref().or(rc.embeddings.as_ref()) {
        require_file(e)?;
        cfg.d_s = FileEmbeddings::load(e)?.dim();
    }
    if let Some(v) = a.text.vectors.as_ref().or(rc.vectors.as_ref()) {
        require_file(v)?;
        cfg.d_s = PrecomputedVectors::load(v)?.dim();
    }
    let enc = text_encoder(&a.text, &rc, cfg.d_s, &mut inputs)?;

    let kg = load_kg(&kg_path)?;
    let tr = examples(&kg, &load_split(&train_path)?, graphs.as_deref(), &cfg, &enc)?;
    let dev = examples(&kg, &load_split(&dev_path)?, dev_graphs.as_deref(), &cfg, &enc)?;
    let outcome = train_examples(&kg, &tr, &dev, &cfg)?;

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join("model.ckpt");
    let log_path = out.join("train_log.jsonl");
    outcome.model.save(&ckpt, &kg)?;
    write_jsonl(&log_path, &outcome.log)?;
    let best = outcome.log.iter().map(|l| l.best_so_far).fold(0.0, f64::max);
    println!(
        "trained {} epochs, best dev accuracy {best:.4} at epoch {}",
        outcome.log.len(),
        outcome.best_epoch
    );
    let settings = serde_json::to_value(&cfg).map_err(anyhow::Error::from)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    Manifest::new("train", settings, &input_refs, &[&ckpt, &log_path])?.write(&out.join("manifest.json"))?;
    Ok(())
}

fn eval(a: EvalArgs, scores_only: bool) -> Outcome {
    let rc = setup(&a.common)?;
    let kg_path = pick(a.kg, &rc.kg, "kg")?;
    let data = pick(a.dataset, &rc.dataset, "dataset")?;
    let ckpt = pick(a.checkpoint, &rc.checkpoint, "checkpoint")?;
    let out = pick(a.out, &rc.out, "out")?;
    let graphs = a.graphs.or_else(|| rc.graphs.clone());
    let mut inputs = vec![kg_path.clone(), data.clone(), ckpt.clone()];
    inputs.extend(graphs.iter().cloned());
    require_all(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;

    let kg = load_kg(&kg_path)?;
    let model = Model::load(&ckpt, &kg).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let enc = text_encoder(&a.text, &rc, model.config.d_s, &mut inputs)?;
    let split = load_split(&data)?;
    let qs = examples(&kg, &split, graphs.as_deref(), &model.config, &enc)?;
    ensure_parent(&out)?;
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    let command = if scores_only {
        let scores = score_statements(&model, &qs)?;
        for (id, p) in &scores {
            let line = serde_json::to_string(&json!({"statement_id": id, "score": p})).map_err(anyhow::Error::from)?;
            writeln!(w, "{line}").context("writing scores")?;
        }
        println!("scored {} statements", scores.len());
        "score"
    } else {
        let preds = if split.is_labeled() {
            let ev = evaluate(&model, &qs)?;
            let hits = ev.predictions.iter().filter(|p| p.correct == Some(true)).count();
            println!("accuracy {:.4} ({hits}/{})", ev.accuracy, ev.predictions.len());
            ev.predictions
        } else {
            Err(anyhow!("{} has questions without answerKey; use `score` for unlabeled splits", data.display()))?
        };
        write_predictions_csv(&mut w, &preds)?;
        "eval"
    };
    w.flush().with_context(|| format!("writing {}", out.display()))?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let settings = serde_json::to_value(&model.config).map_err(anyhow::Error::from)?;
    Manifest::new(command, settings, &input_refs, &[&out])?.write(&sidecar(&out))?;
    Ok(())
}

fn selftest(a: SelftestArgs) -> Outcome {
    setup(&a.common)?;
    let results = run_selftest(a.seed);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        let report: Vec<_> = results
            .iter()
            .map(|r| json!({"check": r.name, "passed": r.passed, "detail": r.detail}))
            .collect();
        std::fs::write(out, serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
        Manifest::new("selftest", json!({ "seed": a.seed }), &[], &[out])?.write(&sidecar(out))?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Data(anyhow!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
