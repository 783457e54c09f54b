//! `softtopic` command-line driver.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use softtopic::checkpoint;
use softtopic::corpus::{self, bow_matrix, bow_vector, build_vocabulary, Tokenizer, DEFAULT_VOCAB_SIZE};
use softtopic::dtm;
use softtopic::evalsuite::{rank_by_kl, smooth, EvalReport};
use softtopic::pipeline::{evaluate_model, infer_all, layout, Dataset};
use softtopic::sweep::{self, SweepAxis, SweepBase, SweepRow, DEFAULT_SEEDS};
use softtopic::synth;
use softtopic::topicmodel::{top_words, ModelConfig, TargetMode};

use crate::config::{parse_metrics, value_text, RunConfig};

pub const THREADS_ENV: &str = "SOFTTOPIC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "softtopic", version, about = "Neural topic models trained on language-model soft targets")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary and bag-of-words matrix from a JSONL corpus.
    Preprocess {
        /// Corpus file (overrides `data.corpus`).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Generate a synthetic corpus with oracle logits and embeddings.
    Synth,
    /// Train a model and write `checkpoint.bin` and `train.log`.
    Train,
    /// Evaluate a checkpoint and write `eval.json`.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated: npmi, i_rbo, purity, precision.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        /// Comma-separated cutoffs for retrieval precision.
        #[arg(long, value_delimiter = ',')]
        precision_at: Option<Vec<usize>>,
        #[arg(long)]
        topn: Option<usize>,
    },
    /// Print the top words of every topic and write `topics.txt`.
    Topics {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        topn: Option<usize>,
    },
    /// Rank documents by topic-distribution KL divergence from a query document.
    Retrieve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Query document id.
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Sweep one or more axes over several seeds and write `sweep.csv`.
    Ablate {
        /// `axis` or `axis=v1,v2,...`; repeatable. Axes: temperature,
        /// loss_mode, target_mode, input_mode, ablation.
        #[arg(long)]
        axes: Vec<String>,
        /// Comma-separated seeds (overrides `sweep.seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn new(global: &GlobalArgs) -> Result<Self> {
        let cfg = match &global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = global.seed.or(cfg.seed).unwrap_or(0);
        let out = global.out.clone().or_else(|| cfg.out.clone());
        Ok(Self { cfg, seed, out })
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = self.out.as_deref().ok_or_else(|| anyhow!("no output directory: pass --out or set `out`"))?;
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }

    /// Data artifacts default to the output directory.
    fn dataset(&self) -> Result<Dataset> {
        let mut cfg = self.cfg.clone();
        if cfg.data.dir.is_none() {
            cfg.data.dir = Some(self.out.clone().unwrap_or_else(|| PathBuf::from(".")));
        }
        Ok(Dataset::load(&cfg.data_paths())?)
    }

    fn checkpoint_path(&self, explicit: &Option<PathBuf>) -> Result<PathBuf> {
        match explicit {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join(layout::CHECKPOINT)),
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<(ModelConfig, softtopic::topicmodel::ModelParams)> {
    if !path.exists() {
        bail!("missing checkpoint: {} does not exist", path.display());
    }
    checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Preprocess { corpus, vocab_size } => cmd_preprocess(&ctx, corpus, vocab_size),
        Command::Synth => cmd_synth(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Eval { checkpoint, metrics, precision_at, topn } => {
            cmd_eval(&ctx, &checkpoint, metrics, precision_at, topn)
        }
        Command::Topics { checkpoint, topn } => cmd_topics(&ctx, &checkpoint, topn),
        Command::Retrieve { checkpoint, query, n } => cmd_retrieve(&ctx, &checkpoint, &query, n),
        Command::Ablate { axes, seeds } => cmd_ablate(&ctx, &axes, seeds),
    }
}

fn cmd_preprocess(ctx: &Ctx, corpus_path: Option<PathBuf>, vocab_size: Option<usize>) -> Result<()> {
    let corpus_path = corpus_path
        .or_else(|| ctx.cfg.data.corpus.clone())
        .ok_or_else(|| anyhow!("no corpus: pass --corpus or set `data.corpus`"))?;
    let size = vocab_size.or(ctx.cfg.data.vocab_size).unwrap_or(DEFAULT_VOCAB_SIZE);
    let out = ctx.out_dir()?;
    let docs = corpus::read_jsonl(&corpus_path).with_context(|| format!("reading {}", corpus_path.display()))?;
    let tokenizer = Tokenizer::english();
    let vocab = build_vocabulary(&docs, size, &tokenizer)?;
    let bows: Vec<_> = docs.iter().map(|d| bow_vector(&tokenizer.tokenize(&d.text), &vocab)).collect();
    vocab.write(&out.join(layout::VOCAB))?;
    dtm::save(&out.join(layout::BOW), &bow_matrix(&bows, vocab.len()))?;
    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let labels: Vec<Option<String>> = docs.iter().map(|d| d.label.clone()).collect();
    corpus::write_labels_csv(&out.join(layout::LABELS), &ids, &labels)?;
    let empty = bows.iter().filter(|b| b.is_empty()).count();
    if empty > 0 {
        log::warn!("{empty} documents have no in-vocabulary tokens");
    }
    println!("{} documents, {} words -> {}", docs.len(), vocab.len(), out.display());
    Ok(())
}

fn cmd_synth(ctx: &Ctx) -> Result<()> {
    let spec = ctx.cfg.synth_spec(ctx.seed)?;
    let out = ctx.out_dir()?;
    let corpus = synth::generate(&spec)?;
    synth::write_artifacts(&corpus, out)?;
    let temperature = ctx.cfg.model_config()?.temperature;
    dtm::save_f64(&out.join(layout::TARGETS), &synth::oracle_targets(&corpus, temperature)?)?;
    println!("{} documents, {} topics, {} words -> {}", spec.num_docs(), spec.num_topics, spec.vocab_size, out.display());
    Ok(())
}

fn cmd_train(ctx: &Ctx) -> Result<()> {
    let dataset = ctx.dataset()?;
    let mut model = ctx.cfg.model_config()?;
    dataset.shape_config(&mut model)?;
    model.validate()?;
    let out = ctx.out_dir()?;
    let mut train_cfg = ctx.cfg.train_config(ctx.seed)?;
    train_cfg.checkpoint_path = Some(out.join(layout::CHECKPOINT));
    let data = dataset.training_data(&model)?;
    if model.target_mode == TargetMode::Soft {
        dtm::save_f64(&out.join(layout::TARGETS), &dataset.soft_targets(model.temperature)?)?;
    }
    let (_, report) = softtopic::trainer::train(&model, &train_cfg, &data)?;
    let mut log = String::from("epoch,total_loss,recon_term,prior_term,lr\n");
    for r in &report.epochs {
        log.push_str(&r.log_line());
        log.push('\n');
    }
    fs::write(out.join(layout::TRAIN_LOG), log)?;
    let last = report.epochs.last().map(|r| r.total_loss).unwrap_or(f64::NAN);
    info!("trained {} steps in {:.1}s", report.steps, report.wall_clock_secs);
    println!("{} epochs, final loss {last:.6} -> {}", report.epochs.len(), out.join(layout::CHECKPOINT).display());
    Ok(())
}

fn cmd_eval(
    ctx: &Ctx,
    checkpoint: &Option<PathBuf>,
    metrics: Option<Vec<String>>,
    precision_at: Option<Vec<usize>>,
    topn: Option<usize>,
) -> Result<()> {
    let (model, params) = load_checkpoint(&ctx.checkpoint_path(checkpoint)?)?;
    let dataset = ctx.dataset()?;
    let mut eval_cfg = ctx.cfg.eval_config()?;
    if let Some(m) = metrics {
        eval_cfg.metrics = parse_metrics(m.iter().map(String::as_str))?;
    }
    if let Some(p) = precision_at {
        eval_cfg.precision_at = p;
    }
    let top_n = topn.unwrap_or_else(|| ctx.cfg.top_n());
    let report = evaluate_model(&dataset, &model, &params, &eval_cfg, top_n, ctx.seed)?;
    let json = report.to_json()?;
    fs::write(ctx.out_dir()?.join(layout::EVAL), &json)?;
    print!("{json}");
    Ok(())
}

fn cmd_topics(ctx: &Ctx, checkpoint: &Option<PathBuf>, topn: Option<usize>) -> Result<()> {
    let (_, params) = load_checkpoint(&ctx.checkpoint_path(checkpoint)?)?;
    let dataset = ctx.dataset()?;
    let n = topn.unwrap_or_else(|| ctx.cfg.top_n());
    let topics = top_words(&params.weights.beta, &dataset.vocab, n)?;
    let mut text = String::new();
    for (k, words) in topics.iter().enumerate() {
        text.push_str(&format!("{k}\t{}\n", words.join(" ")));
    }
    fs::write(ctx.out_dir()?.join(layout::TOPICS), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_retrieve(ctx: &Ctx, checkpoint: &Option<PathBuf>, query: &str, n: usize) -> Result<()> {
    let (model, params) = load_checkpoint(&ctx.checkpoint_path(checkpoint)?)?;
    let dataset = ctx.dataset()?;
    let ids = dataset.ids.as_ref().ok_or_else(|| anyhow!("retrieval needs document ids from {}", layout::LABELS))?;
    let q = ids.iter().position(|id| id == query).ok_or_else(|| anyhow!("unknown document id `{query}`"))?;
    let theta = infer_all(&dataset, &model, &params, ctx.seed)?;
    let direction = ctx.cfg.eval_config()?.kl_direction;
    let ranked = rank_by_kl(smooth(theta.view()).view(), q, direction);
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for (d, score) in ranked.into_iter().take(n) {
        writeln!(w, "{}\t{score}", ids[d])?;
    }
    Ok(())
}

/// `axis` or `axis=v1,v2,...`.
fn parse_axis_spec(spec: &str, ctx: &Ctx) -> Result<(SweepAxis, Vec<String>)> {
    let (name, values) = match spec.split_once('=') {
        Some((n, v)) => (n.trim(), Some(v)),
        None => (spec.trim(), None),
    };
    let axis: SweepAxis = name.parse()?;
    let values = match values {
        Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => match ctx.cfg.sweep.values.get(name) {
            Some(vs) => vs.iter().map(value_text).collect::<Result<Vec<_>>>()?,
            None => axis.default_values(),
        },
    };
    if values.is_empty() {
        bail!("axis `{name}` has no values");
    }
    Ok((axis, values))
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            if n == 0 {
                bail!("{THREADS_ENV} must be a positive integer, got `{v}`");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn cmd_ablate(ctx: &Ctx, axes: &[String], seeds: Option<Vec<u64>>) -> Result<()> {
    let specs: Vec<String> = if axes.is_empty() {
        ctx.cfg.sweep.values.keys().cloned().collect()
    } else {
        axes.to_vec()
    };
    if specs.is_empty() {
        bail!("no sweep axes: pass --axes or add a [sweep.values] table");
    }
    let axes = specs.iter().map(|s| parse_axis_spec(s, ctx)).collect::<Result<Vec<_>>>()?;
    let seeds = seeds.or_else(|| ctx.cfg.sweep.seeds.clone()).unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    if seeds.is_empty() {
        bail!("no sweep seeds");
    }

    let dataset = ctx.dataset()?;
    let base = SweepBase {
        dataset: &dataset,
        model: ctx.cfg.model_config()?,
        train: ctx.cfg.train_config(ctx.seed)?,
        eval: ctx.cfg.eval_config()?,
        top_n: ctx.cfg.top_n(),
    };
    let out = ctx.out_dir()?;
    let cells: Vec<_> = axes.iter().flat_map(|(axis, values)| sweep::plan(*axis, values, &seeds)).collect();
    info!("running {} sweep cells", cells.len());

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let results: Vec<softtopic::Result<SweepRow>> =
        pool.install(|| cells.par_iter().map(|c| sweep::run_cell(&base, c)).collect());
    let mut rows = Vec::with_capacity(results.len());
    for (cell, r) in cells.iter().zip(results) {
        let mut row = r.with_context(|| format!("{}={} seed {}", cell.axis, cell.value, cell.seed))?;
        if axes.len() > 1 {
            row.value = format!("{}={}", cell.axis, row.value);
        }
        rows.push(row);
    }

    let mut csv = Vec::new();
    sweep::write_csv(&mut csv, &rows)?;
    fs::write(out.join(layout::SWEEP), &csv)?;

    let summary = sweep::summarize(&rows);
    let mut table = serde_json::Map::new();
    let reference = summary.first().map(|(_, r)| r.clone());
    for (value, mut agg) in summary {
        if let Some(reference) = &reference {
            agg.compare(reference);
        }
        println!("{value}: {}", format_metrics(&agg));
        table.insert(value, serde_json::to_value(&agg)?);
    }
    let mut json = serde_json::to_string_pretty(&table)?;
    json.push('\n');
    fs::write(out.join("sweep_summary.json"), json)?;
    Ok(())
}

fn format_metrics(r: &EvalReport) -> String {
    r.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect::<Vec<_>>().join(" ")
}
