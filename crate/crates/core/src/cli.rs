//! The `codesem` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augment::{augment_snippets, AugmentConfig};
use crate::bpe::{train_bpe, DEFAULT_VOCAB_SIZE};
use crate::bundle::{self, Bundle};
use crate::config::{default_spec, load_config};
use crate::corpus::{corpus_stats, load_corpus, make_split, write_corpus, Part, Snippet, Taxonomy};
use crate::error::{Error, Result};
use crate::evaluate::{self, format_table, SearchSpace};
use crate::normalize::{normalize, NormalizeConfig};
use crate::par;
use crate::strategies::{self, TrainSpec};
use crate::synthetic::{self, SyntheticConfig};

#[derive(Debug, Parser)]
#[command(name = "codesem", version, about = "Semantic classification of code snippets")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Train a BPE merge table.
    BpeTrain(BpeTrainArgs),
    /// Train a model and write a bundle.
    Train(TrainArgs),
    /// Predict labels with a bundle (JSONL output).
    Predict(PredictArgs),
    /// Evaluate a bundle on a labelled corpus, or cross-validate a config.
    Eval(EvalArgs),
    /// Random hyperparameter search.
    Search(SearchArgs),
    /// Write variable-masked copies of a corpus.
    Augment(AugmentArgs),
    /// Generate the synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Declared taxonomy JSON; labels must resolve into it.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BpeTrainArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Extra unlabelled snippets to train on.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Unlabelled pool for pseudo-labelling and BPE training.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// JSON config; the linear SVM baseline when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bundle directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Hold out this stratified fraction for testing (0 trains on all).
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
    /// Also write the metrics report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Evaluate this bundle on every labelled snippet of the corpus.
    #[arg(long, conflicts_with = "config")]
    pub bundle: Option<PathBuf>,
    /// Cross-validate this config (the default without --bundle).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Print an aligned table instead of JSON.
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Template config whose searched model is varied.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// default-svm, default-nb or default-nbsvm.
    #[arg(long, default_value = "default-svm")]
    pub space: String,
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Score trials on a validation split of this size instead of CV.
    #[arg(long, default_value_t = 0.0)]
    pub val_fraction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, default_value_t = 0.5)]
    pub mask_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub copies: usize,
    /// Write only the masked copies, not the originals.
    #[arg(long)]
    pub only_copies: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub labeled: usize,
    #[arg(long, default_value_t = 500)]
    pub unlabeled: usize,
    /// Labelled corpus JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Unlabelled pool JSONL.
    #[arg(long)]
    pub unlabeled_out: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy_out: Option<PathBuf>,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_taxonomy(path: Option<&Path>) -> Result<Option<Taxonomy>> {
    path.map(Taxonomy::load).transpose()
}

fn read_input(args: &CorpusArgs) -> Result<(Vec<Snippet>, Taxonomy)> {
    let declared = load_taxonomy(args.taxonomy.as_deref())?;
    load_corpus(&args.corpus, declared.as_ref())
}

/// Unlabelled snippets from the corpus itself plus the optional pool file.
fn unlabeled_pool(corpus: &[Snippet], extra: Option<&Path>) -> Result<Vec<Snippet>> {
    let mut pool: Vec<Snippet> = corpus.iter().filter(|s| !s.is_labeled()).cloned().collect();
    if let Some(p) = extra {
        let (more, _) = load_corpus(p, None)?;
        pool.extend(more.into_iter().map(|mut s| {
            s.upper_label = None;
            s.lower_label = None;
            s
        }));
    }
    Ok(pool)
}

fn spec_from(path: Option<&Path>) -> Result<TrainSpec> {
    path.map_or_else(|| Ok(default_spec()), load_config)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    kind: &'a str,
    seed: u64,
    n_train: usize,
    n_unlabeled: usize,
    /// `train` when measured on the training data, `test` on a held-out split.
    evaluated_on: &'a str,
    metrics: evaluate::MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pseudo: Option<&'a strategies::PseudoReport>,
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let (snippets, taxonomy) = read_input(&a.input)?;
    let spec = spec_from(a.config.as_deref())?;
    let pool = unlabeled_pool(&snippets, a.unlabeled.as_deref())?;
    let pool_refs: Vec<&Snippet> = pool.iter().collect();
    let labeled: Vec<&Snippet> = snippets.iter().filter(|s| s.is_labeled()).collect();
    let (train, eval, evaluated_on) = if a.test_fraction > 0.0 {
        let plan = make_split(&snippets, seed, a.test_fraction, 0.0, 2)?;
        let train: Vec<&Snippet> = labeled
            .iter()
            .copied()
            .filter(|s| plan.part_of(&s.id) != Some(Part::Test))
            .collect();
        (train, plan.select(&snippets, Part::Test), "test")
    } else {
        (labeled.clone(), labeled.clone(), "train")
    };
    let model = strategies::fit(&train, &pool_refs, &taxonomy, &spec, seed)?;
    let metrics = evaluate::evaluate_model(&model, &eval)?;
    let pseudo = match &model.kind {
        strategies::ModelKind::Pseudo { report, .. } => Some(report),
        _ => None,
    };
    let report = to_json(&TrainReport {
        kind: model.kind_name(),
        seed,
        n_train: train.len(),
        n_unlabeled: pool.len(),
        evaluated_on,
        metrics: metrics.clone(),
        pseudo,
    })?;
    let snapshot = serde_json::to_value(&metrics)?;
    bundle::save(&Bundle::new(model, taxonomy, seed, Some(snapshot)), &a.out)?;
    if let Some(p) = &a.report {
        write_text(Some(p), &report)?;
    }
    write_text(None, &report)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    upper_label: &'a str,
    lower_label: &'a str,
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let b = bundle::load(&a.bundle)?;
    let (snippets, _) = load_corpus(&a.corpus, None)?;
    let codes: Vec<&str> = snippets.iter().map(|s| s.code.as_str()).collect();
    let preds = if codes.is_empty() { Vec::new() } else { b.model.predict(&codes)? };
    let mut out = String::new();
    for (s, p) in snippets.iter().zip(&preds) {
        out.push_str(&serde_json::to_string(&PredictionLine {
            id: &s.id,
            upper_label: &p.upper_label,
            lower_label: &p.lower_label,
        })?);
        out.push('\n');
    }
    write_text(a.out.as_deref(), &out)
}

fn cmd_eval(a: &EvalArgs, seed: u64) -> Result<()> {
    let (snippets, taxonomy) = read_input(&a.input)?;
    let (name, text) = if let Some(path) = &a.bundle {
        let b = bundle::load(path)?;
        let labeled: Vec<&Snippet> = snippets.iter().filter(|s| s.is_labeled()).collect();
        let m = evaluate::evaluate_model(&b.model, &labeled)?;
        let name = format!("{} bundle", b.manifest.kind);
        if a.table {
            (name.clone(), format_table(&[(name, &m)]))
        } else {
            (name, to_json(&m)?)
        }
    } else {
        let spec = spec_from(a.config.as_deref())?;
        let pool = unlabeled_pool(&snippets, a.unlabeled.as_deref())?;
        let pool_refs: Vec<&Snippet> = pool.iter().collect();
        let plan = make_split(&snippets, seed, a.test_fraction, 0.0, a.folds)?;
        let cv = evaluate::cross_validate(&snippets, &pool_refs, &taxonomy, &plan, &spec, seed)?;
        let name = a
            .config
            .as_deref()
            .and_then(|p| p.file_stem())
            .map_or("baseline".to_string(), |s| s.to_string_lossy().into_owned());
        if a.table {
            (name.clone(), format_table(&[(name, &cv.summary)]))
        } else {
            (name, to_json(&cv)?)
        }
    };
    log::info!("evaluated {name}");
    write_text(a.out.as_deref(), &text)
}

fn cmd_search(a: &SearchArgs, seed: u64) -> Result<()> {
    let (snippets, taxonomy) = read_input(&a.input)?;
    let template = spec_from(a.config.as_deref())?;
    let space = SearchSpace::named(&a.space)?;
    let pool = unlabeled_pool(&snippets, a.unlabeled.as_deref())?;
    let pool_refs: Vec<&Snippet> = pool.iter().collect();
    let plan = make_split(&snippets, seed, a.test_fraction, a.val_fraction, a.folds)?;
    let report = evaluate::random_search(&snippets, &pool_refs, &taxonomy, &plan, &template, &space, a.budget, seed)?;
    write_text(a.out.as_deref(), &to_json(&report)?)
}

fn cmd_augment(a: &AugmentArgs, seed: u64) -> Result<()> {
    let (snippets, _) = read_input(&a.input)?;
    let cfg = AugmentConfig {
        mask_fraction: a.mask_fraction,
        seed,
        ..Default::default()
    };
    let copies = augment_snippets(&snippets, &cfg, a.copies)?;
    let mut out = if a.only_copies { Vec::new() } else { snippets };
    out.extend(copies);
    write_corpus(&a.out, &out)
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let (snippets, _) = read_input(&a.input)?;
    write_text(a.out.as_deref(), &to_json(&corpus_stats(&snippets))?)
}

fn cmd_bpe_train(a: &BpeTrainArgs) -> Result<()> {
    let (mut snippets, _) = read_input(&a.input)?;
    if let Some(p) = &a.unlabeled {
        snippets.extend(load_corpus(p, None)?.0);
    }
    let cfg = NormalizeConfig::default();
    let texts = par::map(&snippets, |s| normalize(&s.code, &cfg));
    let table = train_bpe(&texts, a.vocab_size)?;
    table.save(&a.out)?;
    log::info!("{} merges, vocabulary {}", table.num_merges(), table.vocab_len());
    Ok(())
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let corpus = synthetic::generate(&SyntheticConfig {
        n_labeled: a.labeled,
        n_unlabeled: a.unlabeled,
        seed,
        ..Default::default()
    });
    write_corpus(&a.out, &corpus.labeled)?;
    if let Some(p) = &a.unlabeled_out {
        write_corpus(p, &corpus.unlabeled)?;
    }
    if let Some(p) = &a.taxonomy_out {
        fs::write(p, corpus.taxonomy.to_json()).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let go = || match &cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::BpeTrain(a) => cmd_bpe_train(a),
        Command::Train(a) => cmd_train(a, seed),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a, seed),
        Command::Search(a) => cmd_search(a, seed),
        Command::Augment(a) => cmd_augment(a, seed),
        Command::Synth(a) => cmd_synth(a, seed),
    };
    if cli.jobs > 0 {
        par::with_jobs(cli.jobs, go)
    } else {
        go()
    }
}

/// Parses arguments, runs, and maps errors to a nonzero exit.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
