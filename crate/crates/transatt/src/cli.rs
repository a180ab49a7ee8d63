//! The `transatt` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error
//! (unreadable or invalid input, unknown entity, bad checkpoint), 4
//! numerical divergence during training.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use transatt_core::eval::{run_apc, run_ape, AttributeRanker, EntityQuery, EvalError, EvalReport, OracleRanker, ScoredAttribute};
use transatt_core::kb::{build_dataset, ClassPath, KbError, KbSubset, Taxonomy};
use transatt_core::model::{rank_attributes_for_entity, ModelCheckpoint, ModelError, TrainingMeta, TransAtt, FORMAT_VERSION};
use transatt_core::synth::generate;
use transatt_core::train::{train, TrainError};

use crate::checkpoint::{self, CheckpointError};
use crate::config::{CliConfig, ConfigBuilder};
use crate::exec::AnyExecutor;
use crate::{embeddings, report, synth_io, tsv, DataError};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format_version 1)");

#[derive(Debug, Parser)]
#[command(name = "transatt", version = VERSION, about = "Attribute prediction over class-path taxonomies")]
struct Cli {
    /// TOML file with [model], [train], [synth], [data], [eval], [run] sections.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set model.margin=0.5`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic KB with planted ground truth.
    GenSynth(GenSynthArgs),
    /// Validate a KB and write its filtered training subset.
    BuildDataset(BuildDatasetArgs),
    /// Train a model and write a checkpoint; prints one JSON line per epoch.
    Train(TrainArgs),
    /// Rank attributes for an entity or a class-path.
    Predict(PredictArgs),
    /// Evaluate attribute prediction for entities (ape) or class-paths (apc).
    Eval(EvalArgs),
    /// Print the attention matrix of an entity's top attributes as CSV.
    InspectAttention(InspectArgs),
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_root_classes: Option<usize>,
    #[arg(long)]
    num_paths: Option<usize>,
    #[arg(long)]
    num_attributes: Option<usize>,
    #[arg(long)]
    num_entities: Option<usize>,
    #[arg(long)]
    paths_per_entity_mean: Option<f64>,
    #[arg(long)]
    attr_overlap_fraction: Option<f64>,
    #[arg(long)]
    holdout_path_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct BuildDatasetArgs {
    #[arg(long, value_name = "DIR")]
    kb: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    min_attr_support: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// KB directory; when it has a split.tsv only training entities are used.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seeds both parameter initialisation and training.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    margin: Option<f64>,
    /// Pretrained class-word vectors in word2vec text format.
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    min_attr_support: Option<usize>,
    #[arg(long)]
    parallel: bool,
    /// Overwrite the checkpoint with the current model every N epochs.
    #[arg(long, value_name = "N")]
    save_every: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, requires = "kb", conflicts_with = "path")]
    entity: Option<String>,
    #[arg(long, value_name = "DIR")]
    kb: Option<PathBuf>,
    /// Slash-joined class words, root first.
    #[arg(long, required_unless_present = "entity")]
    path: Option<String>,
    #[arg(long, default_value_t = 10)]
    topk: usize,
    /// Write the entity's attention matrix to this CSV file.
    #[arg(long, value_name = "FILE", requires = "entity")]
    emit_attention: Option<PathBuf>,
    /// Attributes left out of entity rankings (comma-separated).
    #[arg(long, value_delimiter = ',')]
    common_attrs: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Ape,
    Apc,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// KB directory with the queries and their truth.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "FILE", required_unless_present = "oracle")]
    model: Option<PathBuf>,
    /// Rank from the planted ground truth instead of a model.
    #[arg(long, conflicts_with = "model")]
    oracle: bool,
    /// Cut-offs, e.g. `1,5,10,15,20`.
    #[arg(long, value_parser = parse_ks)]
    k: Option<Ks>,
    #[arg(long, value_delimiter = ',')]
    common_attrs: Option<Vec<String>>,
    /// Also write the JSON report to this file.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "DIR")]
    kb: PathBuf,
    #[arg(long)]
    entity: String,
    #[arg(long, default_value_t = 10)]
    topk: usize,
    #[arg(long, value_delimiter = ',')]
    common_attrs: Option<Vec<String>>,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Ks(Vec<usize>);

fn parse_ks(s: &str) -> Result<Ks, String> {
    let ks = s
        .split(',')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("`{p}` is not a positive integer")),
            Ok(k) => Ok(k),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ks(ks))
}

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 3, error: e.into() }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        data(e)
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        data(e)
    }
}

fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::Config(_) => usage(e),
        _ => data(e),
    }
}

fn kb_failure(e: KbError) -> Failure {
    match e {
        KbError::ZeroSupport => usage(e),
        _ => data(e),
    }
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::Config(_) => usage(e),
        TrainError::Model(m) => model_failure(m),
        TrainError::Divergence { .. } | TrainError::NonFiniteGradient { .. } => Failure { code: 4, error: e.into() },
        TrainError::EmptyDataset | TrainError::NoNegative => data(e),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::InvalidK => usage(e),
        EvalError::Model(m) => model_failure(m),
        _ => data(e),
    }
}

/// Parse `args` (including the program name), run the command and return
/// the exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn flag_overrides(command: &Command) -> Vec<(&'static str, toml::Value)> {
    use toml::Value::{Array, Boolean, Float, Integer, String as Str};
    let int = |v: usize| Integer(v as i64);
    let mut out = Vec::new();
    let mut push = |key, v: Option<toml::Value>| {
        if let Some(v) = v {
            out.push((key, v));
        }
    };
    match command {
        Command::GenSynth(a) => {
            push("synth.seed", a.seed.map(|s| Integer(s as i64)));
            push("synth.num_root_classes", a.num_root_classes.map(int));
            push("synth.num_paths", a.num_paths.map(int));
            push("synth.num_attributes", a.num_attributes.map(int));
            push("synth.num_entities", a.num_entities.map(int));
            push("synth.paths_per_entity_mean", a.paths_per_entity_mean.map(Float));
            push("synth.attr_overlap_fraction", a.attr_overlap_fraction.map(Float));
            push("synth.holdout_path_fraction", a.holdout_path_fraction.map(Float));
        }
        Command::BuildDataset(a) => push("data.min_attr_support", a.min_attr_support.map(int)),
        Command::Train(a) => {
            push("train.epochs", a.epochs.map(int));
            push("model.seed", a.seed.map(|s| Integer(s as i64)));
            push("train.seed", a.seed.map(|s| Integer(s as i64)));
            push("model.margin", a.margin.map(Float));
            push("data.min_attr_support", a.min_attr_support.map(int));
            push("run.parallel", a.parallel.then_some(Boolean(true)));
            push("run.save_every", a.save_every.map(int));
        }
        Command::Predict(a) => {
            push("eval.common_attrs", a.common_attrs.clone().map(|c| Array(c.into_iter().map(Str).collect())));
        }
        Command::Eval(a) => {
            push("eval.ks", a.k.clone().map(|k| Array(k.0.into_iter().map(int).collect())));
            push("eval.common_attrs", a.common_attrs.clone().map(|c| Array(c.into_iter().map(Str).collect())));
            push("run.parallel", a.parallel.then_some(Boolean(true)));
        }
        Command::InspectAttention(a) => {
            push("eval.common_attrs", a.common_attrs.clone().map(|c| Array(c.into_iter().map(Str).collect())));
        }
    }
    out
}

fn effective_config(cli: &Cli) -> Result<CliConfig, Failure> {
    let mut b = ConfigBuilder::default();
    if let Some(path) = &cli.config {
        b.file(path).map_err(usage)?;
    }
    for s in &cli.set {
        b.set_str(s).map_err(usage)?;
    }
    for (key, value) in flag_overrides(&cli.command) {
        b.set(key, value).map_err(usage)?;
    }
    b.build().map_err(usage)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = effective_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.command {
        Command::GenSynth(a) => gen_synth(a, &cfg),
        Command::BuildDataset(a) => build(a, &cfg),
        Command::Train(a) => train_cmd(a, &cfg),
        Command::Predict(a) => predict(a, &cfg),
        Command::Eval(a) => eval_cmd(a, &cfg),
        Command::InspectAttention(a) => inspect(a, &cfg),
    }
}

fn gen_synth(a: &GenSynthArgs, cfg: &CliConfig) -> Result<(), Failure> {
    let synth = generate(&cfg.synth).map_err(usage)?;
    synth_io::export(&synth, &cfg.synth, &a.out)?;
    let m = synth_io::Manifest::new(&synth, &cfg.synth);
    eprintln!(
        "wrote {}: {} classes, {} paths ({} held out), {} entities, {} attributes",
        a.out.display(),
        m.counts.classes,
        m.counts.leaf_paths,
        m.counts.holdout_paths,
        m.counts.entities,
        m.counts.attributes
    );
    Ok(())
}

fn load_valid_kb(dir: &Path) -> Result<KbSubset, Failure> {
    let kb = tsv::load_kb(dir)?;
    let violations = kb.validate();
    if !violations.is_empty() {
        for v in &violations {
            log::error!("{v}");
        }
        return Err(kb_failure(KbError::Invalid(violations)));
    }
    Ok(kb)
}

fn copy_if_present(from: &Path, to: &Path, name: &str) -> Result<(), Failure> {
    let src = from.join(name);
    if src.exists() {
        fs::copy(&src, to.join(name)).map_err(|e| DataError::io(&src, e))?;
    }
    Ok(())
}

fn build(a: &BuildDatasetArgs, cfg: &CliConfig) -> Result<(), Failure> {
    let kb = load_valid_kb(&a.kb)?;
    let ds = build_dataset(&kb, cfg.data.min_attr_support).map_err(kb_failure)?;
    let entities: BTreeSet<String> = ds.tuples.iter().map(|t| t.path_set.entity.clone()).collect();
    let kept = kb.restrict_entities(&entities);
    let filtered = KbSubset::from_relations(
        kept.r1_class_edges,
        kept.r1_entity_edges,
        kept.r2.into_iter().filter(|(_, attr)| ds.attributes.contains(attr)),
        kept.r3,
    );
    tsv::save_kb(&filtered, &a.out)?;
    for name in [synth_io::SPLIT, synth_io::HOLDOUT_PATHS, synth_io::MANIFEST] {
        copy_if_present(&a.kb, &a.out, name)?;
    }
    let summary = serde_json::json!({
        "min_attr_support": cfg.data.min_attr_support,
        "entities": entities.len(),
        "attributes": ds.attributes.len(),
        "tuples": ds.tuples.len(),
        "dropped_entities": kb.entities.len() - entities.len(),
        "dropped_attributes": kb.attributes.len() - ds.attributes.len(),
    });
    println!("{summary}");
    Ok(())
}

/// One line of the training log.
#[derive(serde::Serialize)]
struct EpochLine {
    epoch: usize,
    mean_loss: f64,
    val_hits1: Option<f64>,
    seconds: f64,
}

fn train_cmd(a: &TrainArgs, cfg: &CliConfig) -> Result<(), Failure> {
    let mut kb = load_valid_kb(&a.dataset)?;
    if let Some((train_entities, _)) = synth_io::read_split(&a.dataset)? {
        kb = kb.restrict_entities(&train_entities);
    }
    let ds = build_dataset(&kb, cfg.data.min_attr_support).map_err(kb_failure)?;
    let pretrained = a.embeddings.as_deref().map(embeddings::load_word2vec).transpose()?;
    log::info!("training on {} tuples, {} attributes", ds.tuples.len(), ds.attributes.len());

    let exec = AnyExecutor::new(cfg.run.parallel);
    let stdout = io::stdout();
    let mut clock = Instant::now();
    let mut save_error = None;
    let outcome = train(&ds, &cfg.model, &cfg.train, pretrained, &exec, |rec, model| {
        let line = EpochLine {
            epoch: rec.epoch,
            mean_loss: rec.mean_loss,
            val_hits1: rec.val_hits1,
            seconds: clock.elapsed().as_secs_f64(),
        };
        let _ = writeln!(stdout.lock(), "{}", serde_json::to_string(&line).expect("finite epoch record"));
        if cfg.run.save_every > 0 && rec.epoch % cfg.run.save_every == 0 && save_error.is_none() {
            let snapshot = ModelCheckpoint {
                format_version: FORMAT_VERSION,
                model: model.clone(),
                meta: TrainingMeta { epochs: rec.epoch, best_epoch: None, final_loss: Some(rec.mean_loss), best_val_hits1: None },
            };
            save_error = checkpoint::save(&snapshot, &a.out).err();
        }
        clock = Instant::now();
    })
    .map_err(train_failure)?;
    if let Some(e) = save_error {
        return Err(e.into());
    }
    checkpoint::save(&outcome.checkpoint, &a.out)?;
    let meta = &outcome.checkpoint.meta;
    eprintln!(
        "wrote {} after {} epochs (best epoch {:?}, validation Hits@1 {:?}{})",
        a.out.display(),
        meta.epochs,
        meta.best_epoch,
        meta.best_val_hits1,
        if outcome.state.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

fn entity_paths(kb: &KbSubset, entity: &str) -> Result<transatt_core::kb::PathSet, Failure> {
    if !kb.entities.contains(entity) {
        return Err(data(KbError::UnknownEntity(entity.into())));
    }
    let paths = Taxonomy::new(kb).path_set(entity).map_err(kb_failure)?;
    if paths.is_empty() {
        return Err(data(anyhow!("entity `{entity}` has no class-path")));
    }
    Ok(paths)
}

fn common_attrs(cfg: &CliConfig) -> BTreeSet<String> {
    cfg.eval.common_attrs.iter().cloned().collect()
}

fn write_attention(
    dest: Option<&Path>,
    model: &TransAtt,
    paths: &transatt_core::kb::PathSet,
    ranking: &[transatt_core::model::Ranked],
    attention: &[Vec<f64>],
) -> Result<(), Failure> {
    let names: Vec<String> = ranking.iter().map(|r| model.attributes.name(r.attribute).to_string()).collect();
    let result = match dest {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
            report::write_attention_csv(file, &paths.paths, &names, attention)
        }
        None => report::write_attention_csv(io::stdout().lock(), &paths.paths, &names, attention),
    };
    result.context("writing attention matrix").map_err(data)
}

fn predict(a: &PredictArgs, cfg: &CliConfig) -> Result<(), Failure> {
    if a.topk == 0 {
        return Err(usage(anyhow!("--topk must be at least 1")));
    }
    let model = checkpoint::load(&a.model)?.model;
    let ranking: Vec<ScoredAttribute> = if let Some(entity) = &a.entity {
        let kb = tsv::load_kb(a.kb.as_deref().expect("clap enforces --kb with --entity"))?;
        let paths = entity_paths(&kb, entity)?;
        let r = rank_attributes_for_entity(&paths, &model, a.topk, &common_attrs(cfg)).map_err(model_failure)?;
        if let Some(dest) = &a.emit_attention {
            write_attention(Some(dest), &model, &paths, &r.ranking, &r.attention)?;
        }
        r.ranking
            .iter()
            .map(|x| ScoredAttribute { name: model.attributes.name(x.attribute).into(), score: x.score })
            .collect()
    } else {
        let raw = a.path.as_deref().expect("clap enforces --path without --entity");
        let path = ClassPath::parse(raw).map_err(usage)?;
        if model.encoder.is_all_oov(&path) {
            log::warn!("no class word of `{path}` is in the vocabulary");
        }
        model.rank_path(&path, a.topk).map_err(eval_failure)?
    };
    print!("{}", report::ranking_lines(&ranking));
    Ok(())
}

fn inspect(a: &InspectArgs, cfg: &CliConfig) -> Result<(), Failure> {
    if a.topk == 0 {
        return Err(usage(anyhow!("--topk must be at least 1")));
    }
    let model = checkpoint::load(&a.model)?.model;
    let kb = tsv::load_kb(&a.kb)?;
    let paths = entity_paths(&kb, &a.entity)?;
    let r = rank_attributes_for_entity(&paths, &model, a.topk, &common_attrs(cfg)).map_err(model_failure)?;
    write_attention(a.out.as_deref(), &model, &paths, &r.ranking, &r.attention)
}

fn truth_map(kb: &KbSubset) -> BTreeMap<ClassPath, BTreeSet<String>> {
    let mut truth: BTreeMap<ClassPath, BTreeSet<String>> = BTreeMap::new();
    for (p, a) in kb.r3.iter().flatten() {
        truth.entry(p.clone()).or_default().insert(a.clone());
    }
    truth
}

fn evaluate<R: AttributeRanker>(
    ranker: &R,
    task: TaskArg,
    dir: &Path,
    kb: &KbSubset,
    cfg: &CliConfig,
) -> Result<EvalReport, Failure> {
    let exec = AnyExecutor::new(cfg.run.parallel);
    let synthetic = dir.join(synth_io::MANIFEST).exists();
    match task {
        TaskArg::Ape => {
            let entities = match synth_io::read_split(dir)? {
                Some((_, test)) => test,
                None => kb.entities.clone(),
            };
            let filter = common_attrs(cfg);
            let tax = Taxonomy::new(kb);
            let queries = entities
                .iter()
                .map(|e| {
                    let paths = tax.path_set(e).map_err(kb_failure)?;
                    let relevant = kb.attributes_of(e).into_iter().filter(|a| !filter.contains(a)).collect();
                    Ok(EntityQuery { paths, relevant })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let source = if synthetic { "planted" } else { "observed" };
            run_ape(ranker, &queries, &cfg.eval.ks, &filter, source, &exec).map_err(eval_failure)
        }
        TaskArg::Apc => {
            if kb.r3.is_none() {
                return Err(data(anyhow!("{} has no {}", dir.display(), tsv::GROUND_TRUTH)));
            }
            let holdout = dir.join(synth_io::HOLDOUT_PATHS);
            let paths = if holdout.exists() { tsv::read_paths(&holdout)? } else { kb.ground_truth_paths() };
            let source = if synthetic { "planted" } else { "ground-truth" };
            run_apc(ranker, &paths, &truth_map(kb), &cfg.eval.ks, source, &exec).map_err(eval_failure)
        }
    }
}

fn eval_cmd(a: &EvalArgs, cfg: &CliConfig) -> Result<(), Failure> {
    let kb = load_valid_kb(&a.data)?;
    let report = if a.oracle {
        if kb.r3.is_none() {
            return Err(data(anyhow!("the oracle needs {} in {}", tsv::GROUND_TRUTH, a.data.display())));
        }
        let oracle = OracleRanker { attributes: kb.attributes.iter().cloned().collect(), truth: truth_map(&kb) };
        evaluate(&oracle, a.task, &a.data, &kb, cfg)?
    } else {
        let model = checkpoint::load(a.model.as_deref().expect("clap enforces --model without --oracle"))?.model;
        evaluate(&model, a.task, &a.data, &kb, cfg)?
    };
    let json = report::report_json(&report);
    print!("{}\n{}", report::report_table(&report), json);
    if let Some(path) = &a.json {
        fs::write(path, &json).map_err(|e| DataError::io(path, e))?;
    }
    Ok(())
}
