//! The `emotrans` command line.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for I/O
//! errors. `run`, `ablate` and `serve` read a structured JSON `--config`; for
//! the other subcommands the keys of a JSON `--config` object act as default
//! flag values, which flags given on the command line override.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Deserialize;

use emotrans_core::bws::{aggregate_scores, generate_tuples, split_half_reliability, Judgment, Tuple4};
use emotrans_core::crosslingual::{map_embeddings, procrustes_align, train_blse, BlseConfig, BlseModel, Side};
use emotrans_core::data::{
    load_dictionary, load_embeddings, load_lexicon, load_wassa_tsv, read_jsonl, write_jsonl, Corpus, Emotion,
    Language, Lexicon, Split,
};
use emotrans_core::exec::Execution;
use emotrans_core::features::{fit_with, FeatureConfig};
use emotrans_core::svr::{evaluate_predictions, SvrConfig};
use emotrans_core::Error;
use emotrans_service::{AppState, Campaign, CampaignHandle, ServiceError};

use crate::ablation::{render_ablation, run_ablation, AblationGroup, AblationSpec};
use crate::config::{read_json, ExperimentConfig, RunFile};
use crate::error_tally::{render_tally, tally_errors, ErrorRecord};
use crate::experiment::{render_row, render_table, run_suite, write_file, SvrBundle, REPORT_HEADER};

#[derive(Debug, Parser)]
#[command(name = "emotrans", version, about = "Emotion intensity annotation, regression and cross-lingual transfer")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random 4-tuple design for the items of one emotion.
    Tuples(TuplesArgs),
    /// Best-minus-worst scores from judgments.
    Score(ScoreArgs),
    /// Split-half reliability of judgments.
    Reliability(ReliabilityArgs),
    /// Fit a feature vectorizer.
    Featurize(FeaturizeArgs),
    /// Fit features and train an SVR.
    Train(TrainArgs),
    /// Predict with a trained SVR.
    Predict(PredictArgs),
    /// Correlate predictions with gold scores.
    Eval(EvalArgs),
    /// Orthogonal Procrustes alignment of two embedding tables.
    Align(AlignArgs),
    /// Train bilingual projections jointly with a regressor.
    Blse(BlseArgs),
    /// Run experiments from a config and report Pearson/Spearman.
    Run(RunArgs),
    /// Feature-group ablation of a full-feature experiment.
    Ablate(AblateArgs),
    /// Tally annotated translation errors.
    ErrorTally(ErrorTallyArgs),
    /// Serve annotation campaigns over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TuplesArgs {
    /// WASSA-style TSV of items.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub emotion: Emotion,
    #[arg(long, default_value_t = 8)]
    pub appearances: usize,
    #[arg(long, default_value = "en")]
    pub language: Language,
    /// JSONL output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub tuples: PathBuf,
    #[arg(long)]
    pub judgments: PathBuf,
    /// Keep only this emotion's tuples.
    #[arg(long)]
    pub emotion: Option<Emotion>,
    /// TSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub tuples: PathBuf,
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long)]
    pub emotion: Option<Emotion>,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
}

/// Inputs shared by the SVR subcommands.
#[derive(Debug, Args)]
pub struct FeatureInputs {
    /// Word2vec text table.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `NAME=PATH`, or a path named after its file stem. Repeatable.
    #[arg(long = "lexicon", visible_alias = "lexicons", action = ArgAction::Append)]
    pub lexicons: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub emotion: Emotion,
    /// FeatureConfig JSON; all blocks with every given lexicon by default.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: FeatureInputs,
    /// Vectorizer JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the training items' sparse vectors as JSONL.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub emotion: Emotion,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: FeatureInputs,
    #[arg(long = "c", visible_alias = "C", default_value_t = 100.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Model bundle output (vectorizer and SVR).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// WASSA-style TSV; the score column may be empty.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub emotion: Option<Emotion>,
    #[arg(long, default_value = "en")]
    pub language: Language,
    #[command(flatten)]
    pub inputs: FeatureInputs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TSV with `id` and `prediction` columns.
    #[arg(long)]
    pub predictions: PathBuf,
    /// WASSA-style TSV with gold scores.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value = "en")]
    pub language: Language,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub source_embeddings: PathBuf,
    #[arg(long)]
    pub target_embeddings: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Alignment JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the mapped source table.
    #[arg(long)]
    pub mapped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BlseArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub emotion: Emotion,
    #[arg(long)]
    pub source_embeddings: PathBuf,
    #[arg(long)]
    pub target_embeddings: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long, default_value_t = BlseConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = BlseConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = BlseConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = BlseConfig::default().batch_size)]
    pub batch_size: usize,
    /// Model JSON output.
    #[arg(long)]
    pub model: PathBuf,
    /// Target-language test set to predict after training.
    #[arg(long, requires = "target_language")]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub target_language: Option<Language>,
    #[arg(long, requires = "test")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Repeat each configured experiment for all four emotions.
    #[arg(long)]
    pub all_emotions: bool,
    /// Print the methods-by-emotions Pearson table instead of rows.
    #[arg(long)]
    pub table: bool,
    /// Output directory for every row, overriding the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Groups to remove, comma separated; all by default.
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<AblationGroup>,
    /// AblationSpec JSON (groups and lexicon names).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub all_emotions: bool,
    /// Write the report TSV here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ErrorTallyArgs {
    /// JSONL of error records.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value = "default")]
    pub campaign: String,
    /// WASSA-style TSV of item texts. Repeatable.
    #[arg(long, action = ArgAction::Append)]
    pub items: Vec<PathBuf>,
    /// Tuple JSONL. Repeatable.
    #[arg(long, action = ArgAction::Append)]
    pub tuples: Vec<PathBuf>,
    /// Judgment log (JSONL, created if missing).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    pub language: Language,
}

fn english() -> Language {
    Language::En
}

fn default_addr() -> String {
    "127.0.0.1:8080".into()
}

/// `serve --config` file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default = "default_addr")]
    pub addr: String,
    pub campaigns: Vec<CampaignConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub id: String,
    pub items: Vec<PathBuf>,
    pub tuples: Vec<PathBuf>,
    pub log: PathBuf,
    #[serde(default = "english")]
    pub language: Language,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Service(ServiceError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            CliError::Service(ServiceError::Io(_)) => 2,
            CliError::Service(ServiceError::Core(e)) if e.is_io() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Service(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        CliError::Service(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

const STRUCTURED: [&str; 3] = ["run", "ablate", "serve"];

/// Finds the subcommand and `--config` value without a full parse, which
/// would fail on flags that only the config supplies.
fn prescan(args: &[OsString]) -> (Option<usize>, Option<PathBuf>, bool) {
    let names: Vec<String> = Cli::command().get_subcommands().map(|s| s.get_name().to_string()).collect();
    let (mut sub, mut config, mut seed_given) = (None, None, false);
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" || a == "--seed" {
            if a == "--config" {
                config = args.get(i + 1).map(PathBuf::from);
            } else {
                seed_given = true;
            }
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if a.starts_with("--seed=") {
            seed_given = true;
        } else if sub.is_none() && names.iter().any(|n| *n == a) {
            sub = Some(i);
        }
        i += 1;
    }
    (sub, config, seed_given)
}

fn flag_value(v: &serde_json::Value) -> CliResult<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(CliError::Usage(format!("config value {other} cannot be a flag value"))),
    }
}

/// Turns a flat JSON object into flags: scalars become `--key value`, true
/// becomes `--key`, arrays repeat the flag and objects give `--key k=v`.
fn config_flags(path: &Path, seed_given: bool) -> CliResult<Vec<OsString>> {
    let obj: BTreeMap<String, serde_json::Value> = read_json(path)?;
    let mut out = Vec::new();
    for (key, value) in obj {
        if key == "config" || (key == "seed" && seed_given) {
            continue;
        }
        let flag = OsString::from(format!("--{}", key.replace('_', "-")));
        match value {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Array(items) => {
                for v in &items {
                    out.push(flag.clone());
                    out.push(flag_value(v)?.into());
                }
            }
            serde_json::Value::Object(map) => {
                for (k, v) in &map {
                    out.push(flag.clone());
                    out.push(format!("{k}={}", flag_value(v)?).into());
                }
            }
            v => {
                out.push(flag);
                out.push(flag_value(&v)?.into());
            }
        }
    }
    Ok(out)
}

/// Parses `args` (program name first), splicing config-file defaults in
/// front of the subcommand's own flags.
pub fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let (sub, config, seed_given) = prescan(&args);
    let mut args = args;
    if let (Some(i), Some(path)) = (sub, config) {
        let name = args[i].to_string_lossy().to_string();
        if !STRUCTURED.contains(&name.as_str()) {
            let flags = config_flags(&path, seed_given).map_err(|e| {
                Cli::command().error(clap::error::ErrorKind::ValueValidation, e.to_string())
            })?;
            args.splice(i + 1..i + 1, flags);
        }
    }
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let matches = cmd.try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

/// Runs the CLI and returns the process exit code.
pub fn main_with(args: Vec<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match parse(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => write_file(p, text)?,
        None => out
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?,
    }
    Ok(())
}

fn load_lexicons(specs: &[String]) -> CliResult<Vec<Lexicon>> {
    specs
        .iter()
        .map(|s| {
            let (name, path) = match s.split_once('=') {
                Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
                None => (None, PathBuf::from(s)),
            };
            let mut lex = load_lexicon(&path)?;
            if let Some(n) = name {
                lex.name = n;
            }
            Ok(lex)
        })
        .collect()
}

fn train_corpus(path: &Path, emotion: Emotion) -> CliResult<Corpus> {
    let c = load_wassa_tsv(path, Split::Train, Language::En)?.filter_emotion(emotion);
    if c.is_empty() {
        return Err(Error::Validation(format!("{} has no {emotion} items", path.display())).into());
    }
    Ok(c)
}

fn feature_config(path: Option<&Path>, embeddings: bool, lexicons: &[Lexicon]) -> CliResult<FeatureConfig> {
    Ok(match path {
        Some(p) => read_json(p)?,
        None => FeatureConfig {
            use_embeddings: embeddings,
            ..FeatureConfig::full(lexicons.iter().map(|l| l.name.clone()))
        },
    })
}

fn judgments_for(tuples: &Path, judgments: &Path, emotion: Option<Emotion>) -> CliResult<(Vec<Tuple4>, Vec<Judgment>)> {
    let mut ts: Vec<Tuple4> = read_jsonl(tuples)?;
    let mut js: Vec<Judgment> = read_jsonl(judgments)?;
    if let Some(e) = emotion {
        ts.retain(|t| t.emotion == e);
        let ids: std::collections::HashSet<&str> = ts.iter().map(|t| t.tuple_id.as_str()).collect();
        js.retain(|j| ids.contains(j.tuple_id.as_str()));
    }
    Ok((ts, js))
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    let seed = cli.seed;
    let config = cli.config;
    let exec = Execution::default();
    match cli.command {
        Command::Tuples(a) => {
            let corpus = load_wassa_tsv(&a.items, Split::Train, a.language)?.filter_emotion(a.emotion);
            let ids: Vec<String> = corpus.items.into_iter().map(|i| i.id).collect();
            let tuples = generate_tuples(&ids, a.appearances, a.emotion, seed.unwrap_or(0))?;
            write_jsonl(&a.out, &tuples)?;
            writeln!(out, "{} tuples over {} items", tuples.len(), ids.len()).ok();
        }
        Command::Score(a) => {
            let (ts, js) = judgments_for(&a.tuples, &a.judgments, a.emotion)?;
            let table = aggregate_scores(&ts, &js)?;
            let mut text = String::from("id\tscore\traw\tappearances\n");
            for (id, score) in &table.scores {
                let _ = writeln!(text, "{id}\t{score}\t{}\t{}", table.raw[id], table.appearances[id]);
            }
            emit(out, a.out.as_deref(), &text)?;
        }
        Command::Reliability(a) => {
            let (ts, js) = judgments_for(&a.tuples, &a.judgments, a.emotion)?;
            let r = split_half_reliability(&ts, &js, a.iterations, seed.unwrap_or(0))?;
            writeln!(out, "{}", serde_json::to_string_pretty(&r)?).ok();
        }
        Command::Featurize(a) => {
            let train = train_corpus(&a.train, a.emotion)?;
            let lexicons = load_lexicons(&a.inputs.lexicons)?;
            let emb = a.inputs.embeddings.as_deref().map(load_embeddings).transpose()?;
            let features = feature_config(a.features.as_deref(), emb.is_some(), &lexicons)?;
            let fitted = fit_with(&train, &features, emb.as_ref(), &lexicons, exec)?;
            write_file(&a.out, &fitted.to_json()?)?;
            if let Some(path) = &a.vectors {
                let xs = fitted.bind(emb.as_ref(), &lexicons)?.transform_all(&train.items, exec);
                let rows: Vec<serde_json::Value> = train
                    .items
                    .iter()
                    .zip(&xs)
                    .map(|(i, x)| serde_json::json!({"id": i.id, "dim": x.dim(), "features": x.iter().collect::<Vec<_>>()}))
                    .collect();
                write_jsonl(path, &rows)?;
            }
            writeln!(out, "{} features", fitted.total_dim()).ok();
        }
        Command::Train(a) => {
            let train = train_corpus(&a.train, a.emotion)?;
            let lexicons = load_lexicons(&a.inputs.lexicons)?;
            let emb = a.inputs.embeddings.as_deref().map(load_embeddings).transpose()?;
            let features = feature_config(a.features.as_deref(), emb.is_some(), &lexicons)?;
            let svr = SvrConfig {
                c: a.c,
                epsilon: a.epsilon,
                seed: seed.unwrap_or(0),
                ..SvrConfig::default()
            };
            let bundle = SvrBundle::train(&train, &features, emb.as_ref(), &lexicons, &svr, exec)?;
            write_file(&a.model, &serde_json::to_string(&bundle)?)?;
            writeln!(out, "trained on {} items", train.len()).ok();
        }
        Command::Predict(a) => {
            let bundle: SvrBundle = read_json(&a.model)?;
            let lexicons = load_lexicons(&a.inputs.lexicons)?;
            let emb = a.inputs.embeddings.as_deref().map(load_embeddings).transpose()?;
            let mut corpus = load_wassa_tsv(&a.input, Split::Test, a.language)?;
            if let Some(e) = a.emotion {
                corpus = corpus.filter_emotion(e);
            }
            let preds = bundle.predict(&corpus.items, emb.as_ref(), &lexicons, exec)?;
            let mut text = String::from("id\tprediction\tgold\n");
            for (item, p) in corpus.items.iter().zip(preds) {
                let gold = item.gold_score.map(|g| g.to_string()).unwrap_or_default();
                let _ = writeln!(text, "{}\t{p}\t{gold}", item.id);
            }
            emit(out, a.out.as_deref(), &text)?;
        }
        Command::Eval(a) => {
            let text = std::fs::read_to_string(&a.predictions).map_err(|source| Error::Io {
                path: a.predictions.clone(),
                source,
            })?;
            let gold_corpus = load_wassa_tsv(&a.gold, Split::Test, a.language)?;
            let gold: std::collections::HashMap<&str, Option<f64>> =
                gold_corpus.items.iter().map(|i| (i.id.as_str(), i.gold_score)).collect();
            let (mut preds, mut golds) = (Vec::new(), Vec::new());
            for (n, line) in text.lines().enumerate().skip(1) {
                let mut cols = line.split('\t');
                let (Some(id), Some(p)) = (cols.next(), cols.next()) else {
                    return Err(Error::Validation(format!("predictions line {}: expected id and prediction", n + 1)).into());
                };
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Validation(format!("predictions line {}: bad number {p:?}", n + 1)))?;
                let g = gold
                    .get(id)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::Validation(format!("no gold score for {id:?}")))?;
                preds.push(p);
                golds.push(g);
            }
            let e = evaluate_predictions(&preds, &golds)?;
            writeln!(out, "pearson\tspearman\tn\n{}\t{}\t{}", e.pearson, e.spearman, preds.len()).ok();
        }
        Command::Align(a) => {
            let src = load_embeddings(&a.source_embeddings)?;
            let tgt = load_embeddings(&a.target_embeddings)?;
            let dict = load_dictionary(&a.dictionary)?;
            let map = procrustes_align(&src, &tgt, &dict)?;
            write_file(&a.out, &map.to_json()?)?;
            if let Some(path) = &a.mapped {
                map_embeddings(&map, &src)?.write_word2vec(path)?;
            }
            writeln!(
                out,
                "aligned {}-d tables on {} pairs ({} dropped)",
                map.dim, map.usable_pairs, map.dropped_pairs
            )
            .ok();
        }
        Command::Blse(a) => {
            let train = train_corpus(&a.train, a.emotion)?;
            let dev = load_wassa_tsv(&a.dev, Split::Dev, Language::En)?.filter_emotion(a.emotion);
            let src = load_embeddings(&a.source_embeddings)?;
            let tgt = load_embeddings(&a.target_embeddings)?;
            let dict = load_dictionary(&a.dictionary)?;
            let config = BlseConfig {
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                alpha: a.alpha,
                batch_size: a.batch_size,
                seed: seed.unwrap_or(0),
                ..BlseConfig::default()
            };
            let model = train_blse(&train, &src, &tgt, &dict, &dev, &config)?;
            write_file(&a.model, &model.to_json()?)?;
            writeln!(out, "selected epoch {}", model.best_epoch).ok();
            if let (Some(test), Some(lang)) = (&a.test, a.target_language) {
                blse_predict(&model, test, lang, a.emotion, &tgt, a.predictions.as_deref(), out)?;
            }
        }
        Command::Run(a) => {
            let path = config.ok_or_else(|| CliError::Usage("run needs --config".into()))?;
            let mut configs = read_json::<RunFile>(&path)?.into_vec();
            if a.all_emotions {
                configs = expand_emotions(configs);
            }
            for c in &mut configs {
                if let Some(s) = seed {
                    c.seed = s;
                }
                if let Some(o) = &a.output {
                    c.output = Some(o.clone());
                }
            }
            for c in &configs {
                c.validate()?;
            }
            let rows: Vec<_> = run_suite(&configs)?.into_iter().map(|o| o.row).collect();
            let text = if a.table {
                render_table(&rows)
            } else {
                let mut t = format!("{REPORT_HEADER}\n");
                for r in &rows {
                    let _ = writeln!(t, "{}", render_row(r));
                }
                t
            };
            emit(out, None, &text)?;
        }
        Command::Ablate(a) => {
            let path = config.ok_or_else(|| CliError::Usage("ablate needs --config".into()))?;
            let mut configs = read_json::<RunFile>(&path)?.into_vec();
            if a.all_emotions {
                configs = expand_emotions(configs);
            }
            let mut spec = match &a.spec {
                Some(p) => read_json(p)?,
                None => AblationSpec::default(),
            };
            if !a.groups.is_empty() {
                spec.groups = a.groups.clone();
            }
            let mut reports = Vec::new();
            for mut c in configs {
                if let Some(s) = seed {
                    c.seed = s;
                }
                reports.push(run_ablation(&c, &spec)?);
            }
            let text = render_ablation(&reports);
            if let Some(p) = &a.out {
                write_file(p, &text)?;
            }
            emit(out, None, &text)?;
        }
        Command::ErrorTally(a) => {
            let records: Vec<ErrorRecord> = read_jsonl(&a.records)?;
            let text = render_tally(&tally_errors(&records)?);
            emit(out, a.out.as_deref(), &text)?;
        }
        Command::Serve(a) => serve(a, config.as_deref(), out)?,
    }
    Ok(())
}

fn expand_emotions(configs: Vec<ExperimentConfig>) -> Vec<ExperimentConfig> {
    configs
        .into_iter()
        .flat_map(|c| {
            Emotion::MODELED.into_iter().map(move |e| ExperimentConfig {
                emotion: e,
                ..c.clone()
            })
        })
        .collect()
}

fn blse_predict(
    model: &BlseModel,
    test: &Path,
    language: Language,
    emotion: Emotion,
    tgt: &emotrans_core::data::EmbeddingTable,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let corpus = load_wassa_tsv(test, Split::Test, language)?.filter_emotion(emotion);
    let preds = Execution::default().try_map_slice(&corpus.items, |i| model.predict(i, tgt, Side::Target))?;
    let mut text = String::from("id\tprediction\tgold\n");
    for (item, p) in corpus.items.iter().zip(&preds) {
        let gold = item.gold_score.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(text, "{}\t{p}\t{gold}", item.id);
    }
    if let Ok(gold) = corpus.gold() {
        let e = evaluate_predictions(&preds, &gold)?;
        writeln!(out, "target pearson {} spearman {}", e.pearson, e.spearman).ok();
    }
    emit(out, path, &text)
}

fn serve(a: ServeArgs, config: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let cfg = match config {
        Some(p) => read_json::<ServeConfig>(p)?,
        None => ServeConfig {
            addr: a.addr,
            campaigns: vec![CampaignConfig {
                id: a.campaign,
                items: a.items,
                tuples: a.tuples,
                log: a
                    .log
                    .ok_or_else(|| CliError::Usage("serve needs --log or a --config".into()))?,
                language: a.language,
            }],
        },
    };
    let mut handles = Vec::new();
    for c in cfg.campaigns {
        let campaign = Campaign::from_files(c.id, &c.items, &c.tuples, c.language)?;
        let (handle, replay) = CampaignHandle::open(campaign, &c.log)?;
        if replay.truncated_bytes > 0 {
            log::warn!(
                "{}: dropped {} bytes of an incomplete final record",
                c.log.display(),
                replay.truncated_bytes
            );
        }
        log::info!("{}: replayed {} judgments", c.log.display(), replay.records);
        handles.push(handle);
    }
    let state = AppState::new(handles);
    let io = |source: std::io::Error| {
        CliError::Core(Error::Io {
            path: PathBuf::from(&cfg.addr),
            source,
        })
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.addr).await.map_err(io)?;
        let addr = listener.local_addr().map_err(io)?;
        writeln!(out, "listening on http://{addr}").map_err(io)?;
        out.flush().map_err(io)?;
        emotrans_service::serve(listener, state).await.map_err(io)
    })
}
