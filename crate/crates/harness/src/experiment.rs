use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emotrans_core::crosslingual::{map_embeddings, predict_blse, preprocessed, procrustes_align, train_blse, Side};
use emotrans_core::data::{
    load_dictionary, load_embeddings, load_lexicon, load_wassa_tsv, BilingualDictionary, Corpus, EmbeddingTable,
    Emotion, Item, Language, Lexicon, Split,
};
use emotrans_core::exec::Execution;
use emotrans_core::features::{fit_with, FeatureConfig, FittedVectorizer};
use emotrans_core::svr::{self, evaluate_predictions, SvrConfig, SvrModel};
use emotrans_core::{Error, Result};

use crate::config::{ExperimentConfig, Method};

/// Everything an experiment reads, loaded and filtered to its emotion.
#[derive(Debug, Clone)]
pub struct Inputs {
    /// Resolved config.
    pub config: ExperimentConfig,
    pub train: Corpus,
    pub dev: Option<Corpus>,
    pub test: Corpus,
    pub source_embeddings: Option<EmbeddingTable>,
    pub target_embeddings: Option<EmbeddingTable>,
    /// Named after their config keys.
    pub lexicons: Vec<Lexicon>,
    pub dictionary: Option<BilingualDictionary>,
}

fn corpus(path: &Path, split: Split, language: Language, emotion: Emotion) -> Result<Corpus> {
    let c = load_wassa_tsv(path, split, language)?.filter_emotion(emotion);
    if c.is_empty() {
        return Err(Error::Validation(format!("{} has no {emotion} items", path.display())));
    }
    Ok(c)
}

/// Validates `config`, then reads its files.
pub fn load_inputs(config: &ExperimentConfig) -> Result<Inputs> {
    config.validate()?;
    let config = config.resolved();
    let emotion = config.emotion;
    let train = corpus(&config.train, Split::Train, config.source_language, emotion)?;
    let test = corpus(&config.test, Split::Test, config.test_language(), emotion)?;
    let dev = match (&config.dev, config.method) {
        (Some(p), Method::Blse) => Some(corpus(p, Split::Dev, config.source_language, emotion)?),
        _ => None,
    };
    let features = config.effective_features();
    let wants_source = features.use_embeddings || config.method.is_crosslingual();
    let source_embeddings = match &config.source_embeddings {
        Some(p) if wants_source => Some(load_embeddings(p)?),
        _ => None,
    };
    let target_embeddings = match &config.target_embeddings {
        Some(p) if config.method.is_crosslingual() => Some(load_embeddings(p)?),
        _ => None,
    };
    let mut lexicons = Vec::new();
    for (name, path) in &config.lexicons {
        let mut lex = load_lexicon(path)?;
        lex.name = name.clone();
        lexicons.push(lex);
    }
    let dictionary = match &config.dictionary {
        Some(p) if config.method.is_crosslingual() => Some(load_dictionary(p)?),
        _ => None,
    };
    Ok(Inputs {
        config,
        train,
        dev,
        test,
        source_embeddings,
        target_embeddings,
        lexicons,
        dictionary,
    })
}

/// A fitted vectorizer and the SVR trained on its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrBundle {
    pub vectorizer: FittedVectorizer,
    pub model: SvrModel,
}

impl SvrBundle {
    pub fn train(
        train: &Corpus,
        features: &FeatureConfig,
        embeddings: Option<&EmbeddingTable>,
        lexicons: &[Lexicon],
        config: &SvrConfig,
        exec: Execution,
    ) -> Result<Self> {
        let vectorizer = fit_with(train, features, embeddings, lexicons, exec)?;
        let x = vectorizer.bind(embeddings, lexicons)?.transform_all(&train.items, exec);
        let model = svr::train(&x, &train.gold()?, config)?;
        Ok(SvrBundle { vectorizer, model })
    }

    /// Raw (unclipped) predictions in item order.
    pub fn predict(
        &self,
        items: &[Item],
        embeddings: Option<&EmbeddingTable>,
        lexicons: &[Lexicon],
        exec: Execution,
    ) -> Result<Vec<f64>> {
        let x = self.vectorizer.bind(embeddings, lexicons)?.transform_all(items, exec);
        self.model.predict_all(&x, exec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub emotion: Emotion,
    pub pearson: f64,
    pub spearman: f64,
    /// Test items scored.
    pub n: usize,
    pub seed: u64,
    /// Resolved configuration that produced the row.
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: f64,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub row: ReportRow,
    pub predictions: Vec<Prediction>,
}

fn missing(what: &str) -> Error {
    Error::Validation(format!("{what} was not loaded"))
}

/// Runs the method on loaded inputs with the given feature blocks.
pub fn run_with_features(inputs: &Inputs, features: &FeatureConfig, exec: Execution) -> Result<Outcome> {
    let cfg = &inputs.config;
    let test = &inputs.test;
    let predictions = match cfg.method {
        Method::Mono | Method::MtBow | Method::MtFull | Method::UnsupBow | Method::UnsupFull => {
            let emb = inputs.source_embeddings.as_ref().filter(|_| features.use_embeddings);
            let bundle = SvrBundle::train(&inputs.train, features, emb, &inputs.lexicons, &cfg.svr, exec)?;
            bundle.predict(&test.items, emb, &inputs.lexicons, exec)?
        }
        Method::Cwe => {
            let src = inputs.source_embeddings.as_ref().ok_or_else(|| missing("source embedding table"))?;
            let tgt = inputs.target_embeddings.as_ref().ok_or_else(|| missing("target embedding table"))?;
            let dict = inputs.dictionary.as_ref().ok_or_else(|| missing("dictionary"))?;
            let map = procrustes_align(src, tgt, dict)?;
            log::info!(
                "aligned with {} dictionary pairs ({} dropped)",
                map.usable_pairs,
                map.dropped_pairs
            );
            let mapped = map_embeddings(&map, src)?;
            let target = preprocessed(tgt);
            let bundle = SvrBundle::train(&inputs.train, features, Some(&mapped), &[], &cfg.svr, exec)?;
            bundle.predict(&test.items, Some(&target), &[], exec)?
        }
        Method::Blse => {
            let src = inputs.source_embeddings.as_ref().ok_or_else(|| missing("source embedding table"))?;
            let tgt = inputs.target_embeddings.as_ref().ok_or_else(|| missing("target embedding table"))?;
            let dict = inputs.dictionary.as_ref().ok_or_else(|| missing("dictionary"))?;
            let dev = inputs.dev.as_ref().ok_or_else(|| missing("dev set"))?;
            let model = train_blse(&inputs.train, src, tgt, dict, dev, &cfg.blse)?;
            log::info!("blse kept the epoch {} snapshot", model.best_epoch);
            exec.try_map_slice(&test.items, |item| predict_blse(&model, item, tgt, Side::Target))?
        }
    };
    let gold = test.gold()?;
    let eval = evaluate_predictions(&predictions, &gold)?;
    let mut config = cfg.clone();
    config.features = Some(features.clone());
    Ok(Outcome {
        row: ReportRow {
            method: cfg.method,
            emotion: cfg.emotion,
            pearson: eval.pearson,
            spearman: eval.spearman,
            n: test.len(),
            seed: cfg.seed,
            config,
        },
        predictions: test
            .items
            .iter()
            .zip(predictions.iter().zip(&gold))
            .map(|(item, (&prediction, &gold))| Prediction {
                id: item.id.clone(),
                prediction,
                gold,
            })
            .collect(),
    })
}

/// Runs the config's own feature blocks.
pub fn run_inputs(inputs: &Inputs, exec: Execution) -> Result<Outcome> {
    run_with_features(inputs, &inputs.config.effective_features(), exec)
}

/// Loads, runs and, when `output` is set, writes the row's files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let inputs = load_inputs(config)?;
    let outcome = run_inputs(&inputs, Execution::default())?;
    if let Some(dir) = &config.output {
        write_outcome(dir, &outcome)?;
    }
    Ok(outcome)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub const REPORT_HEADER: &str = "method\temotion\tpearson\tspearman\tn\tseed";

pub fn render_row(row: &ReportRow) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        row.method, row.emotion, row.pearson, row.spearman, row.n, row.seed
    )
}

pub fn render_predictions(predictions: &[Prediction]) -> String {
    let mut out = String::from("id\tprediction\tgold\n");
    for p in predictions {
        let _ = writeln!(out, "{}\t{}\t{}", p.id, p.prediction, p.gold);
    }
    out
}

/// Paths of the report, sidecar and predictions for a row.
pub fn output_paths(dir: &Path, method: Method, emotion: Emotion) -> [PathBuf; 3] {
    let stem = format!("{method}.{emotion}");
    [
        dir.join(format!("{stem}.tsv")),
        dir.join(format!("{stem}.json")),
        dir.join(format!("{stem}.predictions.tsv")),
    ]
}

pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<()> {
    let [report, sidecar, preds] = output_paths(dir, outcome.row.method, outcome.row.emotion);
    write_file(&report, &format!("{REPORT_HEADER}\n{}\n", render_row(&outcome.row)))?;
    write_file(&sidecar, &(serde_json::to_string_pretty(&outcome.row)? + "\n"))?;
    write_file(&preds, &render_predictions(&outcome.predictions))
}

/// Runs independent rows in parallel; rows come back in input order.
pub fn run_suite(configs: &[ExperimentConfig]) -> Result<Vec<Outcome>> {
    let outcomes = Execution::default().try_map_slice(configs, |c| {
        let inputs = load_inputs(c)?;
        run_inputs(&inputs, Execution::Sequential)
    })?;
    for (c, o) in configs.iter().zip(&outcomes) {
        if let Some(dir) = &c.output {
            write_outcome(dir, o)?;
        }
    }
    Ok(outcomes)
}

/// Methods as rows, the four emotions plus their mean as columns, Pearson
/// to two decimals. The mean is left blank unless all four are present.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut cells: BTreeMap<Method, BTreeMap<Emotion, f64>> = BTreeMap::new();
    for r in rows {
        cells.entry(r.method).or_default().insert(r.emotion, r.pearson);
    }
    let mut out = String::from("method");
    for e in Emotion::MODELED {
        let _ = write!(out, "\t{e}");
    }
    out.push_str("\tavg.\n");
    for (method, by_emotion) in &cells {
        out.push_str(method.as_str());
        for e in Emotion::MODELED {
            match by_emotion.get(&e) {
                Some(p) => {
                    let _ = write!(out, "\t{p:.2}");
                }
                None => out.push_str("\t-"),
            }
        }
        let all: Vec<f64> = Emotion::MODELED.iter().filter_map(|e| by_emotion.get(e).copied()).collect();
        if all.len() == Emotion::MODELED.len() {
            let _ = writeln!(out, "\t{:.2}", all.iter().sum::<f64>() / all.len() as f64);
        } else {
            out.push_str("\t-\n");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, emotion: Emotion, pearson: f64) -> ReportRow {
        ReportRow {
            method,
            emotion,
            pearson,
            spearman: pearson,
            n: 10,
            seed: 0,
            config: ExperimentConfig::new(method, emotion, "a", "b"),
        }
    }

    #[test]
    fn table_layout_and_average() {
        let mut rows: Vec<ReportRow> = Emotion::MODELED
            .iter()
            .zip([0.60, 0.50, 0.40, 0.30])
            .map(|(&e, p)| row(Method::Mono, e, p))
            .collect();
        rows.push(row(Method::Cwe, Emotion::Joy, 0.123));
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "method\tanger\tfear\tjoy\tsadness\tavg.");
        assert_eq!(lines[1], "mono\t0.60\t0.50\t0.40\t0.30\t0.45");
        assert_eq!(lines[2], "cwe\t-\t-\t0.12\t-\t-");
    }

    #[test]
    fn output_file_names() {
        let [a, b, c] = output_paths(Path::new("out"), Method::MtBow, Emotion::Fear);
        assert_eq!(a, Path::new("out/mt_bow.fear.tsv"));
        assert_eq!(b, Path::new("out/mt_bow.fear.json"));
        assert_eq!(c, Path::new("out/mt_bow.fear.predictions.tsv"));
    }
}
