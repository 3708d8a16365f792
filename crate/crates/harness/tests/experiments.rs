mod common;

use std::collections::BTreeMap;

use emotrans_core::crosslingual::preprocessed;
use emotrans_core::data::{load_embeddings, write_wassa_tsv, Emotion, Language};
use emotrans_core::features::FeatureConfig;
use emotrans_core::metrics::pearson;
use emotrans_core::svr::SvrConfig;
use emotrans_core::synthetic::RotatedTaskSpec;
use emotrans_harness::experiment::{load_inputs, output_paths, run_with_features};
use emotrans_harness::*;

use common::*;

#[test]
fn mt_bow_self_evaluation_on_a_training_subsample() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let items = tweet_corpus(&train, 600, 3);
    // every 6th training item, "translated" by the identity
    let subsample: Vec<_> = items.iter().step_by(6).cloned().collect();
    assert_eq!(subsample.len(), 100);
    let test = dir.path().join("anger.ca.mt.tsv");
    write_wassa_tsv(&test, &subsample).unwrap();

    let mut cfg = ExperimentConfig::new(Method::MtBow, Emotion::Anger, &train, &test);
    cfg.target_language = Some(Language::Ca);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.row.n, 100);
    assert!(out.row.pearson >= 0.9, "pearson {}", out.row.pearson);
    assert_eq!(out.row.config.features, Some(FeatureConfig::bow()));
}

#[test]
fn cwe_with_identity_alignment_equals_monolingual_embedding_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let f = rotated_files(dir.path(), RotatedTaskSpec { dim: 10, vocabulary: 200, train: 150, dev: 10, test: 10, ..Default::default() });
    // source and target are the same table, the dictionary maps every word to itself
    let words: String = load_embeddings(&f.source_embeddings)
        .unwrap()
        .words()
        .iter()
        .map(|w| format!("{w}\t{w}\n"))
        .collect();
    let dict = dir.path().join("identity.tsv");
    std::fs::write(&dict, words).unwrap();
    let mut cwe = ExperimentConfig::new(Method::Cwe, Emotion::Joy, &f.train, &f.train);
    cwe.source_embeddings = Some(f.source_embeddings.clone());
    cwe.target_embeddings = Some(f.source_embeddings.clone());
    cwe.dictionary = Some(dict);
    cwe.target_language = Some(Language::Es);
    let transfer = run_experiment(&cwe).unwrap();

    let pre = dir.path().join("pre.vec");
    preprocessed(&load_embeddings(&f.source_embeddings).unwrap()).write_word2vec(&pre).unwrap();
    let mut mono = ExperimentConfig::new(Method::Mono, Emotion::Joy, &f.train, &f.train);
    mono.source_embeddings = Some(pre);
    mono.features = Some(FeatureConfig::embeddings_only());
    let reference = run_experiment(&mono).unwrap();

    assert_eq!(transfer.predictions.len(), reference.predictions.len());
    for (a, b) in transfer.predictions.iter().zip(&reference.predictions) {
        assert_eq!(a.id, b.id);
        assert!((a.prediction - b.prediction).abs() < 1e-10, "{a:?} vs {b:?}");
    }
    assert!((transfer.row.pearson - reference.row.pearson).abs() < 1e-10);
    assert!((transfer.row.spearman - reference.row.spearman).abs() < 1e-10);
}

#[test]
fn cwe_and_blse_transfer_on_the_rotated_task() {
    let dir = tempfile::tempdir().unwrap();
    let f = rotated_files(dir.path(), RotatedTaskSpec::default());
    let mut cfg = ExperimentConfig::new(Method::Cwe, Emotion::Joy, &f.train, &f.test);
    cfg.source_embeddings = Some(f.source_embeddings.clone());
    cfg.target_embeddings = Some(f.target_embeddings.clone());
    cfg.dictionary = Some(f.dictionary.clone());
    cfg.target_language = Some(Language::Es);
    cfg.seed = 7;
    cfg.svr = SvrConfig { epsilon: 0.01, ..SvrConfig::default() };
    let cwe = run_experiment(&cfg).unwrap();
    assert!(cwe.row.pearson > 0.9, "cwe {}", cwe.row.pearson);

    cfg.method = Method::Blse;
    cfg.dev = Some(f.dev.clone());
    cfg.blse.epochs = 30;
    let blse = run_experiment(&cfg).unwrap();
    assert!(blse.row.pearson > 0.8, "blse {}", blse.row.pearson);
    assert_eq!(blse.row.config.blse.seed, 7);
}

#[test]
fn rows_are_written_and_reproduce_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let task = lexicon_task(dir.path(), 11);
    let mut cfg = ExperimentConfig::new(Method::Mono, Emotion::Anger, &task.train, &task.test);
    cfg.source_embeddings = Some(task.embeddings.clone());
    cfg.lexicons = task.lexicons.clone();
    cfg.seed = 5;
    let read = |out: &std::path::Path| output_paths(out, Method::Mono, Emotion::Anger).map(|p| std::fs::read(p).unwrap());

    cfg.output = Some(dir.path().join("first"));
    run_experiment(&cfg).unwrap();
    let first = read(&dir.path().join("first"));
    cfg.output = Some(dir.path().join("second"));
    run_experiment(&cfg).unwrap();
    let second = read(&dir.path().join("second"));
    assert_eq!(first[0], second[0]);
    assert_eq!(first[2], second[2], "predictions differ");

    // the sidecar records the resolved config, which re-runs the same row
    let row: ReportRow = serde_json::from_slice(&first[1]).unwrap();
    assert_eq!(row.seed, 5);
    assert_eq!(row.config.svr.seed, 5);
    assert_eq!(row.config.features, Some(FeatureConfig::full(["emo", "hashtag", "sent"])));
    let mut again = row.config.clone();
    again.output = Some(dir.path().join("third"));
    run_experiment(&again).unwrap();
    assert_eq!(read(&dir.path().join("third"))[2], first[2]);
    let preds = String::from_utf8(first[2].clone()).unwrap();
    assert_eq!(preds.lines().next(), Some("id\tprediction\tgold"));
    assert_eq!(preds.lines().count(), 201);
}

#[test]
fn lexicon_ablation_isolates_the_informative_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let task = lexicon_task(dir.path(), 21);
    let mut cfg = ExperimentConfig::new(Method::Mono, Emotion::Anger, &task.train, &task.test);
    cfg.source_embeddings = Some(task.embeddings.clone());
    cfg.lexicons = task.lexicons.clone();
    let report = run_ablation(&cfg, &AblationSpec::default()).unwrap();

    assert_eq!(report.base, run_experiment(&cfg).unwrap().row, "ALL row must equal the plain run");
    let all = report.base.pearson;
    assert!(all > 0.8, "ALL {all}");
    let by_group: BTreeMap<AblationGroup, f64> = report.rows.iter().map(|r| (r.group, r.pearson)).collect();
    for (group, p) in &by_group {
        match group {
            AblationGroup::SentLex | AblationGroup::AllLex => assert!(*p < 0.2, "{group}: {p}"),
            _ => assert!(*p > 0.8, "{group}: {p}"),
        }
        assert_eq!(report.delta(*group), Some(p - all));
    }
    let text = emotrans_harness::ablation::render_ablation(&[report]);
    assert!(text.starts_with("method\temotion\tALL\t-ngrams\t-char\t-embs\t-hashtag\t-emo\t-sent\t-all lex\n"));
}

#[test]
fn inert_embedding_block_has_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    tweet_corpus(&train, 200, 5);
    let test = dir.path().join("test.tsv");
    tweet_corpus(&test, 80, 6);
    let emb = dir.path().join("oov.vec");
    let rows: Vec<(String, Vec<f64>)> = (0..50).map(|i| (format!("zz{i}"), vec![i as f64, 1.0, -2.0])).collect();
    write_table(&emb, 3, &rows);

    let mut cfg = ExperimentConfig::new(Method::Mono, Emotion::Anger, &train, &test);
    cfg.source_embeddings = Some(emb);
    let spec = AblationSpec {
        groups: vec![AblationGroup::Embs, AblationGroup::Char],
        ..AblationSpec::default()
    };
    let report = run_ablation(&cfg, &spec).unwrap();
    assert!(report.delta(AblationGroup::Embs).unwrap().abs() < 1e-12, "{report:?}");

    let missing = AblationSpec {
        groups: vec![AblationGroup::EmoLex],
        ..AblationSpec::default()
    };
    assert!(run_ablation(&cfg, &missing).is_err());
}

#[test]
fn feature_overrides_reach_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let task = lexicon_task(dir.path(), 2);
    let mut cfg = ExperimentConfig::new(Method::Mono, Emotion::Anger, &task.train, &task.test);
    cfg.lexicons = task.lexicons.clone();
    let inputs = load_inputs(&cfg).unwrap();
    assert!(inputs.source_embeddings.is_none(), "no table configured");
    let only_sent = FeatureConfig {
        word_ngram_range: None,
        char_ngram_range: None,
        use_embeddings: false,
        use_lexicons: vec!["sent".into()],
        min_document_frequency: 1,
    };
    let out = run_with_features(&inputs, &only_sent, Default::default()).unwrap();
    let preds: Vec<f64> = out.predictions.iter().map(|p| p.prediction).collect();
    let gold: Vec<f64> = out.predictions.iter().map(|p| p.gold).collect();
    assert!(pearson(&preds, &gold).unwrap() > 0.95);
}

#[test]
fn suite_runs_rows_in_order_and_fills_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let mut items = tweet_corpus(&train, 300, 8);
    // relabel copies of the corpus for the other three emotions
    let base = items.clone();
    for e in [Emotion::Fear, Emotion::Joy, Emotion::Sadness] {
        items.extend(base.iter().map(|i| {
            let mut i = i.clone();
            i.id = format!("{e}-{}", i.id);
            i.emotion = e;
            i
        }));
    }
    write_wassa_tsv(&train, &items).unwrap();
    let configs: Vec<ExperimentConfig> = Emotion::MODELED
        .iter()
        .map(|&e| {
            let mut c = ExperimentConfig::new(Method::Mono, e, &train, &train);
            c.features = Some(FeatureConfig::bow());
            c
        })
        .collect();
    let rows: Vec<ReportRow> = run_suite(&configs).unwrap().into_iter().map(|o| o.row).collect();
    assert_eq!(rows.iter().map(|r| r.emotion).collect::<Vec<_>>(), Emotion::MODELED);
    assert!(rows.windows(2).all(|w| w[0].pearson == w[1].pearson), "identical data, identical rows");
    let table = emotrans_harness::experiment::render_table(&rows);
    let mono = table.lines().nth(1).unwrap();
    let cells: Vec<&str> = mono.split('\t').collect();
    assert_eq!(cells.len(), 6);
    assert_eq!(cells[5], cells[1], "average of four equal values");
}

#[test]
fn configuration_errors_come_before_any_file_access() {
    let mut cfg = ExperimentConfig::new(Method::MtBow, Emotion::Anger, "/nonexistent/train.tsv", "/nonexistent/ca.mt.tsv");
    cfg.target_language = Some(Language::Ca);
    cfg.lexicons.insert("emo".into(), "/nonexistent/emo.tsv".into());
    let e = run_experiment(&cfg).unwrap_err();
    assert!(!e.is_io(), "{e}");
    cfg.lexicons.clear();
    assert!(run_experiment(&cfg).unwrap_err().is_io());
}
