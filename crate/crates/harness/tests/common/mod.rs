//! Synthetic inputs written to disk in the formats the harness reads.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;

use emotrans_core::data::{write_wassa_tsv, Emotion, Item, Language};
use emotrans_core::synthetic::{gaussian_table, rng, rotated_task, RotatedTaskSpec};

pub fn item(id: String, text: String, emotion: Emotion, gold: f64) -> Item {
    Item {
        id,
        text,
        language: Language::En,
        emotion,
        gold_score: Some(gold),
    }
}

fn min_max(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|r| (r - lo) / (hi - lo)).collect()
}

pub fn write_lexicon(path: &Path, entries: &[(String, &str, f64)]) {
    let text: String = entries.iter().map(|(t, d, s)| format!("{t}\t{d}\t{s}\n")).collect();
    std::fs::write(path, text).unwrap();
}

/// Random lowercase word; long enough that two words rarely share
/// character n-grams.
fn word(rng: &mut impl Rng) -> String {
    (0..8).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

pub struct LexiconTask {
    pub train: PathBuf,
    pub test: PathBuf,
    pub embeddings: PathBuf,
    /// Name to file.
    pub lexicons: BTreeMap<String, PathBuf>,
}

/// Anger corpus whose gold depends only on the `sent` lexicon. Train and
/// test use disjoint sentiment words, so n-grams and embeddings learned on
/// train say nothing about test; only the lexicon generalizes. The `hashtag`
/// and `emo` lexicons score the shared filler words at random.
pub fn lexicon_task(dir: &Path, seed: u64) -> LexiconTask {
    let mut r = rng(seed);
    let filler: Vec<String> = (0..60).map(|_| word(&mut r)).collect();
    let sent_train: Vec<String> = (0..60).map(|_| word(&mut r)).collect();
    let sent_test: Vec<String> = (0..60).map(|_| word(&mut r)).collect();
    let mut sent = BTreeMap::new();
    for w in sent_train.iter().chain(&sent_test) {
        // large scores keep the lexicon feature cheaper, in weight norm, than
        // fitting train through n-grams
        sent.insert(w.clone(), r.random_range(0.0..10.0));
    }
    let make = |n: usize, vocab: &[String], r: &mut rand_chacha::ChaCha8Rng| -> Vec<(String, f64)> {
        (0..n)
            .map(|_| {
                let mut words = Vec::new();
                let mut score = 0.0;
                for _ in 0..3 {
                    let w = &vocab[r.random_range(0..vocab.len())];
                    score += sent[w];
                    words.push(w.clone());
                }
                for _ in 0..4 {
                    words.push(filler[r.random_range(0..filler.len())].clone());
                }
                (words.join(" "), score)
            })
            .collect()
    };
    let train_raw = make(400, &sent_train, &mut r);
    let test_raw = make(200, &sent_test, &mut r);
    let all: Vec<f64> = train_raw.iter().chain(&test_raw).map(|(_, s)| *s).collect();
    let gold = min_max(&all);
    let items = |raw: &[(String, f64)], offset: usize, prefix: &str| -> Vec<Item> {
        raw.iter()
            .enumerate()
            .map(|(i, (text, _))| item(format!("{prefix}{i}"), text.clone(), Emotion::Anger, gold[offset + i]))
            .collect()
    };
    let paths = LexiconTask {
        train: dir.join("lex-train.tsv"),
        test: dir.join("lex-test.tsv"),
        embeddings: dir.join("lex.vec"),
        lexicons: ["hashtag", "emo", "sent"]
            .iter()
            .map(|n| (n.to_string(), dir.join(format!("{n}-lexicon.tsv"))))
            .collect(),
    };
    write_wassa_tsv(&paths.train, &items(&train_raw, 0, "tr")).unwrap();
    write_wassa_tsv(&paths.test, &items(&test_raw, train_raw.len(), "te")).unwrap();

    let mut vocab: Vec<String> = filler.clone();
    vocab.extend(sent.keys().cloned());
    let table = gaussian_table("unused", vocab.len(), 10, &mut r);
    let rows: Vec<(String, Vec<f64>)> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), table.row(i).to_vec())).collect();
    write_table(&paths.embeddings, 10, &rows);

    let sent_entries: Vec<_> = sent.iter().map(|(w, s)| (w.clone(), "positive", *s)).collect();
    write_lexicon(&paths.lexicons["sent"], &sent_entries);
    for name in ["hashtag", "emo"] {
        let entries: Vec<_> = filler.iter().map(|w| (w.clone(), "anger", r.random_range(0.0..1.0))).collect();
        write_lexicon(&paths.lexicons[name], &entries);
    }
    paths
}

pub fn write_table(path: &Path, dim: usize, rows: &[(String, Vec<f64>)]) {
    let mut text = format!("{} {dim}\n", rows.len());
    for (w, v) in rows {
        text.push_str(w);
        for x in v {
            text.push_str(&format!(" {x}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Anger tweets over a small fixed vocabulary, gold a noisy function of a
/// few cue words.
pub fn tweet_corpus(path: &Path, n: usize, seed: u64) -> Vec<Item> {
    let mut r = rng(seed);
    let texts = emotrans_core::synthetic::random_texts(n, &mut r);
    let raw: Vec<f64> = texts
        .iter()
        .map(|t| {
            let cues = t.split(' ').filter(|w| ["angry", "furious", "#rage", "hate", "😠"].contains(w)).count();
            cues as f64 + r.random_range(0.0..0.5)
        })
        .collect();
    let gold = min_max(&raw);
    let items: Vec<Item> = texts
        .into_iter()
        .zip(gold)
        .enumerate()
        .map(|(i, (t, g))| item(format!("tw{i:04}"), t, Emotion::Anger, g))
        .collect();
    write_wassa_tsv(path, &items).unwrap();
    items
}

pub struct RotatedFiles {
    pub train: PathBuf,
    pub dev: PathBuf,
    /// Target-language test set.
    pub test: PathBuf,
    pub source_embeddings: PathBuf,
    pub target_embeddings: PathBuf,
    pub dictionary: PathBuf,
}

/// The rotated two-language task (joy) written to `dir`.
pub fn rotated_files(dir: &Path, spec: RotatedTaskSpec) -> RotatedFiles {
    let task = rotated_task(spec);
    let f = RotatedFiles {
        train: dir.join("rot-train.tsv"),
        dev: dir.join("rot-dev.tsv"),
        test: dir.join("rot-test.es.tsv"),
        source_embeddings: dir.join("rot-src.vec"),
        target_embeddings: dir.join("rot-tgt.vec"),
        dictionary: dir.join("rot-dict.tsv"),
    };
    write_wassa_tsv(&f.train, &task.train.items).unwrap();
    write_wassa_tsv(&f.dev, &task.dev.items).unwrap();
    write_wassa_tsv(&f.test, &task.target_test.items).unwrap();
    task.source_embeddings.write_word2vec(&f.source_embeddings).unwrap();
    task.target_embeddings.write_word2vec(&f.target_embeddings).unwrap();
    let dict: String = task.dictionary.pairs().iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
    std::fs::write(&f.dictionary, dict).unwrap();
    f
}
