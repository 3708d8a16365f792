//! Domain types and the plain-text formats they are exchanged in.
//!
//! All readers are strict: a malformed line is an error that names the line,
//! never a silently skipped record.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Fear,
    Joy,
    Sadness,
    Disgust,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Disgust,
        Emotion::Surprise,
    ];

    /// The emotions with English regression data.
    pub const MODELED: [Emotion; 4] = [Emotion::Anger, Emotion::Fear, Emotion::Joy, Emotion::Sadness];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Disgust => "disgust",
            Emotion::Surprise => "surprise",
        }
    }

    pub fn is_modeled(self) -> bool {
        Self::MODELED.contains(&self)
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == lower)
            .ok_or_else(|| Error::Validation(format!("unknown emotion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Es,
    Ca,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Es => "es",
            Language::Ca => "ca",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "es" => Ok(Language::Es),
            "ca" => Ok(Language::Ca),
            _ => Err(Error::Validation(format!("unknown language {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Validation(format!("unknown split {s:?}"))),
        }
    }
}

/// One tweet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub emotion: Emotion,
    /// Gold intensity in `[0, 1]`, absent for unannotated text.
    pub gold_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub items: Vec<Item>,
    pub split: Split,
    pub language: Language,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness, score range and language.
    pub fn new(items: Vec<Item>, split: Split, language: Language) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Validation(format!("duplicate item id {:?}", item.id)));
            }
            if item.language != language {
                return Err(Error::Validation(format!(
                    "item {:?} has language {} in a {} corpus",
                    item.id, item.language, language
                )));
            }
            if let Some(s) = item.gold_score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::Validation(format!(
                        "item {:?} score {s} outside [0,1]",
                        item.id
                    )));
                }
            }
        }
        Ok(Corpus {
            items,
            split,
            language,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items of a single emotion, in file order.
    pub fn filter_emotion(&self, emotion: Emotion) -> Corpus {
        Corpus {
            items: self.items.iter().filter(|i| i.emotion == emotion).cloned().collect(),
            split: self.split,
            language: self.language,
        }
    }

    /// Rejects corpora unusable for regression: disgust/surprise items.
    pub fn check_regression(&self) -> Result<()> {
        match self.items.iter().find(|i| !i.emotion.is_modeled()) {
            Some(item) => Err(Error::Validation(format!(
                "item {:?} has emotion {} which has no regression data",
                item.id, item.emotion
            ))),
            None => Ok(()),
        }
    }

    /// Gold scores in item order; errors on the first unlabeled item.
    pub fn gold(&self) -> Result<Vec<f64>> {
        self.items
            .iter()
            .map(|i| {
                i.gold_score
                    .ok_or_else(|| Error::Validation(format!("item {:?} has no gold score", i.id)))
            })
            .collect()
    }
}

/// Parses a plain decimal: optional sign, digits, optional fraction.
/// `.5` is accepted; exponents, `inf` and `nan` are not.
pub(crate) fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let ok = digits(int)
        && frac.is_none_or(digits)
        && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    if !ok {
        return None;
    }
    s.parse().ok()
}

const NO_SCORE: &str = "NONE";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn read_lines<'a, R: Read + 'a>(reader: R, path_hint: &'a Path) -> impl Iterator<Item = (usize, Result<String>)> + 'a {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path_hint, e))))
}

/// Reads a WASSA TSV corpus: `id<TAB>text<TAB>emotion<TAB>score`, no header.
/// A score of `NONE` marks an unannotated item.
pub fn load_wassa_tsv(path: impl AsRef<Path>, split: Split, language: Language) -> Result<Corpus> {
    let path = path.as_ref();
    parse_wassa(open(path)?, split, language, path)
}

pub fn parse_wassa<R: Read>(reader: R, split: Split, language: Language, path_hint: &Path) -> Result<Corpus> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in read_lines(reader, path_hint) {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, text, emotion, score] = fields[..] else {
            return Err(Error::parse(n, format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        let emotion: Emotion = emotion.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
        let gold_score = if score == NO_SCORE {
            None
        } else {
            let s = parse_decimal(score).ok_or_else(|| Error::parse(n, format!("unparseable score {score:?}")))?;
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::parse(n, format!("score {s} outside [0,1]")));
            }
            Some(s)
        };
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(n, format!("duplicate item id {id:?}")));
        }
        items.push(Item {
            id: id.to_string(),
            text: text.to_string(),
            language,
            emotion,
            gold_score,
        });
    }
    Ok(Corpus {
        items,
        split,
        language,
    })
}

pub fn write_wassa_tsv(path: impl AsRef<Path>, items: &[Item]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_wassa(&mut w, items).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_wassa<W: Write>(w: &mut W, items: &[Item]) -> Result<()> {
    for item in items {
        for (name, field) in [("id", &item.id), ("text", &item.text)] {
            if field.contains(['\t', '\n', '\r']) {
                return Err(Error::Validation(format!(
                    "item {:?}: {name} contains a tab or line break",
                    item.id
                )));
            }
        }
        let score = match item.gold_score {
            Some(s) => s.to_string(),
            None => NO_SCORE.to_string(),
        };
        writeln!(w, "{}\t{}\t{}\t{}", item.id, item.text, item.emotion, score)
            .map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

/// Dense word vectors stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        })
    }

    /// Builds a table from `(word, vector)` rows; the first occurrence of a word wins.
    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::new(dim)?;
        for (word, vec) in rows {
            table.push(word.into(), &vec)?;
        }
        Ok(table)
    }

    /// Appends a row. Returns `false` (and counts a duplicate) when the word exists.
    pub fn push(&mut self, word: String, vec: &[f64]) -> Result<bool> {
        if vec.len() != self.dim {
            return Err(Error::Dimension(format!(
                "word {word:?} has {} components, expected {}",
                vec.len(),
                self.dim
            )));
        }
        if self.index.contains_key(&word) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vec);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of rows ignored because their word was already present.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words.iter().enumerate().map(|(i, w)| (w.as_str(), self.row(i)))
    }

    /// Same vocabulary with new row data (used by the mapping code).
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        EmbeddingTable {
            dim: self.dim,
            words: self.words.clone(),
            index: self.index.clone(),
            data,
            duplicates: 0,
        }
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn write_word2vec(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "{} {}", self.len(), self.dim).map_err(io)?;
        for (word, v) in self.iter() {
            write!(w, "{word}").map_err(io)?;
            for x in v {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Reads word2vec text format: a `V D` header, then `word x1 .. xD` rows.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    parse_embeddings(open(path)?, path)
}

pub fn parse_embeddings<R: Read>(reader: R, path_hint: &Path) -> Result<EmbeddingTable> {
    let mut lines = read_lines(reader, path_hint);
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::parse(1, "missing \"V D\" header")),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (vocab, dim) = match parts[..] {
        [v, d] => match (v.parse::<usize>(), d.parse::<usize>()) {
            (Ok(v), Ok(d)) if d > 0 => (v, d),
            _ => return Err(Error::parse(1, format!("bad header {header:?}"))),
        },
        _ => return Err(Error::parse(1, format!("bad header {header:?}"))),
    };
    let mut table = EmbeddingTable::new(dim)?;
    let mut values = Vec::with_capacity(dim);
    for (n, line) in lines {
        if table.len() == vocab {
            break;
        }
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else {
            return Err(Error::parse(n, "empty row"));
        };
        values.clear();
        for p in parts {
            let x: f64 = p
                .parse()
                .map_err(|_| Error::parse(n, format!("word {word:?}: bad component {p:?}")))?;
            values.push(x);
        }
        table.push(word.to_string(), &values)?;
    }
    if table.duplicates() > 0 {
        log::warn!(
            "{}: ignored {} duplicate embedding rows",
            path_hint.display(),
            table.duplicates()
        );
    }
    Ok(table)
}

/// Word association lexicon with named score dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub name: String,
    dimensions: Vec<String>,
    entries: HashMap<String, Vec<(usize, f64)>>,
}

impl Lexicon {
    pub fn new(name: impl Into<String>) -> Self {
        Lexicon {
            name: name.into(),
            dimensions: Vec::new(),
            entries: HashMap::new(),
        }
    }

    /// Adds a score; a repeated `(term, dimension)` keeps the first value.
    pub fn insert(&mut self, term: &str, dimension: &str, score: f64) {
        let d = match self.dimensions.iter().position(|x| x == dimension) {
            Some(d) => d,
            None => {
                self.dimensions.push(dimension.to_string());
                self.dimensions.len() - 1
            }
        };
        let row = self.entries.entry(term.to_string()).or_default();
        if !row.iter().any(|&(k, _)| k == d) {
            row.push((d, score));
        }
    }

    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(dimension index, score)` pairs for a term.
    pub fn get(&self, term: &str) -> Option<&[(usize, f64)]> {
        self.entries.get(term).map(Vec::as_slice)
    }

    pub fn score(&self, term: &str, dimension: &str) -> Option<f64> {
        let d = self.dimensions.iter().position(|x| x == dimension)?;
        self.get(term)?.iter().find(|&&(k, _)| k == d).map(|&(_, s)| s)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Reads a `term<TAB>dimension<TAB>score` lexicon; the name is the file stem.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_lexicon(open(path)?, name, path)
}

pub fn parse_lexicon<R: Read>(reader: R, name: impl Into<String>, path_hint: &Path) -> Result<Lexicon> {
    let mut lex = Lexicon::new(name);
    for (n, line) in read_lines(reader, path_hint) {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        let [term, dim, score] = fields[..] else {
            return Err(Error::parse(n, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let score = parse_decimal(score).ok_or_else(|| Error::parse(n, format!("unparseable score {score:?}")))?;
        lex.insert(term, dim, score);
    }
    Ok(lex)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilingualDictionary {
    pairs: Vec<(String, String)>,
}

impl BilingualDictionary {
    /// Deduplicates while keeping first-occurrence order. Errors when empty.
    pub fn new<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (s, t) in pairs {
            let pair = (s.into(), t.into());
            if seen.insert(pair.clone()) {
                out.push(pair);
            }
        }
        if out.is_empty() {
            return Err(Error::Validation("bilingual dictionary is empty".into()));
        }
        Ok(BilingualDictionary { pairs: out })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Reads `source<TAB>target` pairs.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<BilingualDictionary> {
    let path = path.as_ref();
    let mut pairs = Vec::new();
    for (n, line) in read_lines(open(path)?, path) {
        let line = line?;
        let Some((s, t)) = line.split_once('\t') else {
            return Err(Error::parse(n, "expected source<TAB>target"));
        };
        if t.contains('\t') || s.is_empty() || t.is_empty() {
            return Err(Error::parse(n, "expected source<TAB>target"));
        }
        pairs.push((s.to_string(), t.to_string()));
    }
    BilingualDictionary::new(pairs)
}

/// Reads one JSON value per non-empty line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    parse_jsonl(open(path)?, path)
}

pub fn parse_jsonl<T: serde::de::DeserializeOwned, R: Read>(reader: R, path_hint: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(reader, path_hint) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(n, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}
