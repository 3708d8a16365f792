//! Tweet tokenization and block-structured sparse features.
//!
//! A fitted vectorizer lays out up to four kinds of blocks, in this order:
//! word n-gram counts, character n-gram counts, the mean embedding of the
//! in-vocabulary tokens, and one block per lexicon holding per-dimension
//! score sums followed by the number of matched tokens.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, EmbeddingTable, Item, Lexicon};
use crate::exec::Execution;
use crate::{Error, Result};

pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "@user";

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        (?P<url>(?:https?://|www\.)\S+)
        | (?P<user>@\w+)
        | (?P<tag>\#\w+)
        | (?P<word>\w+(?:['’]\w+)*)
        | (?P<emoji>\p{Extended_Pictographic}[\x{FE0F}\x{1F3FB}-\x{1F3FF}]*
             (?:\x{200D}\p{Extended_Pictographic}[\x{FE0F}\x{1F3FB}-\x{1F3FF}]*)*)
        | (?P<punct>[^\w\s\p{Extended_Pictographic}\x{FE0F}\x{200D}\x{1F3FB}-\x{1F3FF}]+)
        ",
    )
    .expect("token pattern")
});

/// Lowercases and splits a tweet.
///
/// Hashtags stay whole (with `#`), mentions become `@user`, URLs become
/// `<url>`, each emoji (with modifiers and ZWJ joins) is its own token and
/// runs of other punctuation are kept together.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    TOKEN_RE
        .captures_iter(&lower)
        .map(|c| {
            if c.name("url").is_some() {
                URL_TOKEN.to_string()
            } else if c.name("user").is_some() {
                USER_TOKEN.to_string()
            } else {
                c[0].to_string()
            }
        })
        .collect()
}

/// Word n-gram keys (tokens joined by one space), in text order.
pub fn word_ngrams(tokens: &[String], (low, high): (usize, usize)) -> impl Iterator<Item = String> + '_ {
    (low..=high).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

/// Character n-grams over the lowercased raw text, spaces included.
pub fn char_ngrams(text: &str, (low, high): (usize, usize)) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    (low..=high)
        .flat_map(|n| chars.windows(n).map(|w| w.iter().collect::<String>()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// `None` disables the block.
    pub word_ngram_range: Option<(usize, usize)>,
    pub char_ngram_range: Option<(usize, usize)>,
    pub use_embeddings: bool,
    /// Lexicon names, in block order.
    pub use_lexicons: Vec<String>,
    pub min_document_frequency: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            word_ngram_range: Some((1, 4)),
            char_ngram_range: Some((3, 5)),
            use_embeddings: true,
            use_lexicons: Vec::new(),
            min_document_frequency: 1,
        }
    }
}

impl FeatureConfig {
    /// All blocks: word 1-4 grams, char 3-5 grams, embeddings and the given lexicons.
    pub fn full<S: Into<String>>(lexicons: impl IntoIterator<Item = S>) -> Self {
        FeatureConfig {
            use_lexicons: lexicons.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    /// Unigram counts only.
    pub fn bow() -> Self {
        FeatureConfig {
            word_ngram_range: Some((1, 1)),
            char_ngram_range: None,
            use_embeddings: false,
            use_lexicons: Vec::new(),
            min_document_frequency: 1,
        }
    }

    /// Averaged embeddings only.
    pub fn embeddings_only() -> Self {
        FeatureConfig {
            word_ngram_range: None,
            char_ngram_range: None,
            use_embeddings: true,
            use_lexicons: Vec::new(),
            min_document_frequency: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("word", self.word_ngram_range), ("char", self.char_ngram_range)] {
            if let Some((lo, hi)) = r {
                if lo == 0 || lo > hi {
                    return Err(Error::Validation(format!("bad {name} n-gram range ({lo},{hi})")));
                }
            }
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.use_lexicons.iter().find(|l| !seen.insert(*l)) {
            return Err(Error::Validation(format!("lexicon {dup:?} listed twice")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BlockKind {
    WordNgrams,
    CharNgrams,
    Embeddings,
    Lexicon(String),
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockKind::WordNgrams => f.write_str("word_ngrams"),
            BlockKind::CharNgrams => f.write_str("char_ngrams"),
            BlockKind::Embeddings => f.write_str("embeddings"),
            BlockKind::Lexicon(name) => write!(f, "lexicon:{name}"),
        }
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word_ngrams" => Ok(BlockKind::WordNgrams),
            "char_ngrams" => Ok(BlockKind::CharNgrams),
            "embeddings" => Ok(BlockKind::Embeddings),
            _ => s
                .strip_prefix("lexicon:")
                .map(|n| BlockKind::Lexicon(n.to_string()))
                .ok_or_else(|| Error::Validation(format!("unknown block {s:?}"))),
        }
    }
}

impl Serialize for BlockKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub offset: usize,
    pub width: usize,
}

/// Sorted keys; a key's column is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(mut keys: Vec<String>) -> Self {
        keys.sort();
        keys.dedup();
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Vocabulary { keys, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.keys
    }
}

impl Vocabulary {
    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl FeatureVector {
    /// Builds from `(index, value)` pairs in any order; duplicate indices are summed
    /// and zeros dropped.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::Dimension(format!("index {i} outside dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(Error::Validation(format!("non-finite feature value at {i}")));
            }
            match indices.last() {
                Some(&last) if last == i => *values.last_mut().unwrap() += v,
                _ => {
                    indices.push(i);
                    values.push(v);
                }
            }
        }
        let (indices, values) = indices.into_iter().zip(values).filter(|&(_, v)| v != 0.0).unzip();
        Ok(FeatureVector { indices, values, dim })
    }

    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        Self::from_pairs(dense.len(), dense.iter().copied().enumerate().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Dot product with a dense vector of length at least `dim`.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            d[i] = v;
        }
        d
    }

    /// Values whose indices fall in `[offset, offset + width)`, re-based to 0.
    pub fn block(&self, block: &Block) -> Vec<(usize, f64)> {
        self.iter()
            .filter(|&(i, _)| i >= block.offset && i < block.offset + block.width)
            .map(|(i, v)| (i - block.offset, v))
            .collect()
    }
}

pub const VECTORIZER_FORMAT: &str = "emotrans.vectorizer";
pub const VECTORIZER_VERSION: u32 = 1;

/// Vocabulary and block layout learned from training data.
///
/// Embedding tables and lexicons are not part of the serialized state; they
/// are supplied again through [`FittedVectorizer::bind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedVectorizer {
    pub format: String,
    pub version: u32,
    pub config: FeatureConfig,
    pub blocks: Vec<Block>,
    pub word_vocabulary: Vocabulary,
    pub char_vocabulary: Vocabulary,
    pub embedding_dim: Option<usize>,
    /// Dimension names of each lexicon block, keyed by lexicon name.
    pub lexicon_dimensions: BTreeMap<String, Vec<String>>,
}

fn item_ngrams(item: &Item, config: &FeatureConfig) -> (HashSet<String>, HashSet<String>) {
    let words = match config.word_ngram_range {
        Some(r) => word_ngrams(&tokenize(&item.text), r).collect(),
        None => HashSet::new(),
    };
    let chars = match config.char_ngram_range {
        Some(r) => char_ngrams(&item.text, r).into_iter().collect(),
        None => HashSet::new(),
    };
    (words, chars)
}

fn frequent(df: HashMap<String, usize>, min_df: usize) -> Vocabulary {
    df.into_iter()
        .filter(|&(_, c)| c >= min_df)
        .map(|(k, _)| k)
        .collect::<Vec<_>>()
        .into()
}

fn find_lexicon<'a>(lexicons: &'a [Lexicon], name: &str) -> Result<&'a Lexicon> {
    lexicons
        .iter()
        .find(|l| l.name == name)
        .ok_or_else(|| Error::Validation(format!("lexicon {name:?} not supplied")))
}

pub fn fit(
    corpus: &Corpus,
    config: &FeatureConfig,
    embeddings: Option<&EmbeddingTable>,
    lexicons: &[Lexicon],
) -> Result<FittedVectorizer> {
    fit_with(corpus, config, embeddings, lexicons, Execution::default())
}

/// Collects n-gram vocabularies (document frequency at least
/// `min_document_frequency`) and lays out the blocks.
pub fn fit_with(
    corpus: &Corpus,
    config: &FeatureConfig,
    embeddings: Option<&EmbeddingTable>,
    lexicons: &[Lexicon],
    exec: Execution,
) -> Result<FittedVectorizer> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Validation("cannot fit on an empty corpus".into()));
    }
    let embedding_dim = match (config.use_embeddings, embeddings) {
        (true, None) => return Err(Error::Validation("embedding features requested but no table supplied".into())),
        (true, Some(t)) => Some(t.dim()),
        (false, _) => None,
    };
    let mut lexicon_dimensions = BTreeMap::new();
    for name in &config.use_lexicons {
        let lex = find_lexicon(lexicons, name)?;
        lexicon_dimensions.insert(name.clone(), lex.dimensions().to_vec());
    }

    let per_item = exec.map_slice(&corpus.items, |item| item_ngrams(item, config));
    let mut word_df: HashMap<String, usize> = HashMap::new();
    let mut char_df: HashMap<String, usize> = HashMap::new();
    for (words, chars) in per_item {
        for w in words {
            *word_df.entry(w).or_default() += 1;
        }
        for c in chars {
            *char_df.entry(c).or_default() += 1;
        }
    }
    let min_df = config.min_document_frequency.max(1);
    let word_vocabulary = frequent(word_df, min_df);
    let char_vocabulary = frequent(char_df, min_df);

    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut push = |kind: BlockKind, width: usize| {
        blocks.push(Block { kind, offset, width });
        offset += width;
    };
    if config.word_ngram_range.is_some() {
        push(BlockKind::WordNgrams, word_vocabulary.len());
    }
    if config.char_ngram_range.is_some() {
        push(BlockKind::CharNgrams, char_vocabulary.len());
    }
    if let Some(d) = embedding_dim {
        push(BlockKind::Embeddings, d);
    }
    for name in &config.use_lexicons {
        push(BlockKind::Lexicon(name.clone()), lexicon_dimensions[name].len() + 1);
    }

    Ok(FittedVectorizer {
        format: VECTORIZER_FORMAT.to_string(),
        version: VECTORIZER_VERSION,
        config: config.clone(),
        blocks,
        word_vocabulary,
        char_vocabulary,
        embedding_dim,
        lexicon_dimensions,
    })
}

impl FittedVectorizer {
    pub fn total_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.width)
    }

    pub fn block(&self, kind: &BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| &b.kind == kind)
    }

    /// Attaches the embedding table and lexicons the layout was fitted with.
    pub fn bind<'a>(&'a self, embeddings: Option<&'a EmbeddingTable>, lexicons: &'a [Lexicon]) -> Result<Featurizer<'a>> {
        let embeddings = match (self.embedding_dim, embeddings) {
            (None, _) => None,
            (Some(_), None) => return Err(Error::Validation("vectorizer needs an embedding table".into())),
            (Some(d), Some(t)) if t.dim() != d => {
                return Err(Error::Dimension(format!("vectorizer expects {d}-d embeddings, table has {}", t.dim())));
            }
            (Some(_), Some(t)) => Some(t),
        };
        let mut bound = Vec::new();
        for block in &self.blocks {
            if let BlockKind::Lexicon(name) = &block.kind {
                let lex = find_lexicon(lexicons, name)?;
                if lex.dimensions() != self.lexicon_dimensions[name].as_slice() {
                    return Err(Error::Validation(format!(
                        "lexicon {name:?} dimensions {:?} differ from fitted {:?}",
                        lex.dimensions(),
                        self.lexicon_dimensions[name]
                    )));
                }
                bound.push((block.offset, lex));
            }
        }
        Ok(Featurizer {
            fitted: self,
            embeddings,
            lexicons: bound,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: FittedVectorizer = serde_json::from_str(s)?;
        if v.format != VECTORIZER_FORMAT || v.version != VECTORIZER_VERSION {
            return Err(Error::Validation(format!(
                "unsupported vectorizer document {} v{}",
                v.format, v.version
            )));
        }
        v.check_layout()?;
        Ok(v)
    }

    fn check_layout(&self) -> Result<()> {
        let mut offset = 0;
        for b in &self.blocks {
            if b.offset != offset {
                return Err(Error::Validation(format!("block {} starts at {}, expected {offset}", b.kind, b.offset)));
            }
            let expected = match &b.kind {
                BlockKind::WordNgrams => self.word_vocabulary.len(),
                BlockKind::CharNgrams => self.char_vocabulary.len(),
                BlockKind::Embeddings => self.embedding_dim.unwrap_or(0),
                BlockKind::Lexicon(n) => self.lexicon_dimensions.get(n).map_or(0, |d| d.len() + 1),
            };
            if b.width != expected {
                return Err(Error::Validation(format!("block {} has width {}, expected {expected}", b.kind, b.width)));
            }
            offset += b.width;
        }
        Ok(())
    }
}

/// A fitted vectorizer with its resources attached; `transform` is infallible.
#[derive(Debug, Clone)]
pub struct Featurizer<'a> {
    fitted: &'a FittedVectorizer,
    embeddings: Option<&'a EmbeddingTable>,
    lexicons: Vec<(usize, &'a Lexicon)>,
}

impl<'a> Featurizer<'a> {
    pub fn fitted(&self) -> &'a FittedVectorizer {
        self.fitted
    }

    pub fn total_dim(&self) -> usize {
        self.fitted.total_dim()
    }

    pub fn transform(&self, item: &Item) -> FeatureVector {
        self.transform_text(&item.text)
    }

    pub fn transform_text(&self, text: &str) -> FeatureVector {
        let f = self.fitted;
        let tokens = tokenize(text);
        let mut pairs: Vec<(usize, f64)> = Vec::new();

        if let (Some(r), Some(b)) = (f.config.word_ngram_range, f.block(&BlockKind::WordNgrams)) {
            pairs.extend(
                word_ngrams(&tokens, r)
                    .filter_map(|g| f.word_vocabulary.get(&g))
                    .map(|i| (b.offset + i, 1.0)),
            );
        }
        if let (Some(r), Some(b)) = (f.config.char_ngram_range, f.block(&BlockKind::CharNgrams)) {
            pairs.extend(
                char_ngrams(text, r)
                    .iter()
                    .filter_map(|g| f.char_vocabulary.get(g))
                    .map(|i| (b.offset + i, 1.0)),
            );
        }
        if let (Some(table), Some(b)) = (self.embeddings, f.block(&BlockKind::Embeddings)) {
            let mean = mean_embedding(table, &tokens);
            pairs.extend(mean.into_iter().enumerate().map(|(i, v)| (b.offset + i, v)));
        }
        for &(offset, lex) in &self.lexicons {
            let width = lex.dimensions().len();
            let mut sums = vec![0.0; width + 1];
            for t in &tokens {
                if let Some(scores) = lex.get(t) {
                    for &(d, s) in scores {
                        sums[d] += s;
                    }
                    sums[width] += 1.0;
                }
            }
            pairs.extend(sums.into_iter().enumerate().map(|(i, v)| (offset + i, v)));
        }
        FeatureVector::from_pairs(f.total_dim(), pairs).expect("indices are within the fitted layout")
    }

    pub fn transform_all(&self, items: &[Item], exec: Execution) -> Vec<FeatureVector> {
        exec.map_slice(items, |item| self.transform(item))
    }
}

/// Mean vector of the in-vocabulary tokens; zero when none is known.
pub fn mean_embedding<S: AsRef<str>>(table: &EmbeddingTable, tokens: &[S]) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t.as_ref()) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        for s in &mut sum {
            *s /= n as f64;
        }
    }
    sum
}
