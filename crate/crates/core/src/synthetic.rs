//! Seeded generators for tasks with a known ground truth. Used by the test
//! suites, the benchmarks and the CLI's self-checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bws::{Judgment, Tuple4};
use crate::data::{BilingualDictionary, Corpus, EmbeddingTable, Emotion, Item, Language, Split};
use crate::features::FeatureVector;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let qr = a.qr();
    let r = qr.r();
    let signs = DVector::from_fn(d, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    qr.q() * DMatrix::from_diagonal(&signs)
}

/// Table of `n` Gaussian vectors named `{prefix}{i}`.
pub fn gaussian_table(prefix: &str, n: usize, d: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let rows = (0..n).map(|i| (format!("{prefix}{i}"), (0..d).map(|_| gaussian(rng)).collect::<Vec<_>>()));
    EmbeddingTable::from_rows(d, rows).expect("consistent dims")
}

/// Rows of `table` right-multiplied by `q`, renamed to `{prefix}{i}`.
pub fn rotated_table(table: &EmbeddingTable, q: &DMatrix<f64>, prefix: &str) -> EmbeddingTable {
    let d = table.dim();
    let rows = table.iter().enumerate().map(|(i, (_, v))| {
        let r = DMatrix::from_row_slice(1, d, v) * q;
        (format!("{prefix}{i}"), r.as_slice().to_vec())
    });
    EmbeddingTable::from_rows(d, rows).expect("consistent dims")
}

/// Sparse regression data with `y = w·x + b` exactly.
#[derive(Debug, Clone)]
pub struct LinearTask {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_x: Vec<FeatureVector>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<FeatureVector>,
    pub test_y: Vec<f64>,
}

pub fn linear_task(dims: usize, n_train: usize, n_test: usize, seed: u64) -> LinearTask {
    let mut rng = rng(seed);
    let weights: Vec<f64> = (0..dims).map(|_| gaussian(&mut rng)).collect();
    let bias = rng.random_range(-1.0..1.0);
    let mut sample = |n: usize| {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
            ys.push(x.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() + bias);
            xs.push(FeatureVector::from_dense(&x).expect("finite"));
        }
        (xs, ys)
    };
    let (train_x, train_y) = sample(n_train);
    let (test_x, test_y) = sample(n_test);
    LinearTask {
        weights,
        bias,
        train_x,
        train_y,
        test_x,
        test_y,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RotatedTaskSpec {
    pub dim: usize,
    pub vocabulary: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub words_per_text: usize,
    pub seed: u64,
}

impl Default for RotatedTaskSpec {
    fn default() -> Self {
        RotatedTaskSpec {
            dim: 20,
            vocabulary: 500,
            train: 400,
            dev: 100,
            test: 200,
            words_per_text: 8,
            seed: 7,
        }
    }
}

/// Two-language task where the target space is an exact rotation of the
/// source space and gold scores are affine in the source-side average.
///
/// Source word `i` is `s{i}` with vector `v_i`; its translation `t{i}` has
/// vector `v_i Q`. Target test texts use target words only, scored with the
/// same affine function of the underlying source vectors.
#[derive(Debug, Clone)]
pub struct RotatedTask {
    pub rotation: DMatrix<f64>,
    pub direction: Vec<f64>,
    pub source_embeddings: EmbeddingTable,
    pub target_embeddings: EmbeddingTable,
    pub dictionary: BilingualDictionary,
    pub train: Corpus,
    pub dev: Corpus,
    pub target_test: Corpus,
}

pub fn rotated_task(spec: RotatedTaskSpec) -> RotatedTask {
    let mut rng = rng(spec.seed);
    let d = spec.dim;
    let rotation = random_orthogonal(d, &mut rng);
    let source_embeddings = gaussian_table("s", spec.vocabulary, d, &mut rng);
    let target_embeddings = rotated_table(&source_embeddings, &rotation, "t");
    let dictionary = BilingualDictionary::new((0..spec.vocabulary).map(|i| (format!("s{i}"), format!("t{i}"))))
        .expect("non-empty");
    let mut direction: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let total = spec.train + spec.dev + spec.test;
    let mut texts = Vec::with_capacity(total);
    let mut raw = Vec::with_capacity(total);
    for _ in 0..total {
        let words: Vec<usize> = (0..spec.words_per_text)
            .map(|_| rng.random_range(0..spec.vocabulary))
            .collect();
        let mut avg = vec![0.0; d];
        for &w in &words {
            avg.iter_mut().zip(source_embeddings.row(w)).for_each(|(a, v)| *a += v);
        }
        let k = words.len() as f64;
        raw.push(avg.iter().zip(&direction).map(|(a, v)| a * v).sum::<f64>() / k);
        texts.push(words);
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gold: Vec<f64> = raw.iter().map(|r| (r - lo) / (hi - lo)).collect();

    let build = |range: std::ops::Range<usize>, prefix: &str, split: Split, language: Language| {
        let items = range
            .map(|i| Item {
                id: format!("{split:?}-{i}").to_lowercase(),
                text: texts[i].iter().map(|w| format!("{prefix}{w}")).collect::<Vec<_>>().join(" "),
                language,
                emotion: Emotion::Joy,
                gold_score: Some(gold[i]),
            })
            .collect();
        Corpus::new(items, split, language).expect("valid corpus")
    };
    let a = spec.train;
    let b = a + spec.dev;
    RotatedTask {
        train: build(0..a, "s", Split::Train, Language::En),
        dev: build(a..b, "s", Split::Dev, Language::En),
        target_test: build(b..total, "t", Split::Test, Language::Es),
        rotation,
        direction,
        source_embeddings,
        target_embeddings,
        dictionary,
    }
}

/// One uniformly random best/worst pair per tuple for each of `annotators`
/// annotators named `a0`, `a1`, ...
pub fn random_judgments(tuples: &[Tuple4], annotators: usize, rng: &mut ChaCha8Rng) -> Vec<Judgment> {
    let mut out = Vec::with_capacity(tuples.len() * annotators);
    for t in tuples {
        for a in 0..annotators {
            let best = rng.random_range(0..4);
            let worst = (best + rng.random_range(1..4)) % 4;
            out.push(Judgment {
                tuple_id: t.tuple_id.clone(),
                annotator_id: format!("a{a}"),
                best: t.item_ids[best].clone(),
                worst: t.item_ids[worst].clone(),
                timestamp: 0,
            });
        }
    }
    out
}

/// Judgments by annotators who all rank items by a fixed latent score
/// (higher is more intense).
pub fn consistent_judgments(tuples: &[Tuple4], latent: &dyn Fn(&str) -> f64, annotators: usize) -> Vec<Judgment> {
    let mut out = Vec::with_capacity(tuples.len() * annotators);
    for t in tuples {
        let by_score = |a: &&String, b: &&String| latent(a).total_cmp(&latent(b));
        let best = t.item_ids.iter().max_by(by_score).expect("four items");
        let worst = t.item_ids.iter().min_by(by_score).expect("four items");
        for a in 0..annotators {
            out.push(Judgment {
                tuple_id: t.tuple_id.clone(),
                annotator_id: format!("a{a}"),
                best: best.clone(),
                worst: worst.clone(),
                timestamp: 0,
            });
        }
    }
    out
}

const WORDS: &[&str] = &[
    "angry", "furious", "happy", "glad", "sad", "tears", "fear", "scared", "so", "very", "not", "the", "a", "day",
    "night", "work", "today", "love", "hate", "why", "lol", "omg", "really", "never", "again", "!", "?", "...",
    "#rage", "#blessed", "#sad", "#scared", "@someone", "😠", "😂", "😢",
];

/// Tweet-like strings drawn from a small fixed vocabulary.
pub fn random_texts(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(4..16);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect()
}
