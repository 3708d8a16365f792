//! Best-Worst Scaling: 4-tuple design, counting aggregation and split-half
//! reliability.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Emotion;
use crate::exec::Execution;
use crate::metrics;
use crate::{Error, Result};

/// Attempts allowed per tuple when repairing a constraint violation.
pub const RETRY_BUDGET: usize = 10_000;

pub const DEFAULT_RELIABILITY_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple4 {
    pub tuple_id: String,
    pub emotion: Emotion,
    pub item_ids: [String; 4],
}

impl Tuple4 {
    pub fn new(tuple_id: impl Into<String>, emotion: Emotion, item_ids: [String; 4]) -> Result<Self> {
        let t = Tuple4 {
            tuple_id: tuple_id.into(),
            emotion,
            item_ids,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in i + 1..4 {
                if self.item_ids[i] == self.item_ids[j] {
                    return Err(Error::Validation(format!(
                        "tuple {:?} repeats item {:?}",
                        self.tuple_id, self.item_ids[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, item: &str) -> bool {
        self.item_ids.iter().any(|i| i == item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub tuple_id: String,
    pub annotator_id: String,
    pub best: String,
    pub worst: String,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: i64,
}

impl Judgment {
    /// Checks best != worst and that both belong to `tuple`.
    pub fn validate_against(&self, tuple: &Tuple4) -> Result<()> {
        if self.tuple_id != tuple.tuple_id {
            return Err(Error::Validation(format!(
                "judgment for {:?} checked against tuple {:?}",
                self.tuple_id, tuple.tuple_id
            )));
        }
        if self.best == self.worst {
            return Err(Error::Validation(format!(
                "annotator {:?} chose {:?} as both best and worst in tuple {:?}",
                self.annotator_id, self.best, self.tuple_id
            )));
        }
        for (role, id) in [("best", &self.best), ("worst", &self.worst)] {
            if !tuple.contains(id) {
                return Err(Error::Validation(format!(
                    "{role} item {id:?} is not in tuple {:?}",
                    self.tuple_id
                )));
            }
        }
        Ok(())
    }
}

/// Per-item BWS scores for one emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub emotion: Emotion,
    /// `(raw + 1) / 2`, in `[0, 1]`.
    pub scores: BTreeMap<String, f64>,
    /// `(#best - #worst) / #judgments on tuples containing the item`, in `[-1, 1]`.
    pub raw: BTreeMap<String, f64>,
    /// Number of judgments the item was exposed to.
    pub appearances: BTreeMap<String, usize>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Deterministic random 4-tuple design.
///
/// Each item appears `appearances_per_item` times; when `4` does not divide
/// the number of slots, a few distinct items appear once more. No tuple
/// repeats an item and no two tuples share the same item set.
pub fn generate_tuples(
    items: &[String],
    appearances_per_item: usize,
    emotion: Emotion,
    seed: u64,
) -> Result<Vec<Tuple4>> {
    if items.len() < 4 {
        return Err(Error::Validation(format!("need at least 4 items, got {}", items.len())));
    }
    if appearances_per_item == 0 {
        return Err(Error::Validation("appearances per item must be positive".into()));
    }
    let mut distinct = HashSet::new();
    if let Some(dup) = items.iter().find(|i| !distinct.insert(i.as_str())) {
        return Err(Error::Validation(format!("duplicate item id {dup:?}")));
    }

    let n = items.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = Vec::with_capacity(n * appearances_per_item + 3);
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..appearances_per_item {
        perm.shuffle(&mut rng);
        pool.extend_from_slice(&perm);
    }
    let pad = (4 - pool.len() % 4) % 4;
    perm.shuffle(&mut rng);
    pool.extend_from_slice(&perm[..pad]);

    let n_tuples = pool.len() / 4;
    let mut sets: HashSet<[usize; 4]> = HashSet::with_capacity(n_tuples);
    let sorted = |s: &[usize]| {
        let mut k = [s[0], s[1], s[2], s[3]];
        k.sort_unstable();
        k
    };
    let distinct4 = |k: &[usize; 4]| k[0] != k[1] && k[1] != k[2] && k[2] != k[3];

    for t in 0..n_tuples {
        let range = 4 * t..4 * t + 4;
        let mut attempts = 0;
        loop {
            let key = sorted(&pool[range.clone()]);
            let repeated_item = !distinct4(&key);
            if !repeated_item && !sets.contains(&key) {
                sets.insert(key);
                break;
            }
            attempts += 1;
            if attempts > RETRY_BUDGET {
                let what = if repeated_item {
                    "no repeated item within a tuple"
                } else {
                    "no two tuples with the same item set"
                };
                return Err(Error::Infeasible(format!(
                    "could not satisfy {what} for tuple {t} after {RETRY_BUDGET} attempts"
                )));
            }
            let slot = if repeated_item {
                // second occurrence of the repeated item
                let s = &pool[range.clone()];
                (1..4).find(|&i| s[..i].contains(&s[i])).unwrap()
            } else {
                rng.random_range(0..4)
            };
            let a = range.start + slot;
            let mut b = rng.random_range(0..pool.len() - 4);
            if b >= range.start {
                b += 4;
            }
            if b >= range.end {
                pool.swap(a, b);
                continue;
            }
            // b sits in an already placed tuple: keep the swap only if that tuple stays valid
            let u = b / 4;
            let old = sorted(&pool[4 * u..4 * u + 4]);
            pool.swap(a, b);
            let new = sorted(&pool[4 * u..4 * u + 4]);
            if distinct4(&new) && (new == old || !sets.contains(&new)) {
                sets.remove(&old);
                sets.insert(new);
            } else {
                pool.swap(a, b);
            }
        }
    }

    let width = (n_tuples.max(1) - 1).to_string().len().max(5);
    Ok(pool
        .chunks_exact(4)
        .enumerate()
        .map(|(t, c)| Tuple4 {
            tuple_id: format!("{emotion}_{t:0width$}"),
            emotion,
            item_ids: [c[0], c[1], c[2], c[3]].map(|i| items[i].clone()),
        })
        .collect())
}

fn index_tuples(tuples: &[Tuple4]) -> Result<(Emotion, HashMap<&str, &Tuple4>)> {
    let Some(first) = tuples.first() else {
        return Err(Error::Validation("no tuples".into()));
    };
    let mut index = HashMap::with_capacity(tuples.len());
    for t in tuples {
        t.validate()?;
        if t.emotion != first.emotion {
            return Err(Error::Validation(format!(
                "tuple {:?} is for {} but {:?} is for {}",
                t.tuple_id, t.emotion, first.tuple_id, first.emotion
            )));
        }
        if index.insert(t.tuple_id.as_str(), t).is_some() {
            return Err(Error::Validation(format!("duplicate tuple id {:?}", t.tuple_id)));
        }
    }
    Ok((first.emotion, index))
}

fn resolve<'a>(index: &HashMap<&str, &'a Tuple4>, j: &Judgment) -> Result<&'a Tuple4> {
    let t = index
        .get(j.tuple_id.as_str())
        .ok_or_else(|| Error::Validation(format!("judgment references unknown tuple {:?}", j.tuple_id)))?;
    j.validate_against(t)?;
    Ok(t)
}

#[derive(Default, Clone, Copy)]
struct Tally {
    best: usize,
    worst: usize,
    exposure: usize,
}

/// Counting over pre-validated `(tuple, judgment)` pairs.
fn tally<'a>(emotion: Emotion, pairs: impl Iterator<Item = (&'a Tuple4, &'a Judgment)>) -> ScoreTable {
    let mut counts: BTreeMap<&str, Tally> = BTreeMap::new();
    for (t, j) in pairs {
        for id in &t.item_ids {
            counts.entry(id).or_default().exposure += 1;
        }
        counts.get_mut(j.best.as_str()).unwrap().best += 1;
        counts.get_mut(j.worst.as_str()).unwrap().worst += 1;
    }
    let mut table = ScoreTable {
        emotion,
        scores: BTreeMap::new(),
        raw: BTreeMap::new(),
        appearances: BTreeMap::new(),
    };
    for (id, c) in counts {
        let raw = (c.best as f64 - c.worst as f64) / c.exposure as f64;
        table.raw.insert(id.to_string(), raw);
        table.scores.insert(id.to_string(), (raw + 1.0) / 2.0);
        table.appearances.insert(id.to_string(), c.exposure);
    }
    table
}

/// Best-minus-worst counting. Items never judged are absent from the table.
pub fn aggregate_scores(tuples: &[Tuple4], judgments: &[Judgment]) -> Result<ScoreTable> {
    let (emotion, index) = index_tuples(tuples)?;
    let pairs = judgments
        .iter()
        .map(|j| resolve(&index, j).map(|t| (t, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(tally(emotion, pairs.into_iter()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ({:.2})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub emotion: Emotion,
    pub iterations: usize,
    pub seed: u64,
    pub pearson: MeanStd,
    pub spearman: MeanStd,
}

/// Split-half reliability with the default execution mode.
pub fn split_half_reliability(
    tuples: &[Tuple4],
    judgments: &[Judgment],
    iterations: usize,
    seed: u64,
) -> Result<Reliability> {
    split_half_reliability_with(tuples, judgments, iterations, seed, Execution::default())
}

/// Each iteration splits every tuple's judgments at random into halves of
/// sizes ⌈n/2⌉ and ⌊n/2⌋, scores both halves and correlates the scores of
/// items present in both. Iteration `i` draws from stream `i` of a ChaCha
/// generator seeded with `seed`, so the result does not depend on `exec`.
pub fn split_half_reliability_with(
    tuples: &[Tuple4],
    judgments: &[Judgment],
    iterations: usize,
    seed: u64,
    exec: Execution,
) -> Result<Reliability> {
    if iterations == 0 {
        return Err(Error::Validation("iterations must be positive".into()));
    }
    let (emotion, index) = index_tuples(tuples)?;
    let mut groups: HashMap<&str, Vec<&Judgment>> = HashMap::new();
    for j in judgments {
        resolve(&index, j)?;
        groups.entry(j.tuple_id.as_str()).or_default().push(j);
    }
    let mut grouped: Vec<(&Tuple4, Vec<&Judgment>)> = Vec::with_capacity(tuples.len());
    for t in tuples {
        let mut js = groups.remove(t.tuple_id.as_str()).unwrap_or_default();
        if js.len() < 2 {
            return Err(Error::Validation(format!(
                "tuple {:?} has {} judgment(s), split-half needs at least 2",
                t.tuple_id,
                js.len()
            )));
        }
        // canonical order keeps the result independent of input order
        js.sort_by(|a, b| {
            (&a.annotator_id, a.timestamp, &a.best, &a.worst).cmp(&(&b.annotator_id, b.timestamp, &b.best, &b.worst))
        });
        grouped.push((t, js));
    }

    let run = |i: usize| -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (t, js) in &grouped {
            let mut order: Vec<usize> = (0..js.len()).collect();
            order.shuffle(&mut rng);
            let cut = js.len().div_ceil(2);
            first.extend(order[..cut].iter().map(|&k| (*t, js[k])));
            second.extend(order[cut..].iter().map(|&k| (*t, js[k])));
        }
        let a = tally(emotion, first.into_iter());
        let b = tally(emotion, second.into_iter());
        let (xs, ys): (Vec<f64>, Vec<f64>) = a
            .scores
            .iter()
            .filter_map(|(id, &sa)| b.scores.get(id).map(|&sb| (sa, sb)))
            .unzip();
        let series = metrics::PairedSeries::new(&xs, &ys)?;
        Ok((series.pearson()?, series.spearman()?))
    };
    let results = exec.map_range(iterations, run).into_iter().collect::<Result<Vec<_>>>()?;
    let (p, s): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok(Reliability {
        emotion,
        iterations,
        seed,
        pearson: MeanStd::of(&p),
        spearman: MeanStd::of(&s),
    })
}
