use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use emotrans_core::bws::{aggregate_scores, split_half_reliability, Judgment, Reliability, ScoreTable, Tuple4};
use emotrans_core::data::{load_wassa_tsv, read_jsonl, Emotion, Language, Split};

use crate::error::ServiceError;
use crate::store::{JudgmentStore, Replay, StoreView};

/// Items and tuples of one annotation campaign. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct Campaign {
    id: String,
    texts: HashMap<String, String>,
    /// Per emotion, sorted by tuple id.
    tuples: BTreeMap<Emotion, Vec<Tuple4>>,
    by_id: HashMap<String, (Emotion, usize)>,
}

impl Campaign {
    pub fn new(
        id: impl Into<String>,
        texts: impl IntoIterator<Item = (String, String)>,
        tuples: Vec<Tuple4>,
    ) -> Result<Self, ServiceError> {
        let texts: HashMap<String, String> = texts.into_iter().collect();
        let mut grouped: BTreeMap<Emotion, Vec<Tuple4>> = BTreeMap::new();
        for t in tuples {
            t.validate()?;
            if let Some(missing) = t.item_ids.iter().find(|i| !texts.contains_key(*i)) {
                return Err(ServiceError::Validation(format!(
                    "tuple {:?} refers to unknown item {missing:?}",
                    t.tuple_id
                )));
            }
            grouped.entry(t.emotion).or_default().push(t);
        }
        let mut by_id = HashMap::new();
        for (emotion, list) in grouped.iter_mut() {
            list.sort_by(|a, b| a.tuple_id.cmp(&b.tuple_id));
            for (i, t) in list.iter().enumerate() {
                if by_id.insert(t.tuple_id.clone(), (*emotion, i)).is_some() {
                    return Err(ServiceError::Validation(format!("duplicate tuple id {:?}", t.tuple_id)));
                }
            }
        }
        Ok(Campaign {
            id: id.into(),
            texts,
            tuples: grouped,
            by_id,
        })
    }

    /// Items from WASSA-style TSV files, tuples from JSONL files.
    pub fn from_files(
        id: impl Into<String>,
        item_files: &[PathBuf],
        tuple_files: &[PathBuf],
        language: Language,
    ) -> Result<Self, ServiceError> {
        let mut texts = Vec::new();
        for path in item_files {
            let corpus = load_wassa_tsv(path, Split::Train, language)?;
            texts.extend(corpus.items.into_iter().map(|i| (i.id, i.text)));
        }
        let mut tuples = Vec::new();
        for path in tuple_files {
            tuples.extend(read_jsonl::<Tuple4>(path)?);
        }
        Campaign::new(id, texts, tuples)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn emotions(&self) -> impl Iterator<Item = Emotion> + '_ {
        self.tuples.keys().copied()
    }

    pub fn tuples(&self, emotion: Emotion) -> Result<&[Tuple4], ServiceError> {
        self.tuples
            .get(&emotion)
            .map(Vec::as_slice)
            .ok_or_else(|| ServiceError::Validation(format!("campaign {:?} has no {emotion} tuples", self.id)))
    }

    pub fn tuple(&self, tuple_id: &str) -> Option<&Tuple4> {
        self.by_id.get(tuple_id).map(|&(e, i)| &self.tuples[&e][i])
    }

    pub fn text(&self, item_id: &str) -> Option<&str> {
        self.texts.get(item_id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub annotator_id: String,
    pub tuple: Tuple4,
    /// The tuple's items in tuple order, with their texts.
    pub items: Vec<AssignedItem>,
    /// Milliseconds since the Unix epoch.
    pub served_at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextTuple {
    Assigned(Assignment),
    Done { annotator_id: String, emotion: Emotion },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub emotion: Emotion,
    pub judged: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub tuple_id: String,
    pub annotator_id: String,
    pub progress: Progress,
}

pub fn now_millis() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// A loaded campaign with its live judgment log.
pub struct CampaignHandle {
    campaign: Campaign,
    store: JudgmentStore,
}

impl CampaignHandle {
    /// Opens the log and checks every replayed judgment against the campaign.
    pub fn open(campaign: Campaign, log: impl AsRef<Path>) -> Result<(Self, Replay), ServiceError> {
        let (store, replay) = JudgmentStore::open(log)?;
        for j in store.snapshot() {
            let tuple = campaign.tuple(&j.tuple_id).ok_or_else(|| {
                ServiceError::Validation(format!("log refers to unknown tuple {:?}", j.tuple_id))
            })?;
            j.validate_against(tuple)?;
        }
        Ok((CampaignHandle { campaign, store }, replay))
    }

    pub fn campaign(&self) -> &Campaign {
        &self.campaign
    }

    pub fn store(&self) -> &JudgmentStore {
        &self.store
    }

    fn progress(&self, view: &StoreView<'_>, annotator: &str, emotion: Emotion) -> Progress {
        let tuples = self.campaign.tuples.get(&emotion).map(Vec::as_slice).unwrap_or(&[]);
        Progress {
            emotion,
            judged: tuples.iter().filter(|t| view.has_judged(annotator, &t.tuple_id)).count(),
            total: tuples.len(),
        }
    }

    /// The least-judged tuple this annotator has not judged yet; ties go to
    /// the lowest tuple id.
    pub fn next_tuple(&self, annotator_id: &str, emotion: Emotion) -> Result<NextTuple, ServiceError> {
        if annotator_id.is_empty() {
            return Err(ServiceError::Validation("annotator id must not be empty".into()));
        }
        let tuples = self.campaign.tuples(emotion)?;
        let chosen = self.store.view(|v| {
            tuples
                .iter()
                .filter(|t| !v.has_judged(annotator_id, &t.tuple_id))
                .min_by_key(|t| v.count_for_tuple(&t.tuple_id))
                .cloned()
        });
        Ok(match chosen {
            None => NextTuple::Done {
                annotator_id: annotator_id.to_string(),
                emotion,
            },
            Some(tuple) => NextTuple::Assigned(Assignment {
                annotator_id: annotator_id.to_string(),
                items: tuple
                    .item_ids
                    .iter()
                    .map(|id| AssignedItem {
                        id: id.clone(),
                        text: self.campaign.text(id).unwrap_or_default().to_string(),
                    })
                    .collect(),
                tuple,
                served_at: now_millis(),
            }),
        })
    }

    /// Validates and durably records `j`. A zero timestamp is replaced by
    /// the server clock.
    pub fn submit(&self, mut j: Judgment) -> Result<Acknowledgment, ServiceError> {
        if j.annotator_id.is_empty() {
            return Err(ServiceError::Validation("annotator id must not be empty".into()));
        }
        let tuple = self
            .campaign
            .tuple(&j.tuple_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown tuple {:?}", j.tuple_id)))?;
        j.validate_against(tuple)
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        if j.timestamp == 0 {
            j.timestamp = now_millis();
        }
        let emotion = tuple.emotion;
        let (tuple_id, annotator_id) = (j.tuple_id.clone(), j.annotator_id.clone());
        let progress = self
            .store
            .append(j, |v| self.progress(v, &annotator_id, emotion))?;
        Ok(Acknowledgment {
            tuple_id,
            annotator_id,
            progress,
        })
    }

    pub fn progress_all(&self, annotator_id: &str) -> Vec<Progress> {
        self.store.view(|v| {
            self.campaign
                .emotions()
                .map(|e| self.progress(v, annotator_id, e))
                .collect()
        })
    }

    /// Judgments on this emotion's tuples, from one snapshot of the log.
    fn judgments_for(&self, emotion: Emotion) -> Result<(&[Tuple4], Vec<Judgment>), ServiceError> {
        let tuples = self.campaign.tuples(emotion)?;
        let js: Vec<Judgment> = self
            .store
            .snapshot()
            .into_iter()
            .filter(|j| self.campaign.tuple(&j.tuple_id).is_some_and(|t| t.emotion == emotion))
            .collect();
        Ok((tuples, js))
    }

    pub fn scores(&self, emotion: Emotion) -> Result<ScoreTable, ServiceError> {
        let (tuples, js) = self.judgments_for(emotion)?;
        if js.is_empty() {
            return Err(ServiceError::Validation(format!("no {emotion} judgments recorded yet")));
        }
        Ok(aggregate_scores(tuples, &js)?)
    }

    /// Requires at least two judgments on every tuple of the emotion.
    pub fn reliability(&self, emotion: Emotion, iterations: usize, seed: u64) -> Result<Reliability, ServiceError> {
        let (tuples, js) = self.judgments_for(emotion)?;
        if js.is_empty() {
            return Err(ServiceError::Validation(format!("no {emotion} judgments recorded yet")));
        }
        Ok(split_half_reliability(tuples, &js, iterations, seed)?)
    }
}
