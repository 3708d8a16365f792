use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use emotrans_core::exec::Execution;
use emotrans_core::features::FeatureConfig;
use emotrans_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{load_inputs, run_with_features, Outcome, ReportRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationGroup {
    /// Word n-grams.
    Ngrams,
    /// Character n-grams.
    Char,
    Embs,
    HashtagLex,
    EmoLex,
    SentLex,
    /// The three lexicon groups together.
    AllLex,
}

impl AblationGroup {
    pub const ALL: [AblationGroup; 7] = [
        AblationGroup::Ngrams,
        AblationGroup::Char,
        AblationGroup::Embs,
        AblationGroup::HashtagLex,
        AblationGroup::EmoLex,
        AblationGroup::SentLex,
        AblationGroup::AllLex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationGroup::Ngrams => "ngrams",
            AblationGroup::Char => "char",
            AblationGroup::Embs => "embs",
            AblationGroup::HashtagLex => "hashtag-lex",
            AblationGroup::EmoLex => "emo-lex",
            AblationGroup::SentLex => "sent-lex",
            AblationGroup::AllLex => "all-lex",
        }
    }

    /// Report column heading.
    pub fn column(self) -> &'static str {
        match self {
            AblationGroup::Ngrams => "-ngrams",
            AblationGroup::Char => "-char",
            AblationGroup::Embs => "-embs",
            AblationGroup::HashtagLex => "-hashtag",
            AblationGroup::EmoLex => "-emo",
            AblationGroup::SentLex => "-sent",
            AblationGroup::AllLex => "-all lex",
        }
    }
}

impl fmt::Display for AblationGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown ablation group {s:?}")))
    }
}

/// Which groups to remove and which configured lexicons the three lexicon
/// groups stand for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub groups: Vec<AblationGroup>,
    pub hashtag_lexicon: String,
    pub emo_lexicon: String,
    pub sent_lexicon: String,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            groups: AblationGroup::ALL.to_vec(),
            hashtag_lexicon: "hashtag".into(),
            emo_lexicon: "emo".into(),
            sent_lexicon: "sent".into(),
        }
    }
}

impl AblationSpec {
    fn lexicons_of(&self, group: AblationGroup) -> Vec<&str> {
        match group {
            AblationGroup::HashtagLex => vec![&self.hashtag_lexicon],
            AblationGroup::EmoLex => vec![&self.emo_lexicon],
            AblationGroup::SentLex => vec![&self.sent_lexicon],
            AblationGroup::AllLex => vec![&self.hashtag_lexicon, &self.emo_lexicon, &self.sent_lexicon],
            _ => Vec::new(),
        }
    }

    /// `base` without `group`. Fails when the group contributes nothing to
    /// `base`; all-lex removes whichever of the three lexicons are present.
    pub fn remove(&self, base: &FeatureConfig, group: AblationGroup) -> Result<FeatureConfig> {
        let mut out = base.clone();
        let present = match group {
            AblationGroup::Ngrams => out.word_ngram_range.take().is_some(),
            AblationGroup::Char => out.char_ngram_range.take().is_some(),
            AblationGroup::Embs => std::mem::replace(&mut out.use_embeddings, false),
            _ => {
                let names = self.lexicons_of(group);
                let before = out.use_lexicons.len();
                out.use_lexicons.retain(|l| !names.contains(&l.as_str()));
                out.use_lexicons.len() < before
            }
        };
        if !present {
            return Err(Error::Validation(format!(
                "ablation group {group} is not part of the base feature set"
            )));
        }
        if out.word_ngram_range.is_none() && out.char_ngram_range.is_none() && !out.use_embeddings && out.use_lexicons.is_empty() {
            return Err(Error::Validation(format!("removing {group} leaves no features")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub group: AblationGroup,
    pub pearson: f64,
    /// Ablated minus ALL.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// The ALL baseline; identical to `run_experiment` on the same config.
    pub base: ReportRow,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn delta(&self, group: AblationGroup) -> Option<f64> {
        self.rows.iter().find(|r| r.group == group).map(|r| r.delta)
    }
}

/// One run per removed group plus the ALL baseline, sharing loaded inputs.
/// Runs are independent and execute in parallel.
pub fn run_ablation(config: &ExperimentConfig, spec: &AblationSpec) -> Result<AblationReport> {
    if !config.method.uses_svr() || config.method.is_bow() || config.method.is_crosslingual() {
        return Err(Error::Validation(format!(
            "ablation needs a full-feature method, not {}",
            config.method
        )));
    }
    let inputs = load_inputs(config)?;
    let base_features = inputs.config.effective_features();
    let mut variants = vec![base_features.clone()];
    for &g in &spec.groups {
        variants.push(spec.remove(&base_features, g)?);
    }
    let outcomes: Vec<Outcome> = Execution::default()
        .try_map_slice(&variants, |f| run_with_features(&inputs, f, Execution::Sequential))?;
    let mut outcomes = outcomes.into_iter();
    let base = outcomes.next().expect("baseline run").row;
    let rows = spec
        .groups
        .iter()
        .zip(outcomes)
        .map(|(&group, o)| AblationRow {
            group,
            pearson: o.row.pearson,
            delta: o.row.pearson - base.pearson,
        })
        .collect();
    Ok(AblationReport { base, rows })
}

/// `method emotion ALL -ngrams ...`, ALL as Pearson and the rest as deltas,
/// two decimals.
pub fn render_ablation(reports: &[AblationReport]) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    out.push_str("method\temotion\tALL");
    for r in &first.rows {
        let _ = write!(out, "\t{}", r.group.column());
    }
    out.push('\n');
    for rep in reports {
        let _ = write!(out, "{}\t{}\t{:.2}", rep.base.method, rep.base.emotion, rep.base.pearson);
        for r in &rep.rows {
            let _ = write!(out, "\t{:+.2}", r.delta);
        }
        out.push('\n');
    }
    out
}
