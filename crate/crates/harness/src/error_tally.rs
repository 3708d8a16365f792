//! Counting hand-annotated translation errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use emotrans_core::data::Language;
use emotrans_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranslationSystem {
    Mt,
    Unsup,
}

impl fmt::Display for TranslationSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TranslationSystem::Mt => "mt",
            TranslationSystem::Unsup => "unsup",
        })
    }
}

/// Declaration order is the report's column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorCategory {
    Hashtags,
    Lexical,
    Insertions,
    Deletions,
    Untranslated,
    Slang,
    Names,
    Numbers,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 8] = [
        ErrorCategory::Hashtags,
        ErrorCategory::Lexical,
        ErrorCategory::Insertions,
        ErrorCategory::Deletions,
        ErrorCategory::Untranslated,
        ErrorCategory::Slang,
        ErrorCategory::Names,
        ErrorCategory::Numbers,
    ];

    pub fn column(self) -> &'static str {
        match self {
            ErrorCategory::Hashtags => "hashtags",
            ErrorCategory::Lexical => "lexical",
            ErrorCategory::Insertions => "insert.",
            ErrorCategory::Deletions => "delet.",
            ErrorCategory::Untranslated => "untrans.",
            ErrorCategory::Slang => "slang",
            ErrorCategory::Names => "names",
            ErrorCategory::Numbers => "nums.",
        }
    }
}

/// The errors an annotator found in one translated tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub tweet_id: String,
    pub system: TranslationSystem,
    pub language: Language,
    pub flags: BTreeSet<ErrorCategory>,
}

impl ErrorRecord {
    pub fn validate(&self) -> Result<()> {
        if self.tweet_id.is_empty() {
            return Err(Error::Validation("error record without a tweet id".into()));
        }
        if self.language == Language::En {
            return Err(Error::Validation(format!(
                "tweet {:?}: only translated (ca, es) tweets are annotated",
                self.tweet_id
            )));
        }
        if self.flags.is_empty() {
            return Err(Error::Validation(format!("tweet {:?} has no error flags", self.tweet_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyRow {
    pub language: Language,
    pub system: TranslationSystem,
    /// Distinct tweets per category, every category present.
    pub counts: BTreeMap<ErrorCategory, usize>,
    /// Sum of the category counts.
    pub total: usize,
}

/// One row per (language, system) for ca and es, zeros included.
pub fn tally_errors(records: &[ErrorRecord]) -> Result<Vec<TallyRow>> {
    let mut tweets: BTreeMap<(Language, TranslationSystem), BTreeMap<&str, BTreeSet<ErrorCategory>>> = BTreeMap::new();
    for lang in [Language::Ca, Language::Es] {
        for sys in [TranslationSystem::Mt, TranslationSystem::Unsup] {
            tweets.insert((lang, sys), BTreeMap::new());
        }
    }
    for r in records {
        r.validate()?;
        // a tweet annotated twice still counts once per category
        tweets
            .entry((r.language, r.system))
            .or_default()
            .entry(r.tweet_id.as_str())
            .or_default()
            .extend(r.flags.iter().copied());
    }
    // ca before es, whatever the enum order
    let mut groups: Vec<_> = tweets.into_iter().collect();
    groups.sort_by_key(|((lang, sys), _)| (*lang != Language::Ca, *lang, *sys));
    Ok(groups
        .into_iter()
        .map(|((language, system), by_tweet)| {
            let mut counts: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
            for flags in by_tweet.values() {
                for f in flags {
                    *counts.get_mut(f).expect("all categories present") += 1;
                }
            }
            TallyRow {
                language,
                system,
                total: counts.values().sum(),
                counts,
            }
        })
        .collect())
}

pub fn render_tally(rows: &[TallyRow]) -> String {
    let mut out = String::from("language\tsystem");
    for c in ErrorCategory::ALL {
        let _ = write!(out, "\t{}", c.column());
    }
    out.push_str("\tTotal\n");
    for r in rows {
        let _ = write!(out, "{}\t{}", r.language, r.system);
        for c in ErrorCategory::ALL {
            let _ = write!(out, "\t{}", r.counts[&c]);
        }
        let _ = writeln!(out, "\t{}", r.total);
    }
    out
}
