use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use emotrans_core::crosslingual::BlseConfig;
use emotrans_core::data::{Emotion, Language};
use emotrans_core::features::FeatureConfig;
use emotrans_core::svr::SvrConfig;
use emotrans_core::{Error, Result};

/// How the target-language test set is reached from the English model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// English train and English test.
    Mono,
    /// Test text machine-translated to English; unigram features.
    MtBow,
    /// Test text machine-translated to English; full features.
    MtFull,
    /// Test text translated by an unsupervised system; unigram features.
    UnsupBow,
    UnsupFull,
    /// English model on Procrustes-aligned embeddings, applied to target text.
    Cwe,
    /// Jointly trained bilingual projections.
    Blse,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mono,
        Method::MtBow,
        Method::MtFull,
        Method::UnsupBow,
        Method::UnsupFull,
        Method::Cwe,
        Method::Blse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mono => "mono",
            Method::MtBow => "mt_bow",
            Method::MtFull => "mt_full",
            Method::UnsupBow => "unsup_bow",
            Method::UnsupFull => "unsup_full",
            Method::Cwe => "cwe",
            Method::Blse => "blse",
        }
    }

    pub fn is_bow(self) -> bool {
        matches!(self, Method::MtBow | Method::UnsupBow)
    }

    /// Methods that read a translated test file, with the system tag used
    /// in its file name.
    pub fn translation_system(self) -> Option<&'static str> {
        match self {
            Method::MtBow | Method::MtFull => Some("mt"),
            Method::UnsupBow | Method::UnsupFull => Some("unsup"),
            _ => None,
        }
    }

    pub fn uses_svr(self) -> bool {
        self != Method::Blse
    }

    pub fn is_crosslingual(self) -> bool {
        matches!(self, Method::Cwe | Method::Blse)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::Validation(format!("unknown method {s:?}")))
    }
}

fn english() -> Language {
    Language::En
}

/// One report row: a method applied to one emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub emotion: Emotion,
    pub train: PathBuf,
    /// Source-language dev set; only BLSE uses it (snapshot selection).
    #[serde(default)]
    pub dev: Option<PathBuf>,
    pub test: PathBuf,
    #[serde(default = "english")]
    pub source_language: Language,
    #[serde(default)]
    pub target_language: Option<Language>,
    #[serde(default)]
    pub source_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub target_embeddings: Option<PathBuf>,
    /// Lexicon name to file. The name is what feature configs and the
    /// ablation groups refer to.
    #[serde(default)]
    pub lexicons: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Directory for the report, its JSON sidecar and the predictions.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Overrides the method's default feature blocks.
    #[serde(default)]
    pub features: Option<FeatureConfig>,
    #[serde(default)]
    pub svr: SvrConfig,
    #[serde(default)]
    pub blse: BlseConfig,
}

impl ExperimentConfig {
    /// A config with every optional field empty.
    pub fn new(method: Method, emotion: Emotion, train: impl Into<PathBuf>, test: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            method,
            emotion,
            train: train.into(),
            dev: None,
            test: test.into(),
            source_language: Language::En,
            target_language: None,
            source_embeddings: None,
            target_embeddings: None,
            lexicons: BTreeMap::new(),
            dictionary: None,
            seed: 0,
            output: None,
            features: None,
            svr: SvrConfig::default(),
            blse: BlseConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Feature blocks the SVR methods use when no override is given: all
    /// blocks for mono and the *_full methods (embeddings only when a table
    /// is configured), unigrams for *_bow, embeddings alone for cwe.
    pub fn default_features(&self) -> FeatureConfig {
        match self.method {
            Method::MtBow | Method::UnsupBow => FeatureConfig::bow(),
            Method::Cwe | Method::Blse => FeatureConfig::embeddings_only(),
            Method::Mono | Method::MtFull | Method::UnsupFull => FeatureConfig {
                use_embeddings: self.source_embeddings.is_some(),
                ..FeatureConfig::full(self.lexicons.keys().cloned())
            },
        }
    }

    pub fn effective_features(&self) -> FeatureConfig {
        self.features.clone().unwrap_or_else(|| self.default_features())
    }

    /// The fully specified config a report row records: features filled in
    /// and the experiment seed pushed down to the learners.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut r = self.clone();
        r.features = Some(self.effective_features());
        r.svr.seed = self.seed;
        r.blse.seed = self.seed;
        r
    }

    /// The language the test text is written in.
    pub fn test_language(&self) -> Language {
        if self.method.is_crosslingual() {
            self.target_language.unwrap_or(self.source_language)
        } else {
            self.source_language
        }
    }

    /// Checks the method's invariants without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("{} config: {m}", self.method)));
        if !self.emotion.is_modeled() {
            return bad(format!("emotion {} has no regression data", self.emotion));
        }
        let features = self.effective_features();
        features.validate()?;
        if self.method.uses_svr() {
            self.svr.validate()?;
        }

        if self.method.is_bow() {
            if features.use_embeddings || !features.use_lexicons.is_empty() {
                return bad("bag-of-words methods cannot use embedding or lexicon features".into());
            }
            if self.source_embeddings.is_some() || !self.lexicons.is_empty() {
                return bad("bag-of-words methods take no embeddings or lexicons".into());
            }
        }
        if self.method.uses_svr() && !self.method.is_crosslingual() {
            if features.use_embeddings && self.source_embeddings.is_none() {
                return bad("embedding features need source_embeddings".into());
            }
            if let Some(missing) = features.use_lexicons.iter().find(|l| !self.lexicons.contains_key(*l)) {
                return bad(format!("lexicon {missing:?} is not configured"));
            }
        }

        if let Some(system) = self.method.translation_system() {
            let Some(lang) = self.target_language else {
                return bad("translated test sets need target_language".into());
            };
            let suffix = format!("{lang}.{system}.tsv");
            let name = self.test.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if !name.ends_with(&suffix) {
                return bad(format!("test file {:?} is not named *{suffix}", self.test));
            }
        }

        if self.method.is_crosslingual() {
            for (field, present) in [
                ("dictionary", self.dictionary.is_some()),
                ("source_embeddings", self.source_embeddings.is_some()),
                ("target_embeddings", self.target_embeddings.is_some()),
                ("target_language", self.target_language.is_some()),
            ] {
                if !present {
                    return bad(format!("{field} is required"));
                }
            }
            if !self.lexicons.is_empty() || !features.use_lexicons.is_empty() {
                return bad("lexicon features do not transfer across languages".into());
            }
            if !features.use_embeddings {
                return bad("cross-lingual methods need the embedding block".into());
            }
        }
        if self.method == Method::Blse {
            if self.dev.is_none() {
                return bad("dev set is required for snapshot selection".into());
            }
            if self.features.as_ref().is_some_and(|f| *f != FeatureConfig::embeddings_only()) {
                return bad("blse works on averaged embeddings and takes no feature override".into());
            }
            self.blse.validate()?;
        }
        Ok(())
    }
}

/// Reads a JSON config file; unreadable files are I/O errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// A run file holds one experiment or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RunFile {
    One(Box<ExperimentConfig>),
    Many(Vec<ExperimentConfig>),
}

impl RunFile {
    pub fn into_vec(self) -> Vec<ExperimentConfig> {
        match self {
            RunFile::One(c) => vec![*c],
            RunFile::Many(v) => v,
        }
    }
}
