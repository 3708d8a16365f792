//! Experiment orchestration on top of `emotrans-core`: per-emotion report
//! rows for the monolingual, translation-based and cross-lingual methods,
//! feature-group ablation, translation-error tallies and the `emotrans` CLI.

pub mod ablation;
pub mod cli;
pub mod config;
pub mod error_tally;
pub mod experiment;

pub use ablation::{run_ablation, AblationGroup, AblationReport, AblationSpec};
pub use config::{ExperimentConfig, Method};
pub use error_tally::{tally_errors, ErrorCategory, ErrorRecord, TallyRow, TranslationSystem};
pub use experiment::{run_experiment, run_suite, Outcome, Prediction, ReportRow};
