//! HTTP server for Best-Worst Scaling annotation campaigns.
//!
//! Annotators fetch 4-tuples (`GET /campaigns/{id}/next`), submit best/worst
//! judgments (`POST /campaigns/{id}/judgments`) and the campaign owner reads
//! live scores, split-half reliability and per-annotator progress. Judgments
//! are kept in an append-only JSONL log with the same schema as the
//! judgment files used by the offline tools, so the log can be fed to them
//! directly.

mod api;
mod campaign;
mod error;
mod store;

pub use api::{router, serve, AppState};
pub use campaign::{
    now_millis, Acknowledgment, AssignedItem, Assignment, Campaign, CampaignHandle, NextTuple, Progress,
};
pub use error::{ErrorBody, ServiceError};
pub use store::{JudgmentStore, Replay, StoreView};
