//! Live experimental-design campaigns over HTTP.
//!
//! Every campaign is an append-only JSON-lines event log; the in-memory
//! record is the fold of that log, so a restart replays to the same state.

pub mod api;
pub mod record;
pub mod store;

pub use api::router;
pub use record::{CampaignConfig, CampaignRecord, Event, Status};
pub use store::{ApiError, CreateRequest, Recommendation, Store};
