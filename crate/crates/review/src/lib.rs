//! Review workflow for machine-generated annotations: a file-backed record
//! store and the HTTP service a reviewer's UI talks to.
//!
//! ```no_run
//! use std::sync::Arc;
//! use elseg_review::{serve, CostOptions, ReviewStore};
//!
//! let store = Arc::new(ReviewStore::open("review")?);
//! let server = serve(store, "127.0.0.1:8080", CostOptions::default())?;
//! println!("listening on {}", server.url());
//! server.run_until_ctrl_c()?;
//! # Ok::<(), elseg_review::ReviewError>(())
//! ```

pub mod api;
mod error;
mod server;
pub mod store;

pub use api::{CostOptions, DecisionRequest, ErrorBody, ImageSummary, StatsResponse};
pub use error::{Result, ReviewError};
pub use server::{serve, ServerHandle};
pub use store::{replay_audit, AuditEntry, AuditKind, Decision, ReviewStore, StoreStats};
