//! Discrete-event simulation over a contact trace.
//!
//! Contacts, timer ticks, load windows, arrivals, service completions and
//! deadlines are processed in time order. After every batch of same-time
//! events the nodes in contact gossip until their timers settle, waiting
//! requests retry path selection, and carried requests move along the
//! contact graph until no further relay applies. Transfers during a contact
//! are instantaneous and unlimited.

pub mod config;
mod engine;
pub mod records;

pub use config::{PlacementKind, RequestPattern, SimConfig};
pub use engine::{execution_time, run, run_with_placement};
pub use records::{
    load_records, read_records, save_records, write_records, NodeStats, RequestRecord, RequestStatus, RunResult,
    StageRecord,
};
