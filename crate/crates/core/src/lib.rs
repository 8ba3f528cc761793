//! Service composition over opportunistic networks.
//!
//! Nodes carried by people meet only intermittently. Each node keeps timers
//! estimating how long ago information from every other node could have
//! reached it, plus gossiped service-load estimates. A request for a type
//! transformation is satisfied by composing typed services hosted on other
//! nodes: the requester builds a service graph priced by temporal distance
//! and load, picks the cheapest chain with Dijkstra, and hands the request to
//! a store-carry-forward scheme that moves it between hosts and finally back
//! home.
//!
//! The crate is organised bottom-up:
//!
//! * [`service`] - typed services, catalogs and placement on nodes.
//! * [`mobility`] - Levy walk, SLAW and HCMM generators plus GPS ingestion.
//! * [`contact`] - contact extraction and the temporal-distance oracle.
//! * [`knowledge`] - per-node timers, load tracking and awareness levels.
//! * [`composition`] - service graph construction and path selection.
//! * [`forwarding`] - direct, TT, EBR and MT relay decisions.
//! * [`sim`] - the discrete-event simulator.
//! * [`experiment`] - seed-replicated experiments, presets and analyses.

pub mod composition;
pub mod contact;
pub mod error;
pub mod experiment;
pub mod forwarding;
pub mod knowledge;
pub mod mobility;
pub mod rng;
pub mod service;
pub mod sim;

pub use composition::{CompositionPath, CostModel, NextHop, PendingRequest, ServiceGraph};
pub use contact::{ContactEvent, ContactTrace};
pub use error::{Error, Result};
pub use forwarding::{EncounterStats, ForwardingScheme};
pub use knowledge::{AwarenessLevel, KnowledgeStore, LoadTracker};
pub use mobility::{Point, PositionTrace};
pub use service::{IoType, NodeId, Service, ServiceCatalog, ServicePlacement};
pub use sim::{RequestRecord, RequestStatus, RunResult, SimConfig};
