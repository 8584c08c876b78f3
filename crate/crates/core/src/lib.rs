//! Closed-loop simulation of sensor-driven stormwater networks.
//!
//! The crate is split along the loop a real deployment closes:
//!
//! - [`hydro`]: rainfall-runoff, storage routing and valve hydraulics (the plant)
//! - [`node`]: sensor node firmware emulation (wake cycle, power, buffering)
//! - [`telemetry`]: the node/server wire protocol and the simulated cellular link
//! - [`datastore`]: time-series storage that doubles as the per-node command queue
//! - [`gateway`]: server-side request handling shared by the in-process and HTTP paths
//! - [`subscription`]: alerts, adaptive sampling and valve control applications
//! - [`ingest`]: forecast and reference gauge ingestion, validation metrics
//! - [`scenario`]: the discrete-event runner, metrics and report bundles

pub mod datastore;
pub mod gateway;
pub mod hydro;
pub mod ingest;
pub mod node;
pub mod scenario;
pub mod subscription;
pub mod telemetry;
pub mod time;

pub use datastore::{Command, CommandKind, CommandState, Datastore, Point, SeriesKey};
pub use gateway::Gateway;
pub use scenario::{ReportBundle, Scenario, Simulation};
