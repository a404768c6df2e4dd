//! sshtrap: a low-interaction SSH honeypot with offline attack forensics
//! and a campaign simulator.
//!
//! The protocol engine and analytics live in `sshtrap-core`; this crate
//! adds the parts that touch the outside world: TCP listener and session
//! driver, the durable event store, the replay client, configuration and
//! the CLI.

pub mod cli;
pub mod config;
pub mod hostkey;
pub mod replay;
pub mod report;
pub mod server;
pub mod store;

pub use config::CaptureConfig;
pub use store::{EventStore, OpenReport, StoreError};
