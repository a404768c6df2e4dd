//! Protocol engine and analytics core for the sshtrap honeypot.
//!
//! Everything in this crate is IO-free: the SSH server and client run as
//! byte-in/byte-out state machines, the event log is a value type with a
//! binary record codec, and the analyzer is a set of pure functions over
//! immutable snapshots. The companion `sshtrap` crate supplies sockets,
//! files and the CLI.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analyzer;
pub mod csv;
pub mod escape;
pub mod event;
pub mod geo;
pub mod profile;
pub mod rng;
pub mod ssh;
pub mod synth;
pub mod timefmt;

pub use event::{AuthAttemptEvent, AuthMethod, EndReason, EventLogSnapshot, SessionRecord};

#[cfg(feature = "std")]
mod std_error_impls {
    impl std::error::Error for crate::csv::CsvError {}
    impl std::error::Error for crate::escape::UnescapeError {}
    impl std::error::Error for crate::event::RecordDecodeError {}
    impl std::error::Error for crate::geo::GeoError {}
    impl std::error::Error for crate::profile::ProfileError {}
}
