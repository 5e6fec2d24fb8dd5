//! Trace-driven simulation of cooperative traceroute-style topology
//! discovery.
//!
//! Probing is replayed over recorded (or synthetic) routes: [`probe`]
//! implements the classic hop-by-hop baseline, [`doubletree`] the
//! cooperative algorithm with its local and global stop sets
//! ([`stopset`]), and [`metrics`] measures the redundancy, coverage and
//! probe load of either. [`experiment`] ties these together into parameter
//! sweeps that write CSV tables.

pub mod doubletree;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod probe;
pub mod stopset;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{InterfaceAddr, MonitorId, Trace, TraceSet};
