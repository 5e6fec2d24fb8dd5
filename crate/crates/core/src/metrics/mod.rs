//! Redundancy, coverage and probe-accounting analytics over probe logs.

mod accounting;
mod quantile;
mod redundancy;

pub use accounting::{
    anonymous_load, coverage, probe_stats, AnonymousLoadReport, CoverageReport, ProbeStats,
};
pub use quantile::{quantile, QuantileSummary};
pub use redundancy::{
    destination_inter_redundancy, gross_redundancy, inter_redundancy, intra_redundancy, GrossSplit,
    HopBucket, InterfaceRedundancy, RedundancyKind, RedundancyReport,
};
