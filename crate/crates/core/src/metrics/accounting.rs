//! Coverage and probe accounting.

use std::collections::HashSet;

use crate::probe::ProbeLog;
use crate::trace::{Hop, MonitorId, TraceSet};

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub nodes_found: usize,
    pub nodes_classic: usize,
    pub links_found: usize,
    pub links_classic: usize,
    pub node_pct: f64,
    pub link_pct: f64,
    pub probes_total: u64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Nodes and links found by `result_logs` relative to `baseline_logs`.
pub fn coverage(result_logs: &[&ProbeLog], baseline_logs: &[&ProbeLog]) -> CoverageReport {
    let union = |logs: &[&ProbeLog]| {
        let mut nodes = std::collections::BTreeSet::new();
        let mut links = std::collections::BTreeSet::new();
        for log in logs {
            nodes.extend(log.nodes().into_iter().filter(|a| a.is_valid()));
            links.extend(log.links());
        }
        (nodes.len(), links.len())
    };
    let (nodes_found, links_found) = union(result_logs);
    let (nodes_classic, links_classic) = union(baseline_logs);
    CoverageReport {
        nodes_found,
        nodes_classic,
        links_found,
        links_classic,
        node_pct: ratio(nodes_found, nodes_classic),
        link_pct: ratio(links_found, links_classic),
        probes_total: result_logs.iter().map(|l| l.total_probes()).sum(),
    }
}

/// Destination and probe breakdown for one monitor.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeStats {
    pub destinations: usize,
    pub destinations_responding: usize,
    pub probes_total: u64,
    /// Probes returning an interface for the first time.
    pub discovery_probes: u64,
    /// Probes to anonymous hops, invalid addresses included.
    pub anonymous_probes: u64,
    /// Probes returning an interface seen before.
    pub redundant_probes: u64,
}

impl ProbeStats {
    pub fn responding_fraction(&self) -> f64 {
        ratio(self.destinations_responding, self.destinations)
    }

    pub fn not_responding_fraction(&self) -> f64 {
        ratio(
            self.destinations - self.destinations_responding,
            self.destinations,
        )
    }

    fn probe_fraction(&self, n: u64) -> f64 {
        if self.probes_total == 0 {
            0.0
        } else {
            n as f64 / self.probes_total as f64
        }
    }

    pub fn discovery_fraction(&self) -> f64 {
        self.probe_fraction(self.discovery_probes)
    }

    pub fn anonymous_fraction(&self) -> f64 {
        self.probe_fraction(self.anonymous_probes)
    }

    pub fn redundant_fraction(&self) -> f64 {
        self.probe_fraction(self.redundant_probes)
    }
}

pub fn probe_stats(log: &ProbeLog, traceset: &TraceSet, monitor: &MonitorId) -> ProbeStats {
    let traces: Vec<_> = traceset.traces_of(monitor.as_str()).collect();
    let mut stats = ProbeStats {
        destinations: traces.len(),
        destinations_responding: traces.iter().filter(|t| t.is_complete()).count(),
        probes_total: 0,
        discovery_probes: 0,
        anonymous_probes: 0,
        redundant_probes: 0,
    };
    let mut seen = HashSet::new();
    for e in log.entries().iter().filter(|e| &e.monitor == monitor) {
        let spent = u64::from(e.outcome.probes_spent);
        stats.probes_total += spent;
        match e.outcome.result {
            Hop::Responding(addr) if addr.is_valid() && seen.insert(addr) => {
                stats.discovery_probes += spent
            }
            Hop::Responding(addr) if addr.is_valid() => stats.redundant_probes += spent,
            _ => stats.anonymous_probes += spent,
        }
    }
    stats
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct AnonymousLoadReport {
    /// Probes to silent hops followed by a responding hop further along.
    pub nonresponding_probes: u64,
    /// Probes to silent hops at the tail of a trace.
    pub unidentifiable_probes: u64,
}

impl AnonymousLoadReport {
    pub fn total(&self) -> u64 {
        self.nonresponding_probes + self.unidentifiable_probes
    }
}

pub fn anonymous_load(log: &ProbeLog, traceset: &TraceSet) -> AnonymousLoadReport {
    let mut report = AnonymousLoadReport::default();
    for e in log.entries() {
        if e.outcome.result != Hop::Anonymous {
            continue;
        }
        let spent = u64::from(e.outcome.probes_spent);
        let followed = traceset
            .trace(e.monitor.as_str(), e.destination)
            .is_some_and(|t| t.responds_after(e.outcome.hop));
        if followed {
            report.nonresponding_probes += spent;
        } else {
            report.unidentifiable_probes += spent;
        }
    }
    report
}
