//! Redundancy: how often interfaces are visited, hop by hop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use super::quantile::QuantileSummary;
use crate::error::Result;
use crate::probe::ProbeLog;
use crate::trace::{InterfaceAddr, MonitorId};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GrossSplit {
    RouterInterfaces,
    Destinations,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RedundancyKind {
    IntraMonitor(MonitorId),
    InterMonitor,
    GrossInterface(GrossSplit),
    DestinationInter,
}

impl fmt::Display for RedundancyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedundancyKind::IntraMonitor(m) => write!(f, "intra:{m}"),
            RedundancyKind::InterMonitor => f.write_str("inter"),
            RedundancyKind::GrossInterface(GrossSplit::RouterInterfaces) => {
                f.write_str("gross:routers")
            }
            RedundancyKind::GrossInterface(GrossSplit::Destinations) => {
                f.write_str("gross:destinations")
            }
            RedundancyKind::DestinationInter => f.write_str("inter:destinations"),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct InterfaceRedundancy {
    pub redundancy: u64,
    /// Hop bucket the interface is attributed to.
    pub hop: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopBucket {
    pub summary: QuantileSummary,
    pub interface_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedundancyReport {
    pub kind: RedundancyKind,
    pub interfaces: BTreeMap<InterfaceAddr, InterfaceRedundancy>,
    pub per_hop: BTreeMap<usize, HopBucket>,
    /// Summary over every interface; `None` if there are none.
    pub overall: Option<QuantileSummary>,
}

impl RedundancyReport {
    pub fn new(
        kind: RedundancyKind,
        interfaces: BTreeMap<InterfaceAddr, InterfaceRedundancy>,
    ) -> Self {
        let mut by_hop: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for r in interfaces.values() {
            by_hop.entry(r.hop).or_default().push(r.redundancy);
        }
        let per_hop = by_hop
            .into_iter()
            .map(|(hop, values)| {
                let interface_count = values.len();
                let summary = QuantileSummary::from_values(values).expect("bucket is non-empty");
                (
                    hop,
                    HopBucket {
                        summary,
                        interface_count,
                    },
                )
            })
            .collect();
        let overall =
            QuantileSummary::from_values(interfaces.values().map(|r| r.redundancy).collect());
        RedundancyReport {
            kind,
            interfaces,
            per_hop,
            overall,
        }
    }

    pub fn redundancy_of(&self, addr: InterfaceAddr) -> u64 {
        self.interfaces.get(&addr).map_or(0, |r| r.redundancy)
    }

    /// 95th percentile over all interfaces, 0 when empty.
    pub fn p95(&self) -> u64 {
        self.overall.map_or(0, |s| s.p95)
    }

    pub fn max(&self) -> u64 {
        self.overall.map_or(0, |s| s.max)
    }

    /// Header `hop,n,min,p5,p10,q1,median,q3,p90,p95,max`, one row per
    /// hop, then an `all` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "hop", "n", "min", "p5", "p10", "q1", "median", "q3", "p90", "p95", "max",
        ])?;
        let row = |label: String, s: Option<&QuantileSummary>| -> Vec<String> {
            let mut r = vec![label, s.map_or(0, |s| s.n).to_string()];
            match s {
                Some(s) => r.extend(s.marks().iter().map(u64::to_string)),
                None => r.extend(std::iter::repeat_n(String::new(), 9)),
            }
            r
        };
        for (hop, bucket) in &self.per_hop {
            w.write_record(row(hop.to_string(), Some(&bucket.summary)))?;
        }
        w.write_record(row("all".into(), self.overall.as_ref()))?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Responding visits of one monitor per interface, bucketed at the hop of
/// the first visit in log order.
pub fn intra_redundancy(log: &ProbeLog, monitor: &MonitorId) -> RedundancyReport {
    let mut interfaces: BTreeMap<InterfaceAddr, InterfaceRedundancy> = BTreeMap::new();
    for e in log.entries().iter().filter(|e| &e.monitor == monitor) {
        if let Some(addr) = e.outcome.result.addr().filter(|a| a.is_valid()) {
            interfaces
                .entry(addr)
                .or_insert(InterfaceRedundancy {
                    redundancy: 0,
                    hop: e.outcome.hop,
                })
                .redundancy += 1;
        }
    }
    RedundancyReport::new(RedundancyKind::IntraMonitor(monitor.clone()), interfaces)
}

struct Visits<'a> {
    total: u64,
    monitors: BTreeSet<&'a str>,
    min_hop: usize,
}

fn collect_visits<'a>(logs: &[&'a ProbeLog]) -> BTreeMap<InterfaceAddr, Visits<'a>> {
    let mut visits: BTreeMap<InterfaceAddr, Visits<'a>> = BTreeMap::new();
    for e in logs.iter().flat_map(|l| l.entries()) {
        if let Some(addr) = e.outcome.result.addr().filter(|a| a.is_valid()) {
            let v = visits.entry(addr).or_insert(Visits {
                total: 0,
                monitors: BTreeSet::new(),
                min_hop: usize::MAX,
            });
            v.total += 1;
            v.monitors.insert(e.monitor.as_str());
            v.min_hop = v.min_hop.min(e.outcome.hop);
        }
    }
    visits
}

fn report_from<'a>(
    kind: RedundancyKind,
    visits: BTreeMap<InterfaceAddr, Visits<'a>>,
    keep: impl Fn(InterfaceAddr) -> bool,
    value: impl Fn(&Visits<'a>) -> u64,
) -> RedundancyReport {
    let interfaces = visits
        .iter()
        .filter(|(&addr, _)| keep(addr))
        .map(|(&addr, v)| {
            (
                addr,
                InterfaceRedundancy {
                    redundancy: value(v),
                    hop: v.min_hop,
                },
            )
        })
        .collect();
    RedundancyReport::new(kind, interfaces)
}

/// Number of distinct monitors visiting each interface, bucketed at the
/// smallest distance any monitor saw it.
pub fn inter_redundancy(logs: &[&ProbeLog]) -> RedundancyReport {
    report_from(
        RedundancyKind::InterMonitor,
        collect_visits(logs),
        |_| true,
        |v| v.monitors.len() as u64,
    )
}

/// Total responding visits over all monitors, restricted to router
/// interfaces (anything not a destination) or to destinations.
pub fn gross_redundancy(
    logs: &[&ProbeLog],
    split: GrossSplit,
    destinations: &BTreeSet<InterfaceAddr>,
) -> RedundancyReport {
    let want_dest = split == GrossSplit::Destinations;
    report_from(
        RedundancyKind::GrossInterface(split),
        collect_visits(logs),
        |addr| destinations.contains(&addr) == want_dest,
        |v| v.total,
    )
}

/// Inter-monitor redundancy restricted to destinations.
pub fn destination_inter_redundancy(
    logs: &[&ProbeLog],
    destinations: &BTreeSet<InterfaceAddr>,
) -> RedundancyReport {
    report_from(
        RedundancyKind::DestinationInter,
        collect_visits(logs),
        |addr| destinations.contains(&addr),
        |v| v.monitors.len() as u64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{classic_probe_run, Phase, ProbeCost, ProbeOutcome};
    use crate::trace::{Hop, TraceSet};

    fn a(s: &str) -> InterfaceAddr {
        s.parse().unwrap()
    }

    fn m(s: &str) -> MonitorId {
        MonitorId::new(s).unwrap()
    }

    fn visit(log: &mut ProbeLog, monitor: &str, addr: &str, hop: usize) {
        log.push(
            &m(monitor),
            a("9.9.9.9"),
            ProbeOutcome {
                hop,
                result: Hop::Responding(a(addr)),
                probes_spent: 1,
                phase: Phase::Classic,
            },
        );
    }

    #[test]
    fn gateway_redundancy_equals_destination_count() {
        let text: String = (1..=20)
            .map(|d| format!("m 9.0.0.{d} 1.1.1.1 2.2.{d}.1 9.0.0.{d}\n"))
            .collect();
        let s = TraceSet::parse(&text, 30).unwrap();
        let log = classic_probe_run(&s, "m", ProbeCost::Optimistic, 30).unwrap();
        let r = intra_redundancy(&log, &m("m"));
        assert_eq!(r.redundancy_of(a("1.1.1.1")), 20);
        assert_eq!(r.per_hop[&1].interface_count, 1);
        assert_eq!(r.per_hop[&1].summary.median, 20);
        assert_eq!(r.per_hop[&2].interface_count, 20);
        let total: usize = r.per_hop.values().map(|b| b.interface_count).sum();
        assert_eq!(total, r.overall.unwrap().n);
    }

    #[test]
    fn intra_uses_first_visit_hop() {
        let mut log = ProbeLog::new();
        visit(&mut log, "m", "1.1.1.1", 6);
        visit(&mut log, "m", "1.1.1.1", 2);
        visit(&mut log, "n", "1.1.1.1", 1);
        let r = intra_redundancy(&log, &m("m"));
        assert_eq!(
            r.interfaces[&a("1.1.1.1")],
            InterfaceRedundancy {
                redundancy: 2,
                hop: 6
            }
        );
    }

    #[test]
    fn inter_dedups_monitors_and_uses_min_hop() {
        let mut la = ProbeLog::new();
        visit(&mut la, "A", "1.1.1.1", 7);
        visit(&mut la, "A", "1.1.1.1", 7);
        let mut lb = ProbeLog::new();
        visit(&mut lb, "B", "1.1.1.1", 5);
        let r = inter_redundancy(&[&la, &lb]);
        assert_eq!(
            r.interfaces[&a("1.1.1.1")],
            InterfaceRedundancy {
                redundancy: 2,
                hop: 5
            }
        );
    }

    #[test]
    fn gross_sums_and_splits() {
        let mut la = ProbeLog::new();
        for _ in 0..3 {
            visit(&mut la, "A", "1.1.1.1", 3);
        }
        visit(&mut la, "A", "9.9.9.9", 4);
        let mut lb = ProbeLog::new();
        for _ in 0..2 {
            visit(&mut lb, "B", "1.1.1.1", 3);
        }
        visit(&mut lb, "B", "9.9.9.9", 4);
        let dests: BTreeSet<_> = [a("9.9.9.9")].into();
        let routers = gross_redundancy(&[&la, &lb], GrossSplit::RouterInterfaces, &dests);
        assert_eq!(routers.redundancy_of(a("1.1.1.1")), 5);
        assert!(!routers.interfaces.contains_key(&a("9.9.9.9")));
        let dest = gross_redundancy(&[&la, &lb], GrossSplit::Destinations, &dests);
        assert_eq!(dest.interfaces.len(), 1);
        assert_eq!(dest.redundancy_of(a("9.9.9.9")), 2);
        let di = destination_inter_redundancy(&[&la, &lb], &dests);
        assert_eq!(di.redundancy_of(a("9.9.9.9")), 2);
    }

    #[test]
    fn csv_layout() {
        let mut log = ProbeLog::new();
        visit(&mut log, "m", "1.1.1.1", 1);
        visit(&mut log, "m", "2.2.2.2", 2);
        visit(&mut log, "m", "1.1.1.1", 1);
        let mut buf = Vec::new();
        intra_redundancy(&log, &m("m")).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "hop,n,min,p5,p10,q1,median,q3,p90,p95,max\n\
             1,1,2,2,2,2,2,2,2,2,2\n\
             2,1,1,1,1,1,1,1,1,1,1\n\
             all,2,1,1,1,1,1,2,2,2,2\n"
        );
        let mut buf = Vec::new();
        inter_redundancy(&[]).write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .ends_with("all,0,,,,,,,,,\n"));
    }
}
