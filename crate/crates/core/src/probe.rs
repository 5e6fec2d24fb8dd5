//! Simulated probing over recorded traces.
//!
//! A probe at TTL `hop` returns whatever the trace recorded at that hop.
//! Probes whose TTL overshoots a complete trace are answered by the
//! destination itself, reported at its real distance; overshooting an
//! incomplete trace yields nothing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Hop, InterfaceAddr, MonitorId, Trace, TraceSet};

/// Successive anonymous hops that end a probing session.
pub const GAP_LIMIT: u32 = 5;

/// Attempts made at a hop before it is declared anonymous.
pub const ATTEMPTS_PER_HOP: u32 = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Classic,
    AdaptH,
    Forwards,
    Backwards,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Classic => "classic",
            Phase::AdaptH => "adapth",
            Phase::Forwards => "forwards",
            Phase::Backwards => "backwards",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "classic" => Ok(Phase::Classic),
            "adapth" => Ok(Phase::AdaptH),
            "forwards" => Ok(Phase::Forwards),
            "backwards" => Ok(Phase::Backwards),
            _ => Err(format!("unknown phase {s:?}")),
        }
    }
}

/// How many packets a hop costs.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum ProbeCost {
    /// Stop at the first answer: 1 probe if the hop responds, 3 otherwise.
    #[default]
    Optimistic,
    /// Always send all three probes per hop.
    Always3,
}

impl ProbeCost {
    pub fn charge(self, result: Hop) -> u32 {
        match (self, result) {
            (ProbeCost::Optimistic, Hop::Responding(_)) => 1,
            _ => ATTEMPTS_PER_HOP,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeCost::Optimistic => "optimistic",
            ProbeCost::Always3 => "always3",
        }
    }
}

impl FromStr for ProbeCost {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimistic" => Ok(ProbeCost::Optimistic),
            "always3" => Ok(ProbeCost::Always3),
            _ => Err(format!("unknown probes-per-hop mode {s:?}")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ProbeOutcome {
    /// Distance of the hop that produced `result`.
    pub hop: usize,
    pub result: Hop,
    pub probes_spent: u32,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub monitor: MonitorId,
    pub destination: InterfaceAddr,
    pub outcome: ProbeOutcome,
}

/// Every probe of a run, in the order it was sent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProbeLog {
    entries: Vec<LogEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    monitor: String,
    destination: String,
    hop: usize,
    outcome: String,
    addr: String,
    probes: u32,
    phase: String,
}

impl ProbeLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, monitor: &MonitorId, destination: InterfaceAddr, outcome: ProbeOutcome) {
        self.entries.push(LogEntry {
            monitor: monitor.clone(),
            destination,
            outcome,
        });
    }

    pub fn append(&mut self, other: &mut ProbeLog) {
        self.entries.append(&mut other.entries);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_probes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| u64::from(e.outcome.probes_spent))
            .sum()
    }

    /// Monitors appearing in the log, in order of first appearance.
    pub fn monitors(&self) -> Vec<MonitorId> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.monitor.clone()))
            .map(|e| e.monitor.clone())
            .collect()
    }

    /// Distinct responding addresses.
    pub fn nodes(&self) -> BTreeSet<InterfaceAddr> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.result.addr())
            .collect()
    }

    /// Ordered pairs of responding addresses found at consecutive hops of
    /// the same (monitor, destination) session. No link spans an
    /// anonymous or unprobed hop.
    pub fn links(&self) -> BTreeSet<(InterfaceAddr, InterfaceAddr)> {
        let mut sessions: BTreeMap<(&str, InterfaceAddr), BTreeMap<usize, InterfaceAddr>> =
            BTreeMap::new();
        for e in &self.entries {
            if let Some(addr) = e.outcome.result.addr() {
                sessions
                    .entry((e.monitor.as_str(), e.destination))
                    .or_default()
                    .insert(e.outcome.hop, addr);
            }
        }
        let mut links = BTreeSet::new();
        for hops in sessions.values() {
            for ((&h1, &a), (&h2, &b)) in hops.iter().zip(hops.iter().skip(1)) {
                if h2 == h1 + 1 {
                    links.insert((a, b));
                }
            }
        }
        links
    }

    /// CSV with header `monitor,destination,hop,outcome,addr,probes,phase`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            let (outcome, addr) = match e.outcome.result {
                Hop::Responding(a) => ("responding", a.to_string()),
                Hop::Anonymous => ("anonymous", String::new()),
            };
            w.serialize(CsvRow {
                monitor: e.monitor.to_string(),
                destination: e.destination.to_string(),
                hop: e.outcome.hop,
                outcome: outcome.to_string(),
                addr,
                probes: e.outcome.probes_spent,
                phase: e.outcome.phase.to_string(),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut log = ProbeLog::new();
        let mut monitors: BTreeMap<String, MonitorId> = BTreeMap::new();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            // header is line 1
            let line = i + 2;
            let bad = |message: String| Error::Parse { line, message };
            let monitor = match monitors.get(&row.monitor) {
                Some(m) => m.clone(),
                None => {
                    let m = MonitorId::new(&row.monitor)
                        .ok_or_else(|| bad(format!("bad monitor id {:?}", row.monitor)))?;
                    monitors.insert(row.monitor.clone(), m.clone());
                    m
                }
            };
            let destination = row
                .destination
                .parse()
                .map_err(|_| bad(format!("bad destination {:?}", row.destination)))?;
            let result = match row.outcome.as_str() {
                "responding" => Hop::Responding(
                    row.addr
                        .parse()
                        .map_err(|_| bad(format!("bad address {:?}", row.addr)))?,
                ),
                "anonymous" => Hop::Anonymous,
                other => return Err(bad(format!("bad outcome {other:?}"))),
            };
            let phase = row.phase.parse().map_err(bad)?;
            log.push(
                &monitor,
                destination,
                ProbeOutcome {
                    hop: row.hop,
                    result,
                    probes_spent: row.probes,
                    phase,
                },
            );
        }
        Ok(log)
    }
}

/// Per-session loop and gap tracking.
#[derive(Clone, Debug, Default)]
pub struct SessionState {
    seen_in_path: HashSet<InterfaceAddr>,
    consecutive_anonymous: u32,
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forget the anonymous run, e.g. when the walk changes direction.
    pub fn reset_gap(&mut self) {
        self.consecutive_anonymous = 0;
    }

    pub fn consecutive_anonymous(&self) -> u32 {
        self.consecutive_anonymous
    }
}

/// Probes `trace` at TTL `hop` and records the outcome in `log`.
pub fn probe(
    trace: &Trace,
    hop: usize,
    phase: Phase,
    cost: ProbeCost,
    log: &mut ProbeLog,
) -> ProbeOutcome {
    debug_assert!(hop >= 1);
    let (hop, result) = match trace.hop(hop) {
        Some(recorded) => (hop, recorded),
        None if trace.is_complete() => (trace.len(), Hop::Responding(trace.destination())),
        None => (hop, Hop::Anonymous),
    };
    let outcome = ProbeOutcome {
        hop,
        result,
        probes_spent: cost.charge(result),
        phase,
    };
    log.push(trace.monitor(), trace.destination(), outcome);
    outcome
}

/// Feeds an outcome to the session and says whether probing must stop
/// because of a loop or a gap.
pub fn halt(session: &mut SessionState, outcome: &ProbeOutcome) -> bool {
    match outcome.result {
        Hop::Responding(addr) => {
            if !session.seen_in_path.insert(addr) {
                return true;
            }
            session.consecutive_anonymous = 0;
            false
        }
        Hop::Anonymous => {
            session.consecutive_anonymous += 1;
            session.consecutive_anonymous >= GAP_LIMIT
        }
    }
}

/// Classic traceroute from one monitor: every destination, hop by hop
/// from TTL 1, destinations in address order.
pub fn classic_probe_run(
    traceset: &TraceSet,
    monitor: &str,
    cost: ProbeCost,
    max_hops: usize,
) -> Result<ProbeLog> {
    traceset
        .monitor(monitor)
        .ok_or_else(|| Error::UnknownMonitor(monitor.to_string()))?;
    let mut log = ProbeLog::new();
    for trace in traceset.traces_of(monitor) {
        let mut session = SessionState::new();
        for hop in 1..=max_hops {
            let outcome = probe(trace, hop, Phase::Classic, cost, &mut log);
            if outcome.result == Hop::Responding(trace.destination())
                || halt(&mut session, &outcome)
            {
                break;
            }
        }
    }
    Ok(log)
}
