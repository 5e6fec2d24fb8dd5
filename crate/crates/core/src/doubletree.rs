//! Doubletree probing.
//!
//! Each monitor starts every session at an intermediate hop `h`, probes
//! forwards until it meets an (interface, destination) pair already in the
//! global stop set, then backwards until it meets an interface already in
//! its local stop set. Monitors run one after another, each handing the
//! grown global stop set to the next.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::probe::{halt, probe, Phase, ProbeCost, ProbeLog, ProbeOutcome, SessionState};
use crate::stopset::{GlobalStopSet, LocalStopSet, StopSetKind};
use crate::trace::{
    path_length_cdf, Hop, InterfaceAddr, MonitorId, PathLengthCdf, Trace, TraceSet,
    DEFAULT_MAX_HOPS,
};

/// How the initial hop is chosen.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum StartHop {
    /// Target probability of hitting a responding destination on the
    /// first probe; converted per monitor through its path-length CDF.
    Probability(f64),
    /// Same start hop for every monitor.
    Fixed(usize),
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub start: StartHop,
    pub stopset: StopSetKind,
    pub cost: ProbeCost,
    pub max_hops: usize,
}

impl ProbeConfig {
    pub fn with_p(p: f64) -> Self {
        ProbeConfig {
            start: StartHop::Probability(p),
            stopset: StopSetKind::Exact,
            cost: ProbeCost::Optimistic,
            max_hops: DEFAULT_MAX_HOPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_hops == 0 {
            return Err(Error::InvalidConfig("max_hops must be at least 1".into()));
        }
        match self.start {
            StartHop::Probability(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidConfig(format!("p = {p} is outside [0, 1]")))
            }
            StartHop::Fixed(0) => Err(Error::InvalidConfig("start hop must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Start hop for a monitor.
    pub fn start_hop(&self, cdf: &PathLengthCdf) -> usize {
        match self.start {
            StartHop::Probability(p) => h_from_p(cdf, p, self.max_hops),
            StartHop::Fixed(h) => h.clamp(1, self.max_hops),
        }
    }
}

/// Smallest `h` whose cumulative path-length mass reaches `p`.
///
/// `p = 0` means pure forwards probing from hop 1. If `p` is above the
/// fraction of responding destinations, the answer is `max_hops`.
pub fn h_from_p(cdf: &PathLengthCdf, p: f64, max_hops: usize) -> usize {
    if p <= 0.0 {
        return 1;
    }
    (1..=max_hops)
        .find(|&h| cdf.at(h) >= p - 1e-12)
        .unwrap_or(max_hops)
}

/// One (monitor, destination) probing session.
pub struct Session<'a> {
    trace: &'a Trace,
    state: SessionState,
    cost: ProbeCost,
    max_hops: usize,
    log: &'a mut ProbeLog,
}

impl<'a> Session<'a> {
    pub fn new(trace: &'a Trace, cost: ProbeCost, max_hops: usize, log: &'a mut ProbeLog) -> Self {
        Session {
            trace,
            state: SessionState::new(),
            cost,
            max_hops,
            log,
        }
    }

    fn probe(&mut self, hop: usize, phase: Phase) -> ProbeOutcome {
        probe(self.trace, hop, phase, self.cost, self.log)
    }

    /// Probes hop `h`, halving it while nothing answers and `h != 1`.
    /// Returns the hop that answered (or 1) and its outcome.
    pub fn adapt_h(&mut self, h: usize) -> (usize, ProbeOutcome) {
        let mut h = h.max(1);
        loop {
            let outcome = self.probe(h, Phase::AdaptH);
            if outcome.result.is_responding() || h == 1 {
                return (outcome.hop, outcome);
            }
            h = (h / 2).max(1);
        }
    }

    /// Forwards walk starting with a fresh probe at `start`.
    pub fn trace_forwards(&mut self, start: usize, global: &mut GlobalStopSet) {
        let first = self.probe(start.max(1), Phase::Forwards);
        self.forwards_from(first, global);
    }

    /// Forwards walk whose first hop has already been probed.
    pub fn forwards_from(&mut self, first: ProbeOutcome, global: &mut GlobalStopSet) {
        let destination = self.trace.destination();
        let mut outcome = first;
        loop {
            if let Hop::Responding(addr) = outcome.result {
                if addr == destination || global.contains_pair(addr, destination) {
                    return;
                }
            }
            if halt(&mut self.state, &outcome) {
                return;
            }
            if let Hop::Responding(addr) = outcome.result {
                global.insert_pair(addr, destination);
            }
            let next = outcome.hop + 1;
            if next > self.max_hops {
                return;
            }
            outcome = self.probe(next, Phase::Forwards);
        }
    }

    /// Backwards walk from `start` down to hop 1; `start = 0` probes nothing.
    pub fn trace_backwards(
        &mut self,
        start: usize,
        local: &mut LocalStopSet,
        global: &mut GlobalStopSet,
    ) {
        let destination = self.trace.destination();
        self.state.reset_gap();
        for hop in (1..=start.min(self.max_hops)).rev() {
            let outcome = self.probe(hop, Phase::Backwards);
            if let Hop::Responding(addr) = outcome.result {
                if local.contains(addr) {
                    return;
                }
            }
            if halt(&mut self.state, &outcome) {
                return;
            }
            if let Hop::Responding(addr) = outcome.result {
                local.insert(addr);
                global.insert_pair(addr, destination);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonitorRunResult {
    pub monitor: MonitorId,
    /// Start hop before per-destination adaptation.
    pub start_hop: usize,
    pub log: ProbeLog,
    pub local_stopset: LocalStopSet,
    pub discovered_nodes: BTreeSet<InterfaceAddr>,
    pub discovered_links: BTreeSet<(InterfaceAddr, InterfaceAddr)>,
}

/// Runs Doubletree for one monitor over all its destinations in address
/// order, growing `global` in place.
pub fn doubletree_run(
    traceset: &TraceSet,
    monitor: &str,
    config: &ProbeConfig,
    global: &mut GlobalStopSet,
) -> Result<MonitorRunResult> {
    config.validate()?;
    let monitor_id = traceset
        .monitor(monitor)
        .ok_or_else(|| Error::UnknownMonitor(monitor.to_string()))?
        .clone();
    let cdf = path_length_cdf(traceset, monitor)?;
    let start_hop = config.start_hop(&cdf);

    let mut log = ProbeLog::new();
    let mut local = LocalStopSet::new();
    for trace in traceset.traces_of(monitor) {
        let mut session = Session::new(trace, config.cost, config.max_hops, &mut log);
        let (h, first) = session.adapt_h(start_hop);
        session.forwards_from(first, global);
        session.trace_backwards(h - 1, &mut local, global);
    }

    Ok(MonitorRunResult {
        monitor: monitor_id,
        start_hop,
        discovered_nodes: log.nodes(),
        discovered_links: log.links(),
        log,
        local_stopset: local,
    })
}

/// Results of running every monitor in a shuffled order.
#[derive(Clone, Debug)]
pub struct Schedule {
    /// Per-monitor results in the order the monitors ran.
    pub results: Vec<MonitorRunResult>,
    pub global: GlobalStopSet,
}

impl Schedule {
    pub fn order(&self) -> Vec<&MonitorId> {
        self.results.iter().map(|r| &r.monitor).collect()
    }

    /// The monitor that ran last, which sees the most complete stop set.
    pub fn last(&self) -> Option<&MonitorRunResult> {
        self.results.last()
    }

    pub fn logs(&self) -> Vec<&ProbeLog> {
        self.results.iter().map(|r| &r.log).collect()
    }

    pub fn total_probes(&self) -> u64 {
        self.results.iter().map(|r| r.log.total_probes()).sum()
    }
}

/// Monitors sorted by id, then shuffled by `seed`.
pub fn monitor_order(traceset: &TraceSet, seed: u64) -> Vec<MonitorId> {
    let mut monitors = traceset.monitors().to_vec();
    monitors.sort();
    monitors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    monitors
}

pub fn sequential_schedule(
    traceset: &TraceSet,
    config: &ProbeConfig,
    monitor_order_seed: u64,
) -> Result<Schedule> {
    let global = GlobalStopSet::new(config.stopset)?;
    sequential_schedule_from(traceset, config, monitor_order_seed, global)
}

/// Like [`sequential_schedule`] but starting from a given global stop set.
pub fn sequential_schedule_from(
    traceset: &TraceSet,
    config: &ProbeConfig,
    monitor_order_seed: u64,
    mut global: GlobalStopSet,
) -> Result<Schedule> {
    config.validate()?;
    let results = monitor_order(traceset, monitor_order_seed)
        .iter()
        .map(|m| doubletree_run(traceset, m.as_str(), config, &mut global))
        .collect::<Result<Vec<_>>>()?;
    Ok(Schedule { results, global })
}
