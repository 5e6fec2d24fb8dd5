//! Monitors, interfaces and traces, plus the plain-text trace file format.
//!
//! A trace file holds one trace per line:
//!
//! ```text
//! # comment
//! <monitor-id> <destination> <hop1> <hop2> ... <hopN>
//! ```
//!
//! Hops are dotted quads or `*` for a hop that did not answer. Responses
//! from special-use (non-routable) addresses are folded into `*` at load
//! time, so nothing downstream ever sees them.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_HOPS: usize = 30;

/// An IPv4 interface address.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterfaceAddr(u32);

impl InterfaceAddr {
    pub const fn new(raw: u32) -> Self {
        InterfaceAddr(raw)
    }

    pub const fn from_octets(a: u8, b: u8, c: u8, d: u8) -> Self {
        InterfaceAddr(u32::from_be_bytes([a, b, c, d]))
    }

    pub const fn to_u32(self) -> u32 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        classify_address(self) == AddressClass::Valid
    }
}

impl From<Ipv4Addr> for InterfaceAddr {
    fn from(ip: Ipv4Addr) -> Self {
        InterfaceAddr(u32::from(ip))
    }
}

impl From<InterfaceAddr> for Ipv4Addr {
    fn from(addr: InterfaceAddr) -> Self {
        Ipv4Addr::from(addr.0)
    }
}

impl fmt::Display for InterfaceAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ipv4Addr::from(self.0).fmt(f)
    }
}

impl FromStr for InterfaceAddr {
    type Err = std::net::AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ipv4Addr>().map(InterfaceAddr::from)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AddressClass {
    Valid,
    Invalid,
}

/// Special-use blocks whose responses are not counted as interface visits.
const INVALID_BLOCKS: [(u32, u32); 9] = [
    (0x0A00_0000, 8),  // 10.0.0.0/8
    (0xAC10_0000, 12), // 172.16.0.0/12
    (0xC0A8_0000, 16), // 192.168.0.0/16
    (0x7F00_0000, 8),  // 127.0.0.0/8
    (0x0000_0000, 8),  // 0.0.0.0/8
    (0xC058_6300, 24), // 192.88.99.0/24
    (0xC612_0000, 15), // 198.18.0.0/15
    (0xE000_0000, 4),  // 224.0.0.0/4
    (0xF000_0000, 4),  // 240.0.0.0/4
];

pub fn classify_address(addr: InterfaceAddr) -> AddressClass {
    let raw = addr.to_u32();
    let invalid = INVALID_BLOCKS.iter().any(|&(base, prefix)| {
        let mask = u32::MAX << (32 - prefix);
        raw & mask == base
    });
    if invalid {
        AddressClass::Invalid
    } else {
        AddressClass::Valid
    }
}

/// Identifier of a monitor, restricted to `[A-Za-z0-9_-]+`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonitorId(Arc<str>);

impl MonitorId {
    pub fn new(id: &str) -> Option<Self> {
        let ok = !id.is_empty()
            && id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
        ok.then(|| MonitorId(Arc::from(id)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for MonitorId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MonitorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What was recorded at one hop of a trace.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Hop {
    Responding(InterfaceAddr),
    Anonymous,
}

impl Hop {
    /// Builds a hop from an observed address, demoting special-use addresses.
    pub fn observed(addr: InterfaceAddr) -> Self {
        if addr.is_valid() {
            Hop::Responding(addr)
        } else {
            Hop::Anonymous
        }
    }

    pub fn addr(self) -> Option<InterfaceAddr> {
        match self {
            Hop::Responding(addr) => Some(addr),
            Hop::Anonymous => None,
        }
    }

    pub fn is_responding(self) -> bool {
        matches!(self, Hop::Responding(_))
    }
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hop::Responding(addr) => addr.fmt(f),
            Hop::Anonymous => f.write_str("*"),
        }
    }
}

/// The route from one monitor towards one destination, hop 1 first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    monitor: MonitorId,
    destination: InterfaceAddr,
    hops: Vec<Hop>,
    complete: bool,
}

impl Trace {
    /// Builds a trace, demoting invalid responders to anonymous hops and
    /// truncating to `max_hops`. Returns `None` when no hop remains.
    pub fn new(
        monitor: MonitorId,
        destination: InterfaceAddr,
        hops: impl IntoIterator<Item = Hop>,
        max_hops: usize,
    ) -> Option<Self> {
        let hops: Vec<Hop> = hops
            .into_iter()
            .take(max_hops)
            .map(|hop| match hop {
                Hop::Responding(addr) => Hop::observed(addr),
                Hop::Anonymous => Hop::Anonymous,
            })
            .collect();
        let complete = *hops.last()? == Hop::Responding(destination);
        Some(Trace {
            monitor,
            destination,
            hops,
            complete,
        })
    }

    pub fn monitor(&self) -> &MonitorId {
        &self.monitor
    }

    pub fn destination(&self) -> InterfaceAddr {
        self.destination
    }

    pub fn hops(&self) -> &[Hop] {
        &self.hops
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// The hop at TTL `hop` (1-based), if recorded.
    pub fn hop(&self, hop: usize) -> Option<Hop> {
        hop.checked_sub(1).and_then(|i| self.hops.get(i)).copied()
    }

    /// Whether some hop strictly beyond `hop` responded.
    pub fn responds_after(&self, hop: usize) -> bool {
        self.hops.iter().skip(hop).any(|h| h.is_responding())
    }

    fn write_line<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "{} {}", self.monitor, self.destination)?;
        for hop in &self.hops {
            write!(out, " {hop}")?;
        }
        writeln!(out)
    }
}

/// All traces of an experiment, indexed by monitor and destination.
#[derive(Clone, Debug, Default)]
pub struct TraceSet {
    traces: Vec<Trace>,
    monitors: Vec<MonitorId>,
    index: HashMap<MonitorId, BTreeMap<InterfaceAddr, usize>>,
    destinations: BTreeSet<InterfaceAddr>,
}

impl TraceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trace. Gives the trace back if its key is already present.
    pub fn insert(&mut self, trace: Trace) -> std::result::Result<(), Trace> {
        let per_monitor = match self.index.get_mut(trace.monitor.as_str()) {
            Some(map) => map,
            None => {
                self.monitors.push(trace.monitor.clone());
                self.index.entry(trace.monitor.clone()).or_default()
            }
        };
        if per_monitor.contains_key(&trace.destination) {
            return Err(trace);
        }
        per_monitor.insert(trace.destination, self.traces.len());
        self.destinations.insert(trace.destination);
        self.traces.push(trace);
        Ok(())
    }

    pub fn parse(text: &str, max_hops: usize) -> Result<Self> {
        let mut set = TraceSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let trace = parse_line(content, line, max_hops)?;
            set.insert(trace).map_err(|t| Error::DuplicateTrace {
                line,
                monitor: t.monitor.to_string(),
                destination: t.destination.to_string(),
            })?;
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>, max_hops: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, max_hops)
    }

    /// Writes traces in insertion order.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for trace in &self.traces {
            trace.write_line(&mut out)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace text is ASCII")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = io::BufWriter::new(file);
        self.write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Monitors in order of first appearance.
    pub fn monitors(&self) -> &[MonitorId] {
        &self.monitors
    }

    pub fn monitor(&self, id: &str) -> Option<&MonitorId> {
        self.index.get_key_value(id).map(|(k, _)| k)
    }

    pub fn destinations(&self) -> &BTreeSet<InterfaceAddr> {
        &self.destinations
    }

    pub fn trace(&self, monitor: &str, destination: InterfaceAddr) -> Option<&Trace> {
        let idx = *self.index.get(monitor)?.get(&destination)?;
        Some(&self.traces[idx])
    }

    /// A monitor's traces, sorted by destination address.
    pub fn traces_of<'a>(&'a self, monitor: &str) -> impl Iterator<Item = &'a Trace> + 'a {
        self.index
            .get(monitor)
            .into_iter()
            .flat_map(|m| m.values())
            .map(move |&idx| &self.traces[idx])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trace> {
        self.traces.iter()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Number of responding hop records over all traces; an upper bound on
    /// the number of (interface, destination) pairs a run can discover.
    pub fn responding_hop_records(&self) -> usize {
        self.traces
            .iter()
            .map(|t| t.hops.iter().filter(|h| h.is_responding()).count())
            .sum()
    }
}

fn parse_line(content: &str, line: usize, max_hops: usize) -> Result<Trace> {
    let err = |message: String| Error::Parse { line, message };
    let mut tokens = content.split_whitespace();
    let monitor_tok = tokens.next().ok_or_else(|| err("empty line".into()))?;
    let monitor = MonitorId::new(monitor_tok)
        .ok_or_else(|| err(format!("bad monitor id {monitor_tok:?}")))?;
    let dest_tok = tokens
        .next()
        .ok_or_else(|| err("missing destination".into()))?;
    let destination: InterfaceAddr = dest_tok
        .parse()
        .map_err(|_| err(format!("bad destination address {dest_tok:?}")))?;
    if !destination.is_valid() {
        return Err(err(format!(
            "destination {destination} lies in a special-use block"
        )));
    }
    let hops = tokens
        .map(|tok| match tok {
            "*" => Ok(Hop::Anonymous),
            _ => tok
                .parse::<InterfaceAddr>()
                .map(Hop::Responding)
                .map_err(|_| err(format!("bad hop token {tok:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Trace::new(monitor, destination, hops, max_hops).ok_or_else(|| err("trace has no hops".into()))
}

pub fn load_traceset(path: impl AsRef<Path>, max_hops: usize) -> Result<TraceSet> {
    TraceSet::load(path, max_hops)
}

pub fn save_traceset(set: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    set.save(path)
}

/// Cumulative mass of path lengths to responding destinations, as seen
/// from one monitor.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLengthCdf {
    /// `cumulative[h]` = traces complete within `h` hops; index 0 is always 0.
    cumulative: Vec<usize>,
    total: usize,
}

impl PathLengthCdf {
    pub fn from_lengths(complete_lengths: impl IntoIterator<Item = usize>, total: usize) -> Self {
        let mut counts = vec![0usize; 1];
        for len in complete_lengths {
            if len >= counts.len() {
                counts.resize(len + 1, 0);
            }
            counts[len] += 1;
        }
        let mut acc = 0;
        let cumulative = counts
            .into_iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
        PathLengthCdf { cumulative, total }
    }

    /// Fraction of traces whose destination answered within `hop` hops.
    pub fn at(&self, hop: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let idx = hop.min(self.cumulative.len() - 1);
        self.cumulative[idx] as f64 / self.total as f64
    }

    /// Fraction of responding destinations.
    pub fn limit(&self) -> f64 {
        self.at(usize::MAX)
    }

    pub fn complete_count(&self) -> usize {
        *self.cumulative.last().unwrap_or(&0)
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

pub fn path_length_cdf(traceset: &TraceSet, monitor: &str) -> Result<PathLengthCdf> {
    traceset
        .monitor(monitor)
        .ok_or_else(|| Error::UnknownMonitor(monitor.to_string()))?;
    let traces: Vec<&Trace> = traceset.traces_of(monitor).collect();
    let lengths = traces.iter().filter(|t| t.is_complete()).map(|t| t.len());
    Ok(PathLengthCdf::from_lengths(lengths, traces.len()))
}
