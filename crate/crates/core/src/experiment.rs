//! Parameter sweeps and their CSV outputs.
//!
//! An experiment always runs the classic baseline once (it is the
//! reference for coverage), then one Doubletree schedule per sweep point.
//! Every output is a pure function of the trace set and the config, so two
//! identical invocations write byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::doubletree::{sequential_schedule_from, ProbeConfig, StartHop};
use crate::error::{Error, Result};
use crate::metrics::{
    anonymous_load, coverage, destination_inter_redundancy, gross_redundancy, inter_redundancy,
    intra_redundancy, probe_stats, AnonymousLoadReport, CoverageReport, GrossSplit, ProbeStats,
    RedundancyReport,
};
use crate::probe::{classic_probe_run, ProbeCost, ProbeLog};
use crate::stopset::{
    raw_compression_ratio, theoretical_fpr, BloomParams, GlobalStopSet, StopSetKind,
    DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES,
};
use crate::trace::{MonitorId, TraceSet, DEFAULT_MAX_HOPS};

/// Fresh random pairs used to measure a Bloom filter's false positive rate.
pub const FPR_QUERIES: usize = 100_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Classic,
    Doubletree,
}

/// 0 to 0.2 in steps of 0.01, then to 1 in steps of 0.1.
pub fn default_p_grid() -> Vec<f64> {
    (0..20)
        .map(|i| f64::from(i) / 100.0)
        .chain((2..=10).map(|i| f64::from(i) / 10.0))
        .collect()
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum StopSetChoice {
    Exact,
    Bloom { bits_per_element: usize, k: u32 },
}

impl StopSetChoice {
    pub fn bloom_default() -> Self {
        StopSetChoice::Bloom {
            bits_per_element: DEFAULT_BITS_PER_ELEMENT,
            k: DEFAULT_HASHES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub p_grid: Vec<f64>,
    pub h_override: Option<usize>,
    pub stopset: StopSetChoice,
    /// Filter size basis; defaults to the trace set's responding hop count.
    pub bloom_expected_n: Option<usize>,
    pub monitor_order_seed: u64,
    pub hash_seed: u64,
    pub cost: ProbeCost,
    pub max_hops: usize,
    pub jobs: usize,
    pub write_logs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Doubletree,
            p_grid: default_p_grid(),
            h_override: None,
            stopset: StopSetChoice::Exact,
            bloom_expected_n: None,
            monitor_order_seed: 0,
            hash_seed: 0,
            cost: ProbeCost::Optimistic,
            max_hops: DEFAULT_MAX_HOPS,
            jobs: 1,
            write_logs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_override.is_some() && self.p_grid.len() > 1 {
            return Err(Error::InvalidConfig(
                "a fixed start hop cannot be combined with a multi-value p grid".into(),
            ));
        }
        if self.h_override == Some(0) {
            return Err(Error::InvalidConfig("start hop must be >= 1".into()));
        }
        if self.mode == Mode::Doubletree && self.h_override.is_none() && self.p_grid.is_empty() {
            return Err(Error::InvalidConfig("empty p grid".into()));
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!("p = {p} is outside [0, 1]")));
        }
        if self.max_hops == 0 || self.jobs == 0 {
            return Err(Error::InvalidConfig(
                "max_hops and jobs must be >= 1".into(),
            ));
        }
        if let StopSetChoice::Bloom {
            bits_per_element,
            k,
        } = self.stopset
        {
            if bits_per_element == 0 || k == 0 {
                return Err(Error::InvalidConfig(
                    "bloom needs bits_per_element, k >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    fn stopset_kind(&self, traceset: &TraceSet, expected_n: Option<usize>) -> StopSetKind {
        match self.stopset {
            StopSetChoice::Exact => StopSetKind::Exact,
            StopSetChoice::Bloom {
                bits_per_element,
                k,
            } => StopSetKind::Bloom(BloomParams {
                expected_n: expected_n
                    .or(self.bloom_expected_n)
                    .unwrap_or_else(|| traceset.responding_hop_records())
                    .max(1),
                bits_per_element,
                k,
                hash_seed: self.hash_seed,
            }),
        }
    }

    fn starts(&self) -> Vec<StartHop> {
        match self.h_override {
            Some(h) => vec![StartHop::Fixed(h)],
            None => self
                .p_grid
                .iter()
                .map(|&p| StartHop::Probability(p))
                .collect(),
        }
    }
}

pub fn point_label(start: Option<StartHop>) -> String {
    match start {
        None => "classic".into(),
        Some(StartHop::Probability(p)) => format!("p{p:.2}"),
        Some(StartHop::Fixed(h)) => format!("h{h}"),
    }
}

/// Everything measured for one run of all monitors.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    /// `None` for the classic baseline.
    pub start: Option<StartHop>,
    /// Monitors in the order they ran, with their start hop.
    pub order: Vec<(MonitorId, usize)>,
    pub coverage: CoverageReport,
    /// Intra-monitor reports: the last monitor for Doubletree, every
    /// monitor for classic probing.
    pub intra: Vec<RedundancyReport>,
    pub inter: RedundancyReport,
    pub gross_routers: RedundancyReport,
    pub gross_destinations: RedundancyReport,
    pub destination_inter: RedundancyReport,
    pub anonymous: AnonymousLoadReport,
    pub anonymous_probes: u64,
    pub stats: Vec<(MonitorId, ProbeStats)>,
    pub global: Option<GlobalStopSet>,
    /// Per-monitor logs, kept only when asked for.
    pub logs: Option<Vec<ProbeLog>>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        point_label(self.start)
    }

    pub fn p(&self) -> Option<f64> {
        match self.start {
            Some(StartHop::Probability(p)) => Some(p),
            _ => None,
        }
    }

    /// Checks the probe-accounting partitions: per-monitor probe classes
    /// sum to the total, and the anonymous-load buckets cover every
    /// anonymous probe exactly once.
    pub fn accounting_holds(&self) -> bool {
        let stats_ok = self.stats.iter().all(|(_, s)| {
            let sum = s.discovery_fraction() + s.anonymous_fraction() + s.redundant_fraction();
            s.discovery_probes + s.anonymous_probes + s.redundant_probes == s.probes_total
                && (s.probes_total == 0 || (sum - 1.0).abs() <= 1e-9)
        });
        stats_ok && self.anonymous.total() == self.anonymous_probes
    }
}

fn measure(
    traceset: &TraceSet,
    start: Option<StartHop>,
    order: Vec<(MonitorId, usize)>,
    logs: Vec<ProbeLog>,
    baseline: &[&ProbeLog],
    global: Option<GlobalStopSet>,
    keep_logs: bool,
) -> SweepPoint {
    let refs: Vec<&ProbeLog> = logs.iter().collect();
    let dests = traceset.destinations();
    let intra_for: Vec<usize> = match start {
        None => (0..logs.len()).collect(),
        Some(_) => logs.len().checked_sub(1).into_iter().collect(),
    };
    let intra = intra_for
        .iter()
        .map(|&i| intra_redundancy(&logs[i], &order[i].0))
        .collect();
    let stats = order
        .iter()
        .zip(&logs)
        .map(|((m, _), log)| (m.clone(), probe_stats(log, traceset, m)))
        .collect();
    let mut anon = AnonymousLoadReport::default();
    let mut anonymous_probes = 0;
    for log in &logs {
        let a = anonymous_load(log, traceset);
        anon.nonresponding_probes += a.nonresponding_probes;
        anon.unidentifiable_probes += a.unidentifiable_probes;
        anonymous_probes += log
            .entries()
            .iter()
            .filter(|e| !e.outcome.result.is_responding())
            .map(|e| u64::from(e.outcome.probes_spent))
            .sum::<u64>();
    }
    SweepPoint {
        start,
        coverage: coverage(&refs, baseline),
        intra,
        inter: inter_redundancy(&refs),
        gross_routers: gross_redundancy(&refs, GrossSplit::RouterInterfaces, dests),
        gross_destinations: gross_redundancy(&refs, GrossSplit::Destinations, dests),
        destination_inter: destination_inter_redundancy(&refs, dests),
        anonymous: anon,
        anonymous_probes,
        stats,
        order,
        global,
        logs: keep_logs.then_some(logs),
    }
}

/// Classic probing from every monitor, in trace-set order.
pub fn classic_logs(
    traceset: &TraceSet,
    cost: ProbeCost,
    max_hops: usize,
) -> Result<Vec<ProbeLog>> {
    traceset
        .monitors()
        .iter()
        .map(|m| classic_probe_run(traceset, m.as_str(), cost, max_hops))
        .collect()
}

/// Runs one Doubletree schedule and measures it against `baseline`.
pub fn run_point(
    traceset: &TraceSet,
    config: &ExperimentConfig,
    start: StartHop,
    baseline: &[&ProbeLog],
    initial: Option<&GlobalStopSet>,
    bloom_expected_n: Option<usize>,
) -> Result<SweepPoint> {
    let probe_config = ProbeConfig {
        start,
        stopset: config.stopset_kind(traceset, bloom_expected_n),
        cost: config.cost,
        max_hops: config.max_hops,
    };
    let global = match initial {
        Some(set) => match (set, probe_config.stopset) {
            (GlobalStopSet::Exact(_), StopSetKind::Exact)
            | (GlobalStopSet::Bloom(_), StopSetKind::Bloom(_)) => set.clone(),
            _ => {
                return Err(Error::InvalidConfig(
                    "initial stop set kind does not match the configured one".into(),
                ))
            }
        },
        None => GlobalStopSet::new(probe_config.stopset)?,
    };
    let schedule =
        sequential_schedule_from(traceset, &probe_config, config.monitor_order_seed, global)?;
    let order = schedule
        .results
        .iter()
        .map(|r| (r.monitor.clone(), r.start_hop))
        .collect();
    let logs = schedule.results.into_iter().map(|r| r.log).collect();
    Ok(measure(
        traceset,
        Some(start),
        order,
        logs,
        baseline,
        Some(schedule.global),
        config.write_logs,
    ))
}

/// Measures a previously saved probe log against a fresh classic baseline.
/// Per-monitor reports cover every monitor found in the log.
pub fn analyze_log(
    traceset: &TraceSet,
    log: &ProbeLog,
    cost: ProbeCost,
    max_hops: usize,
) -> Result<SweepPoint> {
    let baseline = classic_logs(traceset, cost, max_hops)?;
    let refs: Vec<&ProbeLog> = baseline.iter().collect();
    let monitors = log.monitors();
    let mut logs: Vec<ProbeLog> = monitors.iter().map(|_| ProbeLog::new()).collect();
    for e in log.entries() {
        if traceset.trace(e.monitor.as_str(), e.destination).is_none() {
            return Err(Error::UnknownMonitor(format!(
                "{} has no trace towards {}",
                e.monitor, e.destination
            )));
        }
        let i = monitors
            .iter()
            .position(|m| m == &e.monitor)
            .expect("listed monitor");
        logs[i].push(&e.monitor, e.destination, e.outcome);
    }
    let order = monitors.into_iter().map(|m| (m, 0)).collect();
    Ok(measure(traceset, None, order, logs, &refs, None, false))
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub baseline: SweepPoint,
    /// Doubletree points in grid order; empty in classic mode.
    pub points: Vec<SweepPoint>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

pub fn run_experiment(
    traceset: &TraceSet,
    config: &ExperimentConfig,
    initial: Option<&GlobalStopSet>,
) -> Result<Experiment> {
    run_experiment_sized(traceset, config, initial, |_| None)
}

fn run_experiment_sized(
    traceset: &TraceSet,
    config: &ExperimentConfig,
    initial: Option<&GlobalStopSet>,
    expected_n: impl Fn(usize) -> Option<usize> + Sync,
) -> Result<Experiment> {
    config.validate()?;
    let logs = classic_logs(traceset, config.cost, config.max_hops)?;
    let refs: Vec<&ProbeLog> = logs.iter().collect();
    let order = traceset.monitors().iter().map(|m| (m.clone(), 1)).collect();
    let baseline = measure(
        traceset,
        None,
        order,
        logs.clone(),
        &refs,
        None,
        config.write_logs,
    );
    let points = match config.mode {
        Mode::Classic => Vec::new(),
        Mode::Doubletree => pool(config.jobs)?.install(|| {
            config
                .starts()
                .into_par_iter()
                .enumerate()
                .map(|(i, start)| run_point(traceset, config, start, &refs, initial, expected_n(i)))
                .collect::<Result<Vec<_>>>()
        })?,
    };
    Ok(Experiment { baseline, points })
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_csv_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    finish(w, path)
}

pub const SUMMARY_HEADER: [&str; 22] = [
    "label",
    "p",
    "probes_total",
    "classic_probes",
    "probe_reduction",
    "nodes_found",
    "nodes_classic",
    "node_pct",
    "links_found",
    "links_classic",
    "link_pct",
    "gross_router_p95",
    "gross_dest_p95",
    "dest_inter_p95",
    "dest_inter_max",
    "inter_p95",
    "last_monitor",
    "last_intra_max",
    "anon_nonresponding",
    "anon_unidentifiable",
    "global_pairs",
    "mean_start_hop",
];

fn summary_row(point: &SweepPoint, classic_probes: u64) -> Vec<String> {
    let c = &point.coverage;
    let reduction = if classic_probes == 0 {
        0.0
    } else {
        1.0 - c.probes_total as f64 / classic_probes as f64
    };
    let (last, last_max) = match (point.start, point.intra.last()) {
        (Some(_), Some(r)) => (
            point
                .order
                .last()
                .map(|(m, _)| m.to_string())
                .unwrap_or_default(),
            r.max().to_string(),
        ),
        _ => (String::new(), String::new()),
    };
    let mean_h = if point.order.is_empty() {
        0.0
    } else {
        point.order.iter().map(|(_, h)| *h as f64).sum::<f64>() / point.order.len() as f64
    };
    vec![
        point.label(),
        point.p().map(|p| format!("{p:.2}")).unwrap_or_default(),
        c.probes_total.to_string(),
        classic_probes.to_string(),
        f6(reduction),
        c.nodes_found.to_string(),
        c.nodes_classic.to_string(),
        f6(c.node_pct),
        c.links_found.to_string(),
        c.links_classic.to_string(),
        f6(c.link_pct),
        point.gross_routers.p95().to_string(),
        point.gross_destinations.p95().to_string(),
        point.destination_inter.p95().to_string(),
        point.destination_inter.max().to_string(),
        point.inter.p95().to_string(),
        last,
        last_max,
        point.anonymous.nonresponding_probes.to_string(),
        point.anonymous.unidentifiable_probes.to_string(),
        point.global.as_ref().map_or(0, |g| g.len()).to_string(),
        f6(mean_h),
    ]
}

/// Writes one point's reports into `dir`.
pub fn write_point(point: &SweepPoint, dir: &Path, stopset_out: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for report in &point.intra {
        let name = match &report.kind {
            crate::metrics::RedundancyKind::IntraMonitor(m) => format!("intra_{m}.csv"),
            _ => unreachable!("intra list holds intra reports"),
        };
        let path = dir.join(name);
        write_csv_file(&path, |w| report.write_csv(w))?;
    }
    let reports = [
        ("inter.csv", &point.inter),
        ("gross_routers.csv", &point.gross_routers),
        ("gross_destinations.csv", &point.gross_destinations),
        ("destination_inter.csv", &point.destination_inter),
    ];
    for (name, report) in reports {
        write_csv_file(&dir.join(name), |w| report.write_csv(w))?;
    }

    write_csv_file(&dir.join("coverage.csv"), |w| {
        let c = &point.coverage;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["metric", "value"])?;
        for (k, v) in [
            ("nodes_found", c.nodes_found.to_string()),
            ("nodes_classic", c.nodes_classic.to_string()),
            ("node_pct", f6(c.node_pct)),
            ("links_found", c.links_found.to_string()),
            ("links_classic", c.links_classic.to_string()),
            ("link_pct", f6(c.link_pct)),
            ("probes_total", c.probes_total.to_string()),
        ] {
            csv.write_record([k, v.as_str()])?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;

    write_csv_file(&dir.join("probe_stats.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "monitor",
            "destinations",
            "dest_responding",
            "dest_not_responding",
            "probes_total",
            "discovery",
            "invalid_or_no_response",
            "redundant",
        ])?;
        for (m, s) in &point.stats {
            csv.write_record([
                m.to_string(),
                s.destinations.to_string(),
                f6(s.responding_fraction()),
                f6(s.not_responding_fraction()),
                s.probes_total.to_string(),
                f6(s.discovery_fraction()),
                f6(s.anonymous_fraction()),
                f6(s.redundant_fraction()),
            ])?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;

    write_csv_file(&dir.join("anonymous_load.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["nonresponding_probes", "unidentifiable_probes"])?;
        csv.write_record([
            point.anonymous.nonresponding_probes.to_string(),
            point.anonymous.unidentifiable_probes.to_string(),
        ])?;
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;

    if let Some(logs) = &point.logs {
        write_csv_file(&dir.join("probelog.csv"), |w| {
            let mut all = ProbeLog::new();
            for log in logs {
                all.append(&mut log.clone());
            }
            all.write_csv(w)
        })?;
    }
    if let (true, Some(global)) = (stopset_out, &point.global) {
        let path = dir.join("stopset.bin");
        fs::write(&path, global.serialize()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn write_summary(exp: &Experiment, path: &Path) -> Result<()> {
    let classic = exp.baseline.coverage.probes_total;
    write_csv_file(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(SUMMARY_HEADER)?;
        csv.write_record(summary_row(&exp.baseline, classic))?;
        for point in &exp.points {
            csv.write_record(summary_row(point, classic))?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    })
}

/// Writes `summary.csv`, one directory per point, and `manifest.txt`.
pub fn write_experiment(
    exp: &Experiment,
    out_dir: &Path,
    manifest: &RunManifest,
    stopset_out: bool,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_summary(exp, &out_dir.join("summary.csv"))?;
    write_point(&exp.baseline, &out_dir.join("classic"), false)?;
    for point in &exp.points {
        write_point(point, &out_dir.join(point.label()), stopset_out)?;
    }
    let path = out_dir.join("manifest.txt");
    fs::write(&path, manifest.render(exp)).map_err(|e| Error::io(&path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reproducibility record written next to every run.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub traceset_digest: String,
    pub config: ExperimentConfig,
    pub traces: Option<PathBuf>,
    pub command: String,
}

impl RunManifest {
    pub fn render(&self, exp: &Experiment) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "# dtsim run manifest");
        let _ = writeln!(s, "command = {}", self.command);
        if let Some(path) = &self.traces {
            let _ = writeln!(s, "traces = {}", path.display());
        }
        let _ = writeln!(s, "traceset_sha256 = {}", self.traceset_digest);
        let mode = match c.mode {
            Mode::Classic => "classic",
            Mode::Doubletree => "doubletree",
        };
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "monitor_order_seed = {}", c.monitor_order_seed);
        let _ = writeln!(s, "hash_seed = {}", c.hash_seed);
        match c.stopset {
            StopSetChoice::Exact => {
                let _ = writeln!(s, "stopset = exact");
            }
            StopSetChoice::Bloom {
                bits_per_element,
                k,
            } => {
                let _ = writeln!(
                    s,
                    "stopset = bloom bits_per_element={bits_per_element} k={k}"
                );
            }
        }
        let _ = writeln!(s, "probes_per_hop = {}", c.cost.as_str());
        let _ = writeln!(s, "max_hops = {}", c.max_hops);
        // redundancy percentiles are taken over all interfaces, not per hop
        let _ = writeln!(s, "p95_aggregation = all-interfaces");
        match c.h_override {
            Some(h) => {
                let _ = writeln!(s, "h_override = {h}");
            }
            None => {
                let grid: Vec<String> = c.p_grid.iter().map(|p| format!("{p:.2}")).collect();
                let _ = writeln!(s, "p_grid = {}", grid.join(","));
            }
        }
        for point in &exp.points {
            let _ = writeln!(s, "\n[{}]", point.label());
            let order: Vec<String> = point.order.iter().map(|(m, _)| m.to_string()).collect();
            let _ = writeln!(s, "order = {}", order.join(","));
            for (m, h) in &point.order {
                let _ = writeln!(s, "h.{m} = {h}");
            }
            if let Some(GlobalStopSet::Bloom(b)) = &point.global {
                let _ = writeln!(
                    s,
                    "bloom m_bits={} k={} n_inserted={}",
                    b.m_bits(),
                    b.k(),
                    b.n_inserted()
                );
            }
        }
        s
    }
}

/// Fraction of `queries` fresh random pairs that the set claims to hold.
pub fn measured_fpr(set: &GlobalStopSet, queries: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F00D);
    let hits = (0..queries)
        .filter(|_| {
            let key: u64 = rng.gen();
            let (x, d) = crate::stopset::pair_from_key(key);
            set.contains_pair(x, d)
        })
        .count();
    hits as f64 / queries.max(1) as f64
}

/// One p value of an exact-vs-Bloom comparison.
#[derive(Clone, Debug)]
pub struct ComparisonPoint {
    pub exact: SweepPoint,
    pub bloom: SweepPoint,
    pub fpr_measured: f64,
    pub fpr_theoretical: f64,
    pub m_bits: usize,
    pub n_inserted: usize,
    pub compression_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub exact: Experiment,
    pub bloom: Experiment,
    pub points: Vec<ComparisonPoint>,
}

/// Runs the sweep with the exact stop set, then again with a Bloom filter
/// sized from the pair count the exact run reached at the same point.
pub fn compare_stopsets(traceset: &TraceSet, config: &ExperimentConfig) -> Result<Comparison> {
    let (bits_per_element, k) = match config.stopset {
        StopSetChoice::Bloom {
            bits_per_element,
            k,
        } => (bits_per_element, k),
        StopSetChoice::Exact => (DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES),
    };
    let exact_cfg = ExperimentConfig {
        mode: Mode::Doubletree,
        stopset: StopSetChoice::Exact,
        ..config.clone()
    };
    let bloom_cfg = ExperimentConfig {
        mode: Mode::Doubletree,
        stopset: StopSetChoice::Bloom {
            bits_per_element,
            k,
        },
        ..config.clone()
    };
    let exact = run_experiment(traceset, &exact_cfg, None)?;
    let sizes: Vec<usize> = exact
        .points
        .iter()
        .map(|p| p.global.as_ref().map_or(1, |g| g.len().max(1)))
        .collect();
    let bloom = run_experiment_sized(traceset, &bloom_cfg, None, |i| {
        config.bloom_expected_n.or(Some(sizes[i]))
    })?;
    let points = exact
        .points
        .iter()
        .zip(&bloom.points)
        .map(|(e, b)| {
            let (m_bits, n_inserted) = match &b.global {
                Some(GlobalStopSet::Bloom(f)) => (f.m_bits(), f.n_inserted()),
                _ => (0, 0),
            };
            let exact_pairs = e.global.as_ref().map_or(0, |g| g.len());
            ComparisonPoint {
                exact: e.clone(),
                bloom: b.clone(),
                fpr_measured: b
                    .global
                    .as_ref()
                    .map_or(0.0, |g| measured_fpr(g, FPR_QUERIES, config.hash_seed)),
                fpr_theoretical: theoretical_fpr(m_bits, k, n_inserted),
                m_bits,
                n_inserted,
                compression_ratio: if m_bits == 0 {
                    0.0
                } else {
                    raw_compression_ratio(exact_pairs, m_bits)
                },
            }
        })
        .collect();
    Ok(Comparison {
        exact,
        bloom,
        points,
    })
}

/// Long-format join: `p,metric,exact,bloom,delta`.
pub fn write_comparison_csv<W: Write>(cmp: &Comparison, out: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["p", "metric", "exact", "bloom", "delta"])?;
    for cp in &cmp.points {
        let label = cp
            .exact
            .p()
            .map(|p| format!("{p:.2}"))
            .unwrap_or_else(|| cp.exact.label());
        let (e, b) = (&cp.exact, &cp.bloom);
        let ints: [(&str, u64, u64); 8] = [
            (
                "probes_total",
                e.coverage.probes_total,
                b.coverage.probes_total,
            ),
            (
                "nodes_found",
                e.coverage.nodes_found as u64,
                b.coverage.nodes_found as u64,
            ),
            (
                "links_found",
                e.coverage.links_found as u64,
                b.coverage.links_found as u64,
            ),
            (
                "dest_inter_p95",
                e.destination_inter.p95(),
                b.destination_inter.p95(),
            ),
            (
                "gross_dest_p95",
                e.gross_destinations.p95(),
                b.gross_destinations.p95(),
            ),
            (
                "gross_router_p95",
                e.gross_routers.p95(),
                b.gross_routers.p95(),
            ),
            (
                "last_intra_max",
                e.intra.last().map_or(0, |r| r.max()),
                b.intra.last().map_or(0, |r| r.max()),
            ),
            (
                "global_pairs",
                e.global.as_ref().map_or(0, |g| g.len()) as u64,
                b.global.as_ref().map_or(0, |g| g.len()) as u64,
            ),
        ];
        for (name, x, y) in ints {
            let delta = y as i128 - x as i128;
            csv.write_record([
                label.clone(),
                name.into(),
                x.to_string(),
                y.to_string(),
                delta.to_string(),
            ])?;
        }
        for (name, x, y) in [
            ("node_pct", e.coverage.node_pct, b.coverage.node_pct),
            ("link_pct", e.coverage.link_pct, b.coverage.link_pct),
        ] {
            csv.write_record([label.clone(), name.into(), f6(x), f6(y), f6(y - x)])?;
        }
        for (name, y) in [
            ("bloom_m_bits", cp.m_bits.to_string()),
            ("bloom_n_inserted", cp.n_inserted.to_string()),
            ("bloom_fpr_measured", f6(cp.fpr_measured)),
            ("bloom_fpr_theoretical", f6(cp.fpr_theoretical)),
            ("compression_ratio", f6(cp.compression_ratio)),
        ] {
            csv.write_record([label.clone(), name.into(), String::new(), y, String::new()])?;
        }
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_comparison(cmp: &Comparison, out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("compare_stopsets.csv");
    write_csv_file(&path, |w| write_comparison_csv(cmp, w))?;
    for (name, exp) in [("exact", &cmp.exact), ("bloom", &cmp.bloom)] {
        let dir = out_dir.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_summary(exp, &dir.join("summary.csv"))?;
    }
    let path = out_dir.join("manifest.txt");
    fs::write(&path, manifest.render(&cmp.bloom)).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, TopoParams};

    fn topo() -> TraceSet {
        generate(&TopoParams {
            n_monitors: 4,
            n_destinations: 60,
            n_core: 15,
            n_stub: 20,
            seed: 3,
            ..TopoParams::default()
        })
        .unwrap()
    }

    #[test]
    fn default_grid_has_29_points() {
        let g = default_p_grid();
        assert_eq!(g.len(), 29);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[12], 0.12);
        assert_eq!(g[19], 0.19);
        assert_eq!(g[20], 0.2);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn validation() {
        let cfg = ExperimentConfig {
            h_override: Some(5),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            h_override: Some(5),
            p_grid: vec![0.1],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_ok());
        let cfg = ExperimentConfig {
            p_grid: vec![1.2],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn classic_mode_has_only_baseline() {
        let set = topo();
        let cfg = ExperimentConfig {
            mode: Mode::Classic,
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&set, &cfg, None).unwrap();
        assert!(exp.points.is_empty());
        assert_eq!(exp.baseline.intra.len(), 4);
        assert_eq!(exp.baseline.coverage.node_pct, 1.0);
        assert!(exp.baseline.accounting_holds());
    }

    #[test]
    fn doubletree_point_reports_last_monitor_only() {
        let set = topo();
        let cfg = ExperimentConfig {
            p_grid: vec![0.05],
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&set, &cfg, None).unwrap();
        let point = &exp.points[0];
        assert_eq!(point.intra.len(), 1);
        assert_eq!(
            point.intra[0].kind,
            crate::metrics::RedundancyKind::IntraMonitor(point.order.last().unwrap().0.clone())
        );
        assert!(point.accounting_holds());
        assert!(point.coverage.probes_total < exp.baseline.coverage.probes_total);
    }

    #[test]
    fn parallel_matches_sequential() {
        let set = topo();
        let cfg = ExperimentConfig {
            p_grid: vec![0.0, 0.1, 0.5],
            ..ExperimentConfig::default()
        };
        let one = run_experiment(&set, &cfg, None).unwrap();
        let four = run_experiment(&set, &ExperimentConfig { jobs: 4, ..cfg }, None).unwrap();
        for (a, b) in one.points.iter().zip(&four.points) {
            assert_eq!(a.coverage, b.coverage);
            assert_eq!(a.global, b.global);
        }
    }

    #[test]
    fn initial_stopset_kind_must_match() {
        let set = topo();
        let cfg = ExperimentConfig {
            p_grid: vec![0.1],
            stopset: StopSetChoice::bloom_default(),
            ..ExperimentConfig::default()
        };
        assert!(run_experiment(&set, &cfg, Some(&GlobalStopSet::exact())).is_err());
    }

    #[test]
    fn fpr_of_empty_and_full_sets() {
        assert_eq!(measured_fpr(&GlobalStopSet::exact(), 1000, 1), 0.0);
    }
}
