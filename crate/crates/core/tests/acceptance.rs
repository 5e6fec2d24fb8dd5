//! Acceptance checks. Runs without the libtest harness so that each
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dtsim_core::experiment::{
    compare_stopsets, run_experiment, write_comparison, write_experiment, Experiment,
    ExperimentConfig, RunManifest, StopSetChoice, SweepPoint,
};
use dtsim_core::metrics::quantile;
use dtsim_core::probe::ProbeLog;
use dtsim_core::stopset::{
    pair_from_key, raw_compression_ratio, BloomParams, GlobalStopSet, StopSetKind,
};
use dtsim_core::synth::{generate, TopoParams};
use dtsim_core::{InterfaceAddr, TraceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn accounting(point: &SweepPoint, what: &str) -> Result<(), String> {
    check(point.accounting_holds(), || {
        format!(
            "probe accounting partition broken in {what} {}",
            point.label()
        )
    })
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    check(took <= limit, || format!("took {took:?}, limit {limit:?}"))
}

// Accounting checks gathered from the runs of criteria 2 to 5.
#[derive(Default)]
struct Audit {
    points: usize,
    failures: Vec<String>,
}

impl Audit {
    fn record(&mut self, exp: &Experiment, what: &str) {
        for point in std::iter::once(&exp.baseline).chain(&exp.points) {
            self.points += 1;
            if let Err(e) = accounting(point, what) {
                self.failures.push(e);
            }
        }
    }
}

fn bloom_fpr() -> Outcome {
    let start = Instant::now();
    let n = 10_000;
    let queries = 100_000;
    let mut set =
        GlobalStopSet::new(StopSetKind::Bloom(BloomParams::new(n))).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut inserted = HashSet::new();
    while inserted.len() < n {
        let key: u64 = rng.gen();
        if inserted.insert(key) {
            let (x, d) = pair_from_key(key);
            set.insert_pair(x, d);
        }
    }
    let mut hits = 0;
    let mut asked = 0;
    while asked < queries {
        let key: u64 = rng.gen();
        if inserted.contains(&key) {
            continue;
        }
        asked += 1;
        let (x, d) = pair_from_key(key);
        hits += usize::from(set.contains_pair(x, d));
    }
    let fpr = hits as f64 / queries as f64;
    check((0.006..=0.013).contains(&fpr), || {
        format!("measured FPR {fpr:.5}")
    })?;
    within(Duration::from_secs(5), start)?;
    Ok(format!("measured FPR {fpr:.5} over {queries} queries"))
}

fn single_monitor_equivalence(audit: &mut Audit) -> Outcome {
    for seed in 0..10 {
        let start = Instant::now();
        let set = generate(&TopoParams {
            n_monitors: 1,
            seed,
            ..TopoParams::default()
        })
        .map_err(|e| e.to_string())?;
        let cfg = ExperimentConfig {
            p_grid: vec![0.0],
            write_logs: true,
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&set, &cfg, None).map_err(|e| e.to_string())?;
        audit.record(&exp, "single-monitor");
        let classic = &exp.baseline.logs.as_ref().unwrap()[0];
        let dt = &exp.points[0].logs.as_ref().unwrap()[0];
        let valid = |log: &ProbeLog| {
            log.nodes()
                .into_iter()
                .filter(|a| a.is_valid())
                .collect::<Vec<InterfaceAddr>>()
        };
        check(valid(classic) == valid(dt), || {
            format!("seed {seed}: node sets differ")
        })?;
        check(classic.links() == dt.links(), || {
            format!("seed {seed}: link sets differ")
        })?;
        within(Duration::from_secs(10), start)?;
    }
    Ok("node and link sets equal on 10 seeds".into())
}

// Independent reference: the rank is computed in integer arithmetic on
// q = k/100, rounding to nearest with halves going down.
fn reference_quantile(sorted: &[i64], k: u64) -> i64 {
    let n = sorted.len() as u64;
    let scaled = (n - 1) * k + 100; // 100 * position
    let rank = (scaled + 49) / 100;
    sorted[(rank.clamp(1, n) - 1) as usize]
}

fn quantile_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ks = [0u64, 5, 10, 25, 50, 75, 90, 95, 100];
    let mut checks = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=100);
        let mut v: Vec<i64> = (0..len).map(|_| rng.gen_range(-50..50)).collect();
        v.sort_unstable();
        for &k in &ks {
            let got = quantile(&v, k as f64 / 100.0).map_err(|e| e.to_string())?;
            let want = reference_quantile(&v, k);
            check(got == want, || {
                format!("n={len} q={k}%: got {got}, want {want}")
            })?;
            checks += 1;
        }
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("{checks} exact matches"))
}

fn trend_params(seed: u64) -> TopoParams {
    TopoParams {
        n_monitors: 10,
        n_destinations: 1000,
        dest_response_rate: 0.6,
        hop_response_rate: 0.95,
        seed,
        ..TopoParams::default()
    }
}

fn trends(audit: &mut Audit) -> Outcome {
    let start = Instant::now();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut worst_cover = f64::INFINITY;
    let mut worst_reduction = f64::INFINITY;
    for seed in 1..=5 {
        let set = generate(&trend_params(seed)).map_err(|e| e.to_string())?;
        let cfg = ExperimentConfig {
            jobs,
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&set, &cfg, None).map_err(|e| e.to_string())?;
        audit.record(&exp, &format!("trend seed {seed}"));
        let classic = exp.baseline.coverage.probes_total;

        let p95: Vec<u64> = exp
            .points
            .iter()
            .map(|p| p.destination_inter.p95())
            .collect();
        check(p95.windows(2).all(|w| w[0] <= w[1]), || {
            format!("seed {seed}: destination p95 not nondecreasing: {p95:?}")
        })?;
        let last = exp.points.last().unwrap();
        check(last.p() == Some(1.0) && *p95.last().unwrap() == 10, || {
            format!("seed {seed}: destination p95 at p=1 is {:?}", p95.last())
        })?;

        for point in &exp.points {
            let total = point.coverage.probes_total;
            check(total < classic, || {
                format!(
                    "seed {seed} {}: {total} probes vs classic {classic}",
                    point.label()
                )
            })?;
            worst_reduction = worst_reduction.min(1.0 - total as f64 / classic as f64);
            if point.p().unwrap() >= 0.05 - 1e-12 {
                let c = &point.coverage;
                check(c.node_pct >= 0.85 && c.link_pct >= 0.85, || {
                    format!(
                        "seed {seed} {}: coverage nodes {:.3} links {:.3}",
                        point.label(),
                        c.node_pct,
                        c.link_pct
                    )
                })?;
                worst_cover = worst_cover.min(c.node_pct.min(c.link_pct));
            }
        }
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!(
        "5 seeds; min probe reduction {:.1}%, min coverage (p>=0.05) {:.1}%",
        100.0 * worst_reduction,
        100.0 * worst_cover
    ))
}

fn gateway(audit: &mut Audit) -> Outcome {
    let start = Instant::now();
    let set = generate(&TopoParams {
        hop_response_rate: 1.0,
        seed: 11,
        ..TopoParams::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        p_grid: vec![0.05],
        ..ExperimentConfig::default()
    };
    let exp = run_experiment(&set, &cfg, None).map_err(|e| e.to_string())?;
    audit.record(&exp, "gateway");
    let gateway_of =
        |set: &TraceSet, m: &str| set.traces_of(m).next().and_then(|t| t.hop(1)?.addr());

    for report in &exp.baseline.intra {
        let monitor = match &report.kind {
            dtsim_core::metrics::RedundancyKind::IntraMonitor(m) => m.clone(),
            _ => unreachable!(),
        };
        let d = set.traces_of(monitor.as_str()).count() as u64;
        let gw = gateway_of(&set, monitor.as_str()).ok_or("monitor without gateway")?;
        let hop1: Vec<_> = report
            .interfaces
            .iter()
            .filter(|(_, r)| r.hop == 1)
            .collect();
        check(
            hop1.len() == 1 && *hop1[0].0 == gw && hop1[0].1.redundancy == d,
            || format!("classic {monitor}: hop-1 interfaces {hop1:?}, |D| = {d}"),
        )?;
    }

    let point = &exp.points[0];
    let last = &point.order.last().unwrap().0;
    let d = set.traces_of(last.as_str()).count() as u64;
    let gw = gateway_of(&set, last.as_str()).ok_or("monitor without gateway")?;
    let r = point.intra[0].redundancy_of(gw);
    check((r as f64) < 0.5 * d as f64, || {
        format!("last monitor {last}: gateway redundancy {r} of |D| = {d}")
    })?;
    within(Duration::from_secs(30), start)?;
    Ok(format!("classic {d}, last monitor {last} at p=0.05: {r}"))
}

fn stopset_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let ops = 100_000;
    for kind in [
        StopSetKind::Exact,
        StopSetKind::Bloom(BloomParams::new(ops)),
    ] {
        let mut set = GlobalStopSet::new(kind).map_err(|e| e.to_string())?;
        let mut keys = Vec::with_capacity(ops);
        for _ in 0..ops {
            let key: u64 = rng.gen();
            let (x, d) = pair_from_key(key);
            set.insert_pair(x, d);
            keys.push(key);
            let probe = keys[rng.gen_range(0..keys.len())];
            let (x, d) = pair_from_key(probe);
            check(set.contains_pair(x, d), || {
                format!("false negative on {probe:#x}")
            })?;
        }
        let back = GlobalStopSet::deserialize(&set.serialize()).map_err(|e| e.to_string())?;
        check(back == set, || "round trip changed the set".into())?;
    }

    // exact set against a plain list, small key space to force repeats
    let mut exact = GlobalStopSet::exact();
    let mut list: Vec<u64> = Vec::new();
    for _ in 0..5_000 {
        let key = rng.gen_range(0..2_000u64) * 0x1_0000_0001;
        let (x, d) = pair_from_key(key);
        if rng.gen_bool(0.5) {
            exact.insert_pair(x, d);
            if !list.contains(&key) {
                list.push(key);
            }
        }
        check(exact.contains_pair(x, d) == list.contains(&key), || {
            format!("exact set disagrees with list on {key:#x}")
        })?;
        check(exact.len() == list.len(), || "size mismatch".into())?;
    }

    let n = 50_000;
    let params = BloomParams::new(n);
    let ratio = raw_compression_ratio(n, params.m_bits());
    check((ratio - 6.4).abs() < 1e-12, || {
        format!("compression ratio {ratio}")
    })?;
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "no false negatives in {ops} ops per variant; ratio {ratio}:1"
    ))
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let set = generate(&TopoParams {
        n_destinations: 300,
        seed: 5,
        ..TopoParams::default()
    })
    .map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (name, stopset) in [
        ("exact", StopSetChoice::Exact),
        ("bloom", StopSetChoice::bloom_default()),
    ] {
        let cfg = ExperimentConfig {
            p_grid: vec![0.0, 0.05, 0.5, 1.0],
            stopset,
            monitor_order_seed: 3,
            hash_seed: 4,
            write_logs: true,
            ..ExperimentConfig::default()
        };
        let manifest = RunManifest {
            traceset_digest: "-".into(),
            config: cfg.clone(),
            traces: None,
            command: "acceptance".into(),
        };
        let mut trees = Vec::new();
        for jobs in [1, 3] {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let cfg = ExperimentConfig {
                jobs,
                ..cfg.clone()
            };
            let exp = run_experiment(&set, &cfg, None).map_err(|e| e.to_string())?;
            write_experiment(&exp, dir.path(), &manifest, true).map_err(|e| e.to_string())?;
            let cmp_dir = dir.path().join("compare");
            let cmp = compare_stopsets(&set, &cfg).map_err(|e| e.to_string())?;
            write_comparison(&cmp, &cmp_dir, &manifest).map_err(|e| e.to_string())?;
            trees.push(files(dir.path()));
        }
        check(trees[0] == trees[1], || {
            format!("{name}: outputs differ between runs")
        })?;
        compared += trees[0].len();
    }
    Ok(format!(
        "{compared} files byte-identical across repeated runs"
    ))
}

fn main() -> ExitCode {
    let mut audit = Audit::default();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 bloom false positive rate", bloom_fpr()),
        (
            "2 single-monitor p=0 equals classic",
            single_monitor_equivalence(&mut audit),
        ),
        ("3 quantile oracle", quantile_oracle()),
        (
            "4 redundancy, probe and coverage trends",
            trends(&mut audit),
        ),
        ("5 gateway decongestion", gateway(&mut audit)),
        ("6 stop set semantics", stopset_suite()),
    ];
    let partition = if audit.failures.is_empty() {
        Ok(format!("{} runs checked", audit.points))
    } else {
        Err(audit.failures.join("; "))
    };
    results.push(("7 probe accounting partitions", partition));
    results.push(("8 byte-identical outputs", determinism()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
