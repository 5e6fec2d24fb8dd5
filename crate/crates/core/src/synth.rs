//! Deterministic synthetic route tables.
//!
//! The graph has three tiers: every monitor owns a private access chain,
//! the access chains and stub chains attach to a meshed core (a ring plus
//! random chords), and destinations hang off the ends of stub chains.
//! Routes are shortest paths from each monitor, ties broken towards the
//! lowest node id, so each monitor's routes form a tree.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{Hop, InterfaceAddr, MonitorId, Trace, TraceSet, DEFAULT_MAX_HOPS};

const ACCESS_LEN: (usize, usize) = (2, 5);
const STUB_LEN: (usize, usize) = (1, 4);

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TopoParams {
    pub n_monitors: usize,
    pub n_destinations: usize,
    pub n_core: usize,
    pub n_stub: usize,
    pub edge_prob: f64,
    pub dest_response_rate: f64,
    pub hop_response_rate: f64,
    pub seed: u64,
}

impl Default for TopoParams {
    fn default() -> Self {
        TopoParams {
            n_monitors: 10,
            n_destinations: 1000,
            n_core: 60,
            n_stub: 200,
            edge_prob: 0.05,
            dest_response_rate: 0.6,
            hop_response_rate: 0.95,
            seed: 1,
        }
    }
}

impl TopoParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_monitors", self.n_monitors),
            ("n_destinations", self.n_destinations),
            ("n_core", self.n_core),
            ("n_stub", self.n_stub),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, n)| *n == 0) {
            return Err(Error::InvalidParams(format!("{name} must be at least 1")));
        }
        let probs = [
            ("edge_prob", self.edge_prob),
            ("dest_response_rate", self.dest_response_rate),
            ("hop_response_rate", self.hop_response_rate),
        ];
        if let Some((name, p)) = probs.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParams(format!(
                "{name} = {p} is outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Which half of a doubled destination set to keep.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Split {
    A,
    B,
}

#[derive(Debug, Default)]
struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    fn add_node(&mut self) -> usize {
        self.adj.push(BTreeSet::new());
        self.adj.len() - 1
    }

    fn link(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    fn chain(&mut self, len: usize) -> Vec<usize> {
        let nodes: Vec<usize> = (0..len).map(|_| self.add_node()).collect();
        for w in nodes.windows(2) {
            self.link(w[0], w[1]);
        }
        nodes
    }

    /// Shortest-path tree from `root`: `parent[v]` is the lowest-id
    /// neighbour one hop closer to the root.
    fn shortest_path_tree(&self, root: usize) -> Vec<Option<usize>> {
        let mut dist = vec![usize::MAX; self.adj.len()];
        let mut queue = VecDeque::from([root]);
        dist[root] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (0..self.adj.len())
            .map(|v| {
                if v == root || dist[v] == usize::MAX {
                    return None;
                }
                self.adj[v]
                    .iter()
                    .copied()
                    .find(|&u| dist[u] + 1 == dist[v])
            })
            .collect()
    }
}

/// Node sequence from `root` to `target`, or `None` if unreachable.
fn route(parent: &[Option<usize>], root: usize, target: usize) -> Option<Vec<usize>> {
    let mut path = vec![target];
    let mut at = target;
    while at != root {
        at = parent[at]?;
        path.push(at);
    }
    path.reverse();
    Some(path)
}

fn random_addresses(rng: &mut ChaCha8Rng, n: usize) -> Vec<InterfaceAddr> {
    let mut used = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let addr = InterfaceAddr::new(rng.gen());
        if addr.is_valid() && used.insert(addr) {
            out.push(addr);
        }
    }
    out
}

struct Topology {
    graph: Graph,
    access: Vec<Vec<usize>>,
    destinations: Vec<usize>,
}

fn build(params: &TopoParams, n_destinations: usize, rng: &mut ChaCha8Rng) -> Topology {
    let mut graph = Graph::default();
    let core: Vec<usize> = (0..params.n_core).map(|_| graph.add_node()).collect();
    for i in 0..core.len() {
        graph.link(core[i], core[(i + 1) % core.len()]);
        for j in i + 2..core.len() {
            if rng.gen_bool(params.edge_prob) {
                graph.link(core[i], core[j]);
            }
        }
    }
    let access: Vec<Vec<usize>> = (0..params.n_monitors)
        .map(|_| {
            let chain = graph.chain(rng.gen_range(ACCESS_LEN.0..=ACCESS_LEN.1));
            let attach = core[rng.gen_range(0..core.len())];
            graph.link(*chain.last().unwrap(), attach);
            chain
        })
        .collect();
    let stub_ends: Vec<usize> = (0..params.n_stub)
        .map(|_| {
            let chain = graph.chain(rng.gen_range(STUB_LEN.0..=STUB_LEN.1));
            let attach = core[rng.gen_range(0..core.len())];
            graph.link(chain[0], attach);
            *chain.last().unwrap()
        })
        .collect();
    let destinations = (0..n_destinations)
        .map(|_| {
            let d = graph.add_node();
            graph.link(d, stub_ends[rng.gen_range(0..stub_ends.len())]);
            d
        })
        .collect();
    Topology {
        graph,
        access,
        destinations,
    }
}

fn monitor_ids(n: usize) -> Vec<MonitorId> {
    let width = (n.max(1) - 1).to_string().len().max(2);
    (0..n)
        .map(|i| MonitorId::new(&format!("mon{i:0width$}")).expect("valid id"))
        .collect()
}

pub fn generate(params: &TopoParams) -> Result<TraceSet> {
    generate_split(params, None)
}

/// Generates a trace set. With a split, twice the destinations are
/// created in one topology and the first (A) or second (B) half is kept.
pub fn generate_split(params: &TopoParams, split: Option<Split>) -> Result<TraceSet> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_dest_total = params.n_destinations * if split.is_some() { 2 } else { 1 };
    let topo = build(params, n_dest_total, &mut rng);
    let n_nodes = topo.graph.adj.len();
    let addrs = random_addresses(&mut rng, n_nodes);
    let dest_responds: Vec<bool> = (0..n_dest_total)
        .map(|_| rng.gen_bool(params.dest_response_rate))
        .collect();
    let kept = match split {
        None => 0..n_dest_total,
        Some(Split::A) => 0..params.n_destinations,
        Some(Split::B) => params.n_destinations..n_dest_total,
    };

    let mut set = TraceSet::new();
    for (mon, chain) in monitor_ids(params.n_monitors).into_iter().zip(&topo.access) {
        let responds: Vec<bool> = (0..n_nodes)
            .map(|_| rng.gen_bool(params.hop_response_rate))
            .collect();
        let root = chain[0];
        let parent = topo.graph.shortest_path_tree(root);
        let mut traces: Vec<Trace> = kept
            .clone()
            .map(|i| {
                let dest = topo.destinations[i];
                let nodes = route(&parent, root, dest).unwrap_or_else(|| chain.clone());
                let hops = nodes.iter().map(|&v| {
                    let up = if v == dest {
                        dest_responds[i]
                    } else {
                        responds[v]
                    };
                    if up {
                        Hop::Responding(addrs[v])
                    } else {
                        Hop::Anonymous
                    }
                });
                Trace::new(mon.clone(), addrs[dest], hops, DEFAULT_MAX_HOPS)
                    .expect("routes have at least one hop")
            })
            .collect();
        traces.sort_by_key(|t| t.destination());
        for trace in traces {
            set.insert(trace)
                .expect("destination addresses are distinct");
        }
    }
    Ok(set)
}
