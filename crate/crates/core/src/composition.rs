//! Service graph construction and composition selection.
//!
//! Vertices are `(service, node)` pairs for every known hosted copy plus one
//! `(type, owner)` vertex per data type. Edges run from the owner's input
//! type to services consuming it, between chainable services, and from
//! services producing a type back to the owner's vertex for that type.
//! Entering a service costs the temporal distance to its host plus the
//! host's load; returning a result costs the temporal distance only.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::service::{IoType, NodeId, Service, ServicePlacement};

/// Edge pricing, in time units.
pub trait CostModel {
    /// Estimated temporal distance from `from` to `to`; infinity if unknown.
    fn distance(&self, from: NodeId, to: NodeId) -> f64;
    /// Estimated load at `node`, already converted to time units.
    fn load(&self, node: NodeId) -> f64;
    /// Whether services on `node` are visible at all.
    fn known(&self, _node: NodeId) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Include host loads in edge costs.
    pub load_aware: bool,
    /// Only accept a single service matching the whole request.
    pub exact_only: bool,
}

impl GraphOptions {
    pub fn load_aware() -> Self {
        GraphOptions {
            load_aware: true,
            exact_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Vertex {
    /// Index into [`ServiceGraph::services`].
    Service(usize),
    /// A data type entering or leaving at the owner.
    Type(IoType),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: Vertex,
    pub to: Vertex,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct ServiceGraph {
    /// Node holding the request input.
    pub origin: NodeId,
    /// Node the final result must reach.
    pub home: NodeId,
    pub services: Vec<(Service, NodeId)>,
    pub types: Vec<IoType>,
    /// Cost of entering each service vertex from the origin; `None` if
    /// unreachable.
    enter: Vec<Option<f64>>,
    /// `next[u]` lists `(v, cost)` for chainable services.
    next: Vec<Vec<(usize, f64)>>,
    /// Cost of returning each service's output home.
    leave: Vec<Option<f64>>,
    rank: Vec<u32>,
    exact_only: bool,
}

impl ServiceGraph {
    /// Graph at `owner` for requests it originates.
    pub fn build(owner: NodeId, placement: &ServicePlacement, cost: &dyn CostModel, opts: GraphOptions) -> Self {
        Self::build_for(owner, owner, placement, cost, opts)
    }

    /// Graph at `origin`, the current holder of a request whose result
    /// must return to `home`.
    pub fn build_for(
        origin: NodeId,
        home: NodeId,
        placement: &ServicePlacement,
        cost: &dyn CostModel,
        opts: GraphOptions,
    ) -> Self {
        let services: Vec<(Service, NodeId)> = placement
            .instances()
            .filter(|&(_, n)| n == origin || n == home || cost.known(n))
            .collect();
        let mut types: Vec<IoType> = services.iter().flat_map(|(s, _)| [s.input, s.output]).collect();
        types.sort();
        types.dedup();

        let nodes = placement.node_count();
        let mut dist: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        let mut d = |a: NodeId, b: NodeId| -> f64 {
            if a == b {
                0.0
            } else {
                *dist.entry((a, b)).or_insert_with(|| cost.distance(a, b))
            }
        };
        let load = |n: NodeId| if opts.load_aware { cost.load(n) } else { 0.0 };
        let finite = |c: f64| c.is_finite().then_some(c);

        let enter = services.iter().map(|&(_, n)| finite(d(origin, n) + load(n))).collect();
        let leave = services.iter().map(|&(_, n)| finite(d(n, home))).collect();
        let next = services
            .iter()
            .map(|&(s, u)| {
                services
                    .iter()
                    .enumerate()
                    .filter(|(_, (t, _))| t.input == s.output)
                    .filter_map(|(j, &(_, v))| finite(d(u, v) + load(v)).map(|c| (j, c)))
                    .collect()
            })
            .collect();
        ServiceGraph {
            origin,
            home,
            services,
            types,
            enter,
            next,
            leave,
            rank: (0..nodes as u32).collect(),
            exact_only: opts.exact_only,
        }
    }

    /// Replaces the node order used to break ties between equal paths.
    pub fn with_rank(mut self, rank: Vec<u32>) -> Self {
        self.rank = rank;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.services.len() + self.types.len()
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (i, &(s, _)) in self.services.iter().enumerate() {
            if let Some(c) = self.enter[i] {
                out.push(Edge {
                    from: Vertex::Type(s.input),
                    to: Vertex::Service(i),
                    cost: c,
                });
            }
            for &(j, c) in &self.next[i] {
                out.push(Edge {
                    from: Vertex::Service(i),
                    to: Vertex::Service(j),
                    cost: c,
                });
            }
            if let Some(c) = self.leave[i] {
                out.push(Edge {
                    from: Vertex::Service(i),
                    to: Vertex::Type(s.output),
                    cost: c,
                });
            }
        }
        out
    }

    pub fn edge_cost(&self, from: (Service, NodeId), to: (Service, NodeId)) -> Option<f64> {
        let i = self.services.iter().position(|&v| v == from)?;
        let j = self.services.iter().position(|&v| v == to)?;
        self.next[i].iter().find(|(k, _)| *k == j).map(|&(_, c)| c)
    }

    fn key(&self, i: usize) -> (Service, u32) {
        let (s, n) = self.services[i];
        (s, self.rank.get(n.index()).copied().unwrap_or(n.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionPath {
    pub input: IoType,
    pub output: IoType,
    pub stages: Vec<(Service, NodeId)>,
    /// Estimated total cost in time units.
    pub cost: f64,
}

impl CompositionPath {
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (k, (svc, n)) in self.stages.iter().enumerate() {
            if k > 0 {
                s.push(';');
            }
            let _ = write!(s, "{svc}@{n}");
        }
        s
    }
}

#[derive(Clone, Debug)]
struct Label {
    cost: f64,
    stages: usize,
    key: Vec<(Service, u32)>,
    prev: Option<usize>,
}

fn cmp_labels(a: &Label, b: &Label) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.stages.cmp(&b.stages))
        .then_with(|| a.key.cmp(&b.key))
}

/// Cheapest paths from `input` at the origin to every reachable output type.
///
/// Ties are broken by fewer stages, then by the cheaper return leg, then by
/// the `(service, node rank)` sequence.
pub fn dijkstra_reuse(graph: &ServiceGraph, input: IoType) -> BTreeMap<IoType, CompositionPath> {
    let n = graph.services.len();
    let mut label: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    for (i, &(s, _)) in graph.services.iter().enumerate() {
        if s.input == input {
            if let Some(c) = graph.enter[i] {
                label[i] = Some(Label {
                    cost: c,
                    stages: 1,
                    key: vec![graph.key(i)],
                    prev: None,
                });
            }
        }
    }
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if done[i] {
                continue;
            }
            if let Some(l) = &label[i] {
                if best.is_none_or(|b| cmp_labels(l, label[b].as_ref().unwrap()) == Ordering::Less) {
                    best = Some(i);
                }
            }
        }
        let Some(u) = best else { break };
        done[u] = true;
        if graph.exact_only {
            continue;
        }
        let lu = label[u].clone().unwrap();
        for &(v, c) in &graph.next[u] {
            if done[v] {
                continue;
            }
            let mut key = lu.key.clone();
            key.push(graph.key(v));
            let cand = Label {
                cost: lu.cost + c,
                stages: lu.stages + 1,
                key,
                prev: Some(u),
            };
            if label[v]
                .as_ref()
                .is_none_or(|l| cmp_labels(&cand, l) == Ordering::Less)
            {
                label[v] = Some(cand);
            }
        }
    }

    let mut best: BTreeMap<IoType, (f64, usize, f64, Vec<(Service, u32)>, usize)> = BTreeMap::new();
    for u in 0..n {
        let (Some(l), Some(back)) = (&label[u], graph.leave[u]) else {
            continue;
        };
        let out = graph.services[u].0.output;
        if out == input {
            continue;
        }
        let cand = (l.cost + back, l.stages, back, l.key.clone(), u);
        let better = match best.get(&out) {
            None => true,
            Some(cur) => cand
                .0
                .total_cmp(&cur.0)
                .then(cand.1.cmp(&cur.1))
                .then(cand.2.total_cmp(&cur.2))
                .then_with(|| cand.3.cmp(&cur.3))
                == Ordering::Less,
        };
        if better {
            best.insert(out, cand);
        }
    }
    best.into_iter()
        .map(|(out, (cost, _, _, _, last))| {
            let mut stages = Vec::new();
            let mut at = Some(last);
            while let Some(i) = at {
                stages.push(graph.services[i]);
                at = label[i].as_ref().unwrap().prev;
            }
            stages.reverse();
            (
                out,
                CompositionPath {
                    input,
                    output: out,
                    stages,
                    cost,
                },
            )
        })
        .collect()
}

pub fn select_composition(graph: &ServiceGraph, input: IoType, output: IoType) -> Option<CompositionPath> {
    dijkstra_reuse(graph, input).remove(&output)
}

/// A request in progress, as seen by whoever currently holds it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub id: u64,
    /// Type of the data carried right now.
    pub input: IoType,
    pub output: IoType,
    pub requester: NodeId,
    pub deadline: f64,
    pub hops: u32,
    /// `(service, host, opportunistic)` for every stage run so far.
    pub executed: Vec<(Service, NodeId, bool)>,
}

impl PendingRequest {
    pub fn is_transformed(&self) -> bool {
        self.input == self.output
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NextHop {
    Stage { service: Service, host: NodeId },
    Home(NodeId),
}

/// Where the holder of `pending` should send it next, with the path that
/// decision came from. `None` means no path is known yet.
pub fn next_destination(
    holder: NodeId,
    pending: &PendingRequest,
    placement: &ServicePlacement,
    cost: &dyn CostModel,
    opts: GraphOptions,
    rank: Option<Vec<u32>>,
) -> Option<(NextHop, Option<CompositionPath>)> {
    if pending.is_transformed() {
        return Some((NextHop::Home(pending.requester), None));
    }
    let mut g = ServiceGraph::build_for(holder, pending.requester, placement, cost, opts);
    if let Some(r) = rank {
        g = g.with_rank(r);
    }
    let path = select_composition(&g, pending.input, pending.output)?;
    let (service, host) = path.stages[0];
    Some((NextHop::Stage { service, host }, Some(path)))
}

/// `time,node,request_id,chosen_path,estimated_cost`
pub fn audit_line(time: f64, node: NodeId, request: u64, path: &CompositionPath) -> String {
    format!("{time},{node},{request},{},{}", path.describe(), path.cost)
}
