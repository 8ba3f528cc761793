//! Per-node timers, load estimates and awareness levels.
//!
//! `t_a(i)` estimates, in time units, how long ago information from node `i`
//! could last have reached node `a`. Timers grow by one every time unit and
//! shrink when a contact brings fresher information: if `t_b(i) < t_a(i) -
//! t_av` then `a` adopts `t_b(i) + t_av` together with `b`'s load for `i`.
//! Nodes in range of each other are `t_av` apart.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AwarenessLevel {
    Minimal,
    Local,
    Global,
    Perfect,
}

impl AwarenessLevel {
    pub const ALL: [AwarenessLevel; 4] = [
        AwarenessLevel::Minimal,
        AwarenessLevel::Local,
        AwarenessLevel::Global,
        AwarenessLevel::Perfect,
    ];
}

impl fmt::Display for AwarenessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AwarenessLevel::Minimal => "minimal",
            AwarenessLevel::Local => "local",
            AwarenessLevel::Global => "global",
            AwarenessLevel::Perfect => "perfect",
        })
    }
}

impl FromStr for AwarenessLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AwarenessLevel::ALL
            .into_iter()
            .find(|l| l.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown awareness level `{s}`")))
    }
}

/// Another node's full timer row as last observed, for the global level.
#[derive(Clone, Debug, PartialEq)]
struct Row {
    observed_at: f64,
    timers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeStore {
    owner: NodeId,
    timers: Vec<f64>,
    loads: Vec<f64>,
    t_av: f64,
    time_unit: f64,
    radius: Option<f64>,
    rows: Option<Vec<Option<Row>>>,
}

impl KnowledgeStore {
    /// A store for `owner` among `nodes` nodes that knows only itself.
    pub fn new(owner: NodeId, nodes: usize, t_av: f64, time_unit: f64) -> Self {
        let mut timers = vec![f64::INFINITY; nodes];
        timers[owner.index()] = 0.0;
        KnowledgeStore {
            owner,
            timers,
            loads: vec![0.0; nodes],
            t_av,
            time_unit,
            radius: None,
            rows: None,
        }
    }

    /// Drop entries whose timer exceeds `radius` time units.
    pub fn with_radius(mut self, radius: Option<f64>) -> Self {
        self.radius = radius;
        self.prune();
        self
    }

    /// Also keep and gossip other nodes' timer rows.
    pub fn with_rows(mut self) -> Self {
        self.rows = Some(vec![None; self.timers.len()]);
        self
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn node_count(&self) -> usize {
        self.timers.len()
    }

    pub fn t_av(&self) -> f64 {
        self.t_av
    }

    pub fn time_unit(&self) -> f64 {
        self.time_unit
    }

    /// `t_owner(i)` in time units; infinity when unknown or pruned.
    pub fn timer(&self, i: NodeId) -> f64 {
        self.timers[i.index()]
    }

    /// `l_owner(i)` in seconds of backlog.
    pub fn load(&self, i: NodeId) -> f64 {
        self.loads[i.index()]
    }

    pub fn knows(&self, i: NodeId) -> bool {
        self.timers[i.index()].is_finite()
    }

    pub fn timers(&self) -> &[f64] {
        &self.timers
    }

    pub fn set_own_load(&mut self, load: f64) {
        self.loads[self.owner.index()] = load;
    }

    /// Test hook: overwrite an entry directly.
    pub fn set_entry(&mut self, i: NodeId, timer: f64, load: f64) {
        if i != self.owner {
            self.timers[i.index()] = timer;
        }
        self.loads[i.index()] = load;
    }

    /// Gossiped `t_i(j)` as last observed, if a row for `i` is held.
    pub fn row_timer(&self, i: NodeId, j: NodeId) -> Option<f64> {
        if i == self.owner {
            return Some(self.timer(j));
        }
        self.rows.as_ref()?[i.index()].as_ref().map(|r| r.timers[j.index()])
    }

    pub fn tick(&mut self, elapsed: f64) {
        for (i, t) in self.timers.iter_mut().enumerate() {
            if i != self.owner.index() {
                *t += elapsed;
            }
        }
        self.prune();
    }

    fn prune(&mut self) {
        if let Some(r) = self.radius {
            for (i, t) in self.timers.iter_mut().enumerate() {
                if *t > r && i != self.owner.index() {
                    *t = f64::INFINITY;
                    self.loads[i] = 0.0;
                }
            }
        }
    }

    fn absorb(&mut self, peer: NodeId, timers: &[f64], loads: &[f64]) -> bool {
        let mut changed = false;
        for i in 0..self.timers.len() {
            if i == self.owner.index() {
                continue;
            }
            if timers[i] < self.timers[i] - self.t_av {
                self.timers[i] = timers[i] + self.t_av;
                self.loads[i] = loads[i];
                changed = true;
            }
        }
        let b = peer.index();
        changed |= self.timers[b] != self.t_av;
        self.timers[b] = self.t_av;
        self.loads[b] = loads[b];
        self.prune();
        changed
    }

    fn merge_rows(&mut self, other: &KnowledgeStore, now: f64) {
        let Some(rows) = self.rows.as_mut() else { return };
        let fresh = |r: &Option<Row>| r.as_ref().map_or(f64::NEG_INFINITY, |r| r.observed_at);
        if let Some(theirs) = other.rows.as_ref() {
            for (i, row) in theirs.iter().enumerate() {
                if i != self.owner.index() && fresh(row) > fresh(&rows[i]) {
                    rows[i] = row.clone();
                }
            }
        }
        rows[other.owner.index()] = Some(Row {
            observed_at: now,
            timers: other.timers.clone(),
        });
    }

    /// Number of scalars `self` would send in one exchange.
    pub fn gossip_payload(&self) -> usize {
        let known = self.timers.iter().filter(|t| t.is_finite()).count();
        let rows = self
            .rows
            .as_ref()
            .map_or(0, |rows| rows.iter().flatten().map(|r| r.timers.iter().filter(|t| t.is_finite()).count()).sum());
        2 * known + rows
    }

    pub fn write_snapshot<W: Write>(&self, out: &mut csv::Writer<W>) -> Result<()> {
        for (i, t) in self.timers.iter().enumerate() {
            if t.is_finite() {
                out.write_record([
                    self.owner.to_string(),
                    i.to_string(),
                    t.to_string(),
                    self.loads[i].to_string(),
                ])?;
            }
        }
        Ok(())
    }
}

/// One symmetric contact exchange at time `now`. Returns whether any timer
/// changed, so callers can iterate to a fixpoint over concurrent contacts.
pub fn exchange(a: &mut KnowledgeStore, b: &mut KnowledgeStore, now: f64) -> bool {
    let (ta, la) = (a.timers.clone(), a.loads.clone());
    let (tb, lb) = (b.timers.clone(), b.loads.clone());
    let changed_a = a.absorb(b.owner, &tb, &lb);
    let changed_b = b.absorb(a.owner, &ta, &la);
    // Rows carry the peer's post-exchange timers.
    if a.rows.is_some() || b.rows.is_some() {
        let (sa, sb) = (a.clone(), b.clone());
        a.merge_rows(&sb, now);
        b.merge_rows(&sa, now);
    }
    changed_a || changed_b
}

/// Writes the `owner,peer,timer,load` header followed by every store.
pub fn write_snapshots<'a, W: Write>(out: W, stores: impl IntoIterator<Item = &'a KnowledgeStore>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["owner", "peer", "timer", "load"])?;
    for s in stores {
        s.write_snapshot(&mut w)?;
    }
    w.flush().map_err(|e| Error::io("<snapshot>", e))?;
    Ok(())
}

/// Exponential moving average of a node's pending backlog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadTracker {
    pub window: f64,
    pub alpha: f64,
    pub l_old: f64,
    pub pending_count: usize,
    pub mean_exec: f64,
}

impl LoadTracker {
    pub fn new(mean_exec: f64) -> Self {
        LoadTracker {
            window: 30.0,
            alpha: 0.5,
            l_old: 0.0,
            pending_count: 0,
            mean_exec,
        }
    }

    /// Closes a window: blends the current backlog into the average.
    pub fn update(&mut self) -> f64 {
        let l_cw = self.pending_count as f64 * self.mean_exec;
        self.l_old = self.alpha * l_cw + (1.0 - self.alpha) * self.l_old;
        self.l_old
    }

    pub fn current(&self) -> f64 {
        self.l_old
    }
}

/// Read access to every node's live state, for the perfect level.
pub trait LiveView {
    fn timer(&self, i: NodeId, j: NodeId) -> f64;
    /// Current backlog of `j` in seconds.
    fn load(&self, j: NodeId) -> f64;
}

/// `(t_hat(i -> j), l_hat(j))` as seen by the owner of `store`, in time units
/// and seconds.
pub fn estimate(
    store: &KnowledgeStore,
    level: AwarenessLevel,
    i: NodeId,
    j: NodeId,
    live: Option<&dyn LiveView>,
) -> (f64, f64) {
    let a = store.owner;
    let t = if i == j {
        0.0
    } else {
        match level {
            AwarenessLevel::Minimal => 1.0,
            _ if i == a => store.timer(j),
            _ if j == a => store.timer(i),
            AwarenessLevel::Local => store.timer(i) + store.timer(j),
            AwarenessLevel::Global => store
                .row_timer(i, j)
                .unwrap_or_else(|| store.timer(i) + store.timer(j)),
            AwarenessLevel::Perfect => live.expect("perfect awareness needs a live view").timer(i, j),
        }
    };
    let l = match level {
        AwarenessLevel::Minimal => 0.0,
        AwarenessLevel::Perfect => live.expect("perfect awareness needs a live view").load(j),
        _ if store.knows(j) || j == a => store.load(j),
        _ => 0.0,
    };
    (t, l)
}

/// Prices service-graph edges from one node's knowledge.
pub struct Estimator<'a> {
    pub store: &'a KnowledgeStore,
    pub level: AwarenessLevel,
    pub live: Option<&'a dyn LiveView>,
}

impl crate::composition::CostModel for Estimator<'_> {
    fn distance(&self, from: NodeId, to: NodeId) -> f64 {
        estimate(self.store, self.level, from, to, self.live).0
    }

    fn load(&self, node: NodeId) -> f64 {
        estimate(self.store, self.level, node, node, self.live).1 / self.store.time_unit
    }

    fn known(&self, node: NodeId) -> bool {
        match self.level {
            AwarenessLevel::Local | AwarenessLevel::Global => self.store.knows(node),
            AwarenessLevel::Minimal | AwarenessLevel::Perfect => true,
        }
    }
}
