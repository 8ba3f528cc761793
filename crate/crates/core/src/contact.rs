//! Contact extraction and temporal reachability.
//!
//! Two nodes are in contact at a sample when their distance is at most the
//! transmission range. Consecutive in-range samples merge into one event
//! `[start, end]` spanning those sample times; a pair in range at a single
//! isolated sample yields an instantaneous event with `start == end`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{Point, PositionTrace};
use crate::service::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub a: NodeId,
    pub b: NodeId,
    pub start: f64,
    pub end: f64,
}

impl ContactEvent {
    /// Normalises the pair so that `a < b`.
    pub fn new(a: NodeId, b: NodeId, start: f64, end: f64) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        ContactEvent { a, b, start, end }
    }

    pub fn covers(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactTrace {
    events: Vec<ContactEvent>,
    nodes: usize,
    duration: f64,
    by_pair: BTreeMap<(NodeId, NodeId), Vec<usize>>,
}

impl ContactTrace {
    pub fn new(mut events: Vec<ContactEvent>, nodes: usize, duration: f64) -> Self {
        for e in &mut events {
            *e = ContactEvent::new(e.a, e.b, e.start, e.end);
        }
        events.sort_by(|x, y| {
            x.start
                .total_cmp(&y.start)
                .then(x.a.cmp(&y.a))
                .then(x.b.cmp(&y.b))
        });
        let mut by_pair: BTreeMap<(NodeId, NodeId), Vec<usize>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            by_pair.entry((e.a, e.b)).or_default().push(i);
        }
        ContactTrace {
            events,
            nodes,
            duration,
            by_pair,
        }
    }

    pub fn events(&self) -> &[ContactEvent] {
        &self.events
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn pair_events(&self, a: NodeId, b: NodeId) -> impl Iterator<Item = &ContactEvent> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.by_pair
            .get(&key)
            .into_iter()
            .flatten()
            .map(move |&i| &self.events[i])
    }

    pub fn in_contact(&self, a: NodeId, b: NodeId, t: f64) -> bool {
        if a == b {
            return false;
        }
        let key = if a <= b { (a, b) } else { (b, a) };
        let Some(idx) = self.by_pair.get(&key) else {
            return false;
        };
        // Per-pair events are disjoint and sorted by start.
        let i = idx.partition_point(|&i| self.events[i].start <= t);
        i > 0 && self.events[idx[i - 1]].covers(t)
    }

    /// Elapsed time since the freshest information leaving `source` could
    /// have reached `target` by time `t` through instantaneous relays over
    /// the contacts, or infinity if it never could.
    pub fn temporal_distance(&self, source: NodeId, target: NodeId, t: f64) -> f64 {
        self.temporal_distance_with_hops(source, target, t)
            .map_or(f64::INFINITY, |(d, _)| d)
    }

    /// Like [`temporal_distance`](Self::temporal_distance), also returning
    /// the fewest relay hops among the freshest contact sequences.
    pub fn temporal_distance_with_hops(&self, source: NodeId, target: NodeId, t: f64) -> Option<(f64, u32)> {
        if source == target {
            return Some((0.0, 0));
        }
        let labels = self.freshness(source, t);
        labels[target.index()].map(|(f, h)| (t - f, h))
    }

    /// For every node, the departure time of the freshest copy of `source`'s
    /// information it holds at time `t`, with the hop count of that copy.
    pub fn freshness(&self, source: NodeId, t: f64) -> Vec<Option<(f64, u32)>> {
        let n = self.nodes.max(source.index() + 1);
        let mut label: Vec<Option<(f64, u32)>> = vec![None; n];
        let mut points: Vec<f64> = self
            .events
            .iter()
            .flat_map(|e| [e.start, e.end])
            .filter(|&x| x <= t)
            .collect();
        points.push(t);
        points.sort_by(f64::total_cmp);
        points.dedup();

        let better = |x: (f64, u32), y: Option<(f64, u32)>| match y {
            None => true,
            Some(y) => x.0 > y.0 || (x.0 == y.0 && x.1 < y.1),
        };
        let mut next = 0;
        let mut active: Vec<usize> = Vec::new();
        for tau in points {
            while next < self.events.len() && self.events[next].start <= tau {
                active.push(next);
                next += 1;
            }
            active.retain(|&i| self.events[i].end >= tau);
            label[source.index()] = Some((tau, 0));
            loop {
                let mut changed = false;
                for &i in &active {
                    let e = &self.events[i];
                    for (u, v) in [(e.a, e.b), (e.b, e.a)] {
                        if let Some((f, h)) = label[u.index()] {
                            if v != source && better((f, h + 1), label[v.index()]) {
                                label[v.index()] = Some((f, h + 1));
                                changed = true;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        label
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_a", "node_b", "start_s", "end_s"])?;
        for e in &self.events {
            w.write_record([e.a.to_string(), e.b.to_string(), e.start.to_string(), e.end.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<contacts>", e))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, path)
    }

    /// Reads `node_a,node_b,start_s,end_s`. The node count is one past the
    /// largest id and the duration is the latest end time.
    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut events = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            if rec.len() != 4 {
                return Err(Error::parse(origin, line, format!("expected 4 fields, got {}", rec.len())));
            }
            let id = |j: usize| -> Result<NodeId> {
                rec[j]
                    .trim()
                    .parse::<u32>()
                    .map(NodeId)
                    .map_err(|e| Error::parse(origin, line, format!("node id: {e}")))
            };
            let time = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(origin, line, format!("time: {e}")))
            };
            let e = ContactEvent::new(id(0)?, id(1)?, time(2)?, time(3)?);
            if e.a == e.b || e.end < e.start {
                return Err(Error::parse(origin, line, "contact must join two nodes with start <= end"));
            }
            events.push(e);
        }
        let nodes = events.iter().map(|e| e.b.index() + 1).max().unwrap_or(0);
        let duration = events.iter().map(|e| e.end).fold(0.0, f64::max);
        Ok(ContactTrace::new(events, nodes, duration))
    }
}

/// In-range pairs at one sample, bucketed on a grid of `range`-sized cells.
fn pairs_in_range(positions: &[Option<Point>], range: f64) -> Vec<(usize, usize)> {
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (n, p) in positions.iter().enumerate() {
        if let Some(p) = p {
            let cell = ((p.x / range).floor() as i64, (p.y / range).floor() as i64);
            grid.entry(cell).or_default().push(n);
        }
    }
    let mut out = Vec::new();
    for (n, p) in positions.iter().enumerate() {
        let Some(p) = p else { continue };
        let (cx, cy) = ((p.x / range).floor() as i64, (p.y / range).floor() as i64);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(members) = grid.get(&(cx + dx, cy + dy)) {
                    for &m in members {
                        if m > n && p.distance(positions[m].expect("bucketed nodes are present")) <= range {
                            out.push((n, m));
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

fn pairs_in_range_naive(positions: &[Option<Point>], range: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (n, p) in positions.iter().enumerate() {
        for (m, q) in positions.iter().enumerate().skip(n + 1) {
            if let (Some(p), Some(q)) = (p, q) {
                if p.distance(*q) <= range {
                    out.push((n, m));
                }
            }
        }
    }
    out
}

/// Seconds since the freshest news of `source` could have reached `target`
/// by `t`; infinity if none could.
pub fn contact_sequence_oracle(contacts: &ContactTrace, source: NodeId, target: NodeId, t: f64) -> f64 {
    contacts.temporal_distance(source, target, t)
}

pub fn contacts_from_positions(trace: &PositionTrace, range: f64) -> ContactTrace {
    extract(trace, range, pairs_in_range)
}

/// Reference implementation with an all-pairs scan per sample.
pub fn contacts_from_positions_naive(trace: &PositionTrace, range: f64) -> ContactTrace {
    extract(trace, range, pairs_in_range_naive)
}

fn extract(
    trace: &PositionTrace,
    range: f64,
    pairs: fn(&[Option<Point>], f64) -> Vec<(usize, usize)>,
) -> ContactTrace {
    let nodes = trace.node_count();
    let samples = trace.sample_count();
    let mut open: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut events = Vec::new();
    let mut column = vec![None; nodes];
    for k in 0..samples {
        for (n, slot) in column.iter_mut().enumerate() {
            *slot = trace.positions[n][k];
        }
        let t = trace.time(k);
        let now = pairs(&column, range);
        let mut still: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for pair in now {
            let start = open.remove(&pair).map_or(t, |(s, _)| s);
            still.insert(pair, (start, t));
        }
        for ((a, b), (s, e)) in std::mem::replace(&mut open, still) {
            events.push(ContactEvent::new(NodeId::from(a), NodeId::from(b), s, e));
        }
    }
    for ((a, b), (s, e)) in open {
        events.push(ContactEvent::new(NodeId::from(a), NodeId::from(b), s, e));
    }
    ContactTrace::new(events, nodes, trace.duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{generate_levy, Area, LevyWalkParams};

    fn stationary(points: &[Point], duration: f64) -> PositionTrace {
        let samples = crate::mobility::sample_count(duration, 30.0);
        PositionTrace {
            area: Area::square(1000.0),
            sample_interval: 30.0,
            duration,
            positions: points.iter().map(|p| vec![Some(*p); samples]).collect(),
        }
    }

    fn ev(a: u32, b: u32, s: f64, e: f64) -> ContactEvent {
        ContactEvent::new(NodeId(a), NodeId(b), s, e)
    }

    #[test]
    fn close_stationary_pair_is_one_event() {
        let trace = stationary(&[Point::new(0.0, 0.0), Point::new(50.0, 0.0)], 600.0);
        let c = contacts_from_positions(&trace, 100.0);
        assert_eq!(c.events(), &[ev(0, 1, 0.0, 600.0)]);
    }

    #[test]
    fn distant_stationary_pair_never_meets() {
        let trace = stationary(&[Point::new(0.0, 0.0), Point::new(150.0, 0.0)], 600.0);
        assert!(contacts_from_positions(&trace, 100.0).events().is_empty());
    }

    #[test]
    fn crossing_nodes_in_range_for_three_samples() {
        // Walker offsets -150, -75, 0, 75, 150, 225: in range at 30, 60, 90.
        let samples = 6;
        let walker: Vec<Option<Point>> = (0..samples)
            .map(|k| Some(Point::new(-150.0 + 2.5 * 30.0 * k as f64 + 500.0, 500.0)))
            .collect();
        let trace = PositionTrace {
            area: Area::square(1000.0),
            sample_interval: 30.0,
            duration: 150.0,
            positions: vec![vec![Some(Point::new(500.0, 500.0)); samples], walker],
        };
        let c = contacts_from_positions(&trace, 100.0);
        assert_eq!(c.events(), &[ev(0, 1, 30.0, 90.0)]);
        assert_eq!(c.events()[0].end - c.events()[0].start, 2.0 * 30.0);
    }

    #[test]
    fn grid_matches_naive_scan() {
        let mut p = LevyWalkParams::default();
        p.area = Area::square(400.0);
        for seed in 0..3 {
            let trace = generate_levy(&p, 20, 7200.0, 30.0, seed).unwrap();
            assert_eq!(
                contacts_from_positions(&trace, 100.0),
                contacts_from_positions_naive(&trace, 100.0)
            );
        }
    }

    #[test]
    fn in_contact_matches_positions() {
        let mut p = LevyWalkParams::default();
        p.area = Area::square(400.0);
        let trace = generate_levy(&p, 20, 3600.0, 30.0, 11).unwrap();
        let c = contacts_from_positions(&trace, 100.0);
        for k in 0..trace.sample_count() {
            let t = trace.time(k);
            for a in 0..20 {
                for b in 0..20 {
                    let near = a != b
                        && trace.at(a, k).unwrap().distance(trace.at(b, k).unwrap()) <= 100.0;
                    assert_eq!(c.in_contact(NodeId::from(a), NodeId::from(b), t), near);
                    assert_eq!(
                        c.in_contact(NodeId::from(a), NodeId::from(b), t),
                        c.in_contact(NodeId::from(b), NodeId::from(a), t)
                    );
                }
            }
        }
    }

    #[test]
    fn in_contact_inside_and_between_events() {
        let c = ContactTrace::new(vec![ev(0, 1, 0.0, 60.0), ev(0, 1, 120.0, 180.0)], 2, 200.0);
        assert!(c.in_contact(NodeId(0), NodeId(1), 30.0));
        assert!(!c.in_contact(NodeId(1), NodeId(0), 90.0));
        assert!(c.in_contact(NodeId(1), NodeId(0), 180.0));
    }

    #[test]
    fn events_are_disjoint_and_maximal() {
        let mut p = LevyWalkParams::default();
        p.area = Area::square(300.0);
        let trace = generate_levy(&p, 20, 7200.0, 30.0, 2).unwrap();
        let c = contacts_from_positions(&trace, 100.0);
        for a in 0..20u32 {
            for b in (a + 1)..20 {
                let evs: Vec<_> = c.pair_events(NodeId(a), NodeId(b)).collect();
                for w in evs.windows(2) {
                    // A gap of at least one full sample separates events.
                    assert!(w[1].start - w[0].end >= 60.0 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn oracle_basic_cases() {
        let c = ContactTrace::new(vec![ev(0, 1, 0.0, 300.0)], 3, 300.0);
        assert_eq!(c.temporal_distance(NodeId(0), NodeId(1), 120.0), 0.0);
        assert_eq!(c.temporal_distance(NodeId(0), NodeId(2), 120.0), f64::INFINITY);
        let none = ContactTrace::new(vec![], 2, 100.0);
        assert_eq!(none.temporal_distance(NodeId(0), NodeId(1), 50.0), f64::INFINITY);
    }

    #[test]
    fn oracle_relay_chain() {
        let c = ContactTrace::new(vec![ev(0, 1, 100.0, 100.0), ev(1, 2, 200.0, 200.0)], 3, 300.0);
        assert_eq!(
            c.temporal_distance_with_hops(NodeId(0), NodeId(2), 300.0),
            Some((200.0, 2))
        );
        // Reverse direction needs b-c before a-b, which never happens.
        assert_eq!(c.temporal_distance(NodeId(2), NodeId(0), 300.0), f64::INFINITY);
    }

    #[test]
    fn contact_csv_round_trip() {
        let c = ContactTrace::new(vec![ev(2, 0, 0.0, 30.0), ev(1, 2, 60.0, 60.0)], 3, 60.0);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("node_a,node_b,start_s,end_s\n"));
        let back = ContactTrace::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn script() -> impl Strategy<Value = Vec<(u32, u32, u32, u32)>> {
            prop::collection::vec((0u32..5, 0u32..5, 0u32..20, 0u32..3), 0..12)
        }

        fn build(raw: &[(u32, u32, u32, u32)]) -> ContactTrace {
            let events = raw
                .iter()
                .filter(|(a, b, _, _)| a != b)
                .map(|&(a, b, s, len)| ev(a, b, s as f64 * 30.0, (s + len) as f64 * 30.0))
                .collect();
            ContactTrace::new(events, 5, 700.0)
        }

        proptest! {
            #[test]
            fn adding_contacts_never_increases_distance(base in script(), extra in script(), t in 0u32..24) {
                let small = build(&base);
                let mut all = base.clone();
                all.extend(extra);
                let big = build(&all);
                let t = t as f64 * 30.0;
                for s in 0..5 {
                    for d in 0..5 {
                        prop_assert!(
                            big.temporal_distance(NodeId(s), NodeId(d), t)
                                <= small.temporal_distance(NodeId(s), NodeId(d), t)
                        );
                    }
                }
            }
        }
    }
}
