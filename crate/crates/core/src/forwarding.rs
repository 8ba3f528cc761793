//! Single-copy relay decisions taken when a carrier meets another node.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeStore;
use crate::service::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardingScheme {
    /// Hand over only to the destination itself.
    Direct,
    /// Timer transitivity with a large per-hop constant.
    Tt,
    /// Encounter-based: hand over to nodes that meet others more often.
    Ebr,
    /// Timer rule with a small per-hop constant.
    Mt,
}

impl ForwardingScheme {
    pub const ALL: [ForwardingScheme; 4] = [
        ForwardingScheme::Direct,
        ForwardingScheme::Tt,
        ForwardingScheme::Ebr,
        ForwardingScheme::Mt,
    ];
}

impl fmt::Display for ForwardingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForwardingScheme::Direct => "direct",
            ForwardingScheme::Tt => "tt",
            ForwardingScheme::Ebr => "ebr",
            ForwardingScheme::Mt => "mt",
        })
    }
}

impl FromStr for ForwardingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ForwardingScheme::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown forwarding scheme `{s}`")))
    }
}

/// Sliding-window encounter counts for every node.
#[derive(Clone, Debug)]
pub struct EncounterStats {
    window: f64,
    seen: Vec<VecDeque<f64>>,
}

impl EncounterStats {
    pub fn new(nodes: usize, window: f64) -> Self {
        EncounterStats {
            window,
            seen: vec![VecDeque::new(); nodes],
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// Call once per contact start, for each endpoint.
    pub fn record_encounter(&mut self, node: NodeId, t: f64) {
        self.seen[node.index()].push_back(t);
        self.expire(node, t);
    }

    fn expire(&mut self, node: NodeId, now: f64) {
        let q = &mut self.seen[node.index()];
        while q.front().is_some_and(|&t| t <= now - self.window) {
            q.pop_front();
        }
    }

    /// Encounters of `node` within `(now - window, now]`.
    pub fn count(&self, node: NodeId, now: f64) -> usize {
        self.seen[node.index()]
            .iter()
            .filter(|&&t| t > now - self.window && t <= now)
            .count()
    }

    pub fn rate(&self, node: NodeId, now: f64) -> f64 {
        self.count(node, now) as f64 / self.window
    }
}

/// Whether `carrier` should hand a request addressed to `destination` over
/// to `candidate`. Called after the two stores have gossiped. A pair that
/// just met satisfies `t_cand + t_av <= t_carrier` exactly when the carrier
/// adopted the candidate's fresher timer, so the check matches comparing
/// `t_cand < t_carrier - t_av` before gossip, and in a connected group it
/// walks the request down the timer gradient. `t_av` is the carrier's.
pub fn should_relay(
    scheme: ForwardingScheme,
    candidate: NodeId,
    destination: NodeId,
    carrier_store: &KnowledgeStore,
    candidate_store: &KnowledgeStore,
    stats: &EncounterStats,
    now: f64,
) -> bool {
    if candidate == destination {
        return true;
    }
    match scheme {
        ForwardingScheme::Direct => false,
        ForwardingScheme::Tt | ForwardingScheme::Mt => {
            let t = candidate_store.timer(destination);
            t.is_finite() && t + carrier_store.t_av() <= carrier_store.timer(destination)
        }
        ForwardingScheme::Ebr => {
            stats.count(candidate, now) > stats.count(carrier_store.owner(), now)
        }
    }
}

/// `time,request_id,from,to,reason`
pub fn transfer_line(time: f64, request: u64, from: NodeId, to: NodeId, reason: &str) -> String {
    format!("{time},{request},{from},{to},{reason}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{ContactEvent, ContactTrace};
    use crate::knowledge::exchange;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn store(owner: u32, t_av: f64, dest: u32, timer: f64) -> KnowledgeStore {
        let mut s = KnowledgeStore::new(n(owner), 5, t_av, 30.0);
        s.set_entry(n(dest), timer, 0.0);
        s
    }

    #[test]
    fn direct_only_to_destination() {
        let stats = EncounterStats::new(5, 600.0);
        let a = store(0, 1.0, 4, 50.0);
        let b = store(1, 1.0, 4, 1.0);
        assert!(!should_relay(ForwardingScheme::Direct, n(1), n(4), &a, &b, &stats, 0.0));
        assert!(should_relay(ForwardingScheme::Direct, n(4), n(4), &a, &b, &stats, 0.0));
    }

    #[test]
    fn timer_rule() {
        let stats = EncounterStats::new(5, 600.0);
        let a = store(0, 10.0, 4, 40.0);
        let b = store(1, 10.0, 4, 10.0);
        assert!(should_relay(ForwardingScheme::Tt, n(1), n(4), &a, &b, &stats, 0.0));
        let b = store(1, 10.0, 4, 35.0);
        assert!(!should_relay(ForwardingScheme::Tt, n(1), n(4), &a, &b, &stats, 0.0));
    }

    #[test]
    fn unknown_destination_never_relays() {
        let stats = EncounterStats::new(5, 600.0);
        let a = KnowledgeStore::new(n(0), 5, 1.0, 30.0);
        let b = KnowledgeStore::new(n(1), 5, 1.0, 30.0);
        assert!(!should_relay(ForwardingScheme::Mt, n(1), n(4), &a, &b, &stats, 0.0));
        let b = store(1, 1.0, 4, 3.0);
        assert!(should_relay(ForwardingScheme::Mt, n(1), n(4), &a, &b, &stats, 0.0));
    }

    #[test]
    fn timer_rule_ignores_common_offset() {
        let stats = EncounterStats::new(5, 600.0);
        for (ta, tb) in [(40.0, 10.0), (12.0, 11.5), (7.0, 2.0), (3.0, 2.5)] {
            let base = should_relay(
                ForwardingScheme::Mt,
                n(1),
                n(4),
                &store(0, 1.0, 4, ta),
                &store(1, 1.0, 4, tb),
                &stats,
                0.0,
            );
            for c in [0.5, 4.0, 100.0] {
                let shifted = should_relay(
                    ForwardingScheme::Mt,
                    n(1),
                    n(4),
                    &store(0, 1.0, 4, ta + c),
                    &store(1, 1.0, 4, tb + c),
                    &stats,
                    0.0,
                );
                assert_eq!(base, shifted);
            }
        }
    }

    #[test]
    fn encounter_window() {
        let mut s = EncounterStats::new(3, 600.0);
        for t in [10.0, 20.0, 30.0] {
            s.record_encounter(n(0), t);
        }
        assert_eq!(s.count(n(0), 100.0), 3);
        assert_eq!(s.rate(n(0), 100.0), 3.0 / 600.0);
        assert_eq!(s.count(n(0), 615.0), 2);
        assert_eq!(s.count(n(0), 700.0), 0);
    }

    #[test]
    fn encounter_comparison_flips_after_burst() {
        let mut s = EncounterStats::new(2, 600.0);
        let a = KnowledgeStore::new(n(0), 5, 1.0, 30.0);
        let b = KnowledgeStore::new(n(1), 5, 1.0, 30.0);
        s.record_encounter(n(0), 0.0);
        s.record_encounter(n(0), 10.0);
        s.record_encounter(n(1), 20.0);
        // Node 0 meets more nodes, so it keeps the request.
        assert!(!should_relay(ForwardingScheme::Ebr, n(1), n(3), &a, &b, &s, 30.0));
        for t in [40.0, 50.0, 60.0] {
            s.record_encounter(n(1), t);
        }
        assert!(should_relay(ForwardingScheme::Ebr, n(1), n(3), &a, &b, &s, 70.0));
    }

    /// Replays a contact script with per-unit ticks, moving one message under
    /// `scheme`. Returns the delivery time, if any.
    fn replay(scheme: ForwardingScheme, trace: &ContactTrace, src: u32, dst: u32) -> Option<f64> {
        let nodes = trace.node_count();
        let mut stores: Vec<_> = (0..nodes).map(|i| KnowledgeStore::new(NodeId::from(i), nodes, 1.0, 30.0)).collect();
        let mut stats = EncounterStats::new(nodes, 600.0);
        let mut holder = n(src);
        let steps = (trace.duration() / 30.0) as usize;
        for k in 1..=steps {
            let t = k as f64 * 30.0;
            for s in &mut stores {
                s.tick(1.0);
            }
            let active: Vec<ContactEvent> = trace.events().iter().copied().filter(|e| e.covers(t)).collect();
            for e in &active {
                if e.start == t {
                    stats.record_encounter(e.a, t);
                    stats.record_encounter(e.b, t);
                }
                let (lo, hi) = stores.split_at_mut(e.b.index());
                exchange(&mut lo[e.a.index()], &mut hi[0], t);
            }
            let mut moved = true;
            while moved {
                moved = false;
                for e in &active {
                    let other = if e.a == holder {
                        e.b
                    } else if e.b == holder {
                        e.a
                    } else {
                        continue;
                    };
                    if should_relay(scheme, other, n(dst), &stores[holder.index()], &stores[other.index()], &stats, t) {
                        holder = other;
                        moved = true;
                    }
                    if holder == n(dst) {
                        return Some(t);
                    }
                }
            }
        }
        None
    }

    #[test]
    fn timer_relay_delivers_where_direct_cannot() {
        // Node 4 is the destination and never meets the source 0. Word of
        // 4 spreads down the chain 3, 2, 1 and reaches 0 at 330. Later
        // meetings with 4 refresh the timers the carriers follow back.
        let ev = |a, b, t: f64| ContactEvent::new(n(a), n(b), t, t + 30.0);
        let trace = ContactTrace::new(
            vec![
                ev(4, 3, 60.0),
                ev(3, 2, 150.0),
                ev(2, 1, 240.0),
                ev(1, 0, 330.0),
                ev(4, 3, 390.0),
                ev(3, 2, 420.0),
                ev(2, 1, 480.0),
                ev(4, 3, 510.0),
                ev(2, 3, 570.0),
                ev(3, 4, 630.0),
            ],
            5,
            900.0,
        );
        assert_eq!(replay(ForwardingScheme::Direct, &trace, 0, 4), None);
        assert_eq!(replay(ForwardingScheme::Mt, &trace, 0, 4), Some(630.0));
    }
}
