use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, Exp};

use super::config::SimConfig;
use super::records::{NodeStats, RequestRecord, RequestStatus, RunResult, StageRecord};
use crate::composition::{audit_line, next_destination, CompositionPath, GraphOptions, NextHop, PendingRequest};
use crate::contact::ContactTrace;
use crate::error::{Error, Result};
use crate::forwarding::{should_relay, transfer_line, EncounterStats, ForwardingScheme};
use crate::knowledge::{exchange, AwarenessLevel, Estimator, KnowledgeStore, LiveView, LoadTracker};
use crate::rng::{stream, SimRng, Stream};
use crate::service::{IoType, NodeId, Service, ServicePlacement};

/// Same-time events run in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Tick,
    ContactUp,
    LoadWindow,
    ServiceDone,
    Arrival,
    Deadline,
    ContactDown,
}

#[derive(Clone, Copy, Debug)]
enum Payload {
    None,
    Pair(u32, u32),
    Done { node: u32, token: u64 },
    Arrival { node: u32, input: IoType, output: IoType },
    Request(usize),
}

#[derive(Debug)]
struct Event {
    time: f64,
    kind: Kind,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Target {
    Stage { service: Service, host: NodeId },
    Home,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Place {
    Queued { node: NodeId, service: Service, opportunistic: bool },
    Executing { node: NodeId, service: Service, opportunistic: bool },
    Carried { holder: NodeId, target: Target },
    Waiting { holder: NodeId },
    Finished,
}

struct Req {
    input: IoType,
    pending: PendingRequest,
    created: f64,
    place: Place,
    status: RequestStatus,
    completed: Option<f64>,
    estimated_cost: Option<f64>,
    plan: Option<CompositionPath>,
}

struct Live<'a> {
    stores: &'a [KnowledgeStore],
    backlog: Vec<f64>,
}

impl LiveView for Live<'_> {
    fn timer(&self, i: NodeId, j: NodeId) -> f64 {
        self.stores[i.index()].timer(j)
    }

    fn load(&self, j: NodeId) -> f64 {
        self.backlog[j.index()]
    }
}

pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    contacts: &'a ContactTrace,
    placement: ServicePlacement,
    n: usize,
    duration: f64,
    opts: GraphOptions,
    stores: Vec<KnowledgeStore>,
    routing: Option<Vec<KnowledgeStore>>,
    stats: EncounterStats,
    trackers: Vec<LoadTracker>,
    load_sum: Vec<f64>,
    load_windows: u64,
    queues: Vec<VecDeque<usize>>,
    executing: Vec<Option<usize>>,
    tokens: Vec<u64>,
    executed: Vec<u64>,
    neighbors: Vec<BTreeSet<u32>>,
    pairs: BTreeSet<(u32, u32)>,
    reqs: Vec<Req>,
    carried: BTreeSet<usize>,
    waiting: BTreeSet<usize>,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    exec_rng: SimRng,
    tie_rng: SimRng,
    transfers: u64,
    decisions: Vec<String>,
    transfer_log: Vec<String>,
}

/// One service execution: exponential with mean `mean_s`, or exactly
/// `mean_s` when `deterministic`.
pub fn execution_time<R: Rng + ?Sized>(mean_s: f64, deterministic: bool, rng: &mut R) -> f64 {
    if deterministic {
        mean_s
    } else {
        Exp::new(1.0 / mean_s).expect("mean must be positive").sample(rng)
    }
}

/// Runs one simulation, drawing the placement from the config seed.
pub fn run(cfg: &SimConfig, contacts: &ContactTrace) -> Result<RunResult> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let placement = cfg.placement(&catalog, contacts.node_count())?;
    run_with_placement(cfg, contacts, placement)
}

pub fn run_with_placement(cfg: &SimConfig, contacts: &ContactTrace, placement: ServicePlacement) -> Result<RunResult> {
    cfg.validate()?;
    if placement.node_count() != contacts.node_count() {
        return Err(Error::Config(format!(
            "placement covers {} nodes but the contact trace has {}",
            placement.node_count(),
            contacts.node_count()
        )));
    }
    let mut sim = Simulation::new(cfg, contacts, placement);
    sim.schedule_arrivals()?;
    sim.execute();
    Ok(sim.finish())
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a SimConfig, contacts: &'a ContactTrace, placement: ServicePlacement) -> Self {
        let n = contacts.node_count();
        let stores = (0..n)
            .map(|i| {
                let s = KnowledgeStore::new(NodeId::from(i), n, cfg.t_av_units, cfg.time_unit_s).with_radius(cfg.radius_units);
                if cfg.awareness == AwarenessLevel::Global {
                    s.with_rows()
                } else {
                    s
                }
            })
            .collect();
        let routing = (cfg.forwarding == ForwardingScheme::Tt).then(|| {
            (0..n)
                .map(|i| KnowledgeStore::new(NodeId::from(i), n, cfg.tt_t_av_units, cfg.time_unit_s))
                .collect()
        });
        let mut tracker = LoadTracker::new(cfg.mean_exec_s);
        tracker.window = cfg.load_window_s;
        tracker.alpha = cfg.load_alpha;
        Simulation {
            cfg,
            contacts,
            placement,
            n,
            duration: contacts.duration(),
            opts: GraphOptions {
                load_aware: cfg.load_aware,
                exact_only: cfg.exact_only,
            },
            stores,
            routing,
            stats: EncounterStats::new(n, cfg.encounter_window_s),
            trackers: vec![tracker; n],
            load_sum: vec![0.0; n],
            load_windows: 0,
            queues: vec![VecDeque::new(); n],
            executing: vec![None; n],
            tokens: vec![0; n],
            executed: vec![0; n],
            neighbors: vec![BTreeSet::new(); n],
            pairs: BTreeSet::new(),
            reqs: Vec::new(),
            carried: BTreeSet::new(),
            waiting: BTreeSet::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            exec_rng: stream(cfg.seed, Stream::Execution),
            tie_rng: stream(cfg.seed, Stream::TieBreak),
            transfers: 0,
            decisions: Vec::new(),
            transfer_log: Vec::new(),
        }
    }

    fn push(&mut self, time: f64, kind: Kind, payload: Payload) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            kind,
            seq: self.seq,
            payload,
        });
    }

    fn schedule_arrivals(&mut self) -> Result<()> {
        let catalog = self.cfg.catalog()?;
        let pairs = self.cfg.admissible_pairs(&catalog);
        if pairs.is_empty() {
            return Err(Error::Config("request pattern admits no pairs".into()));
        }
        let rate = self.cfg.request_rate_per_min / 60.0;
        if rate == 0.0 {
            return Ok(());
        }
        let pick = WeightedIndex::new(pairs.iter().map(|p| p.2)).map_err(|e| Error::Config(e.to_string()))?;
        let gap = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = stream(self.cfg.seed, Stream::Arrivals);
        let horizon = self.duration - self.cfg.timeout_s();
        for node in 0..self.n as u32 {
            let mut t = 0.0;
            loop {
                t += gap.sample(&mut rng);
                if t >= horizon {
                    break;
                }
                let (input, output, _) = pairs[pick.sample(&mut rng)];
                self.push(t, Kind::Arrival, Payload::Arrival { node, input, output });
            }
        }
        Ok(())
    }

    fn execute(&mut self) {
        for e in self.contacts.events() {
            self.push(e.start, Kind::ContactUp, Payload::Pair(e.a.0, e.b.0));
            self.push(e.end, Kind::ContactDown, Payload::Pair(e.a.0, e.b.0));
        }
        self.push(self.cfg.time_unit_s, Kind::Tick, Payload::None);
        self.push(self.cfg.load_window_s, Kind::LoadWindow, Payload::None);
        self.push(0.0, Kind::Tick, Payload::None);

        let mut first_tick = true;
        while let Some(ev) = self.heap.pop() {
            if ev.time > self.duration {
                break;
            }
            self.now = ev.time;
            match (ev.kind, ev.payload) {
                (Kind::Tick, _) => {
                    // The tick at time zero only triggers the initial sync.
                    if !first_tick {
                        self.tick();
                    }
                    first_tick = false;
                }
                (Kind::ContactUp, Payload::Pair(a, b)) => self.contact_up(a, b),
                (Kind::LoadWindow, _) => self.load_window(),
                (Kind::ServiceDone, Payload::Done { node, token }) => self.service_done(NodeId(node), token),
                (Kind::Arrival, Payload::Arrival { node, input, output }) => self.arrival(NodeId(node), input, output),
                (Kind::Deadline, Payload::Request(r)) => self.deadline(r),
                (Kind::ContactDown, Payload::Pair(a, b)) => self.contact_down(a, b),
                _ => unreachable!("event kind and payload disagree"),
            }
            let boundary = match self.heap.peek() {
                None => true,
                Some(next) => next.time != ev.time || (next.kind == Kind::ContactDown && ev.kind != Kind::ContactDown),
            };
            if boundary && ev.kind != Kind::ContactDown {
                self.sync();
            }
        }
    }

    fn tick(&mut self) {
        for s in &mut self.stores {
            s.tick(1.0);
        }
        if let Some(r) = &mut self.routing {
            for s in r {
                s.tick(1.0);
            }
        }
        let next = self.now + self.cfg.time_unit_s;
        self.push(next, Kind::Tick, Payload::None);
    }

    fn contact_up(&mut self, a: u32, b: u32) {
        self.pairs.insert((a, b));
        self.neighbors[a as usize].insert(b);
        self.neighbors[b as usize].insert(a);
        self.stats.record_encounter(NodeId(a), self.now);
        self.stats.record_encounter(NodeId(b), self.now);
    }

    fn contact_down(&mut self, a: u32, b: u32) {
        self.pairs.remove(&(a, b));
        self.neighbors[a as usize].remove(&b);
        self.neighbors[b as usize].remove(&a);
    }

    fn backlog(&self, node: usize) -> usize {
        self.queues[node].len() + usize::from(self.executing[node].is_some())
    }

    fn load_window(&mut self) {
        for i in 0..self.n {
            self.trackers[i].pending_count = self.backlog(i);
            let l = self.trackers[i].update();
            self.stores[i].set_own_load(l);
            self.load_sum[i] += l;
        }
        self.load_windows += 1;
        let next = self.now + self.cfg.load_window_s;
        self.push(next, Kind::LoadWindow, Payload::None);
    }

    fn decide(&mut self, holder: NodeId, pending: &PendingRequest) -> Option<(NextHop, Option<CompositionPath>)> {
        let rank = (self.cfg.awareness == AwarenessLevel::Minimal).then(|| {
            let mut r: Vec<u32> = (0..self.n as u32).collect();
            r.shuffle(&mut self.tie_rng);
            r
        });
        let live = (self.cfg.awareness == AwarenessLevel::Perfect).then(|| Live {
            stores: &self.stores,
            backlog: (0..self.n).map(|i| self.backlog(i) as f64 * self.cfg.mean_exec_s).collect(),
        });
        let est = Estimator {
            store: &self.stores[holder.index()],
            level: self.cfg.awareness,
            live: live.as_ref().map(|l| l as &dyn LiveView),
        };
        let out = next_destination(holder, pending, &self.placement, &est, self.opts, rank);
        if self.cfg.audit {
            if let Some((_, Some(path))) = &out {
                self.decisions.push(audit_line(self.now, holder, pending.id, path));
            }
        }
        out
    }

    fn arrival(&mut self, origin: NodeId, input: IoType, output: IoType) {
        let id = self.reqs.len();
        let pending = PendingRequest {
            id: id as u64,
            input,
            output,
            requester: origin,
            deadline: self.now + self.cfg.timeout_s(),
            hops: 0,
            executed: Vec::new(),
        };
        let decision = self.decide(origin, &pending);
        let plan = decision.as_ref().and_then(|(_, p)| p.clone());
        self.reqs.push(Req {
            estimated_cost: plan.as_ref().map(|p| p.cost * self.cfg.time_unit_s),
            plan,
            input,
            pending,
            created: self.now,
            place: Place::Waiting { holder: origin },
            status: RequestStatus::InFlight,
            completed: None,
        });
        let deadline = self.reqs[id].pending.deadline;
        self.push(deadline, Kind::Deadline, Payload::Request(id));
        self.route(id, origin, Some(decision.map(|d| d.0)));
    }

    fn set_place(&mut self, r: usize, place: Place) {
        self.carried.remove(&r);
        self.waiting.remove(&r);
        match place {
            Place::Carried { .. } => {
                self.carried.insert(r);
            }
            Place::Waiting { .. } => {
                self.waiting.insert(r);
            }
            _ => {}
        }
        self.reqs[r].place = place;
    }

    /// Sends `r`, now at `holder`, on its next leg. `decision` carries an
    /// already computed choice.
    fn route(&mut self, r: usize, holder: NodeId, decision: Option<Option<NextHop>>) {
        let pending = self.reqs[r].pending.clone();
        if pending.is_transformed() {
            if holder == pending.requester {
                self.complete(r);
            } else {
                self.set_place(r, Place::Carried { holder, target: Target::Home });
            }
            return;
        }
        let next = match decision {
            Some(d) => d,
            None => match self.planned_stage(r) {
                Some(hop) => Some(hop),
                None => self.decide(holder, &pending).map(|d| d.0),
            },
        };
        match next {
            None => self.set_place(r, Place::Waiting { holder }),
            Some(NextHop::Stage { service, host }) if host == holder => self.enqueue(r, holder, service, false),
            Some(NextHop::Stage { service, host }) => self.set_place(
                r,
                Place::Carried {
                    holder,
                    target: Target::Stage { service, host },
                },
            ),
            Some(NextHop::Home(_)) => self.set_place(r, Place::Carried { holder, target: Target::Home }),
        }
    }

    fn planned_stage(&self, r: usize) -> Option<NextHop> {
        if !self.cfg.fixed_path {
            return None;
        }
        let req = &self.reqs[r];
        let plan = req.plan.as_ref()?;
        let (service, host) = *plan.stages.get(req.pending.executed.len())?;
        (service.input == req.pending.input).then_some(NextHop::Stage { service, host })
    }

    fn enqueue(&mut self, r: usize, node: NodeId, service: Service, opportunistic: bool) {
        self.set_place(
            r,
            Place::Queued {
                node,
                service,
                opportunistic,
            },
        );
        self.queues[node.index()].push_back(r);
        if self.executing[node.index()].is_none() {
            self.start(node);
        }
    }

    fn start(&mut self, node: NodeId) {
        let i = node.index();
        let Some(r) = self.queues[i].pop_front() else { return };
        let Place::Queued {
            service, opportunistic, ..
        } = self.reqs[r].place
        else {
            unreachable!("queued request is not marked queued");
        };
        self.set_place(
            r,
            Place::Executing {
                node,
                service,
                opportunistic,
            },
        );
        self.executing[i] = Some(r);
        let dur = execution_time(self.cfg.mean_exec_s, self.cfg.deterministic_exec, &mut self.exec_rng);
        self.tokens[i] += 1;
        let token = self.tokens[i];
        self.push(self.now + dur, Kind::ServiceDone, Payload::Done { node: node.0, token });
    }

    fn service_done(&mut self, node: NodeId, token: u64) {
        let i = node.index();
        if self.tokens[i] != token {
            return;
        }
        let Some(r) = self.executing[i].take() else { return };
        let Place::Executing {
            service, opportunistic, ..
        } = self.reqs[r].place
        else {
            unreachable!("executing request is not marked executing");
        };
        let p = &mut self.reqs[r].pending;
        p.input = service.output;
        p.executed.push((service, node, opportunistic));
        self.executed[i] += 1;
        self.start(node);
        self.route(r, node, None);
    }

    fn complete(&mut self, r: usize) {
        let req = &mut self.reqs[r];
        req.status = RequestStatus::Completed;
        req.completed = Some(self.now);
        self.set_place(r, Place::Finished);
    }

    fn deadline(&mut self, r: usize) {
        match self.reqs[r].place {
            Place::Finished => return,
            Place::Queued { node, .. } => self.queues[node.index()].retain(|&q| q != r),
            Place::Executing { node, .. } => {
                let i = node.index();
                self.executing[i] = None;
                self.tokens[i] += 1;
                self.set_place(r, Place::Finished);
                self.start(node);
            }
            Place::Carried { .. } | Place::Waiting { .. } => {}
        }
        self.reqs[r].status = RequestStatus::TimedOut;
        self.set_place(r, Place::Finished);
    }

    fn sync(&mut self) {
        let now = self.now;
        loop {
            let mut changed = false;
            for &(a, b) in &self.pairs {
                let (a, b) = (a as usize, b as usize);
                let (lo, hi) = self.stores.split_at_mut(b);
                changed |= exchange(&mut lo[a], &mut hi[0], now);
                if let Some(routing) = &mut self.routing {
                    let (lo, hi) = routing.split_at_mut(b);
                    changed |= exchange(&mut lo[a], &mut hi[0], now);
                }
            }
            if !changed {
                break;
            }
        }

        for r in std::mem::take(&mut self.waiting) {
            if let Place::Waiting { holder } = self.reqs[r].place {
                self.route(r, holder, None);
            }
        }

        loop {
            let mut moved = false;
            for r in self.carried.clone() {
                let Place::Carried { holder, target } = self.reqs[r].place else {
                    continue;
                };
                let dest = match target {
                    Target::Stage { host, .. } => host,
                    Target::Home => self.reqs[r].pending.requester,
                };
                let stores = self.routing.as_ref().unwrap_or(&self.stores);
                let to = self.neighbors[holder.index()].iter().map(|&c| NodeId(c)).find(|&c| {
                    should_relay(
                        self.cfg.forwarding,
                        c,
                        dest,
                        &stores[holder.index()],
                        &stores[c.index()],
                        &self.stats,
                        now,
                    )
                });
                if let Some(to) = to {
                    self.receive(r, holder, to, target, dest);
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn receive(&mut self, r: usize, from: NodeId, to: NodeId, target: Target, dest: NodeId) {
        self.reqs[r].pending.hops += 1;
        self.transfers += 1;
        if self.cfg.audit {
            let reason = if to == dest { "destination" } else { "relay" };
            self.transfer_log
                .push(transfer_line(self.now, r as u64, from, to, reason));
        }
        match target {
            Target::Home if to == self.reqs[r].pending.requester => self.complete(r),
            Target::Stage { service, host } if to == host => self.enqueue(r, to, service, false),
            Target::Stage { service, .. } if self.cfg.opportunistic && self.placement.hosts(to, service) => {
                self.enqueue(r, to, service, true)
            }
            _ => self.set_place(r, Place::Carried { holder: to, target }),
        }
    }

    fn finish(self) -> RunResult {
        let windows = self.load_windows.max(1) as f64;
        let nodes = (0..self.n)
            .map(|i| NodeStats {
                executed: self.executed[i],
                mean_load: self.load_sum[i] / windows,
            })
            .collect();
        let records = self
            .reqs
            .into_iter()
            .enumerate()
            .map(|(id, r)| RequestRecord {
                id: id as u64,
                origin: r.pending.requester,
                input: r.input,
                output: r.pending.output,
                created: r.created,
                deadline: r.pending.deadline,
                status: r.status,
                completed: r.completed,
                hops: r.pending.hops,
                stages: r
                    .pending
                    .executed
                    .iter()
                    .map(|&(service, node, opportunistic)| StageRecord {
                        service,
                        node,
                        opportunistic,
                    })
                    .collect(),
                estimated_cost: r.estimated_cost,
            })
            .collect();
        RunResult {
            records,
            nodes,
            transfers: self.transfers,
            decisions: self.decisions,
            transfer_log: self.transfer_log,
        }
    }
}
