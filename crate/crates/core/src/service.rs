//! Typed services and their placement on nodes.
//!
//! A service transforms data of one input type into an output type. With
//! `n` types, the linear catalog holds every `s(x, y)` with `x < y`; the ring
//! catalog holds only unit services `s(x, x+1)` with type arithmetic modulo
//! `n`, so `s(n, 1)` closes the ring.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Input/output data type, numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IoType(pub u16);

impl fmt::Display for IoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u16; 2]", into = "[u16; 2]")]
pub struct Service {
    pub input: IoType,
    pub output: IoType,
}

impl Service {
    pub const fn new(input: u16, output: u16) -> Self {
        Service {
            input: IoType(input),
            output: IoType(output),
        }
    }

    /// Functionality `k = output - input` of a linear-catalog service.
    pub fn functionality(self) -> i32 {
        self.output.0 as i32 - self.input.0 as i32
    }
}

impl From<[u16; 2]> for Service {
    fn from([x, y]: [u16; 2]) -> Self {
        Service::new(x, y)
    }
}

impl From<Service> for [u16; 2] {
    fn from(s: Service) -> Self {
        [s.input.0, s.output.0]
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}-{}", self.input.0, self.output.0)
    }
}

pub fn functionality(s: Service) -> i32 {
    s.functionality()
}

/// Two services chain when the first one's output feeds the second one's input.
pub fn can_chain(a: Service, b: Service) -> bool {
    a.output == b.input
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCatalog {
    pub n_types: u16,
    pub ring: bool,
    pub services: Vec<Service>,
    pub excluded: BTreeSet<Service>,
}

impl ServiceCatalog {
    /// All `s(x, y)` with `x < y <= n_types`, minus `excluded`, in `(x, y)` order.
    pub fn enumerate(n_types: u16, excluded: &BTreeSet<Service>) -> Result<Self> {
        if n_types < 2 {
            return Err(Error::Catalog(format!("need at least 2 types, got {n_types}")));
        }
        for s in excluded {
            if s.input.0 < 1 || s.input >= s.output || s.output.0 > n_types {
                return Err(Error::Catalog(format!("excluded entry {s} is not a valid service")));
            }
        }
        let services = (1..n_types)
            .flat_map(|x| ((x + 1)..=n_types).map(move |y| Service::new(x, y)))
            .filter(|s| !excluded.contains(s))
            .collect();
        Ok(ServiceCatalog {
            n_types,
            ring: false,
            services,
            excluded: excluded.clone(),
        })
    }

    /// Unit services around a ring: `s(1,2), ..., s(n-1,n), s(n,1)`.
    pub fn ring(n_types: u16) -> Result<Self> {
        if n_types < 2 {
            return Err(Error::Catalog(format!("need at least 2 types, got {n_types}")));
        }
        let services = (1..=n_types)
            .map(|x| Service::new(x, if x == n_types { 1 } else { x + 1 }))
            .collect();
        Ok(ServiceCatalog {
            n_types,
            ring: true,
            services,
            excluded: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn contains(&self, s: Service) -> bool {
        self.services.contains(&s)
    }

    /// Number of unit steps from `from` to `to`; wraps around on a ring.
    pub fn span(&self, from: IoType, to: IoType) -> i32 {
        let d = to.0 as i32 - from.0 as i32;
        if self.ring {
            d.rem_euclid(self.n_types as i32)
        } else {
            d
        }
    }

    pub fn functionality(&self, s: Service) -> i32 {
        self.span(s.input, s.output)
    }

    /// Type reached after `steps` unit steps from `from`.
    pub fn offset(&self, from: IoType, steps: i32) -> Option<IoType> {
        let n = self.n_types as i32;
        let v = from.0 as i32 + steps;
        if self.ring {
            Some(IoType(((v - 1).rem_euclid(n) + 1) as u16))
        } else if (1..=n).contains(&v) {
            Some(IoType(v as u16))
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    Uniform,
    /// Popular services get one extra copy, unpopular ones one fewer. Each
    /// replacement swaps an unpopular copy for a popular one on a randomly
    /// chosen host, so every node keeps its slot count.
    Proportional { popular: Vec<Service> },
}

/// Which nodes host which services.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServicePlacement {
    pub repetition: u32,
    pub assignments: Vec<Vec<Service>>,
}

impl ServicePlacement {
    pub fn node_count(&self) -> usize {
        self.assignments.len()
    }

    pub fn hosted(&self, node: NodeId) -> &[Service] {
        &self.assignments[node.index()]
    }

    pub fn hosts(&self, node: NodeId, s: Service) -> bool {
        self.assignments[node.index()].contains(&s)
    }

    pub fn providers(&self, s: Service) -> Vec<NodeId> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, v)| v.contains(&s))
            .map(|(i, _)| NodeId::from(i))
            .collect()
    }

    pub fn copies(&self, s: Service) -> usize {
        self.assignments.iter().filter(|v| v.contains(&s)).count()
    }

    pub fn total_copies(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }

    /// Every `(service, node)` pair, ordered by node then hosting order.
    pub fn instances(&self) -> impl Iterator<Item = (Service, NodeId)> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .flat_map(|(i, v)| v.iter().map(move |&s| (s, NodeId::from(i))))
    }
}

pub fn assign_services<R: Rng + ?Sized>(
    catalog: &ServiceCatalog,
    nodes: usize,
    repetition: u32,
    distribution: &Distribution,
    rng: &mut R,
) -> Result<ServicePlacement> {
    if nodes == 0 {
        return Err(Error::Placement("no nodes".into()));
    }
    if repetition == 0 {
        return Err(Error::Placement("repetition must be positive".into()));
    }
    if repetition as usize > nodes {
        return Err(Error::Placement(format!(
            "{repetition} copies per service but only {nodes} nodes"
        )));
    }
    let mut placement = assign_uniform(catalog, nodes, repetition, rng)?;
    if let Distribution::Proportional { popular } = distribution {
        let popular: BTreeSet<Service> = popular.iter().copied().collect();
        if let Some(s) = popular.iter().find(|s| !catalog.contains(**s)) {
            return Err(Error::Placement(format!("popular service {s} not in catalog")));
        }
        let unpopular: Vec<Service> = catalog
            .services
            .iter()
            .copied()
            .filter(|s| !popular.contains(s))
            .collect();
        if popular.len() != unpopular.len() {
            return Err(Error::Placement(format!(
                "proportional layout needs equal halves, got {} popular and {} unpopular",
                popular.len(),
                unpopular.len()
            )));
        }
        if repetition < 2 || repetition as usize + 1 > nodes {
            return Err(Error::Placement(format!(
                "proportional layout infeasible with repetition {repetition} on {nodes} nodes"
            )));
        }
        let popular: Vec<Service> = popular.into_iter().collect();
        let base = placement.clone();
        let mut attempts = 0;
        placement = loop {
            if let Some(p) = replace_unpopular(&base, &popular, &unpopular, rng) {
                break p;
            }
            attempts += 1;
            if attempts == 64 {
                return Err(Error::Placement(
                    "could not realise proportional layout".into(),
                ));
            }
        };
    }
    Ok(placement)
}

fn assign_uniform<R: Rng + ?Sized>(
    catalog: &ServiceCatalog,
    nodes: usize,
    repetition: u32,
    rng: &mut R,
) -> Result<ServicePlacement> {
    let total = catalog.len() * repetition as usize;
    let base = total / nodes;
    let extra = total % nodes;
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    let mut remaining = vec![base; nodes];
    for &n in order.iter().take(extra) {
        remaining[n] += 1;
    }

    let mut services = catalog.services.clone();
    services.shuffle(rng);
    let mut assignments: Vec<Vec<Service>> = vec![Vec::new(); nodes];
    for s in services {
        // Greedy on largest remaining capacity always succeeds when every
        // service has the same copy count.
        let mut candidates: Vec<(usize, u64)> = (0..nodes).map(|n| (n, rng.random())).collect();
        candidates.sort_by(|a, b| remaining[b.0].cmp(&remaining[a.0]).then(a.1.cmp(&b.1)));
        for &(n, _) in candidates.iter().take(repetition as usize) {
            if remaining[n] == 0 {
                return Err(Error::Placement(format!("no free slot for {s}")));
            }
            remaining[n] -= 1;
            assignments[n].push(s);
        }
    }
    for v in &mut assignments {
        v.sort();
    }
    Ok(ServicePlacement {
        repetition,
        assignments,
    })
}

fn replace_unpopular<R: Rng + ?Sized>(
    base: &ServicePlacement,
    popular: &[Service],
    unpopular: &[Service],
    rng: &mut R,
) -> Option<ServicePlacement> {
    let mut placement = base.clone();
    let mut free_popular = popular.to_vec();
    free_popular.shuffle(rng);
    let mut unpopular = unpopular.to_vec();
    unpopular.shuffle(rng);
    for u in unpopular {
        let mut hosts = placement.providers(u);
        hosts.shuffle(rng);
        let mut done = false;
        'search: for pi in 0..free_popular.len() {
            let p = free_popular[pi];
            for &h in &hosts {
                if !placement.hosts(h, p) {
                    let slot = &mut placement.assignments[h.index()];
                    let at = slot.iter().position(|&s| s == u).expect("host lists service");
                    slot[at] = p;
                    slot.sort();
                    free_popular.swap_remove(pi);
                    done = true;
                    break 'search;
                }
            }
        }
        if !done {
            return None;
        }
    }
    Some(placement)
}
