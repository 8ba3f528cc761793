//! Shared fixtures for the benchmarks.

use std::path::Path;

use oppcomp_core::composition::CostModel;
use oppcomp_core::experiment::MobilitySpec;
use oppcomp_core::service::{NodeId, ServicePlacement};
use oppcomp_core::{ContactTrace, SimConfig};

/// Pseudo-random but fixed distances and loads, in time units.
pub struct Table {
    nodes: usize,
    dist: Vec<f64>,
    load: Vec<f64>,
}

impl Table {
    pub fn new(nodes: usize) -> Self {
        let mix = |x: usize| (x.wrapping_mul(2654435761) >> 7) % 97;
        let dist = (0..nodes * nodes)
            .map(|k| match mix(k) {
                0..=9 => f64::INFINITY,
                m => m as f64,
            })
            .collect();
        let load = (0..nodes).map(|i| (mix(i + 13) % 5) as f64).collect();
        Table { nodes, dist, load }
    }
}

impl CostModel for Table {
    fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.dist[a.index() * self.nodes + b.index()]
    }
    fn load(&self, n: NodeId) -> f64 {
        self.load[n.index()]
    }
}

/// Default catalog placed over `nodes` nodes.
pub fn placement(nodes: usize) -> ServicePlacement {
    let cfg = SimConfig::default();
    cfg.placement(&cfg.catalog().unwrap(), nodes).unwrap()
}

/// Contacts of the default Levy walk over `duration_s`.
pub fn levy_contacts(duration_s: f64, seed: u64) -> ContactTrace {
    mobility(duration_s).contacts(seed, Path::new("")).unwrap()
}

pub fn mobility(duration_s: f64) -> MobilitySpec {
    MobilitySpec {
        duration_s,
        ..MobilitySpec::default()
    }
}
