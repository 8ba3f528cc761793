use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forwarding::ForwardingScheme;
use crate::knowledge::AwarenessLevel;
use crate::rng::{stream, Stream};
use crate::service::{assign_services, Distribution, IoType, Service, ServiceCatalog, ServicePlacement};

/// Which `(input, output)` pairs requests ask for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RequestPattern {
    /// Every catalog-reachable pair spanning at least `k` unit steps.
    MinFunctionality { k: i32 },
    /// Pairs `(x, x + length)`; on a ring catalog the output wraps.
    Length { length: i32 },
}

impl Default for RequestPattern {
    fn default() -> Self {
        RequestPattern::MinFunctionality { k: 4 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementKind {
    #[default]
    Uniform,
    Proportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_types: u16,
    pub ring: bool,
    pub excluded: Vec<Service>,
    pub repetition: u32,
    pub distribution: PlacementKind,
    /// The first `popular_count` catalog services count as popular.
    pub popular_count: usize,
    /// Relative request weight of pairs whose first unit step is popular.
    pub popular_weight: f64,
    pub awareness: AwarenessLevel,
    pub forwarding: ForwardingScheme,
    pub exact_only: bool,
    pub load_aware: bool,
    /// Let a relay that hosts the planned next service run it.
    pub opportunistic: bool,
    /// Follow the path chosen at creation instead of recomputing per stage.
    pub fixed_path: bool,
    pub request_rate_per_min: f64,
    pub timeout_min: f64,
    pub mean_exec_s: f64,
    /// Every execution takes exactly `mean_exec_s`.
    pub deterministic_exec: bool,
    pub pattern: RequestPattern,
    /// Delay statistics ignore requests created earlier than this.
    pub warmup_s: f64,
    pub time_unit_s: f64,
    pub t_av_units: f64,
    pub tt_t_av_units: f64,
    pub encounter_window_s: f64,
    pub radius_units: Option<f64>,
    pub load_window_s: f64,
    pub load_alpha: f64,
    pub seed: u64,
    /// Collect decision and transfer log lines.
    pub audit: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_types: 7,
            ring: false,
            excluded: vec![Service::new(1, 7)],
            repetition: 2,
            distribution: PlacementKind::Uniform,
            popular_count: 10,
            popular_weight: 1.0,
            awareness: AwarenessLevel::Local,
            forwarding: ForwardingScheme::Mt,
            exact_only: false,
            load_aware: true,
            opportunistic: true,
            fixed_path: false,
            request_rate_per_min: 0.4,
            timeout_min: 15.0,
            mean_exec_s: 30.0,
            deterministic_exec: false,
            pattern: RequestPattern::default(),
            warmup_s: 7200.0,
            time_unit_s: 30.0,
            t_av_units: 1.0,
            tt_t_av_units: 20.0,
            encounter_window_s: 600.0,
            radius_units: None,
            load_window_s: 30.0,
            load_alpha: 0.5,
            seed: 1,
            audit: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("timeout_min", self.timeout_min),
            ("mean_exec_s", self.mean_exec_s),
            ("time_unit_s", self.time_unit_s),
            ("t_av_units", self.t_av_units),
            ("tt_t_av_units", self.tt_t_av_units),
            ("encounter_window_s", self.encounter_window_s),
            ("load_window_s", self.load_window_s),
            ("popular_weight", self.popular_weight),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.request_rate_per_min >= 0.0 && self.request_rate_per_min.is_finite()) {
            return Err(Error::Config(format!(
                "request_rate_per_min must be non-negative, got {}",
                self.request_rate_per_min
            )));
        }
        if !(self.load_alpha > 0.0 && self.load_alpha <= 1.0) {
            return Err(Error::Config(format!("load_alpha must lie in (0, 1], got {}", self.load_alpha)));
        }
        if self.warmup_s < 0.0 {
            return Err(Error::Config("warmup_s must be non-negative".into()));
        }
        if let Some(r) = self.radius_units {
            if !(r > 0.0) {
                return Err(Error::Config(format!("radius_units must be positive, got {r}")));
            }
        }
        let catalog = self.catalog()?;
        if self.admissible_pairs(&catalog).is_empty() {
            return Err(Error::Config(format!("request pattern {:?} admits no pairs", self.pattern)));
        }
        Ok(())
    }

    pub fn timeout_s(&self) -> f64 {
        self.timeout_min * 60.0
    }

    pub fn catalog(&self) -> Result<ServiceCatalog> {
        if self.ring {
            ServiceCatalog::ring(self.n_types)
        } else {
            ServiceCatalog::enumerate(self.n_types, &self.excluded.iter().copied().collect::<BTreeSet<_>>())
        }
    }

    pub fn popular(&self, catalog: &ServiceCatalog) -> Vec<Service> {
        catalog.services.iter().copied().take(self.popular_count).collect()
    }

    pub fn placement(&self, catalog: &ServiceCatalog, nodes: usize) -> Result<ServicePlacement> {
        let dist = match self.distribution {
            PlacementKind::Uniform => Distribution::Uniform,
            PlacementKind::Proportional => Distribution::Proportional {
                popular: self.popular(catalog),
            },
        };
        assign_services(catalog, nodes, self.repetition, &dist, &mut stream(self.seed, Stream::Placement))
    }

    /// Admissible `(input, output, weight)` triples for the request pattern.
    pub fn admissible_pairs(&self, catalog: &ServiceCatalog) -> Vec<(IoType, IoType, f64)> {
        let popular: BTreeSet<Service> = self.popular(catalog).into_iter().collect();
        let weight = |x: IoType| {
            let first = catalog
                .offset(x, 1)
                .map(|y| Service { input: x, output: y });
            if first.is_some_and(|s| popular.contains(&s)) {
                self.popular_weight
            } else {
                1.0
            }
        };
        let n = catalog.n_types;
        let mut out = Vec::new();
        match self.pattern {
            RequestPattern::MinFunctionality { k } => {
                for x in 1..=n {
                    for y in 1..=n {
                        let (x, y) = (IoType(x), IoType(y));
                        if x != y && catalog.span(x, y) >= k && (catalog.ring || x < y) {
                            out.push((x, y, weight(x)));
                        }
                    }
                }
            }
            RequestPattern::Length { length } => {
                if length > 0 {
                    for x in 1..=n {
                        let x = IoType(x);
                        if let Some(y) = catalog.offset(x, length) {
                            if y != x {
                                out.push((x, y, weight(x)));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
