use rand::seq::index::sample_weighted;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::powerlaw::TruncatedPareto;
use super::{Area, Keyframe, Movement, Point, PositionTrace};
use crate::error::{Error, Result};
use crate::rng::{node_stream, stream, Stream};

/// Self-similar least-action walk.
///
/// Waypoints come from a multiplicative quad-tree cascade whose per-level
/// log-weight variance is `2 (2H - 1) ln 2`, so `H = 0.5` is uniform and
/// larger `H` clusters harder. Waypoints closer than `cluster_range` form
/// clusters; each node adopts a few clusters (size-weighted) and a fraction
/// of their waypoints, then tours them with the least-action trip planner:
/// the next waypoint is drawn with probability proportional to
/// `distance^-latp_alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlawParams {
    pub hurst: f64,
    pub waypoints: usize,
    pub area: Area,
    pub cascade_levels: u32,
    pub cluster_range: f64,
    pub clusters_min: usize,
    pub clusters_max: usize,
    pub subset_fraction: f64,
    pub latp_alpha: f64,
    pub pause: TruncatedPareto,
    pub speed: f64,
}

impl Default for SlawParams {
    fn default() -> Self {
        SlawParams {
            hurst: 0.75,
            waypoints: 500,
            area: Area::square(700.0),
            cascade_levels: 5,
            cluster_range: 40.0,
            clusters_min: 3,
            clusters_max: 5,
            subset_fraction: 0.1,
            latp_alpha: 3.0,
            pause: TruncatedPareto {
                exponent: 1.0,
                min: 30.0,
                max: 1800.0,
            },
            speed: 1.0,
        }
    }
}

impl SlawParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(Error::Mobility(format!(
                "Hurst parameter must lie in (0.5, 1), got {}",
                self.hurst
            )));
        }
        self.area.validate()?;
        self.pause.validate()?;
        if self.waypoints == 0 {
            return Err(Error::Mobility("need at least one waypoint".into()));
        }
        if self.clusters_min == 0 || self.clusters_max < self.clusters_min {
            return Err(Error::Mobility("invalid clusters-per-node range".into()));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::Mobility("subset fraction must lie in (0, 1]".into()));
        }
        if !(self.speed > 0.0) {
            return Err(Error::Mobility("speed must be positive".into()));
        }
        Ok(())
    }
}

pub struct Slaw {
    params: SlawParams,
}

impl Slaw {
    pub fn new(params: SlawParams) -> Self {
        Slaw { params }
    }

    pub fn waypoints(&self, seed: u64) -> Vec<Point> {
        let p = &self.params;
        let mut rng = stream(seed, Stream::Mobility);
        let side = 1usize << p.cascade_levels;
        let mut weights = vec![1.0f64; side * side];
        let sigma = (2.0 * (2.0 * p.hurst - 1.0) * std::f64::consts::LN_2).sqrt();
        for level in 0..p.cascade_levels {
            let cells = 1usize << level;
            let span = side / cells;
            for cy in 0..cells {
                for cx in 0..cells {
                    for q in 0..4 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let w = (sigma * z - 0.5 * sigma * sigma).exp();
                        let (ox, oy) = (cx * span + (q & 1) * span / 2, cy * span + (q >> 1) * span / 2);
                        for y in oy..oy + span / 2 {
                            for x in ox..ox + span / 2 {
                                weights[y * side + x] *= w;
                            }
                        }
                    }
                }
            }
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let (cw, ch) = (p.area.width / side as f64, p.area.height / side as f64);
        (0..p.waypoints)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let leaf = cumulative.partition_point(|c| *c < u).min(weights.len() - 1);
                let (lx, ly) = ((leaf % side) as f64, (leaf / side) as f64);
                Point::new(
                    (lx + rng.random::<f64>()) * cw,
                    (ly + rng.random::<f64>()) * ch,
                )
            })
            .collect()
    }

    pub fn simulate(&self, nodes: usize, duration: f64, seed: u64) -> Result<Movement> {
        self.params.validate()?;
        let p = &self.params;
        let points = self.waypoints(seed);
        let clusters = clusters(&points, p.cluster_range);
        let mut movement = Movement {
            area: Some(p.area),
            ..Movement::default()
        };
        for n in 0..nodes {
            let mut rng = node_stream(seed, n);
            let k = rng.random_range(p.clusters_min..=p.clusters_max).min(clusters.len());
            let chosen = sample_weighted(&mut rng, clusters.len(), |i| clusters[i].len() as f64, k)
                .expect("cluster weights are positive");
            let mut set: Vec<usize> = Vec::new();
            for c in chosen.iter() {
                let members = &clusters[c];
                let take = ((members.len() as f64 * p.subset_fraction).ceil() as usize).max(1);
                set.extend(members.choose_multiple(&mut rng, take).copied());
            }
            let home = set[rng.random_range(0..set.len())];
            let mut t = 0.0;
            let mut here = home;
            let mut path = vec![Keyframe { t, p: points[home] }];
            if set.len() > 1 {
                'trips: while t < duration {
                    let mut unvisited: Vec<usize> = set.iter().copied().filter(|&w| w != home).collect();
                    while !unvisited.is_empty() {
                        let weights: Vec<f64> = unvisited
                            .iter()
                            .map(|&w| points[here].distance(points[w]).max(1.0).powf(-p.latp_alpha))
                            .collect();
                        let pick = pick_weighted(&mut rng, &weights);
                        let next = unvisited.swap_remove(pick);
                        t = self.step(&mut path, &mut movement.flights, t, points[here], points[next]);
                        here = next;
                        t += p.pause.sample(&mut rng);
                        path.push(Keyframe { t, p: points[here] });
                        if t >= duration {
                            break 'trips;
                        }
                    }
                    t = self.step(&mut path, &mut movement.flights, t, points[here], points[home]);
                    here = home;
                    t += p.pause.sample(&mut rng);
                    path.push(Keyframe { t, p: points[here] });
                }
            }
            movement.paths.push(path);
        }
        Ok(movement)
    }

    fn step(&self, path: &mut Vec<Keyframe>, flights: &mut Vec<f64>, t: f64, from: Point, to: Point) -> f64 {
        let d = from.distance(to);
        flights.push(d);
        let t = t + d / self.params.speed;
        path.push(Keyframe { t, p: to });
        t
    }
}

fn pick_weighted<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Single-linkage clusters of points within `range` of each other.
fn clusters(points: &[Point], range: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i].distance(points[j]) <= range {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

pub fn generate_slaw(
    params: &SlawParams,
    nodes: usize,
    duration: f64,
    interval: f64,
    seed: u64,
) -> Result<PositionTrace> {
    let m = Slaw::new(params.clone()).simulate(nodes, duration, seed)?;
    Ok(m.sample(params.area, duration, interval))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_trace_stays_in_area() {
        let p = SlawParams::default();
        let trace = generate_slaw(&p, 20, 36_000.0, 30.0, 2).unwrap();
        assert_eq!(trace.node_count(), 20);
        for node in &trace.positions {
            for s in node {
                assert!(p.area.contains(s.unwrap()));
            }
        }
    }

    #[test]
    fn single_waypoint_is_stationary() {
        let p = SlawParams {
            waypoints: 1,
            ..SlawParams::default()
        };
        let trace = generate_slaw(&p, 5, 3600.0, 30.0, 1).unwrap();
        let first = trace.positions[0][0];
        for node in &trace.positions {
            assert!(node.iter().all(|s| *s == first));
        }
    }

    #[test]
    fn rejects_invalid_hurst() {
        for h in [0.5, 1.0, 0.2] {
            let p = SlawParams {
                hurst: h,
                ..SlawParams::default()
            };
            assert!(Slaw::new(p).simulate(2, 10.0, 0).is_err());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SlawParams::default();
        let a = generate_slaw(&p, 10, 3600.0, 30.0, 4).unwrap();
        let b = generate_slaw(&p, 10, 3600.0, 30.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flight_lengths_are_heavy_tailed() {
        let m = Slaw::new(SlawParams::default()).simulate(20, 36_000.0, 8).unwrap();
        let mut f = m.flights.clone();
        f.sort_by(f64::total_cmp);
        let median = f[f.len() / 2];
        let p99 = f[f.len() * 99 / 100];
        assert!(p99 > 5.0 * median, "median {median} p99 {p99}");
    }
}
