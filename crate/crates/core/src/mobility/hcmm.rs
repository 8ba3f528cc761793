use rand::Rng;
use serde::{Deserialize, Serialize};

use super::powerlaw::TruncatedPareto;
use super::{Area, Keyframe, Movement, Point, PositionTrace};
use crate::error::{Error, Result};
use crate::rng::node_stream;

/// Community-driven mobility on a cell grid.
///
/// The area is split into `rows x cols` cells and each community lives in
/// one cell. Nodes are assigned to communities round-robin. At home, a node
/// picks its next destination in a foreign community with probability
/// `rewiring`, otherwise a fresh point in its home cell; after a foreign
/// visit it always returns home.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HcmmParams {
    pub rows: usize,
    pub cols: usize,
    /// Cell index (row-major) of every community.
    pub communities: Vec<usize>,
    pub rewiring: f64,
    pub area: Area,
    pub speed: f64,
    pub pause: TruncatedPareto,
}

impl Default for HcmmParams {
    fn default() -> Self {
        HcmmParams {
            rows: 3,
            cols: 3,
            communities: vec![0, 2, 6, 8],
            rewiring: 0.1,
            area: Area::square(700.0),
            speed: 1.0,
            pause: TruncatedPareto {
                exponent: 1.0,
                min: 30.0,
                max: 1800.0,
            },
        }
    }
}

impl HcmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rewiring) {
            return Err(Error::Mobility(format!(
                "rewiring probability must lie in [0, 1], got {}",
                self.rewiring
            )));
        }
        self.area.validate()?;
        self.pause.validate()?;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Mobility("empty community grid".into()));
        }
        if self.communities.is_empty() {
            return Err(Error::Mobility("need at least one community".into()));
        }
        let cells = self.rows * self.cols;
        if let Some(c) = self.communities.iter().find(|&&c| c >= cells) {
            return Err(Error::Mobility(format!("community cell {c} outside {cells}-cell grid")));
        }
        if !(self.speed > 0.0) {
            return Err(Error::Mobility("speed must be positive".into()));
        }
        Ok(())
    }

    pub fn home_of(&self, node: usize) -> usize {
        node % self.communities.len()
    }

    pub fn cell_bounds(&self, cell: usize) -> (Point, Point) {
        let (w, h) = (self.area.width / self.cols as f64, self.area.height / self.rows as f64);
        let (r, c) = (cell / self.cols, cell % self.cols);
        (
            Point::new(c as f64 * w, r as f64 * h),
            Point::new((c + 1) as f64 * w, (r + 1) as f64 * h),
        )
    }

    /// Community whose cell contains `p`, if any.
    pub fn community_at(&self, p: Point) -> Option<usize> {
        let c = ((p.x / self.area.width * self.cols as f64) as usize).min(self.cols - 1);
        let r = ((p.y / self.area.height * self.rows as f64) as usize).min(self.rows - 1);
        let cell = r * self.cols + c;
        self.communities.iter().position(|&k| k == cell)
    }
}

pub struct Hcmm {
    params: HcmmParams,
}

impl Hcmm {
    pub fn new(params: HcmmParams) -> Self {
        Hcmm { params }
    }

    pub fn simulate(&self, nodes: usize, duration: f64, seed: u64) -> Result<Movement> {
        self.params.validate()?;
        let p = &self.params;
        let mut movement = Movement {
            area: Some(p.area),
            ..Movement::default()
        };
        let point_in = |rng: &mut crate::rng::SimRng, community: usize| {
            let (lo, hi) = p.cell_bounds(p.communities[community]);
            Point::new(
                lo.x + rng.random::<f64>() * (hi.x - lo.x),
                lo.y + rng.random::<f64>() * (hi.y - lo.y),
            )
        };
        for n in 0..nodes {
            let mut rng = node_stream(seed, n);
            let home = p.home_of(n);
            let mut here = point_in(&mut rng, home);
            let mut at_home = true;
            let mut t = 0.0;
            let mut path = vec![Keyframe { t, p: here }];
            while t < duration {
                let target = if at_home && p.communities.len() > 1 && rng.random::<f64>() < p.rewiring {
                    let mut c = rng.random_range(0..p.communities.len() - 1);
                    if c >= home {
                        c += 1;
                    }
                    at_home = false;
                    c
                } else {
                    at_home = true;
                    home
                };
                let next = point_in(&mut rng, target);
                let d = here.distance(next);
                movement.flights.push(d);
                t += d / p.speed;
                path.push(Keyframe { t, p: next });
                here = next;
                t += p.pause.sample(&mut rng);
                path.push(Keyframe { t, p: here });
            }
            movement.paths.push(path);
        }
        Ok(movement)
    }
}

pub fn generate_hcmm(
    params: &HcmmParams,
    nodes: usize,
    duration: f64,
    interval: f64,
    seed: u64,
) -> Result<PositionTrace> {
    let m = Hcmm::new(params.clone()).simulate(nodes, duration, seed)?;
    Ok(m.sample(params.area, duration, interval))
}

/// Number of times any node's sampled position moves from one community
/// cell into a different one.
pub fn community_crossings(params: &HcmmParams, trace: &PositionTrace) -> usize {
    trace
        .positions
        .iter()
        .map(|node| {
            let mut last = None;
            let mut crossings = 0;
            for p in node.iter().flatten() {
                if let Some(c) = params.community_at(*p) {
                    if last.is_some_and(|l| l != c) {
                        crossings += 1;
                    }
                    last = Some(c);
                }
            }
            crossings
        })
        .sum()
}
