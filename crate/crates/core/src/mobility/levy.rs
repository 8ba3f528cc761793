use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::powerlaw::TruncatedPareto;
use super::{reflect_path, Area, Keyframe, Movement, Point, PositionTrace};
use crate::error::{Error, Result};
use crate::rng::node_stream;

/// A population of nodes sharing a speed range (m/s). Counts are rescaled
/// proportionally when they do not add up to the node count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedClass {
    pub count: usize,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl SpeedClass {
    pub fn fixed(count: usize, speed: f64) -> Self {
        SpeedClass {
            count,
            speed_min: speed,
            speed_max: speed,
        }
    }
}

/// Truncated Levy walk: power-law flight lengths and pause times, uniform
/// headings, reflection at the area edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevyWalkParams {
    pub flight: TruncatedPareto,
    pub pause: TruncatedPareto,
    pub classes: Vec<SpeedClass>,
    pub area: Area,
}

impl Default for LevyWalkParams {
    fn default() -> Self {
        LevyWalkParams {
            flight: TruncatedPareto {
                exponent: 0.5,
                min: 50.0,
                max: 1000.0,
            },
            pause: TruncatedPareto {
                exponent: 1.0,
                min: 30.0,
                max: 1800.0,
            },
            classes: vec![SpeedClass::fixed(10, 1.0), SpeedClass::fixed(10, 10.0)],
            area: Area::square(575.0),
        }
    }
}

impl LevyWalkParams {
    pub fn validate(&self, nodes: usize) -> Result<()> {
        self.flight.validate()?;
        self.pause.validate()?;
        self.area.validate()?;
        if nodes > 0 && self.classes.iter().all(|c| c.count == 0) {
            return Err(Error::Mobility("speed classes cover no nodes".into()));
        }
        for c in &self.classes {
            if !(c.speed_min > 0.0 && c.speed_max >= c.speed_min) {
                return Err(Error::Mobility(format!(
                    "invalid speed range [{}, {}]",
                    c.speed_min, c.speed_max
                )));
            }
        }
        Ok(())
    }

    /// Class of each node, in node order.
    pub fn node_classes(&self, nodes: usize) -> Vec<&SpeedClass> {
        let total: usize = self.classes.iter().map(|c| c.count).sum();
        if total == nodes {
            return self.classes.iter().flat_map(|c| std::iter::repeat_n(c, c.count)).collect();
        }
        // Largest remainder, earlier classes first on ties.
        let quota: Vec<f64> = self.classes.iter().map(|c| (c.count * nodes) as f64 / total as f64).collect();
        let mut counts: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| (quota[b] - quota[b].floor()).total_cmp(&(quota[a] - quota[a].floor())).then(a.cmp(&b)));
        let short = nodes - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        self.classes.iter().zip(counts).flat_map(|(c, k)| std::iter::repeat_n(c, k)).collect()
    }
}

pub struct LevyWalk {
    params: LevyWalkParams,
}

impl LevyWalk {
    pub fn new(params: LevyWalkParams) -> Self {
        LevyWalk { params }
    }

    pub fn simulate(&self, nodes: usize, duration: f64, seed: u64) -> Result<Movement> {
        self.params.validate(nodes)?;
        let area = self.params.area;
        let speeds = self.params.node_classes(nodes).into_iter();
        let mut movement = Movement {
            area: Some(area),
            ..Movement::default()
        };
        for (n, class) in speeds.enumerate() {
            let mut rng = node_stream(seed, n);
            let mut p = Point::new(rng.random::<f64>() * area.width, rng.random::<f64>() * area.height);
            let mut t = 0.0;
            let mut path = vec![Keyframe { t, p }];
            while t < duration {
                let length = self.params.flight.sample(&mut rng);
                let heading = rng.random::<f64>() * TAU;
                let speed = rng.random_range(class.speed_min..=class.speed_max);
                movement.flights.push(length);
                let mut prev = p;
                for q in reflect_path(area, p, heading, length) {
                    t += prev.distance(q) / speed;
                    path.push(Keyframe { t, p: q });
                    prev = q;
                }
                p = prev;
                t += self.params.pause.sample(&mut rng);
                path.push(Keyframe { t, p });
            }
            movement.paths.push(path);
        }
        Ok(movement)
    }
}

pub fn generate_levy(
    params: &LevyWalkParams,
    nodes: usize,
    duration: f64,
    interval: f64,
    seed: u64,
) -> Result<PositionTrace> {
    let m = LevyWalk::new(params.clone()).simulate(nodes, duration, seed)?;
    Ok(m.sample(params.area, duration, interval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::powerlaw::fit_truncated_exponent;

    #[test]
    fn default_trace_shape() {
        let p = LevyWalkParams::default();
        let trace = generate_levy(&p, 20, 36_000.0, 30.0, 1).unwrap();
        assert_eq!(trace.node_count(), 20);
        assert_eq!(trace.sample_count(), 1201);
        for node in &trace.positions {
            for s in node {
                assert!(p.area.contains(s.unwrap()));
            }
        }
    }

    #[test]
    fn classes_rescale_to_node_count() {
        let mut p = LevyWalkParams::default();
        let speeds = |p: &LevyWalkParams, n| p.node_classes(n).iter().map(|c| c.speed_min).collect::<Vec<_>>();
        assert_eq!(speeds(&p, 20), [vec![1.0; 10], vec![10.0; 10]].concat());
        assert_eq!(speeds(&p, 5), vec![1.0, 1.0, 1.0, 10.0, 10.0]);
        p.classes = vec![SpeedClass::fixed(1, 1.0), SpeedClass::fixed(2, 2.0), SpeedClass::fixed(1, 3.0)];
        assert_eq!(speeds(&p, 2), vec![1.0, 2.0]);
        assert_eq!(speeds(&p, 0), Vec::<f64>::new());
        p.classes = vec![SpeedClass::fixed(0, 1.0)];
        assert!(p.validate(3).is_err());
    }

    #[test]
    fn zero_duration_gives_initial_positions() {
        let trace = generate_levy(&LevyWalkParams::default(), 20, 0.0, 30.0, 1).unwrap();
        assert_eq!(trace.sample_count(), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = LevyWalkParams::default();
        let a = generate_levy(&p, 20, 3600.0, 30.0, 5).unwrap();
        let b = generate_levy(&p, 20, 3600.0, 30.0, 5).unwrap();
        let c = generate_levy(&p, 20, 3600.0, 30.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn flight_exponent_is_recovered() {
        let mut p = LevyWalkParams::default();
        p.flight = TruncatedPareto::new(1.5, 1.0, 2000.0).unwrap();
        p.pause = TruncatedPareto::new(1.5, 1.0, 10.0).unwrap();
        let m = LevyWalk::new(p.clone()).simulate(20, 36_000.0, 3).unwrap();
        assert!(m.flights.len() >= 10_000, "{}", m.flights.len());
        let fit = fit_truncated_exponent(&m.flights, 1.0, 2000.0).unwrap();
        assert!((fit - 1.5).abs() <= 0.2, "fit {fit}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = LevyWalkParams::default();
        assert!(LevyWalk::new(p.clone()).simulate(19, 10.0, 0).is_ok());
        p.classes[0].speed_min = 0.0;
        assert!(LevyWalk::new(p.clone()).simulate(20, 10.0, 0).is_err());
        p.classes[0].speed_min = 1.0;
        p.flight.exponent = 3.0;
        assert!(LevyWalk::new(p).simulate(20, 10.0, 0).is_err());
    }
}
