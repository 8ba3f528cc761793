//! Position traces: synthetic generators and GPS log ingestion.
//!
//! Generators produce continuous piecewise-linear [`Movement`]s which are
//! then sampled on a uniform grid into a [`PositionTrace`]. The trace CSV
//! layout is `time_s,node_id,x_m,y_m`, one row per present node per sample.

mod gps;
mod hcmm;
mod levy;
pub mod powerlaw;
mod slaw;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gps::{ingest_gps_log, AreaMapping, GpsOptions};
pub use hcmm::{community_crossings, generate_hcmm, Hcmm, HcmmParams};
pub use levy::{generate_levy, LevyWalk, LevyWalkParams, SpeedClass};
pub use slaw::{generate_slaw, Slaw, SlawParams};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, f: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * f, self.y + (other.y - self.y) * f)
    }
}

/// Rectangle `[0, width] x [0, height]` in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn square(side: f64) -> Self {
        Area {
            width: side,
            height: side,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::Mobility(format!(
                "area must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// A time-stamped position; movement between consecutive keyframes is linear.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keyframe {
    pub t: f64,
    pub p: Point,
}

/// Continuous movement of every node plus the flight lengths drawn while
/// generating it.
#[derive(Clone, Debug, Default)]
pub struct Movement {
    pub area: Option<Area>,
    pub paths: Vec<Vec<Keyframe>>,
    pub flights: Vec<f64>,
}

impl Movement {
    pub fn position(&self, node: usize, t: f64) -> Point {
        position_at(&self.paths[node], t)
    }

    pub fn sample(&self, area: Area, duration: f64, interval: f64) -> PositionTrace {
        let samples = sample_count(duration, interval);
        let positions = self
            .paths
            .iter()
            .map(|path| {
                (0..samples)
                    .map(|k| Some(area.clamp(position_at(path, k as f64 * interval))))
                    .collect()
            })
            .collect();
        PositionTrace {
            area,
            sample_interval: interval,
            duration,
            positions,
        }
    }
}

fn position_at(path: &[Keyframe], t: f64) -> Point {
    let i = path.partition_point(|k| k.t <= t);
    if i == 0 {
        return path[0].p;
    }
    if i == path.len() {
        return path[i - 1].p;
    }
    let (a, b) = (path[i - 1], path[i]);
    if b.t <= a.t {
        return b.p;
    }
    a.p.lerp(b.p, (t - a.t) / (b.t - a.t))
}

pub(crate) fn sample_count(duration: f64, interval: f64) -> usize {
    (duration / interval + 1e-9).floor() as usize + 1
}

/// Uniformly sampled positions. `None` marks a node that is absent at a
/// sample (GPS gaps); synthetic traces are always fully populated.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionTrace {
    pub area: Area,
    pub sample_interval: f64,
    pub duration: f64,
    /// `positions[node][sample]`
    pub positions: Vec<Vec<Option<Point>>>,
}

impl PositionTrace {
    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn sample_count(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn time(&self, sample: usize) -> f64 {
        sample as f64 * self.sample_interval
    }

    pub fn at(&self, node: usize, sample: usize) -> Option<Point> {
        self.positions[node][sample]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "node_id", "x_m", "y_m"])?;
        for k in 0..self.sample_count() {
            let t = self.time(k).to_string();
            for (n, node) in self.positions.iter().enumerate() {
                if let Some(p) = node[k] {
                    w.write_record([t.as_str(), &n.to_string(), &p.x.to_string(), &p.y.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
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

    /// Parses the trace CSV. The area is the bounding box of all samples and
    /// the sample interval is the smallest gap between distinct times.
    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows: Vec<(f64, usize, Point)> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            if rec.len() != 4 {
                return Err(Error::parse(origin, line, format!("expected 4 fields, got {}", rec.len())));
            }
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(origin, line, format!("field {}: {e}", j + 1)))
            };
            let node: usize = rec[1]
                .trim()
                .parse()
                .map_err(|e| Error::parse(origin, line, format!("node id: {e}")))?;
            rows.push((num(0)?, node, Point::new(num(2)?, num(3)?)));
        }
        if rows.is_empty() {
            return Err(Error::Empty(format!("{}: no trace rows", origin.display())));
        }
        let mut times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let start = times[0];
        let interval = times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let interval = if interval.is_finite() { interval } else { 1.0 };
        let duration = times[times.len() - 1] - start;
        let samples = sample_count(duration, interval);
        let nodes = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        let mut positions = vec![vec![None; samples]; nodes];
        let (mut w, mut h) = (0.0f64, 0.0f64);
        for (t, n, p) in rows {
            let k = ((t - start) / interval).round() as usize;
            positions[n][k.min(samples - 1)] = Some(p);
            w = w.max(p.x);
            h = h.max(p.y);
        }
        Ok(PositionTrace {
            area: Area {
                width: w.max(1.0),
                height: h.max(1.0),
            },
            sample_interval: interval,
            duration,
            positions,
        })
    }
}

/// Moves from `from` towards `heading` for `length` meters, bouncing off the
/// area edges. Returns the intermediate bounce points followed by the end
/// point.
pub(crate) fn reflect_path(area: Area, from: Point, heading: f64, length: f64) -> Vec<Point> {
    let mut out = Vec::new();
    let (mut dx, mut dy) = (heading.cos(), heading.sin());
    let mut p = from;
    let mut left = length;
    for _ in 0..64 {
        if left <= 1e-9 {
            break;
        }
        let tx = if dx > 1e-12 {
            (area.width - p.x) / dx
        } else if dx < -1e-12 {
            -p.x / dx
        } else {
            f64::INFINITY
        };
        let ty = if dy > 1e-12 {
            (area.height - p.y) / dy
        } else if dy < -1e-12 {
            -p.y / dy
        } else {
            f64::INFINITY
        };
        let hit = tx.min(ty).max(0.0);
        if hit >= left {
            p = area.clamp(Point::new(p.x + dx * left, p.y + dy * left));
            left = 0.0;
        } else {
            p = area.clamp(Point::new(p.x + dx * hit, p.y + dy * hit));
            left -= hit;
            if tx <= ty {
                dx = -dx;
            }
            if ty <= tx {
                dy = -dy;
            }
        }
        out.push(p);
    }
    if left > 1e-9 {
        // Degenerate corner oscillation; stop where we are.
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_stays_inside_and_preserves_length() {
        let area = Area::square(100.0);
        let start = Point::new(10.0, 50.0);
        let pts = reflect_path(area, start, 0.3, 750.0);
        let mut prev = start;
        let mut total = 0.0;
        for p in &pts {
            assert!(area.contains(*p));
            total += prev.distance(*p);
            prev = *p;
        }
        assert!((total - 750.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn keyframe_interpolation() {
        let path = vec![
            Keyframe { t: 0.0, p: Point::new(0.0, 0.0) },
            Keyframe { t: 10.0, p: Point::new(10.0, 0.0) },
        ];
        assert_eq!(position_at(&path, 5.0), Point::new(5.0, 0.0));
        assert_eq!(position_at(&path, 20.0), Point::new(10.0, 0.0));
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = PositionTrace {
            area: Area::square(10.0),
            sample_interval: 30.0,
            duration: 60.0,
            positions: vec![
                vec![Some(Point::new(1.0, 2.0)), Some(Point::new(2.0, 2.5)), Some(Point::new(3.0, 3.0))],
                vec![Some(Point::new(4.0, 4.0)), None, Some(Point::new(10.0, 10.0))],
            ],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_s,node_id,x_m,y_m\n"));
        let back = PositionTrace::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.positions, trace.positions);
        assert_eq!(back.sample_interval, 30.0);
        assert_eq!(back.duration, 60.0);
    }

    #[test]
    fn trace_csv_reports_bad_line() {
        let text = "time_s,node_id,x_m,y_m\n0,0,1,1\n30,zero,1,1\n";
        let err = PositionTrace::read_csv(text.as_bytes(), Path::new("t.csv")).unwrap_err();
        assert!(err.to_string().contains("t.csv:3"), "{err}");
    }
}
