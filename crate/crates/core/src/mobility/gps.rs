//! GPS track log ingestion.
//!
//! Input rows are `user_id,timestamp_s,x_or_lon,y_or_lat` (an optional header
//! row is skipped). Tracks are resampled onto a uniform grid with linear
//! interpolation; gaps longer than `max_gap_s` leave the node absent.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Area, Point, PositionTrace};
use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_000.0;
const DAY_S: f64 = 86_400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaMapping {
    /// Columns are already planar meters.
    #[default]
    Meters,
    /// Columns are longitude/latitude degrees, projected equirectangularly
    /// around the data's south-west corner.
    LonLat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpsOptions {
    pub mapping: AreaMapping,
    pub sample_interval_s: f64,
    pub truncate_to_s: Option<f64>,
    /// Start of the kept window; by default the track start that keeps the
    /// most tracks inside the window.
    pub window_start_s: Option<f64>,
    /// Treat each (user, day) as its own node, overlaid on a common day.
    pub split_multiday: bool,
    pub max_gap_s: f64,
}

impl Default for GpsOptions {
    fn default() -> Self {
        GpsOptions {
            mapping: AreaMapping::Meters,
            sample_interval_s: 30.0,
            truncate_to_s: Some(5400.0),
            window_start_s: None,
            split_multiday: true,
            max_gap_s: 600.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct TrackKey {
    user: String,
    day: i64,
}

struct Fix {
    t: f64,
    a: f64,
    b: f64,
}

pub fn ingest_gps_log<P: AsRef<Path>>(files: &[P], opts: &GpsOptions) -> Result<PositionTrace> {
    if !(opts.sample_interval_s > 0.0) {
        return Err(Error::Config("sample interval must be positive".into()));
    }
    let mut tracks: BTreeMap<TrackKey, Vec<Fix>> = BTreeMap::new();
    for file in files {
        let path = file.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_rows(&text, path, opts, &mut tracks)?;
    }
    for fixes in tracks.values_mut() {
        fixes.sort_by(|x, y| x.t.total_cmp(&y.t));
    }
    if tracks.is_empty() {
        return Err(Error::Empty("GPS logs contain no fixes".into()));
    }

    let project = projection(&tracks, opts.mapping);
    let (start, end) = window(&tracks, opts);
    let dt = opts.sample_interval_s;
    let samples = super::sample_count(end - start, dt);

    let mut positions = Vec::new();
    for fixes in tracks.values() {
        let row: Vec<Option<Point>> = (0..samples)
            .map(|k| interpolate(fixes, start + k as f64 * dt, opts.max_gap_s).map(|(a, b)| project(a, b)))
            .collect();
        if row.iter().any(Option::is_some) {
            positions.push(row);
        }
    }
    if positions.is_empty() {
        return Err(Error::Empty("no track has fixes inside the kept window".into()));
    }

    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    for p in positions.iter().flatten().flatten() {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
    }
    let (mut w, mut h) = (0.0f64, 0.0f64);
    for p in positions.iter_mut().flatten().flatten() {
        p.x -= min_x;
        p.y -= min_y;
        w = w.max(p.x);
        h = h.max(p.y);
    }
    Ok(PositionTrace {
        area: Area {
            width: w.max(1.0),
            height: h.max(1.0),
        },
        sample_interval: dt,
        duration: (samples - 1) as f64 * dt,
        positions,
    })
}

fn parse_rows(
    text: &str,
    path: &Path,
    opts: &GpsOptions,
    tracks: &mut BTreeMap<TrackKey, Vec<Fix>>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.len() < 4 {
            return Err(Error::parse(path, line, format!("expected 4 fields, got {}", rec.len())));
        }
        let num = |j: usize| rec[j].parse::<f64>();
        if i == 0 && num(1).is_err() {
            continue;
        }
        let field = |j: usize, what: &str| {
            num(j).map_err(|e| Error::parse(path, line, format!("{what} {:?}: {e}", &rec[j])))
        };
        let t = field(1, "timestamp")?;
        let a = field(2, "x")?;
        let b = field(3, "y")?;
        let (day, t) = if opts.split_multiday {
            ((t / DAY_S).floor() as i64, t.rem_euclid(DAY_S))
        } else {
            (0, t)
        };
        tracks
            .entry(TrackKey {
                user: rec[0].to_string(),
                day,
            })
            .or_default()
            .push(Fix { t, a, b });
    }
    Ok(())
}

fn projection(tracks: &BTreeMap<TrackKey, Vec<Fix>>, mapping: AreaMapping) -> impl Fn(f64, f64) -> Point {
    let fixes = tracks.values().flatten();
    let (mut lon0, mut lat0, mut lat_sum, mut n) = (f64::INFINITY, f64::INFINITY, 0.0, 0.0);
    for f in fixes {
        lon0 = lon0.min(f.a);
        lat0 = lat0.min(f.b);
        lat_sum += f.b;
        n += 1.0;
    }
    let cos_lat = (lat_sum / n).to_radians().cos();
    move |a, b| match mapping {
        AreaMapping::Meters => Point::new(a, b),
        AreaMapping::LonLat => Point::new(
            EARTH_RADIUS_M * (a - lon0).to_radians() * cos_lat,
            EARTH_RADIUS_M * (b - lat0).to_radians(),
        ),
    }
}

fn window(tracks: &BTreeMap<TrackKey, Vec<Fix>>, opts: &GpsOptions) -> (f64, f64) {
    let first = |f: &Vec<Fix>| f[0].t;
    let last = |f: &Vec<Fix>| f[f.len() - 1].t;
    let min_t = tracks.values().map(first).fold(f64::INFINITY, f64::min);
    let max_t = tracks.values().map(last).fold(f64::NEG_INFINITY, f64::max);
    let Some(span) = opts.truncate_to_s else {
        return (min_t, max_t);
    };
    let start = opts.window_start_s.unwrap_or_else(|| {
        let covered = |s: f64| {
            tracks
                .values()
                .filter(|f| f.iter().any(|x| x.t >= s && x.t <= s + span))
                .count()
        };
        let mut best = (0usize, min_t);
        let mut starts: Vec<f64> = tracks.values().map(first).collect();
        starts.sort_by(f64::total_cmp);
        for s in starts {
            let c = covered(s);
            if c > best.0 {
                best = (c, s);
            }
        }
        best.1
    });
    let data_end = tracks
        .values()
        .flat_map(|f| f.iter().map(|x| x.t))
        .filter(|&t| t >= start && t <= start + span)
        .fold(start, f64::max);
    (start, data_end.min(max_t).max(start))
}

fn interpolate(fixes: &[Fix], t: f64, max_gap: f64) -> Option<(f64, f64)> {
    let i = fixes.partition_point(|f| f.t < t);
    if let Some(f) = fixes.get(i) {
        if (f.t - t).abs() < 1e-9 {
            return Some((f.a, f.b));
        }
    }
    if i == 0 || i == fixes.len() {
        return None;
    }
    let (p, q) = (&fixes[i - 1], &fixes[i]);
    if q.t - p.t > max_gap {
        return None;
    }
    let f = (t - p.t) / (q.t - p.t);
    Some((p.a + (q.a - p.a) * f, p.b + (q.b - p.b) * f))
}
