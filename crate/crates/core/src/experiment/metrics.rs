use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{NodeStats, RequestRecord, RequestStatus};

use super::analysis::compare_estimate_accuracy;
use super::spec::PointSpec;

/// Aggregated metrics for one sweep point over its seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSummary {
    pub index: usize,
    pub label: String,
    pub runs: usize,
    pub generated: usize,
    pub completed: usize,
    pub timed_out: usize,
    pub in_flight: usize,
    /// Per-run completion rates, in seed order.
    pub rates: Vec<f64>,
    /// Sorted delays (s) of completed requests created after warm-up.
    pub delays: Vec<f64>,
    /// Completed requests by hop count.
    pub hops: BTreeMap<u32, usize>,
    /// Completed requests by number of executed stages.
    pub lengths: BTreeMap<usize, usize>,
    pub stages_executed: usize,
    pub stages_opportunistic: usize,
    /// Completed requests whose stages all ran on the requester.
    pub local_completions: usize,
    /// Fewest hops over completions that used another node; `None` if none.
    pub remote_min_hops: Option<u32>,
    /// Sorted `estimate - delay` (s) over completed requests with an estimate.
    pub estimate_diffs: Vec<f64>,
    pub incomplete: usize,
    /// Incomplete requests whose estimate already exceeded the timeout.
    pub incomplete_accurate: usize,
    pub mean_load: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Nearest-rank percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

impl PointSummary {
    pub fn from_runs(index: usize, spec: &PointSpec, runs: &[Vec<RequestRecord>], nodes: &[Vec<NodeStats>]) -> Self {
        let all: Vec<&RequestRecord> = runs.iter().flatten().collect();
        let completed: Vec<&RequestRecord> = all.iter().copied().filter(|r| r.is_completed()).collect();
        let mut hops = BTreeMap::new();
        let mut lengths = BTreeMap::new();
        for r in &completed {
            *hops.entry(r.hops).or_insert(0) += 1;
            *lengths.entry(r.stages.len()).or_insert(0) += 1;
        }
        let remote = |r: &&&RequestRecord| r.stages.iter().any(|s| s.node != r.origin);
        let flat: Vec<RequestRecord> = all.iter().map(|r| (*r).clone()).collect();
        let acc = compare_estimate_accuracy(&flat, spec.sim.timeout_s());
        let loads: Vec<f64> = nodes.iter().flatten().map(|n| n.mean_load).collect();
        PointSummary {
            index,
            label: spec.label.clone(),
            runs: runs.len(),
            generated: all.len(),
            completed: completed.len(),
            timed_out: all.iter().filter(|r| r.status == RequestStatus::TimedOut).count(),
            in_flight: all.iter().filter(|r| r.status == RequestStatus::InFlight).count(),
            rates: runs
                .iter()
                .map(|run| {
                    if run.is_empty() {
                        0.0
                    } else {
                        run.iter().filter(|r| r.is_completed()).count() as f64 / run.len() as f64
                    }
                })
                .collect(),
            delays: sorted(
                completed
                    .iter()
                    .filter(|r| r.created >= spec.sim.warmup_s)
                    .filter_map(|r| r.delay())
                    .collect(),
            ),
            hops,
            lengths,
            stages_executed: all.iter().map(|r| r.stages.len()).sum(),
            stages_opportunistic: all.iter().map(|r| r.opportunistic_stages()).sum(),
            local_completions: completed.iter().filter(|r| !remote(r)).count(),
            remote_min_hops: completed.iter().filter(remote).map(|r| r.hops).min(),
            estimate_diffs: acc.diffs,
            incomplete: acc.incomplete,
            incomplete_accurate: acc.incomplete_accurate,
            mean_load: mean(&loads),
        }
    }

    pub fn completion_mean(&self) -> f64 {
        mean(&self.rates)
    }

    pub fn completion_min(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min).min(1.0)
    }

    pub fn completion_max(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    pub fn delay_percentile(&self, q: f64) -> Option<f64> {
        percentile(&self.delays, q)
    }

    /// Fraction of completed requests with at most `h` hops.
    pub fn hops_at_most(&self, h: u32) -> f64 {
        if self.completed == 0 {
            return 0.0;
        }
        self.hops.range(..=h).map(|(_, c)| c).sum::<usize>() as f64 / self.completed as f64
    }

    pub fn zero_hop_fraction(&self) -> f64 {
        self.hops_at_most(0)
    }

    pub fn opportunistic_fraction(&self) -> f64 {
        if self.stages_executed == 0 {
            0.0
        } else {
            self.stages_opportunistic as f64 / self.stages_executed as f64
        }
    }

    pub fn mean_length(&self) -> f64 {
        if self.completed == 0 {
            return 0.0;
        }
        self.lengths.iter().map(|(l, c)| (*l * *c) as f64).sum::<f64>() / self.completed as f64
    }

    /// Fraction of completed requests whose estimate is within `tol` seconds
    /// of the actual delay.
    pub fn estimate_within(&self, tol: f64) -> f64 {
        if self.estimate_diffs.is_empty() {
            return 0.0;
        }
        self.estimate_diffs.iter().filter(|d| d.abs() <= tol).count() as f64 / self.estimate_diffs.len() as f64
    }

    pub fn incomplete_accuracy(&self) -> Option<f64> {
        (self.incomplete > 0).then(|| self.incomplete_accurate as f64 / self.incomplete as f64)
    }
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

fn fo(x: Option<f64>) -> String {
    x.map_or_else(String::new, f)
}

pub const SUMMARY_HEADER: [&str; 25] = [
    "point",
    "label",
    "runs",
    "generated",
    "completed",
    "timed_out",
    "in_flight",
    "completion_mean",
    "completion_min",
    "completion_max",
    "delay_samples",
    "delay_p25_s",
    "delay_p50_s",
    "delay_p75_s",
    "delay_p90_s",
    "delay_mean_s",
    "zero_hop_frac",
    "hops_le5_frac",
    "remote_min_hops",
    "mean_length",
    "opportunistic_frac",
    "estimate_within_240s",
    "incomplete_accurate_frac",
    "mean_load_s",
    "local_completions",
];

fn create(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(file)))
}

fn done<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `hops.csv`, `lengths.csv`, `delay_cdf.csv` and
/// `estimate_cdf.csv` into `dir`.
pub fn write_summary(dir: &Path, points: &[PointSummary]) -> Result<()> {
    let path = dir.join("summary.csv");
    let mut w = create(&path)?;
    w.write_record(SUMMARY_HEADER)?;
    for p in points {
        w.write_record([
            p.index.to_string(),
            p.label.clone(),
            p.runs.to_string(),
            p.generated.to_string(),
            p.completed.to_string(),
            p.timed_out.to_string(),
            p.in_flight.to_string(),
            f(p.completion_mean()),
            f(p.completion_min()),
            f(p.completion_max()),
            p.delays.len().to_string(),
            fo(p.delay_percentile(0.25)),
            fo(p.delay_percentile(0.5)),
            fo(p.delay_percentile(0.75)),
            fo(p.delay_percentile(0.9)),
            fo((!p.delays.is_empty()).then(|| mean(&p.delays))),
            f(p.zero_hop_fraction()),
            f(p.hops_at_most(5)),
            p.remote_min_hops.map_or_else(String::new, |h| h.to_string()),
            f(p.mean_length()),
            f(p.opportunistic_fraction()),
            f(p.estimate_within(240.0)),
            fo(p.incomplete_accuracy()),
            f(p.mean_load),
            p.local_completions.to_string(),
        ])?;
    }
    done(w, &path)?;

    let path = dir.join("hops.csv");
    let mut w = create(&path)?;
    w.write_record(["point", "hops", "count"])?;
    for p in points {
        for (h, c) in &p.hops {
            w.write_record([p.index.to_string(), h.to_string(), c.to_string()])?;
        }
    }
    done(w, &path)?;

    let path = dir.join("lengths.csv");
    let mut w = create(&path)?;
    w.write_record(["point", "length", "count"])?;
    for p in points {
        for (l, c) in &p.lengths {
            w.write_record([p.index.to_string(), l.to_string(), c.to_string()])?;
        }
    }
    done(w, &path)?;

    for (name, col, pick) in [
        ("delay_cdf.csv", "delay_s", (|p: &PointSummary| &p.delays) as fn(&PointSummary) -> &Vec<f64>),
        ("estimate_cdf.csv", "estimate_minus_delay_s", |p: &PointSummary| &p.estimate_diffs),
    ] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        w.write_record(["point", col, "fraction"])?;
        for p in points {
            let v = pick(p);
            for (i, x) in v.iter().enumerate() {
                w.write_record([p.index.to_string(), f(*x), f((i + 1) as f64 / v.len() as f64)])?;
            }
        }
        done(w, &path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::{IoType, NodeId, Service};
    use crate::sim::StageRecord;

    fn rec(id: u64, status: RequestStatus, created: f64, completed: Option<f64>, hops: u32, nodes: &[u32]) -> RequestRecord {
        RequestRecord {
            id,
            origin: NodeId(0),
            input: IoType(1),
            output: IoType(5),
            created,
            deadline: created + 900.0,
            status,
            completed,
            hops,
            stages: nodes
                .iter()
                .map(|&n| StageRecord {
                    service: Service::new(1, 5),
                    node: NodeId(n),
                    opportunistic: n == 9,
                })
                .collect(),
            estimated_cost: Some(300.0),
        }
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), Some(2.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(4.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn summary_counts() {
        let spec = PointSpec::default();
        let runs = vec![
            vec![
                rec(0, RequestStatus::Completed, 8000.0, Some(8100.0), 0, &[0]),
                rec(1, RequestStatus::Completed, 100.0, Some(500.0), 4, &[3, 9]),
                rec(2, RequestStatus::TimedOut, 8000.0, None, 1, &[]),
            ],
            vec![rec(0, RequestStatus::Completed, 9000.0, Some(9700.0), 2, &[4])],
        ];
        let s = PointSummary::from_runs(0, &spec, &runs, &[]);
        assert_eq!((s.generated, s.completed, s.timed_out), (4, 3, 1));
        assert_eq!(s.rates, vec![2.0 / 3.0, 1.0]);
        // The request created at 100 s falls inside warm-up.
        assert_eq!(s.delays, vec![100.0, 700.0]);
        assert_eq!(s.hops.values().sum::<usize>(), s.completed);
        assert_eq!(s.lengths.values().sum::<usize>(), s.completed);
        assert_eq!(s.local_completions, 1);
        assert_eq!(s.remote_min_hops, Some(2));
        assert_eq!(s.stages_executed, 4);
        assert_eq!(s.opportunistic_fraction(), 0.25);
        assert_eq!(s.estimate_diffs, vec![-400.0, -100.0, 200.0]);
        assert_eq!(s.incomplete, 1);
        assert_eq!(s.incomplete_accurate, 0);
    }
}
