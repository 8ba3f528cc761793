use std::collections::BTreeMap;

use super::spec::PointSpec;
use crate::sim::{RequestPattern, RequestRecord};

/// How well the cost estimated at creation predicted the outcome.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateAccuracy {
    /// Sorted `estimate - delay` in seconds, completed requests only.
    pub diffs: Vec<f64>,
    pub incomplete: usize,
    /// Incomplete requests whose estimate exceeded the timeout, i.e. the
    /// estimate already said the request would not make it. A request with
    /// no feasible path counts as an infinite estimate.
    pub incomplete_accurate: usize,
}

impl EstimateAccuracy {
    pub fn within(&self, tol_s: f64) -> f64 {
        if self.diffs.is_empty() {
            return 0.0;
        }
        self.diffs.iter().filter(|d| d.abs() <= tol_s).count() as f64 / self.diffs.len() as f64
    }

    pub fn incomplete_fraction(&self) -> Option<f64> {
        (self.incomplete > 0).then(|| self.incomplete_accurate as f64 / self.incomplete as f64)
    }
}

pub fn compare_estimate_accuracy(records: &[RequestRecord], timeout_s: f64) -> EstimateAccuracy {
    let mut out = EstimateAccuracy::default();
    for r in records {
        match (r.delay(), r.estimated_cost) {
            (Some(d), Some(e)) => out.diffs.push(e - d),
            (Some(_), None) => {}
            (None, est) => {
                out.incomplete += 1;
                if est.is_none_or(|e| e > timeout_s) {
                    out.incomplete_accurate += 1;
                }
            }
        }
    }
    out.diffs.sort_by(f64::total_cmp);
    out
}

/// Observed completion ratios at forced lengths 2 and 3 against `p^2` and
/// `p^3`, where `p` is the ratio at length 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub p1: f64,
    pub observed2: f64,
    pub observed3: f64,
    pub slack: f64,
}

impl BoundReport {
    pub fn bound2(&self) -> f64 {
        self.p1.powi(2)
    }

    pub fn bound3(&self) -> f64 {
        self.p1.powi(3)
    }

    pub fn holds2(&self) -> bool {
        self.observed2 <= self.bound2() + self.slack
    }

    pub fn holds3(&self) -> bool {
        self.observed3 <= self.bound3() + self.slack
    }
}

pub fn completion_bound_check(p1: f64, observed2: f64, observed3: f64, slack: f64) -> BoundReport {
    BoundReport {
        p1,
        observed2,
        observed3,
        slack,
    }
}

/// Groups points that differ only in forced composition length and checks
/// every group holding lengths 1, 2 and 3. Returns `(label, report)` pairs
/// where the label is the length-1 point's label.
pub fn bound_reports(points: &[(PointSpec, f64)], slack: f64) -> Vec<(String, BoundReport)> {
    let mut groups: BTreeMap<String, BTreeMap<i32, (String, f64)>> = BTreeMap::new();
    for (p, rate) in points {
        let RequestPattern::Length { length } = p.sim.pattern else { continue };
        let mut key = p.clone();
        key.label.clear();
        key.sim.pattern = RequestPattern::Length { length: 0 };
        let key = toml::to_string(&key).unwrap_or_default();
        groups.entry(key).or_default().insert(length, (p.label.clone(), *rate));
    }
    groups
        .into_values()
        .filter_map(|g| {
            let (label, p1) = g.get(&1)?.clone();
            Some((label, completion_bound_check(p1, g.get(&2)?.1, g.get(&3)?.1, slack)))
        })
        .collect()
}

pub fn completion_ratio(records: &[RequestRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.is_completed()).count() as f64 / records.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::{IoType, NodeId};
    use crate::sim::RequestStatus;

    fn rec(est: Option<f64>, delay: Option<f64>) -> RequestRecord {
        RequestRecord {
            id: 0,
            origin: NodeId(0),
            input: IoType(1),
            output: IoType(2),
            created: 0.0,
            deadline: 900.0,
            status: if delay.is_some() {
                RequestStatus::Completed
            } else {
                RequestStatus::TimedOut
            },
            completed: delay,
            hops: 0,
            stages: vec![],
            estimated_cost: est,
        }
    }

    #[test]
    fn difference_sample() {
        let a = compare_estimate_accuracy(&[rec(Some(300.0), Some(420.0))], 900.0);
        assert_eq!(a.diffs, vec![-120.0]);
        assert_eq!(a.within(240.0), 1.0);
    }

    #[test]
    fn incomplete_split() {
        let a = compare_estimate_accuracy(&[rec(Some(960.0), None), rec(Some(600.0), None), rec(None, None)], 900.0);
        assert_eq!(a.incomplete, 3);
        assert_eq!(a.incomplete_accurate, 2);
        assert!(a.diffs.is_empty());
    }

    #[test]
    fn bound_groups_by_everything_but_length() {
        let pt = |len, side: f64| {
            let mut p = PointSpec::default();
            p.label = format!("len={len},side={side}");
            p.sim.pattern = RequestPattern::Length { length: len };
            p.mobility.side_m = Some(side);
            p
        };
        let pts = vec![
            (pt(1, 500.0), 0.9),
            (pt(2, 500.0), 0.7),
            (pt(3, 500.0), 0.8),
            (pt(1, 900.0), 0.5),
            (pt(2, 900.0), 0.2),
        ];
        let r = bound_reports(&pts, 0.05);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, "len=1,side=500");
        assert!(r[0].1.holds2());
        assert!(!r[0].1.holds3());
    }

    #[test]
    fn bound_arithmetic() {
        let b = completion_bound_check(0.8, 0.6, 0.5, 0.0);
        assert!((b.bound2() - 0.64).abs() < 1e-12);
        assert!((b.bound3() - 0.512).abs() < 1e-12);
        assert!(b.holds2() && b.holds3());
        assert!(!completion_bound_check(0.8, 0.7, 0.5, 0.05).holds2());
    }
}
