//! Seed-replicated experiments.
//!
//! An experiment directory holds one sub-directory per sweep point with the
//! resolved `point.toml` and, per seed, `seed-<k>.csv` (requests) and
//! `seed-<k>.nodes.csv`. Summaries are always recomputed from those files,
//! so re-aggregating a saved directory reproduces them exactly.

pub mod analysis;
pub mod metrics;
pub mod presets;
pub mod spec;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::contact::ContactTrace;
use crate::error::{Error, Result};
use crate::sim::{self, load_records, save_records, NodeStats, RequestRecord, RunResult};

pub use analysis::{bound_reports, compare_estimate_accuracy, completion_bound_check, BoundReport, EstimateAccuracy};
pub use metrics::{write_summary, PointSummary};
pub use spec::{ExperimentSpec, MobilitySpec, ModelKind, PointSpec};

/// A run that could not be completed; it is left out of aggregation.
#[derive(Debug)]
pub struct RunFailure {
    pub point: usize,
    pub label: String,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub points: Vec<PointSummary>,
    pub failures: Vec<RunFailure>,
}

fn point_dir(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("p{index:03}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save_nodes(path: &Path, nodes: &[NodeStats]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["node", "executed", "mean_load_s"])?;
    for (i, n) in nodes.iter().enumerate() {
        w.write_record([i.to_string(), n.executed.to_string(), n.mean_load.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_nodes(path: &Path) -> Result<Vec<NodeStats>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::parse(path, i as u64 + 2, "bad node row");
        if rec.len() != 3 {
            return Err(bad());
        }
        out.push(NodeStats {
            executed: rec[1].parse().map_err(|_| bad())?,
            mean_load: rec[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

fn save_lines(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    let mut text = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum::<usize>() + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    write_text(path, &text)
}

fn save_run(dir: &Path, seed: u64, run: &RunResult, audit: bool) -> Result<()> {
    save_records(&dir.join(format!("seed-{seed}.csv")), &run.records)?;
    save_nodes(&dir.join(format!("seed-{seed}.nodes.csv")), &run.nodes)?;
    if audit {
        save_lines(
            &dir.join(format!("seed-{seed}.decisions.csv")),
            "time,node,request_id,chosen_path,estimated_cost",
            &run.decisions,
        )?;
        save_lines(
            &dir.join(format!("seed-{seed}.transfers.csv")),
            "time,request_id,from,to,reason",
            &run.transfer_log,
        )?;
    }
    Ok(())
}

/// Runs one point for one seed in memory.
pub fn run_point(point: &PointSpec, seed: u64, base_dir: &Path) -> Result<RunResult> {
    let trace = point.mobility.contacts(seed, base_dir)?;
    run_on(point, seed, &trace)
}

fn run_on(point: &PointSpec, seed: u64, trace: &ContactTrace) -> Result<RunResult> {
    let mut cfg = point.sim.clone();
    cfg.seed = seed;
    sim::run(&cfg, trace)
}

/// Runs every point for every seed, writes the per-run files under `dir`
/// and aggregates them.
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<ExperimentReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in spec.points.iter().enumerate() {
        let pd = point_dir(dir, i);
        if pd.exists() {
            std::fs::remove_dir_all(&pd).map_err(|e| Error::io(&pd, e))?;
        }
        std::fs::create_dir_all(&pd).map_err(|e| Error::io(&pd, e))?;
        let text = toml::to_string(p).map_err(|e| Error::Config(e.to_string()))?;
        write_text(&pd.join("point.toml"), &text)?;
    }
    let work = || execute(spec, dir);
    let failures = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let skip: BTreeSet<(usize, u64)> = failures.iter().map(|f| (f.point, f.seed)).collect();
    let points = aggregate_with(dir, &skip)?;
    Ok(ExperimentReport {
        dir: dir.to_owned(),
        points,
        failures,
    })
}

fn execute(spec: &ExperimentSpec, dir: &Path) -> Vec<RunFailure> {
    let seeds = spec.seed_list();
    let keys: BTreeSet<(String, u64)> = spec
        .points
        .iter()
        .flat_map(|p| seeds.iter().map(move |&s| (spec::mobility_key(&p.mobility), s)))
        .collect();
    let mob: std::collections::BTreeMap<String, &MobilitySpec> =
        spec.points.iter().map(|p| (spec::mobility_key(&p.mobility), &p.mobility)).collect();
    let traces: Vec<((String, u64), std::result::Result<Arc<ContactTrace>, String>)> = keys
        .into_par_iter()
        .map(|(k, s)| {
            let t = mob[&k].contacts(s, &spec.base_dir).map(Arc::new).map_err(|e| e.to_string());
            ((k, s), t)
        })
        .collect();
    let traces: std::collections::BTreeMap<_, _> = traces.into_iter().collect();

    let jobs: Vec<(usize, u64)> = (0..spec.points.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let mut failures: Vec<RunFailure> = jobs
        .into_par_iter()
        .filter_map(|(i, seed)| {
            let p = &spec.points[i];
            let out = match &traces[&(spec::mobility_key(&p.mobility), seed)] {
                Ok(t) => run_on(p, seed, t).and_then(|run| save_run(&point_dir(dir, i), seed, &run, p.sim.audit)),
                Err(e) => Err(Error::Mobility(e.clone())),
            };
            out.err().map(|error| RunFailure {
                point: i,
                label: p.label.clone(),
                seed,
                error,
            })
        })
        .collect();
    failures.sort_by_key(|f| (f.point, f.seed));
    failures
}

/// Recomputes summaries from a saved experiment directory and rewrites the
/// summary files.
pub fn aggregate(dir: &Path) -> Result<Vec<PointSummary>> {
    aggregate_with(dir, &BTreeSet::new())
}

/// Sweep points saved in `dir` with their per-seed run files.
pub fn saved_points(dir: &Path) -> Result<Vec<(PointSpec, Vec<(u64, PathBuf)>)>> {
    let mut pdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("point.toml").is_file())
        .collect();
    pdirs.sort();
    if pdirs.is_empty() {
        return Err(Error::Empty(format!("no sweep points under {}", dir.display())));
    }
    let mut out = Vec::new();
    for pd in pdirs {
        let path = pd.join("point.toml");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let spec: PointSpec = toml::from_str(&text).map_err(|e| Error::parse(&path, 0, e.message().to_owned()))?;
        let mut runs: Vec<(u64, PathBuf)> = std::fs::read_dir(&pd)
            .map_err(|e| Error::io(&pd, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| {
                let name = p.file_name()?.to_str()?;
                let seed = name.strip_prefix("seed-")?.strip_suffix(".csv")?.parse().ok()?;
                Some((seed, p))
            })
            .collect();
        runs.sort();
        out.push((spec, runs));
    }
    Ok(out)
}

fn aggregate_with(dir: &Path, skip: &BTreeSet<(usize, u64)>) -> Result<Vec<PointSummary>> {
    let mut summaries = Vec::new();
    for (i, (spec, runs)) in saved_points(dir)?.into_iter().enumerate() {
        let mut records: Vec<Vec<RequestRecord>> = Vec::new();
        let mut nodes = Vec::new();
        for (seed, path) in runs {
            if skip.contains(&(i, seed)) {
                continue;
            }
            records.push(load_records(&path)?);
            let np = path.with_extension("nodes.csv");
            if np.is_file() {
                nodes.push(load_nodes(&np)?);
            }
        }
        summaries.push(PointSummary::from_runs(i, &spec, &records, &nodes));
    }
    write_summary(dir, &summaries)?;
    Ok(summaries)
}
