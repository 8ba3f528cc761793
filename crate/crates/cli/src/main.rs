use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use oppcomp_core::contact::contacts_from_positions;
use oppcomp_core::experiment::{
    self, bound_reports, compare_estimate_accuracy, presets, saved_points, ExperimentReport, ExperimentSpec,
    MobilitySpec, ModelKind, PointSummary,
};
use oppcomp_core::sim::load_records;

#[derive(Parser)]
#[command(name = "oppcomp", version, about = "Service composition over opportunistic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec file.
    Run {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a built-in figure preset, or print its spec.
    Preset {
        /// One of fig3, fig4, fig5, fig6, fig7, fig8, fig9, fig10, fig11, fig13, fig14.
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        workers: Option<usize>,
        /// Print the preset spec instead of running it.
        #[arg(long)]
        print: bool,
    },
    /// Re-aggregate a saved experiment directory.
    Analyze {
        run_dir: PathBuf,
        /// Report estimated cost against actual delay.
        #[arg(long)]
        estimate_accuracy: bool,
        /// Check completion ratios at lengths 2 and 3 against p^2 and p^3.
        #[arg(long)]
        bound_check: bool,
        /// Slack added to the bounds.
        #[arg(long, default_value_t = 0.0)]
        slack: f64,
    },
    /// Generate a position trace (CSV) from a mobility parameter file.
    GenTrace {
        /// levy, slaw, hcmm, trace or gps
        model: String,
        /// TOML mobility table: nodes, duration_s, sample_s, range_m and the
        /// model's own table.
        params: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trace CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the extracted contacts here.
        #[arg(long)]
        contacts: Option<PathBuf>,
    },
}

fn out_root(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os("OPPCOMP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("oppcomp-out"))
}

fn run_spec(mut spec: ExperimentSpec, out: Option<PathBuf>, seeds: Option<u32>, workers: Option<usize>) -> Result<bool> {
    if let Some(k) = seeds {
        if k == 0 {
            bail!("--seeds must be at least 1");
        }
        spec.seeds = k;
    }
    if workers.is_some() {
        spec.workers = workers;
    }
    let dir = match (out, &spec.out) {
        (Some(o), _) => o,
        (None, Some(o)) => spec.base_dir.join(o),
        (None, None) => out_root(None).join(&spec.name),
    };
    eprintln!(
        "running {} points x {} seeds into {}",
        spec.points.len(),
        spec.seeds,
        dir.display()
    );
    let report = experiment::run_experiment(&spec, &dir)?;
    print_report(&report)?;
    Ok(report.failures.is_empty())
}

fn print_report(report: &ExperimentReport) -> Result<()> {
    for f in &report.failures {
        eprintln!("run failed: point {} ({}) seed {}: {}", f.point, f.label, f.seed, f.error);
    }
    print_summaries(&report.points)?;
    eprintln!("summary written to {}", report.dir.join("summary.csv").display());
    Ok(())
}

fn print_summaries(points: &[PointSummary]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:>5}  {:<40} {:>5} {:>7} {:>7} {:>7} {:>8} {:>6} {:>6}",
        "point", "label", "runs", "rate", "min", "max", "p50_min", "hops0", "opp"
    )?;
    for p in points {
        writeln!(
            out,
            "{:>5}  {:<40} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>8} {:>6.3} {:>6.3}",
            p.index,
            p.label,
            p.runs,
            p.completion_mean(),
            p.completion_min(),
            p.completion_max(),
            p.delay_percentile(0.5).map_or("-".into(), |d| format!("{:.2}", d / 60.0)),
            p.zero_hop_fraction(),
            p.opportunistic_fraction(),
        )?;
    }
    Ok(())
}

fn analyze(dir: &Path, estimate: bool, bound: bool, slack: f64) -> Result<()> {
    let summaries = experiment::aggregate(dir)?;
    print_summaries(&summaries)?;
    let points = saved_points(dir)?;
    if estimate {
        println!();
        println!("{:>5}  {:<40} {:>9} {:>9} {:>11}", "point", "label", "within2m", "within4m", "incomplete");
        for (i, (spec, runs)) in points.iter().enumerate() {
            let mut records = Vec::new();
            for (_, path) in runs {
                records.extend(load_records(path)?);
            }
            let acc = compare_estimate_accuracy(&records, spec.sim.timeout_s());
            println!(
                "{:>5}  {:<40} {:>9.3} {:>9.3} {:>11}",
                i,
                spec.label,
                acc.within(120.0),
                acc.within(240.0),
                acc.incomplete_fraction().map_or("-".into(), |f| format!("{f:.3}")),
            );
        }
    }
    if bound {
        let rated: Vec<_> = points
            .iter()
            .zip(&summaries)
            .map(|((spec, _), s)| (spec.clone(), s.completion_mean()))
            .collect();
        let reports = bound_reports(&rated, slack);
        if reports.is_empty() {
            println!("no point groups with forced lengths 1, 2 and 3");
        }
        println!();
        for (label, r) in reports {
            println!(
                "{label}: p1={:.3} len2={:.3} (p^2={:.3}, {}) len3={:.3} (p^3={:.3}, {})",
                r.p1,
                r.observed2,
                r.bound2(),
                if r.holds2() { "ok" } else { "above" },
                r.observed3,
                r.bound3(),
                if r.holds3() { "ok" } else { "above" },
            );
        }
    }
    Ok(())
}

fn gen_trace(model: &str, params: &Path, seed: u64, out: Option<PathBuf>, contacts: Option<PathBuf>) -> Result<()> {
    let mut spec = MobilitySpec::load(params)?;
    spec.model = model.parse::<ModelKind>()?;
    let base = params.parent().unwrap_or(Path::new(""));
    let trace = spec.positions(seed, base)?;
    match out {
        Some(p) => trace.save(&p)?,
        None => trace.write_csv(std::io::stdout().lock())?,
    }
    if let Some(p) = contacts {
        contacts_from_positions(&trace, spec.range_m).save(&p)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            spec,
            out,
            seeds,
            workers,
        } => ExperimentSpec::load(&spec)
            .map_err(Into::into)
            .and_then(|s| run_spec(s, out, seeds, workers)),
        Command::Preset {
            name,
            out,
            seeds,
            workers,
            print,
        } => {
            if print {
                presets::preset_text(&name).map(|t| {
                    print!("{t}");
                    true
                }).map_err(Into::into)
            } else {
                presets::preset(&name)
                    .map_err(Into::into)
                    .and_then(|s| run_spec(s, out.map(|o| o.join(&name)), seeds, workers))
            }
        }
        Command::Analyze {
            run_dir,
            estimate_accuracy,
            bound_check,
            slack,
        } => analyze(&run_dir, estimate_accuracy, bound_check, slack).map(|_| true),
        Command::GenTrace {
            model,
            params,
            seed,
            out,
            contacts,
        } => gen_trace(&model, &params, seed, out, contacts).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
