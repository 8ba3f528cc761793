use oppcomp_core::contact::{ContactEvent, ContactTrace};
use oppcomp_core::experiment::{aggregate, run_experiment, ExperimentSpec, MobilitySpec};
use oppcomp_core::forwarding::ForwardingScheme;
use oppcomp_core::knowledge::AwarenessLevel;
use oppcomp_core::rng::{stream, Stream};
use oppcomp_core::service::{NodeId, ServicePlacement};
use oppcomp_core::sim::{
    execution_time, run, run_with_placement, write_records, RequestPattern, RequestStatus, RunResult, SimConfig,
};
use proptest::prelude::*;

fn n(i: u32) -> NodeId {
    NodeId(i)
}

/// Every pair in contact for the whole run.
fn full_mesh(nodes: u32, duration: f64) -> ContactTrace {
    let mut ev = Vec::new();
    for a in 0..nodes {
        for b in a + 1..nodes {
            ev.push(ContactEvent::new(n(a), n(b), 0.0, duration));
        }
    }
    ContactTrace::new(ev, nodes as usize, duration)
}

fn levy_contacts(seed: u64, duration: f64) -> ContactTrace {
    let spec = MobilitySpec {
        duration_s: duration,
        ..MobilitySpec::default()
    };
    spec.contacts(seed, std::path::Path::new("")).unwrap()
}

fn conserved(run: &RunResult) -> bool {
    let done = run.count(RequestStatus::Completed);
    let late = run.count(RequestStatus::TimedOut);
    let open = run.count(RequestStatus::InFlight);
    run.records.len() == done + late + open
}

fn csv_bytes(run: &RunResult) -> Vec<u8> {
    let mut out = Vec::new();
    write_records(&mut out, &run.records).unwrap();
    out
}

#[test]
fn execution_mean_matches() {
    let mut rng = stream(7, Stream::Execution);
    let total: f64 = (0..10_000).map(|_| execution_time(30.0, false, &mut rng)).sum();
    let mean = total / 10_000.0;
    assert!((mean - 30.0).abs() <= 1.0, "mean {mean}");
    assert_eq!(execution_time(30.0, true, &mut rng), 30.0);
}

#[test]
fn zero_rate_generates_nothing() {
    let cfg = SimConfig {
        request_rate_per_min: 0.0,
        ..SimConfig::default()
    };
    let out = run(&cfg, &full_mesh(20, 3600.0)).unwrap();
    assert!(out.records.is_empty());
}

#[test]
fn single_node_completes_locally() {
    let cfg = SimConfig {
        repetition: 1,
        request_rate_per_min: 0.2,
        ..SimConfig::default()
    };
    let catalog = cfg.catalog().unwrap();
    let placement = ServicePlacement {
        repetition: 1,
        assignments: vec![catalog.services.clone()],
    };
    let trace = ContactTrace::new(Vec::new(), 1, 7200.0);
    let out = run_with_placement(&cfg, &trace, placement).unwrap();
    assert!(!out.records.is_empty());
    assert!(conserved(&out));
    for r in out.records.iter().filter(|r| r.is_completed()) {
        assert_eq!(r.hops, 0);
        assert!(r.stages.iter().all(|s| s.node == n(0)));
    }
    assert!(out.count(RequestStatus::Completed) > 0);
}

#[test]
fn static_mesh_delay_is_pure_execution() {
    let cfg = SimConfig {
        awareness: AwarenessLevel::Perfect,
        deterministic_exec: true,
        request_rate_per_min: 0.01,
        ..SimConfig::default()
    };
    let out = run(&cfg, &full_mesh(5, 36_000.0)).unwrap();
    let recs = &out.records;
    assert!(recs.len() > 10);
    let mut isolated = 0;
    for (i, r) in recs.iter().enumerate() {
        if r.created >= 36_000.0 - cfg.timeout_min * 60.0 {
            continue;
        }
        // Every request is feasible: each service has two hosts, all in reach.
        assert_eq!(r.status, RequestStatus::Completed, "request {i} did not complete");
        let end = r.completed.unwrap();
        let overlaps = recs
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && o.created < end && o.completed.unwrap_or(f64::INFINITY) > r.created);
        if !overlaps {
            isolated += 1;
            let expect = r.stages.len() as f64 * cfg.mean_exec_s;
            assert!((r.delay().unwrap() - expect).abs() < 1e-6, "request {i}: {} vs {expect}", r.delay().unwrap());
        }
    }
    assert!(isolated >= 10, "only {isolated} isolated requests");
}

#[test]
fn direct_never_completes_remotely_without_provider_meetings() {
    // Nodes 0 and 1 host nothing and only ever meet each other; 2 and 3 host
    // everything but never meet anyone.
    let cfg = SimConfig {
        forwarding: ForwardingScheme::Direct,
        request_rate_per_min: 0.5,
        ..SimConfig::default()
    };
    let all = cfg.catalog().unwrap().services;
    let placement = ServicePlacement {
        repetition: 2,
        assignments: vec![vec![], vec![], all.clone(), all],
    };
    let trace = ContactTrace::new(vec![ContactEvent::new(n(0), n(1), 0.0, 7200.0)], 4, 7200.0);
    let out = run_with_placement(&cfg, &trace, placement).unwrap();
    let done: Vec<_> = out.records.iter().filter(|r| r.is_completed()).collect();
    assert!(!done.is_empty());
    for r in done {
        assert_eq!(r.hops, 0);
        assert!(r.stages.iter().all(|s| s.node == r.origin));
    }
}

#[test]
fn identical_inputs_give_identical_csv() {
    let trace = levy_contacts(3, 10_800.0);
    let cfg = SimConfig {
        seed: 3,
        ..SimConfig::default()
    };
    let a = run(&cfg, &trace).unwrap();
    let b = run(&cfg, &trace).unwrap();
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    assert_eq!(a.nodes, b.nodes);
    let other = run(&SimConfig { seed: 4, ..cfg }, &trace).unwrap();
    assert_ne!(csv_bytes(&a), csv_bytes(&other));
}

#[test]
fn remote_completions_take_two_hops() {
    let trace = levy_contacts(5, 18_000.0);
    for forwarding in [ForwardingScheme::Direct, ForwardingScheme::Mt, ForwardingScheme::Tt, ForwardingScheme::Ebr] {
        let out = run(
            &SimConfig {
                forwarding,
                seed: 5,
                ..SimConfig::default()
            },
            &trace,
        )
        .unwrap();
        assert!(conserved(&out));
        for r in out.records.iter().filter(|r| r.is_completed()) {
            if r.stages.iter().any(|s| s.node != r.origin) {
                assert!(r.hops >= 2, "{forwarding:?}: request {} used {} hops", r.id, r.hops);
            } else {
                assert_eq!(r.hops, 0);
            }
        }
    }
}

#[test]
fn reaggregation_reproduces_summaries() {
    let text = r#"
name = "small"
seeds = 2
[mobility]
duration_s = 5400.0
[[variant]]
name = "direct"
sim = { forwarding = "direct" }
[[variant]]
name = "mt"
sim = { forwarding = "mt", audit = true }
"#;
    let spec = ExperimentSpec::parse(text, std::path::Path::new("small.toml"), std::path::PathBuf::new()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&spec, dir.path()).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.points.len(), 2);
    assert!(dir.path().join("p001/seed-1.decisions.csv").is_file());
    assert!(dir.path().join("p001/seed-2.transfers.csv").is_file());
    let names = ["summary.csv", "hops.csv", "lengths.csv", "delay_cdf.csv", "estimate_cdf.csv"];
    let before: Vec<Vec<u8>> = names.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    let again = aggregate(dir.path()).unwrap();
    let after: Vec<Vec<u8>> = names.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(again.len(), 2);
    for p in &again {
        assert_eq!(p.generated, p.completed + p.timed_out + p.in_flight);
    }
}

fn scheme() -> impl Strategy<Value = ForwardingScheme> {
    prop_oneof![
        Just(ForwardingScheme::Direct),
        Just(ForwardingScheme::Tt),
        Just(ForwardingScheme::Ebr),
        Just(ForwardingScheme::Mt),
    ]
}

fn awareness() -> impl Strategy<Value = AwarenessLevel> {
    prop_oneof![
        Just(AwarenessLevel::Minimal),
        Just(AwarenessLevel::Local),
        Just(AwarenessLevel::Global),
        Just(AwarenessLevel::Perfect),
    ]
}

/// Up to 40 random contacts among 6 nodes over two hours.
fn small_trace() -> impl Strategy<Value = ContactTrace> {
    prop::collection::vec((0u32..6, 0u32..6, 0.0f64..7200.0, 0.0f64..900.0), 0..40).prop_map(|raw| {
        let ev = raw
            .into_iter()
            .filter(|(a, b, _, _)| a != b)
            .map(|(a, b, s, len)| ContactEvent::new(n(a), n(b), s, (s + len).min(7200.0)))
            .collect();
        ContactTrace::new(ev, 6, 7200.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_request_is_accounted_for(
        trace in small_trace(),
        forwarding in scheme(),
        awareness in awareness(),
        rate in 0.1f64..1.0,
        seed in 0u64..1000,
    ) {
        let cfg = SimConfig {
            forwarding,
            awareness,
            request_rate_per_min: rate,
            repetition: 1,
            n_types: 4,
            excluded: vec![],
            pattern: RequestPattern::MinFunctionality { k: 2 },
            seed,
            ..SimConfig::default()
        };
        // Six services of the 4-type catalog, one per node.
        let catalog = cfg.catalog().unwrap();
        let placement = ServicePlacement {
            repetition: 1,
            assignments: catalog.services.iter().map(|&s| vec![s]).collect(),
        };
        let out = run_with_placement(&cfg, &trace, placement).unwrap();
        prop_assert!(conserved(&out));
        for r in &out.records {
            prop_assert!(r.deadline == r.created + cfg.timeout_min * 60.0);
            match r.status {
                RequestStatus::Completed => {
                    let d = r.delay().unwrap();
                    prop_assert!(d >= 0.0 && r.completed.unwrap() <= r.deadline);
                    // Stages chain from the request input to its output.
                    let mut at = r.input;
                    for s in &r.stages {
                        prop_assert_eq!(s.service.input, at);
                        at = s.service.output;
                    }
                    prop_assert_eq!(at, r.output);
                    let remote = r.stages.iter().any(|s| s.node != r.origin);
                    let hops_ok = if remote { r.hops >= 2 } else { r.hops == 0 };
                    prop_assert!(hops_ok, "remote {} with {} hops", remote, r.hops);
                }
                RequestStatus::TimedOut => prop_assert!(r.completed.is_none()),
                RequestStatus::InFlight => prop_assert!(r.deadline > 7200.0),
            }
        }
        let executed: u64 = out.nodes.iter().map(|s| s.executed).sum();
        let stages: usize = out.records.iter().map(|r| r.stages.len()).sum();
        prop_assert_eq!(executed as usize, stages);
    }
}
