use std::path::Path;
use std::process::{Command, Output};

fn oppcomp() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oppcomp"));
    c.env_remove("OPPCOMP_OUT");
    c
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
name = "small"
seeds = 2

[mobility]
nodes = 12
duration_s = 3600.0

[sim]
n_types = 12
ring = true
repetition = 2

[sim.pattern]
kind = "length"
length = 1

[sweep]
"sim.pattern.length" = [1, 2, 3]
"#;

fn write_spec(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn preset_print_emits_parsable_spec() {
    let text = ok(oppcomp().args(["preset", "fig3", "--print"]).output().unwrap());
    assert!(text.contains("name = \"fig3\""));
    let out = oppcomp().args(["preset", "fig99", "--print"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out = dir.path().join("out");
    let table = ok(oppcomp()
        .arg("run")
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "2"])
        .output()
        .unwrap());
    assert!(table.lines().next().unwrap().contains("label"));
    assert_eq!(table.lines().count(), 4);
    for f in ["summary.csv", "hops.csv", "delay_cdf.csv", "p000/point.toml", "p002/seed-2.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = std::fs::read(out.join("summary.csv")).unwrap();

    let report = ok(oppcomp()
        .arg("analyze")
        .arg(&out)
        .args(["--estimate-accuracy", "--bound-check"])
        .output()
        .unwrap());
    assert!(report.contains("within4m"));
    assert!(report.contains("p^2="), "{report}");
    assert_eq!(std::fs::read(out.join("summary.csv")).unwrap(), summary);
}

#[test]
fn seed_override_and_env_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let root = dir.path().join("root");
    ok(oppcomp()
        .arg("run")
        .arg(&spec)
        .args(["--seeds", "1"])
        .env("OPPCOMP_OUT", &root)
        .output()
        .unwrap());
    assert!(root.join("small/p001/seed-1.csv").is_file());
    assert!(!root.join("small/p001/seed-2.csv").exists());

    let out = oppcomp().arg("run").arg(&spec).args(["--seeds", "0"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn bad_spec_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "name = \"bad\"\nseeds = 1\nmobility = 3\n").unwrap();
    let out = oppcomp().arg("run").arg(&p).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml"), "{err}");
}

#[test]
fn gen_trace_writes_positions_and_contacts() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("levy.toml");
    std::fs::write(&params, "nodes = 5\nduration_s = 600.0\nsample_s = 10.0\nrange_m = 100.0\n").unwrap();
    let text = ok(oppcomp().arg("gen-trace").arg("levy").arg(&params).output().unwrap());
    // Header plus 61 samples for each of the five nodes.
    assert_eq!(text.lines().count(), 1 + 5 * 61, "{}", text.lines().next().unwrap());

    let trace = dir.path().join("trace.csv");
    let contacts = dir.path().join("contacts.csv");
    ok(oppcomp()
        .arg("gen-trace")
        .arg("levy")
        .arg(&params)
        .args(["--seed", "3", "--out"])
        .arg(&trace)
        .arg("--contacts")
        .arg(&contacts)
        .output()
        .unwrap());
    assert!(trace.is_file() && contacts.is_file());
    let again = ok(oppcomp().arg("gen-trace").arg("levy").arg(&params).args(["--seed", "3"]).output().unwrap());
    assert_eq!(std::fs::read_to_string(&trace).unwrap(), again);

    let out = oppcomp().arg("gen-trace").arg("walk").arg(&params).output().unwrap();
    assert!(!out.status.success());
}
