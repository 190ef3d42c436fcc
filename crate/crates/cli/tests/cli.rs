use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csma-aoi"));
    cmd.env_remove("CSMA_AOI_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_lone_node() {
    let o = run(&["solve", "--n", "1", "--p", "0.05", "--w0", "8"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("p_cl   0\n"));
    assert!(text.contains("mu     0.222222222222\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(
        run(&["solve", "--n", "20", "--p", "0.03"]).status.code(),
        Some(3)
    );
    assert_eq!(
        run(&["solve", "--n", "0", "--p", "0.01"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["solve", "--n", "5", "--p", "1.5"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["capacity"]).status.code(), Some(2));
    let o = run(&[
        "sweep",
        "--var",
        "p",
        "--n",
        "5",
        "--grid",
        "0.01",
        "--out",
        "/nonexistent/dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(
        run(&["sweep", "--spec", "/nonexistent/spec.txt"])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn capacity_prints_limits() {
    assert_eq!(stdout(&run(&["capacity", "--p", "0.01"])), "34\n");
    assert_eq!(stdout(&run(&["capacity", "--n", "1"])), "0.222222222222\n");
}

fn simulate_into(dir: &Path, tag: &str, seed: Option<&str>) -> Vec<Vec<u8>> {
    let trace = dir.join(format!("trace_{tag}"));
    let aoi = dir.join(format!("aoi_{tag}"));
    let stats = dir.join(format!("stats_{tag}"));
    let mut cmd = bin();
    cmd.args([
        "simulate",
        "--n",
        "6",
        "--p",
        "0.01",
        "--horizon",
        "100000",
        "--warmup",
        "1000",
    ]);
    if let Some(s) = seed {
        cmd.args(["--seed", s]);
    }
    cmd.arg("--trace").arg(&trace);
    cmd.args(["--aoi-path", "2", "--aoi-out"]).arg(&aoi);
    cmd.arg("--out").arg(&stats);
    assert!(cmd.status().unwrap().success());
    [trace, aoi, stats]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_into(dir.path(), "a", Some("7"));
    let b = simulate_into(dir.path(), "b", Some("7"));
    assert_eq!(a, b);
    assert_eq!(a[0].iter().filter(|&&c| c == b'\n').count(), 100_000);
    assert!(a[1].starts_with(b"slot,age\n"));
    let c = simulate_into(dir.path(), "c", Some("8"));
    assert_ne!(a[0], c[0]);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let explicit = simulate_into(dir.path(), "x", Some("9"));
    let out = dir.path().join("env.json");
    let status = bin()
        .env("CSMA_AOI_SEED", "9")
        .args([
            "simulate",
            "--n",
            "6",
            "--p",
            "0.01",
            "--horizon",
            "100000",
            "--warmup",
            "1000",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(out).unwrap(), explicit[2]);
}

#[test]
fn sweep_from_spec_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("fig.spec");
    std::fs::write(
        &spec,
        "# packet-rate sweep\nvar = p\nn = 10\nw0 = 8\ngrid = 0.002, 0.004, 0.04\nmodes = analytic, simulate\nhorizon = 50000\nseed = 4\n",
    )
    .unwrap();
    let sweep = |out: &Path, extra: &[&str]| {
        let o = bin()
            .arg("sweep")
            .arg("--spec")
            .arg(&spec)
            .arg("--out")
            .arg(out)
            .args(extra)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let a = sweep(&dir.path().join("a.csv"), &[]);
    let b = sweep(&dir.path().join("b.csv"), &[]);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with(",over_capacity"));
    assert!(lines[1].contains(",10,8,"));

    let c = sweep(
        &dir.path().join("c.json"),
        &["--n", "5", "--format", "json"],
    );
    assert!(c.trim_start().starts_with('['));
    assert!(c.contains("\"N\": 5"));
    assert!(c.contains("\"seed\": 6"));
}
