use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SEED: &str = "2021";

fn ste(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ste"))
        .args(args)
        .env_remove("STE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report(o: &Output) -> Value {
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_str(&stdout(o)).unwrap()
}

fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/golden")
        .join(name);
    fs::read_to_string(p).unwrap()
}

#[test]
fn transform_writes_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig5.stec");
    let o = ste(&["transform", "fig4", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        golden("fig5.golden.stec")
    );
    let again = ste(&["transform", "fig4"]);
    assert_eq!(stdout(&again), golden("fig5.golden.stec"));
}

#[test]
fn transform_rejects_invalid_pragma() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("bad.stec");
    fs::write(
        &src,
        "int s = 0;\n#pragma omp taskloop tls(0)\nfor (i = 0; i < 4; i++) { s = s + i; }\n",
    )
    .unwrap();
    let o = ste(&["transform", src.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        ste(&["run", "--no-such-flag", "corners"]).status.code(),
        Some(1)
    );
    assert_eq!(ste(&["run", "no-such-kernel"]).status.code(), Some(1));
    assert_eq!(
        ste(&["run", "corners", "--threads", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(
        ste(&["run", "corners", "--htm-granule", "24"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(ste(&["--help"]).status.code(), Some(0));
}

#[test]
fn privatized_kernel_has_no_conflicts() {
    let r = report(&ste(&[
        "run",
        "bitcount",
        "--threads",
        "4",
        "--sched",
        "rand:7",
        "--seed",
        SEED,
    ]));
    assert_eq!(r["aborts"]["conflict"], 0);
    assert_eq!(r["digest"], r["serial_digest"]);
}

#[test]
fn one_monotonic_thread_runs_every_strip_directly() {
    let r = report(&ste(&[
        "run",
        "corners",
        "--threads",
        "1",
        "--sched",
        "mono",
        "--seed",
        SEED,
    ]));
    let strips = r["retries"].as_array().unwrap().len() as u64;
    assert_eq!(r["nonspec"].as_u64(), Some(strips));
    assert_eq!(r["tx_started"], 0);
}

#[test]
fn true_dependences_stay_serial_equal() {
    for exec in ["threads", "sim"] {
        let r = report(&ste(&[
            "run",
            "basket",
            "--threads",
            "4",
            "--exec",
            exec,
            "--seed",
            SEED,
        ]));
        assert!(r["aborts"]["conflict"].as_u64().is_some());
        assert_eq!(r["digest"], r["serial_digest"]);
    }
}

#[test]
fn report_and_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("t.csv");
    let o = ste(&[
        "run",
        "edges",
        "--threads",
        "2",
        "--exec",
        "sim",
        "--report",
        json.to_str().unwrap(),
        "--trace",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for key in ["commits", "aborts", "retries", "nonspec", "digest"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    let trace = fs::read_to_string(&csv).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("seq,strip,worker,attempt,outcome"));
    let finished = lines
        .filter(|l| l.ends_with(",committed") || l.ends_with(",nonspeculative"))
        .count() as u64;
    assert_eq!(finished, r["retries"].as_array().unwrap().len() as u64);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ste.conf");
    fs::write(&cfg, "# test\nthreads = 1\nsched = mono\nstrip = 50\n").unwrap();
    let c = cfg.to_str().unwrap();
    let r = report(&ste(&["run", "corners", "--config", c]));
    assert_eq!(r["retries"].as_array().unwrap().len(), 80);
    assert_eq!(r["tx_started"], 0);
    let r = report(&ste(&["run", "corners", "--config", c, "--strip", "40"]));
    assert_eq!(r["retries"].as_array().unwrap().len(), 100);
    fs::write(&cfg, "threads = many\n").unwrap();
    assert_eq!(
        ste(&["run", "corners", "--config", c]).status.code(),
        Some(1)
    );
}

#[test]
fn seed_comes_from_environment() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_ste"))
        .args(["run", "basket", "--threads", "1"])
        .env("STE_SEED", SEED)
        .output()
        .unwrap();
    let explicit = report(&ste(&["run", "basket", "--threads", "1", "--seed", SEED]));
    let other = report(&ste(&["run", "basket", "--threads", "1", "--seed", "7"]));
    assert_eq!(report(&with_env)["digest"], explicit["digest"]);
    assert_ne!(explicit["digest"], other["digest"]);
}

const HEADER: &str = "kernel,threads,sched,strip,commits,conflict,capacity,order_inversion,other,nonspec,retries_max";

#[test]
fn bench_grid_is_deterministic() {
    let args = [
        "bench",
        "--kernels",
        "corners,edges,basket",
        "--threads",
        "1,2,4",
        "--sched",
        "mono,lifo",
        "--strip",
        "9,30",
        "--seed",
        SEED,
    ];
    let a = ste(&args);
    let b = ste(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    assert_eq!(lines.count(), 3 * 3 * 2 * 2);
}

#[test]
fn bench_defaults_and_empty_set() {
    let o = ste(&["bench", "--kernels", "", "--seed", SEED]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), format!("{HEADER}\n"));
    let o = ste(&[
        "bench",
        "--kernels",
        "edges",
        "--threads",
        "2",
        "--sched",
        "rand:3",
    ]);
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], ["edges", "2", "rand:3", "25"]);
    assert_eq!(ste(&["bench", "--kernels", "nope"]).status.code(), Some(1));
}

#[test]
fn ordered_baseline_and_deadlock() {
    let r = report(&ste(&[
        "ordered",
        "ordered_corners",
        "--threads",
        "3",
        "--seed",
        SEED,
    ]));
    assert_eq!(r["digest"], r["serial_digest"]);
    assert_eq!(r["regions_overlap"], false);

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("stuck.stec");
    let text = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/kernels/ordered_corners.stec"),
    )
    .unwrap();
    let stuck: String = text
        .lines()
        .filter(|l| !l.contains("depend(source)"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&src, stuck).unwrap();
    let o = ste(&[
        "ordered",
        src.to_str().unwrap(),
        "--threads",
        "2",
        "--timeout-ms",
        "3000",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("deadlock"));
}
