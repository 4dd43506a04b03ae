//! The `qmon` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use queue_monitor::engine::{RunMetadata, Scenario};
use queue_monitor::metrics::TrialResult;
use queue_monitor::processes::{generate, ProcessSpec};

fn qmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmon")).args(args).output().expect("qmon starts")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const BERNOULLI: &str = r#"{
    "arrival": {"kind": "batch_bernoulli", "prob": 0.05, "size": 12},
    "departure": {"kind": "constant_rate", "rate": 1},
    "policy": {"kind": "poa_dep", "epsilon": 0.1},
    "estimator": {"kind": "extrapolating"},
    "horizon": 1500,
    "trials": 12,
    "seed": 3
}"#;

fn read_trials(dir: &Path) -> Vec<TrialResult> {
    fs::read_to_string(dir.join("trials.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn run_writes_summary_trials_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BERNOULLI);
    let out = dir.path().join("out");
    let status = qmon(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("n_trials,degenerate_trials,"));
    assert!(header.contains("ratio_mean") && header.contains("ratio_se"));
    assert!(lines.next().unwrap().starts_with("12,"));

    let trials = read_trials(&out);
    assert_eq!(trials.len(), 12);
    assert_eq!(trials.iter().map(|t| t.seed).collect::<Vec<_>>(), (3..15).collect::<Vec<_>>());

    let meta: RunMetadata = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    let expected: Scenario = serde_json::from_value({
        let mut v: serde_json::Value = serde_json::from_str(BERNOULLI).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("trials");
        obj.remove("seed");
        v
    })
    .unwrap();
    assert_eq!(meta.scenario, expected);
    assert_eq!(meta.base_seed, 3);
    assert_eq!(meta.trials, 12);
    assert_eq!(meta.scenario_hash, queue_monitor::engine::scenario_hash(&expected));
    assert!(!dir.path().join("out").join(".summary.csv.tmp").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BERNOULLI);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = qmon(&["run", "--config", &config, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(status.status.success());
        outputs.push((
            fs::read_to_string(out.join("summary.csv")).unwrap(),
            fs::read_to_string(out.join("trials.jsonl")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BERNOULLI);
    let out = dir.path().join("out");
    let status = qmon(&[
        "run", "--config", &config, "--out", out.to_str().unwrap(), "--seed", "100", "--trials", "3", "--eps", "0.2",
        "--horizon", "400",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let meta: RunMetadata = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta.base_seed, 100);
    assert_eq!(meta.trials, 3);
    assert_eq!(meta.scenario.policy.epsilon.value(), 0.2);
    assert_eq!(meta.scenario.horizon, Some(400));
}

#[test]
fn replay_configs_may_point_at_a_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = generate(
        &ProcessSpec::BatchBernoulli { prob: 0.05, size: 10 },
        &ProcessSpec::ConstantRate { rate: 1 },
        Some(800),
        9,
    )
    .unwrap();
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).unwrap();
    fs::write(dir.path().join("trace.csv"), &csv).unwrap();
    let config = write_config(
        dir.path(),
        r#"{
        "arrival": {"kind": "replay", "path": "trace.csv"},
        "departure": {"kind": "replay", "path": "trace.csv"},
        "policy": {"kind": "pico", "epsilon": 0.2},
        "estimator": {"kind": "pico"},
        "trials": 4
    }"#,
    );
    let out = dir.path().join("out");
    let status = qmon(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let meta: RunMetadata = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    let ProcessSpec::Replay { trace: inlined } = &meta.scenario.arrival else {
        panic!("replay expected")
    };
    assert_eq!(inlined, &trace);
    let trials = read_trials(&out);
    assert!(trials.iter().all(|t| t.packets == trials[0].packets && t.over_bound_holds == Some(true)));
}

#[test]
fn config_errors_exit_with_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        (BERNOULLI.replace("\"horizon\"", "\"horizn\""), "horizn"),
        (BERNOULLI.replace("\"extrapolating\"", "\"pico\""), "pico"),
        (BERNOULLI.replace("0.1}", "1.5}"), "epsilon"),
        (BERNOULLI.replace("\"prob\": 0.05", "\"prob\": \"high\""), "arrival"),
    ];
    for (body, key) in cases {
        let config = write_config(dir.path(), &body);
        let status = qmon(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        let stderr = String::from_utf8_lossy(&status.stderr);
        assert_eq!(status.status.code(), Some(1), "{stderr}");
        assert!(stderr.contains(key), "expected `{key}` in {stderr}");
    }
    assert!(!out.exists());

    let status = qmon(&["run", "--config", "/nonexistent/config.json", "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(1));
    assert_eq!(qmon(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qmon(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BERNOULLI);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("out");
    let status = qmon(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(2), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn sweep_runs_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BERNOULLI);
    let out = dir.path().join("sweep");
    let status = qmon(&[
        "sweep", "--config", &config, "--out", out.to_str().unwrap(), "--axis", "epsilon", "--values", "0.2,0.1,0.05",
    ]);
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(stdout.contains("ratio trend:"));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("axis,value,n_trials"));
    assert!(rows[1].starts_with("epsilon,0.2,12,"));
    assert_eq!(fs::read_to_string(out.join("trials.jsonl")).unwrap().lines().count(), 36);

    let status = qmon(&[
        "sweep", "--config", &config, "--out", out.to_str().unwrap(), "--axis", "policy", "--values",
        "poa_dep,poa_arr,pico,poa_always,scaled_poa:0.5",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let empty = qmon(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--axis", "h", "--values"]);
    assert_eq!(empty.status.code(), Some(1));
    let no_h = qmon(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--axis", "h", "--values", "10"]);
    assert_eq!(no_h.status.code(), Some(1));
}

#[test]
fn demo_writes_report_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let status = qmon(&["demo", "eg1", "--out", out.to_str().unwrap(), "--h", "8", "--trials", "20"]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let report = fs::read_to_string(out.join("eg1.csv")).unwrap();
    assert!(report.starts_with("arm,seed,opt,alg,ratio,pings_per_packet"));
    assert_eq!(report.lines().count(), 1 + 4 * 20);
    let verdict = fs::read_to_string(out.join("eg1-verdict.txt")).unwrap();
    assert!(verdict.starts_with("eg1:"));
    assert!(String::from_utf8_lossy(&status.stdout).contains("[PASS] same_ping_law"));

    let unknown = qmon(&["demo", "lb-nothing", "--out", out.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(1));
    let bad = qmon(&["demo", "lb-dep", "--out", out.to_str().unwrap(), "--eps", "0.5"]);
    assert_eq!(bad.status.code(), Some(1));
}
