//! The `qmon` command line: `run`, `sweep` and `demo`.
//!
//! Exit codes: 0 on success, 1 for bad arguments or configuration, 2 when a
//! valid configuration fails while running or writing output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::demos::{run_demo, DemoParams, DemoReport, DEMO_NAMES};
use crate::engine::{run_experiment_with_threads, ExperimentSummary, RunMetadata, Scenario};
use crate::error::{Error, Result};
use crate::queue::AnyTrace;

#[derive(Debug, Parser)]
#[command(name = "qmon", version, about = "Simulate queue-height monitoring policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario for many seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one scenario per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values. Policies are written `poa_dep`, `poa_arr`,
        /// `pico`, `poa_always` or `scaled_poa:<c>`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one of the adversarial demonstrations.
    Demo {
        /// One of lb-dep, lb-arr, poa-insufficiency, eg1, eg3.
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        h: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        phases: Option<u64>,
        /// Steps of the bursty instance.
        #[arg(long, alias = "horizon")]
        steps: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Clone, Default, clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Sets the policy's epsilon and that of any phase instance.
    #[arg(long)]
    eps: Option<f64>,
    /// Sets `h` of the instance processes.
    #[arg(long)]
    h: Option<u64>,
    /// Sets the horizon, or the step count of the bursty instance.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    Epsilon,
    H,
    Policy,
}

/// A run configuration: a scenario plus how many seeds to run.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arrival: crate::processes::ProcessSpec,
    pub departure: crate::processes::ProcessSpec,
    pub policy: crate::policies::PolicyParams,
    pub estimator: crate::estimators::EstimatorKind,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_trials() -> usize {
    100
}

impl RunConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            arrival: self.arrival.clone(),
            departure: self.departure.clone(),
            policy: self.policy,
            estimator: self.estimator,
            horizon: self.horizon,
        }
    }

    /// Parses and validates a configuration. Replay processes may give a
    /// `path` to a trace CSV, resolved against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        inline_replay_paths(&mut value, base_dir)?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn from_value(value: Value) -> Result<Self> {
        let config: RunConfig = serde_json::from_value(value.clone()).map_err(|e| locate(&value, e))?;
        config.scenario().validate()?;
        if config.trials == 0 {
            return Err(Error::out_of_range("trials", 0, "at least 1"));
        }
        Ok(config)
    }
}

/// Errors inside tagged sections do not carry a path; prefix the section.
fn locate(config: &Value, err: serde_json::Error) -> Error {
    fn fails<T: serde::de::DeserializeOwned>(v: &Value) -> bool {
        serde_json::from_value::<T>(v.clone()).is_err()
    }
    let section = config.as_object().and_then(|root| {
        root.iter().find_map(|(key, v)| {
            let bad = match key.as_str() {
                "arrival" | "departure" => fails::<crate::processes::ProcessSpec>(v),
                "policy" => fails::<crate::policies::PolicyParams>(v),
                "estimator" => fails::<crate::estimators::EstimatorKind>(v),
                _ => false,
            };
            bad.then(|| key.clone())
        })
    });
    match section {
        Some(key) => Error::Json(serde::de::Error::custom(format!("in `{key}`: {err}"))),
        None => Error::Json(err),
    }
}

fn inline_replay_paths(config: &mut Value, base_dir: &Path) -> Result<()> {
    for side in ["arrival", "departure"] {
        let Some(spec) = config.get_mut(side).and_then(Value::as_object_mut) else {
            continue;
        };
        if spec.get("kind").and_then(Value::as_str) != Some("replay") {
            continue;
        }
        if let Some(path) = spec.remove("path") {
            let path = path.as_str().ok_or_else(|| {
                Error::MalformedTrace(format!("{side}.path must be a string"))
            })?;
            let trace = AnyTrace::read_csv_file(base_dir.join(path))?;
            spec.insert("trace".into(), serde_json::to_value(trace)?);
        }
    }
    Ok(())
}

fn apply_overrides(config: &mut Value, o: &Overrides) -> Result<()> {
    let root = as_object(config, "config")?;
    if let Some(seed) = o.seed {
        root.insert("seed".into(), json!(seed));
    }
    if let Some(trials) = o.trials {
        root.insert("trials".into(), json!(trials));
    }
    if let Some(threads) = o.threads {
        root.insert("threads".into(), json!(threads));
    }
    if let Some(eps) = o.eps {
        set_epsilon(config, eps)?;
    }
    if let Some(h) = o.h {
        set_h(config, h)?;
    }
    if let Some(horizon) = o.horizon {
        let root = as_object(config, "config")?;
        let mut bursty = false;
        for side in ["arrival", "departure"] {
            if let Some(spec) = root.get_mut(side).and_then(Value::as_object_mut) {
                if spec.contains_key("steps") {
                    spec.insert("steps".into(), json!(horizon));
                    bursty = true;
                }
            }
        }
        if !bursty {
            root.insert("horizon".into(), json!(horizon));
        }
    }
    Ok(())
}

fn as_object<'a>(value: &'a mut Value, what: &str) -> Result<&'a mut Map<String, Value>> {
    value.as_object_mut().ok_or_else(|| {
        Error::Json(serde::de::Error::custom(format!("{what} must be a JSON object")))
    })
}

fn set_epsilon(config: &mut Value, eps: f64) -> Result<()> {
    let root = as_object(config, "config")?;
    match root.get_mut("policy").and_then(Value::as_object_mut) {
        Some(policy) => {
            policy.insert("epsilon".into(), json!(eps));
        }
        None => {
            return Err(Error::Json(serde::de::Error::missing_field("policy")));
        }
    }
    for side in ["arrival", "departure"] {
        if let Some(spec) = root.get_mut(side).and_then(Value::as_object_mut) {
            if spec.contains_key("epsilon") {
                spec.insert("epsilon".into(), json!(eps));
            }
        }
    }
    Ok(())
}

fn set_h(config: &mut Value, h: u64) -> Result<()> {
    let root = as_object(config, "config")?;
    let mut found = false;
    for side in ["arrival", "departure"] {
        if let Some(spec) = root.get_mut(side).and_then(Value::as_object_mut) {
            if spec.contains_key("h") {
                spec.insert("h".into(), json!(h));
                found = true;
            }
        }
    }
    if found {
        Ok(())
    } else {
        Err(Error::IncompatibleProcesses(
            "--h needs an arrival or departure process with an `h` parameter".into(),
        ))
    }
}

fn set_policy(config: &mut Value, spec: &str) -> Result<()> {
    let (kind, scale) = match spec.split_once(':') {
        Some((kind, c)) => (kind, Some(c)),
        None => (spec, None),
    };
    let continuous = {
        let parsed: RunConfig = serde_json::from_value(config.clone())?;
        parsed.scenario().mode() == crate::queue::Mode::Continuous
    };
    let root = as_object(config, "config")?;
    let policy = root
        .get_mut("policy")
        .and_then(Value::as_object_mut)
        .ok_or_else(|| Error::Json(serde::de::Error::missing_field("policy")))?;
    policy.retain(|k, _| k == "epsilon");
    policy.insert("kind".into(), json!(kind));
    match (kind, scale) {
        ("scaled_poa", Some(c)) => {
            let c: f64 = c
                .parse()
                .map_err(|_| Error::out_of_range("c", c, "a number"))?;
            policy.insert("c".into(), json!(c));
        }
        ("scaled_poa", None) => {
            return Err(Error::out_of_range("policy", spec, "scaled_poa:<c>"));
        }
        (_, Some(_)) => return Err(Error::out_of_range("policy", spec, "known policy name")),
        _ => {}
    }
    let mu = departure_rate(root).unwrap_or(1.0);
    let estimator = match kind {
        "pico" => json!({"kind": "pico"}),
        "poa_arr" | "poa_always" | "scaled_poa" => json!({"kind": "hold"}),
        "poa_dep" if continuous => json!({"kind": "poisson_tick", "mu": mu}),
        "poa_dep" => json!({"kind": "extrapolating"}),
        _ => return Err(Error::out_of_range("policy", spec, "known policy name")),
    };
    root.insert("estimator".into(), estimator);
    Ok(())
}

fn departure_rate(root: &Map<String, Value>) -> Option<f64> {
    let dep = root.get("departure")?.as_object()?;
    if dep.get("kind")?.as_str()? != "poisson" {
        return None;
    }
    let rate = dep.get("rate")?.as_f64()?;
    let batch = dep.get("batch").and_then(Value::as_f64).unwrap_or(1.0);
    Some(rate * batch)
}

/// Failure of one CLI invocation, tagged with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("configuration error: {e}"),
    }
}

fn runtime_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("error: {e}"),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Run {
            config,
            out,
            overrides,
        } => cmd_run(&config, &out, &overrides),
        Command::Sweep {
            config,
            out,
            axis,
            values,
            overrides,
        } => cmd_sweep(&config, &out, axis, &values, &overrides),
        Command::Demo {
            name,
            out,
            h,
            eps,
            phases,
            steps,
            trials,
            seed,
            threads,
        } => {
            let mut params = demo_defaults(&name).map_err(config_error)?;
            if let Some(h) = h {
                params.h = h;
            }
            if let Some(eps) = eps {
                params.epsilon = eps;
            }
            if let Some(phases) = phases {
                params.phases = phases;
            }
            if let Some(steps) = steps {
                params.steps = steps;
            }
            if let Some(trials) = trials {
                params.trials = trials;
            }
            if let Some(seed) = seed {
                params.base_seed = seed;
            }
            params.threads = threads;
            cmd_demo(&name, &params, &out)
        }
    }
}

fn load_config_value(path: &Path, overrides: &Overrides) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    let mut value: Value = serde_json::from_str(&text)?;
    inline_replay_paths(&mut value, path.parent().unwrap_or(Path::new(".")))?;
    apply_overrides(&mut value, overrides)?;
    Ok(value)
}

fn cmd_run(config: &Path, out: &Path, overrides: &Overrides) -> std::result::Result<(), Failure> {
    let config = load_config_value(config, overrides)
        .and_then(RunConfig::from_value)
        .map_err(config_error)?;
    let scenario = config.scenario();
    let summary = run_experiment_with_threads(&scenario, config.trials, config.seed, config.threads)
        .map_err(runtime_error)?;
    let meta = RunMetadata::new(&scenario, config.seed, config.trials);
    write_results(out, &summary, &meta).map_err(runtime_error)?;
    print_summary(&summary);
    Ok(())
}

fn write_results(out: &Path, summary: &ExperimentSummary, meta: &RunMetadata) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(ExperimentSummary::csv_header())?;
    csv.write_record(summary.csv_row())?;
    write_atomic(&out.join("summary.csv"), &csv_bytes(csv)?)?;
    write_atomic(&out.join("trials.jsonl"), &jsonl(&summary.trials)?)?;
    write_atomic(&out.join("meta.json"), &serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

fn csv_bytes(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn print_summary(summary: &ExperimentSummary) {
    let show = |name: &str| {
        let mean = summary.mean(name).map_or("n/a".into(), |m| format!("{m:.6}"));
        let se = summary.std_error(name).map_or("n/a".into(), |s| format!("{s:.6}"));
        format!("{name} = {mean} (se {se})")
    };
    println!("trials: {} ({} degenerate)", summary.n_trials, summary.degenerate_trials);
    println!("{}", show("ratio"));
    println!("{}", show("pings_per_packet"));
}

fn cmd_sweep(
    config: &Path,
    out: &Path,
    axis: Axis,
    values: &[String],
    overrides: &Overrides,
) -> std::result::Result<(), Failure> {
    if values.is_empty() {
        return Err(config_error("--values must list at least one value"));
    }
    let base = load_config_value(config, overrides).map_err(config_error)?;
    let mut configs = Vec::with_capacity(values.len());
    for raw in values {
        let mut value = base.clone();
        let applied = match axis {
            Axis::Epsilon => raw
                .parse::<f64>()
                .map_err(|_| Error::out_of_range("epsilon", raw, "a number"))
                .and_then(|eps| set_epsilon(&mut value, eps)),
            Axis::H => raw
                .parse::<u64>()
                .map_err(|_| Error::out_of_range("h", raw, "a positive integer"))
                .and_then(|h| set_h(&mut value, h)),
            Axis::Policy => set_policy(&mut value, raw),
        };
        let config = applied
            .and_then(|()| RunConfig::from_value(value))
            .map_err(|e| config_error(format!("value `{raw}`: {e}")))?;
        configs.push((raw.clone(), config));
    }

    let axis_name = match axis {
        Axis::Epsilon => "epsilon",
        Axis::H => "h",
        Axis::Policy => "policy",
    };
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["axis".to_string(), "value".to_string()];
    header.extend(ExperimentSummary::csv_header());
    csv.write_record(&header).map_err(runtime_error)?;
    let mut trial_lines = Vec::new();
    let mut metas = Vec::new();
    let mut ratios = Vec::new();
    for (raw, config) in &configs {
        let scenario = config.scenario();
        let summary = run_experiment_with_threads(&scenario, config.trials, config.seed, config.threads)
            .map_err(|e| runtime_error(format!("value `{raw}`: {e}")))?;
        let mut row = vec![axis_name.to_string(), raw.clone()];
        row.extend(summary.csv_row());
        csv.write_record(&row).map_err(runtime_error)?;
        for trial in &summary.trials {
            let line = json!({"axis": axis_name, "value": raw, "trial": trial});
            serde_json::to_writer(&mut trial_lines, &line).map_err(runtime_error)?;
            trial_lines.push(b'\n');
        }
        metas.push(json!({"value": raw, "meta": RunMetadata::new(&scenario, config.seed, config.trials)}));
        let ratio = summary.mean("ratio");
        println!(
            "{axis_name}={raw}: ratio = {}",
            ratio.map_or("n/a".into(), |r| format!("{r:.6}"))
        );
        ratios.push(ratio);
    }
    println!("ratio trend: {}", trend(&ratios));

    let written = (|| -> Result<()> {
        fs::create_dir_all(out)?;
        write_atomic(&out.join("summary.csv"), &csv_bytes(csv)?)?;
        write_atomic(&out.join("trials.jsonl"), &trial_lines)?;
        write_atomic(&out.join("meta.json"), &serde_json::to_vec_pretty(&metas)?)?;
        Ok(())
    })();
    written.map_err(runtime_error)
}

/// Describes the direction of a sequence of means, in input order.
pub fn trend(values: &[Option<f64>]) -> &'static str {
    let known: Vec<f64> = values.iter().flatten().copied().collect();
    if known.len() < 2 || known.len() < values.len() {
        return "undetermined";
    }
    let pairs = || known.windows(2);
    if pairs().all(|w| w[1] >= w[0]) {
        "non-decreasing"
    } else if pairs().all(|w| w[1] <= w[0]) {
        "non-increasing"
    } else {
        "non-monotone"
    }
}

/// Parameters each demo runs with when no flags are given.
pub fn demo_defaults(name: &str) -> Result<DemoParams> {
    let base = DemoParams::default();
    let params = match name {
        "lb-dep" | "lb-arr" => base,
        "poa-insufficiency" => DemoParams {
            h: 100,
            epsilon: 0.1,
            ..base
        },
        "eg1" => DemoParams {
            h: 50,
            epsilon: 0.1,
            ..base
        },
        "eg3" => DemoParams {
            h: 12,
            epsilon: 0.1,
            ..base
        },
        _ => return Err(Error::UnknownDemo(name.to_string())),
    };
    Ok(params)
}

fn cmd_demo(name: &str, params: &DemoParams, out: &Path) -> std::result::Result<(), Failure> {
    if !DEMO_NAMES.contains(&name) {
        return Err(config_error(format!(
            "unknown demo `{name}`; expected one of {}",
            DEMO_NAMES.join(", ")
        )));
    }
    let report = run_demo(name, params).map_err(|e| match e {
        Error::ParameterOutOfRange { .. } | Error::UnknownDemo(_) => config_error(e),
        e => runtime_error(e),
    })?;
    write_demo(&report, out).map_err(runtime_error)?;
    println!("{}", report.verdict);
    for check in &report.checks {
        println!(
            "[{}] {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    Ok(())
}

fn write_demo(report: &DemoReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_atomic(&out.join(format!("{}.csv", report.name)), &buf)?;
    let mut verdict = report.verdict.clone();
    verdict.push('\n');
    write_atomic(&out.join(format!("{}-verdict.txt", report.name)), verdict.as_bytes())?;
    Ok(())
}
