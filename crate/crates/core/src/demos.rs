//! Paired-seed reproductions of the lower-bound instances and of the two
//! examples that motivate continuous pinging.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{mean_and_se, run_experiment_with_threads, run_trial_with, Scenario, SimOptions, TrialRun};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::metrics::TrialResult;
use crate::policies::{Epsilon, PolicyKind, PolicyParams};
use crate::processes::{phase_size_cap, Eg1Variant, ProcessSpec};

pub const DEMO_NAMES: &[&str] = &["lb-dep", "lb-arr", "poa-insufficiency", "eg1", "eg3"];

/// Knobs shared by all demos; each demo reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoParams {
    pub h: u64,
    pub epsilon: f64,
    /// Phase count of the phase instances.
    pub phases: u64,
    /// Steps of the bursty instance.
    pub steps: u64,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            h: 1000,
            epsilon: 0.05,
            phases: 500,
            steps: 100_000,
            trials: 200,
            base_seed: 0,
            threads: None,
        }
    }
}

/// One report row: one trial of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub arm: String,
    pub seed: u64,
    pub opt: f64,
    pub alg: f64,
    pub ratio: Option<f64>,
    pub pings_per_packet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub trials: usize,
    pub mean_ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub mean_pings_per_packet: Option<f64>,
    pub degenerate_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub name: String,
    pub params: DemoParams,
    pub rows: Vec<DemoRow>,
    pub arms: Vec<ArmSummary>,
    pub checks: Vec<DemoCheck>,
    pub verdict: String,
}

impl DemoReport {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == name)
    }

    pub fn check(&self, name: &str) -> Option<&DemoCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes `arm,seed,opt,alg,ratio,pings_per_packet` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["arm", "seed", "opt", "alg", "ratio", "pings_per_packet"])?;
        for r in &self.rows {
            out.write_record([
                r.arm.clone(),
                r.seed.to_string(),
                format!("{:?}", r.opt),
                format!("{:?}", r.alg),
                r.ratio.map_or(String::new(), |x| format!("{x:?}")),
                format!("{:?}", r.pings_per_packet),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs a demo by its command-line name.
pub fn run_demo(name: &str, params: &DemoParams) -> Result<DemoReport> {
    match name {
        "lb-dep" => demo_lb_departures(params),
        "lb-arr" => demo_lb_arrivals(params),
        "poa-insufficiency" => demo_poa_insufficiency(params),
        "eg1" => demo_eg1(params),
        "eg3" => demo_eg3(params),
        other => Err(Error::UnknownDemo(other.to_string())),
    }
}

struct Arm {
    name: String,
    scenario: Scenario,
}

fn arm(name: &str, arrival: &ProcessSpec, kind: PolicyKind, eps: f64, estimator: EstimatorKind) -> Result<Arm> {
    Ok(Arm {
        name: name.to_string(),
        scenario: Scenario {
            arrival: arrival.clone(),
            departure: arrival.clone(),
            policy: PolicyParams::new(kind, eps)?,
            estimator,
            horizon: None,
        },
    })
}

/// Runs every arm on the same seeds.
fn run_arms(arms: &[Arm], params: &DemoParams) -> Result<(Vec<DemoRow>, Vec<ArmSummary>)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for arm in arms {
        let summary = run_experiment_with_threads(&arm.scenario, params.trials, params.base_seed, params.threads)?;
        summaries.push(summarize_arm(&arm.name, &summary.trials));
        rows.extend(summary.trials.iter().map(|t| row(&arm.name, t)));
    }
    Ok((rows, summaries))
}

fn row(arm: &str, t: &TrialResult) -> DemoRow {
    DemoRow {
        arm: arm.to_string(),
        seed: t.seed,
        opt: t.opt,
        alg: t.alg,
        ratio: t.ratio,
        pings_per_packet: t.pings_per_packet,
    }
}

fn summarize_arm(name: &str, trials: &[TrialResult]) -> ArmSummary {
    let ratios: Vec<f64> = trials.iter().filter_map(|t| t.ratio).collect();
    let pings: Vec<f64> = trials.iter().map(|t| t.pings_per_packet).collect();
    let (mean_ratio, ratio_se) = mean_and_se(&ratios);
    ArmSummary {
        arm: name.to_string(),
        trials: trials.len(),
        mean_ratio,
        ratio_se,
        mean_pings_per_packet: mean_and_se(&pings).0,
        degenerate_trials: trials.len() - ratios.len(),
    }
}

fn mean_ratio(arms: &[ArmSummary], name: &str) -> f64 {
    arms.iter()
        .find(|a| a.arm == name)
        .and_then(|a| a.mean_ratio)
        .unwrap_or(f64::NAN)
}

fn upper(arms: &[ArmSummary], name: &str) -> f64 {
    arms.iter()
        .find(|a| a.arm == name)
        .map(|a| a.mean_ratio.unwrap_or(f64::NAN) + 3.0 * a.ratio_se.unwrap_or(0.0))
        .unwrap_or(f64::NAN)
}

fn bound_check(arms: &[ArmSummary], name: &str, arm_name: &str, bound: f64, label: &str) -> DemoCheck {
    let mean = mean_ratio(arms, arm_name);
    let hi = upper(arms, arm_name);
    DemoCheck {
        name: name.to_string(),
        passed: hi <= bound,
        detail: format!("{arm_name} mean ratio {mean:.5} (+3 SE {hi:.5}) vs {label} = {bound:.5}"),
    }
}

fn separation_check(arms: &[ArmSummary], name: &str, worse: &str, better: &str, factor: f64) -> DemoCheck {
    let (w, b) = (mean_ratio(arms, worse), mean_ratio(arms, better));
    DemoCheck {
        name: name.to_string(),
        passed: w >= factor * b,
        detail: format!("{worse} {w:.5} vs {better} {b:.5}: factor {:.2} (need {factor})", w / b),
    }
}

fn verdict(name: &str, checks: &[DemoCheck]) -> String {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let details: Vec<&str> = checks.iter().map(|c| c.detail.as_str()).collect();
    if failed.is_empty() {
        format!("{name}: all checks passed. {}.", details.join("; "))
    } else {
        format!("{name}: failed {}. {}.", failed.join(", "), details.join("; "))
    }
}

fn report(name: &str, params: &DemoParams, rows: Vec<DemoRow>, arms: Vec<ArmSummary>, checks: Vec<DemoCheck>) -> DemoReport {
    DemoReport {
        verdict: verdict(name, &checks),
        name: name.to_string(),
        params: params.clone(),
        rows,
        arms,
        checks,
    }
}

/// Scale `c` such that `sum_{j=h}^{h + floor(8 eps h)} c / (eps j) = budget`.
pub fn starved_scale(h: u64, eps: Epsilon, budget: f64) -> f64 {
    let top = h + phase_size_cap(h, eps);
    let harmonic: f64 = (h..=top).map(|j| 1.0 / j as f64).sum();
    budget * eps.value() / harmonic
}

/// Full ping-on-arrival against a policy whose total ping probability over
/// the phase band is 1/12, on the departure-phase instance.
pub fn demo_lb_departures(params: &DemoParams) -> Result<DemoReport> {
    let eps = Epsilon::new(params.epsilon)?;
    let spec = ProcessSpec::PhaseLbDepartures {
        h: params.h,
        epsilon: eps,
        phases: params.phases,
    };
    spec.validate()?;
    let c = starved_scale(params.h, eps, 1.0 / 12.0);
    let arms = [
        arm("full", &spec, PolicyKind::PoaDep, params.epsilon, EstimatorKind::Extrapolating)?,
        arm("starved", &spec, PolicyKind::ScaledPoa { c }, params.epsilon, EstimatorKind::Extrapolating)?,
    ];
    let (rows, summaries) = run_arms(&arms, params)?;
    let checks = vec![
        bound_check(&summaries, "full_within_bound", "full", 37.0 * params.epsilon, "37 eps"),
        separation_check(&summaries, "separation", "starved", "full", 2.0),
    ];
    Ok(report("lb-dep", params, rows, summaries, checks))
}

/// The arrival-phase instance under the arrival-tuned policy and under a
/// policy budgeted at half of `1 / (48 eps h)` pings per packet.
pub fn demo_lb_arrivals(params: &DemoParams) -> Result<DemoReport> {
    let eps = Epsilon::new(params.epsilon)?;
    let spec = ProcessSpec::PhaseLbArrivals {
        h: params.h,
        epsilon: eps,
        phases: params.phases,
    };
    spec.validate()?;
    let arms = [
        arm("full", &spec, PolicyKind::PoaArr, params.epsilon, EstimatorKind::Hold)?,
        arm("starved", &spec, PolicyKind::ScaledPoa { c: 1.0 / 96.0 }, params.epsilon, EstimatorKind::Hold)?,
    ];
    let (rows, summaries) = run_arms(&arms, params)?;
    let budget = 1.0 / (48.0 * params.epsilon * params.h as f64);
    let starved_pings = summaries[1].mean_pings_per_packet.unwrap_or(f64::NAN);
    let checks = vec![
        bound_check(&summaries, "full_within_bound", "full", 4.0 * params.epsilon, "4 eps"),
        DemoCheck {
            name: "starved_budget".into(),
            passed: starved_pings < budget,
            detail: format!("starved arm sends {starved_pings:.3e} pings per packet, budget {budget:.3e}"),
        },
        separation_check(&summaries, "separation", "starved", "full", 2.0),
    ];
    Ok(report("lb-arr", params, rows, summaries, checks))
}

/// Best-effort ping-on-arrival (every packet pings, server holds) against
/// continuous pinging on i.i.d. bursts.
pub fn demo_poa_insufficiency(params: &DemoParams) -> Result<DemoReport> {
    if params.h < 10 {
        return Err(Error::out_of_range("h", params.h, "at least 10"));
    }
    let spec = ProcessSpec::BurstyIid {
        h: params.h,
        steps: params.steps,
    };
    let arms = [
        arm("poa", &spec, PolicyKind::PoaAlways, params.epsilon, EstimatorKind::Hold)?,
        arm("pico", &spec, PolicyKind::Pico, params.epsilon, EstimatorKind::Pico)?,
    ];
    let (rows, summaries) = run_arms(&arms, params)?;
    let checks = vec![
        bound_check(&summaries, "pico_within_bound", "pico", 10.0 * params.epsilon, "10 eps"),
        separation_check(&summaries, "separation", "poa", "pico", 1.5),
    ];
    Ok(report("poa-insufficiency", params, rows, summaries, checks))
}

/// Largest `h` for which the ping-set law is also enumerated outright.
pub const EG1_ENUMERATION_MAX_H: u64 = 16;

/// Both variants of the first example under ping-on-arrival and under
/// continuous pinging. Ping-on-arrival sees identical arrival heights in
/// both variants, so its pings have the same law and cannot tell them apart.
pub fn demo_eg1(params: &DemoParams) -> Result<DemoReport> {
    let h = params.h;
    let variants = [("all-depart", Eg1Variant::AllDepart), ("one-stays", Eg1Variant::OneStays)];
    let mut arms = Vec::new();
    for (label, variant) in variants {
        let spec = ProcessSpec::ScenarioEg1 { h, variant };
        arms.push(arm(&format!("poa/{label}"), &spec, PolicyKind::PoaDep, params.epsilon, EstimatorKind::Extrapolating)?);
        arms.push(arm(&format!("pico/{label}"), &spec, PolicyKind::Pico, params.epsilon, EstimatorKind::Pico)?);
    }
    let (rows, summaries) = run_arms(&arms, params)?;

    // Each packet decides independently, so the law of the ping set is the
    // product of its per-packet probabilities.
    let policy = arms[0].scenario.policy;
    let laws: Vec<Vec<f64>> = [&arms[0], &arms[2]]
        .iter()
        .map(|a| -> Result<Vec<f64>> {
            let TrialRun::Discrete(run) = run_trial_with(&a.scenario, params.base_seed, SimOptions::default())? else {
                unreachable!("examples are discrete")
            };
            Ok(run
                .records
                .iter()
                .map(|r| policy.rule().arrival_prob(r.height_at_arrival).unwrap_or(0.0))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut checks = vec![DemoCheck {
        name: "same_ping_law".into(),
        passed: laws[0] == laws[1],
        detail: format!("per-packet ping probabilities agree for all {h} packets: {}", laws[0] == laws[1]),
    }];
    if h <= EG1_ENUMERATION_MAX_H {
        let max_gap = enumerate_law(&laws[0])
            .iter()
            .zip(enumerate_law(&laws[1]))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        checks.push(DemoCheck {
            name: "enumerated_law".into(),
            passed: max_gap == 0.0,
            detail: format!("largest gap over all {} ping sets: {max_gap:e}", 1u64 << h),
        });
    }
    let same_streams = (0..params.trials as u64).all(|i| {
        let seed = params.base_seed + i;
        let pings = |a: &Arm| match run_trial_with(&a.scenario, seed, SimOptions::default()) {
            Ok(TrialRun::Discrete(run)) => Some(run.pings),
            _ => None,
        };
        pings(&arms[0]) == pings(&arms[2])
    });
    checks.push(DemoCheck {
        name: "same_seed_streams".into(),
        passed: same_streams,
        detail: format!("identical ping streams on all {} paired seeds: {same_streams}", params.trials),
    });
    let stays = mean_ratio(&summaries, "poa/one-stays");
    checks.push(DemoCheck {
        name: "poa_misses_straggler".into(),
        passed: stays > mean_ratio(&summaries, "pico/one-stays"),
        detail: format!(
            "one-stays mean ratio: poa {stays:.4}, pico {:.4}",
            mean_ratio(&summaries, "pico/one-stays")
        ),
    });
    Ok(report("eg1", params, rows, summaries, checks))
}

/// Probability of each of the `2^n` ping sets.
fn enumerate_law(probs: &[f64]) -> Vec<f64> {
    let n = probs.len();
    (0u64..1 << n)
        .map(|set| {
            probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if set >> i & 1 == 1 { p } else { 1.0 - p })
                .product()
        })
        .collect()
}

/// The doubling-deadline example with random deadlines per seed.
pub fn demo_eg3(params: &DemoParams) -> Result<DemoReport> {
    let spec = ProcessSpec::ScenarioEg3 {
        h: params.h,
        choices: None,
    };
    spec.validate()?;
    let arms = [
        arm("poa", &spec, PolicyKind::PoaAlways, params.epsilon, EstimatorKind::Hold)?,
        arm("pico", &spec, PolicyKind::Pico, params.epsilon, EstimatorKind::Pico)?,
    ];
    let (rows, summaries) = run_arms(&arms, params)?;
    let checks = vec![
        bound_check(&summaries, "pico_within_bound", "pico", 10.0 * params.epsilon, "10 eps"),
        separation_check(&summaries, "separation", "poa", "pico", 1.5),
    ];
    Ok(report("eg3", params, rows, summaries, checks))
}
