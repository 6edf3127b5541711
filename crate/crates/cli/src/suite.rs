//! The frozen reproduction suite: scenario families plus the properties
//! each one is expected to show.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use passync::engine::{benchmark, simulate, BenchmarkSuite, ControllerKind, RunResult};
use passync::graph::TopologyKind;
use passync::nonspr::Scenario;
use serde::{Deserialize, Serialize};

use crate::commands::{plot_data, Overrides};
use crate::config::{ControllerConfig, DisturbanceConfig, DisturbanceName, ScenarioConfig};

/// Sync threshold shared by every "synchronizes" assertion.
pub const SYNC_TOL: f64 = 1e-2;
pub const BOUNDED_TOL: f64 = 0.1;
pub const ESTIMATE_BOUND: f64 = 100.0;
pub const NONSPR_TOL: f64 = 5e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Assertion {
    SteadyStateBelow { run: String, max: f64 },
    EstimatesBelow { run: String, max: f64 },
    SyncL2Finite { run: String },
    /// `steady_state_err(num) >= min * steady_state_err(den)`
    RatioAtLeast { num: String, den: String, min: f64 },
    /// Final-state differences at `dt`, `dt/2`, `dt/4` shrink by a factor in `[lo, hi]`.
    IntegratorOrder { run: String, lo: f64, hi: f64 },
    /// Runtime medians nondecreasing in `m`, path at least `path_over_star` times star at the largest `m`.
    ScalingTrend { ms: Vec<usize>, reps: usize, path_over_star: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSuite {
    pub name: String,
    pub scenarios: Vec<ScenarioConfig>,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssertionResult {
    pub suite: String,
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

fn scenario(name: String, kind: TopologyKind, d: DisturbanceName) -> ScenarioConfig {
    let mut c = ScenarioConfig::baseline(kind, 8);
    c.name = name;
    c.disturbance = DisturbanceConfig::named(d);
    c.outputs.decimation = Some(100);
    c
}

const TOPOLOGIES: [TopologyKind; 4] = [TopologyKind::Star, TopologyKind::Cyclic, TopologyKind::Series, TopologyKind::Arbitrary];

fn bounded(run: &str) -> [Assertion; 2] {
    [
        Assertion::SteadyStateBelow { run: run.into(), max: BOUNDED_TOL },
        Assertion::EstimatesBelow { run: run.into(), max: ESTIMATE_BOUND },
    ]
}

fn nonspr_family(name: &str, sc: Scenario) -> ExperimentSuite {
    let mut scenarios = Vec::new();
    let mut assertions = Vec::new();
    for k in TOPOLOGIES {
        let mut c = scenario(format!("{k}-d3"), k, DisturbanceName::D3);
        c.controller = ControllerConfig::nonspr(sc);
        assertions.push(Assertion::SteadyStateBelow { run: c.name.clone(), max: NONSPR_TOL });
        scenarios.push(c);
    }
    ExperimentSuite { name: name.into(), scenarios, assertions }
}

/// Every family, in report order.
pub fn reproduction_suite() -> Vec<ExperimentSuite> {
    let mut out = Vec::new();

    let fig3: Vec<_> = [DisturbanceName::D1, DisturbanceName::D2, DisturbanceName::D3]
        .into_iter()
        .map(|d| scenario(format!("star-{}", format!("{d:?}").to_lowercase()), TopologyKind::Star, d))
        .collect();
    let mut a = vec![Assertion::SteadyStateBelow { run: "star-d1".into(), max: SYNC_TOL }];
    a.extend(bounded("star-d2"));
    a.extend(bounded("star-d3"));
    out.push(ExperimentSuite { name: "fig3".into(), scenarios: fig3, assertions: a });

    let fig4: Vec<_> = TOPOLOGIES.iter().map(|&k| scenario(format!("{k}-d3"), k, DisturbanceName::D3)).collect();
    let a = fig4.iter().flat_map(|c| bounded(&c.name)).collect();
    out.push(ExperimentSuite { name: "fig4".into(), scenarios: fig4, assertions: a });

    let mut fig5a = Vec::new();
    let mut a = vec![Assertion::RatioAtLeast { num: "w0.05".into(), den: "w0.5".into(), min: 10.0 }];
    for w in [0.95, 0.75, 0.5, 0.15, 0.05] {
        let mut c = scenario(format!("w{w}"), TopologyKind::Cyclic, DisturbanceName::None);
        c.topology.leader_weight = Some(w);
        if w >= 0.15 {
            a.push(Assertion::SteadyStateBelow { run: c.name.clone(), max: SYNC_TOL });
        }
        fig5a.push(c);
    }
    out.push(ExperimentSuite { name: "fig5a".into(), scenarios: fig5a, assertions: a });

    let mut fig5b = Vec::new();
    let mut a = Vec::new();
    for k in 1..=5 {
        let mut c = scenario(format!("access{k}"), TopologyKind::Cyclic, DisturbanceName::None);
        c.topology.leader_weight = Some(0.15);
        c.topology.leader_access = Some(k);
        a.push(Assertion::SteadyStateBelow { run: c.name.clone(), max: SYNC_TOL });
        fig5b.push(c);
    }
    out.push(ExperimentSuite { name: "fig5b".into(), scenarios: fig5b, assertions: a });

    let mut fig6a = Vec::new();
    let mut a = Vec::new();
    for w in [0.05, 0.15, 0.25, 0.5] {
        let mut c = scenario(format!("w20_{w}"), TopologyKind::Arbitrary, DisturbanceName::None);
        c.topology.leader_weight = Some(w);
        a.push(Assertion::SteadyStateBelow { run: c.name.clone(), max: SYNC_TOL });
        fig6a.push(c);
    }
    out.push(ExperimentSuite { name: "fig6a".into(), scenarios: fig6a, assertions: a });

    let mut fig6b = Vec::new();
    let mut a = Vec::new();
    for groups in [vec!["I"], vec!["I", "II"], vec!["I", "II", "III"]] {
        let mut c = scenario(format!("removed-{}", groups.join("-")), TopologyKind::Arbitrary, DisturbanceName::D3);
        c.topology.removed_edge_groups = groups.iter().map(|g| g.to_string()).collect();
        a.push(Assertion::SyncL2Finite { run: c.name.clone() });
        a.push(Assertion::SteadyStateBelow { run: c.name.clone(), max: BOUNDED_TOL });
        fig6b.push(c);
    }
    out.push(ExperimentSuite { name: "fig6b".into(), scenarios: fig6b, assertions: a });

    out.push(nonspr_family("fig7a", Scenario::Scenario1));
    out.push(nonspr_family("fig7b", Scenario::Scenario2));

    let mut c = scenario("star-order".into(), TopologyKind::Star, DisturbanceName::None);
    c.integrator.dt = 0.02;
    c.integrator.horizon = 4.0;
    out.push(ExperimentSuite {
        name: "order".into(),
        scenarios: vec![c],
        assertions: vec![Assertion::IntegratorOrder { run: "star-order".into(), lo: 8.0, hi: 32.0 }],
    });

    out.push(ExperimentSuite {
        name: "table2".into(),
        scenarios: Vec::new(),
        assertions: vec![Assertion::ScalingTrend { ms: vec![50, 100, 150, 200, 250], reps: 20, path_over_star: 3.0 }],
    });
    out
}

/// Suite names and scenario names within each suite must be unique.
pub fn validate(suites: &[ExperimentSuite]) -> Result<(), String> {
    let mut names = BTreeSet::new();
    for s in suites {
        if !names.insert(&s.name) {
            return Err(format!("duplicate suite `{}`", s.name));
        }
        let mut runs = BTreeSet::new();
        for c in &s.scenarios {
            if !runs.insert(&c.name) {
                return Err(format!("duplicate scenario `{}` in `{}`", c.name, s.name));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteOptions {
    pub overrides: Overrides,
    pub reps: Option<usize>,
}

type Runs = BTreeMap<String, Result<RunResult<f64>, String>>;

fn final_x(cfg: &ScenarioConfig, dt: f64) -> Result<Vec<f64>, String> {
    let mut c = cfg.clone();
    c.integrator.dt = dt;
    c.outputs.decimation = Some(usize::MAX / 2);
    let spec = c.to_spec().map_err(|e| e.to_string())?;
    simulate(&spec).map(|r| r.final_x().to_vec()).map_err(|e| e.to_string())
}

fn check(a: &Assertion, suite: &ExperimentSuite, runs: &Runs, opts: &SuiteOptions) -> (String, bool, String) {
    let get = |name: &str| -> Result<&RunResult<f64>, String> {
        match runs.get(name) {
            Some(Ok(r)) => Ok(r),
            Some(Err(e)) => Err(e.clone()),
            None => Err(format!("no run named `{name}`")),
        }
    };
    match a {
        Assertion::SteadyStateBelow { run, max } => {
            let label = format!("{run} steady_state_err < {max:e}");
            match get(run) {
                Ok(r) => {
                    let v = r.metrics.steady_state_err;
                    (label, v < *max, format!("{v:.3e}"))
                }
                Err(e) => (label, false, e),
            }
        }
        Assertion::EstimatesBelow { run, max } => {
            let label = format!("{run} max |estimate| < {max}");
            match get(run) {
                Ok(r) => {
                    let v = r.metrics.max_abs_estimate;
                    (label, v < *max, format!("{v:.3}"))
                }
                Err(e) => (label, false, e),
            }
        }
        Assertion::SyncL2Finite { run } => {
            let label = format!("{run} sync_l2 finite");
            match get(run) {
                Ok(r) => (label, r.metrics.sync_l2.is_finite(), format!("{:.4}", r.metrics.sync_l2)),
                Err(e) => (label, false, e),
            }
        }
        Assertion::RatioAtLeast { num, den, min } => {
            let label = format!("{num}/{den} steady_state_err ratio >= {min}");
            match (get(num), get(den)) {
                (Ok(a), Ok(b)) => {
                    let ratio = a.metrics.steady_state_err / b.metrics.steady_state_err;
                    (label, ratio >= *min, format!("{ratio:.1}"))
                }
                (Err(e), _) | (_, Err(e)) => (label, false, e),
            }
        }
        Assertion::IntegratorOrder { run, lo, hi } => {
            let label = format!("{run} RK4 error ratio in [{lo}, {hi}]");
            let Some(cfg) = suite.scenarios.iter().find(|c| &c.name == run) else {
                return (label, false, format!("no run named `{run}`"));
            };
            let mut cfg = cfg.clone();
            opts.overrides.apply(&mut cfg);
            let dt = cfg.integrator.dt;
            let xs: Result<Vec<_>, _> = [dt, dt / 2.0, dt / 4.0].iter().map(|&h| final_x(&cfg, h)).collect();
            match xs {
                Ok(xs) => {
                    let d = |u: &[f64], v: &[f64]| u.iter().zip(v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    let ratio = d(&xs[0], &xs[1]) / d(&xs[1], &xs[2]);
                    (label, ratio.is_finite() && (*lo..=*hi).contains(&ratio), format!("{ratio:.2} at dt = {dt}"))
                }
                Err(e) => (label, false, e),
            }
        }
        Assertion::ScalingTrend { ms, reps, path_over_star } => {
            let label = format!("runtime nondecreasing in m, path >= {path_over_star}x star at m = {}", ms.last().copied().unwrap_or(0));
            let mut b = BenchmarkSuite::table();
            b.ms = ms.clone();
            b.repetitions = opts.reps.unwrap_or(*reps);
            let cells = match benchmark(&b) {
                Ok(c) => c,
                Err(e) => return (label, false, e.to_string()),
            };
            let Some(&top) = ms.last() else { return (label, false, "empty m list".into()) };
            let mut pass = true;
            let mut detail = Vec::new();
            let cell = |m: usize, k: TopologyKind, c: ControllerKind| {
                cells.iter().find(|x| x.m == m && x.topology == k && x.controller == c).map_or(f64::NAN, |x| x.median_seconds)
            };
            for &c in &b.controllers {
                for &k in &b.topologies {
                    let col: Vec<f64> = ms.iter().map(|&m| cell(m, k, c)).collect();
                    if !col.windows(2).all(|w| w[1] >= w[0]) {
                        pass = false;
                        detail.push(format!("{}/{k} not monotone", c.label()));
                    }
                }
                let ratio = cell(top, TopologyKind::Series, c) / cell(top, TopologyKind::Star, c);
                pass &= ratio >= *path_over_star;
                detail.push(format!("{} path/star {ratio:.2}", c.label()));
            }
            (label, pass, detail.join(", "))
        }
    }
}

/// Runs the selected suites, writes trajectories and a report under `out`.
pub fn run_suites(suites: &[ExperimentSuite], out: &Path, opts: &SuiteOptions) -> anyhow::Result<Vec<AssertionResult>> {
    let mut results = Vec::new();
    let mut report = String::new();
    for suite in suites {
        let dir = out.join(&suite.name);
        fs::create_dir_all(&dir)?;
        let mut runs = Runs::new();
        for cfg in &suite.scenarios {
            let mut cfg = cfg.clone();
            opts.overrides.apply(&mut cfg);
            let r = cfg.to_spec().and_then(|s| simulate(&s)).map_err(|e| e.to_string());
            if let Ok(r) = &r {
                fs::write(dir.join(format!("{}.csv", cfg.name)), r.to_csv())?;
                let plot = format!("{}_plot.csv", cfg.name);
                fs::write(dir.join(&plot), plot_data(&cfg, r, &plot))?;
            }
            runs.insert(cfg.name.clone(), r);
        }
        for a in &suite.assertions {
            let (label, pass, detail) = check(a, suite, &runs, opts);
            let line = format!("{} {}: {label} ({detail})", if pass { "PASS" } else { "FAIL" }, suite.name);
            println!("{line}");
            let _ = writeln!(report, "{line}");
            results.push(AssertionResult { suite: suite.name.clone(), label, pass, detail });
        }
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("suite_report.txt"), report)?;
    Ok(results)
}

/// Families whose name contains `filter`.
pub fn select(filter: Option<&str>) -> Vec<ExperimentSuite> {
    reproduction_suite().into_iter().filter(|s| filter.is_none_or(|f| s.name.contains(f))).collect()
}
