use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use passync::engine::{benchmark, benchmark_table, simulate, BenchmarkSuite, ControllerKind, ControllerSpec, RunMetrics, RunResult};
use passync::graph::TopologyKind;
use passync::nonspr::{nonspr_certify, NonSprMap};
use passync::poly::FrequencyGrid;
use passync::spr::spr_certify_frequency;
use passync::Error;
use serde::Serialize;

use crate::config::{ControllerConfig, ScenarioConfig};
use crate::exit;

/// Command-line replacements for integrator settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(dt) = self.dt {
            cfg.integrator.dt = dt;
        }
        if let Some(h) = self.horizon {
            cfg.integrator.horizon = h;
        }
    }
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    name: &'a str,
    status: &'a str,
    controller: &'a str,
    m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blowup_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blowup_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a RunMetrics>,
}

/// Leader and follower positions plus `‖e‖∞`, with a gnuplot recipe in the header.
pub fn plot_data(cfg: &ScenarioConfig, r: &RunResult<f64>, file_name: &str) -> String {
    let leader = cfg.leader.build();
    let m = r.m;
    let mut out = String::new();
    let _ = writeln!(out, "# {}: leader x0, followers x1..x{m}, tracking error norm", cfg.name);
    let _ = writeln!(out, "# gnuplot: set datafile separator ','; set key autotitle columnhead");
    let _ = writeln!(out, "# gnuplot: plot for [c=2:{}] '{file_name}' using 1:c with lines", m + 2);
    out.push_str("t,x0");
    for i in 1..=m {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",e_inf\n");
    for (k, &t) in r.times.iter().enumerate() {
        let _ = write!(out, "{t},{}", leader.eval(t).x);
        for v in &r.x[k] {
            let _ = write!(out, ",{v}");
        }
        let e = r.e[k].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let _ = writeln!(out, ",{e}");
    }
    out
}

fn load(config: &Path) -> Option<ScenarioConfig> {
    match ScenarioConfig::load(config) {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            None
        }
    }
}

pub fn simulate_cmd(config: &Path, out: &Path, ov: Overrides) -> anyhow::Result<u8> {
    let Some(mut cfg) = load(config) else { return Ok(exit::CONFIG_INVALID) };
    ov.apply(&mut cfg);
    if cfg.name.is_empty() {
        cfg.name = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    let spec = match cfg.to_spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return Ok(exit::CONFIG_INVALID);
        }
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let label = spec.controller.kind().label();
    let mut file = MetricsFile {
        name: &cfg.name,
        status: "ok",
        controller: label,
        m: spec.m(),
        wall_clock_seconds: None,
        blowup_time: None,
        blowup_index: None,
        metrics: None,
    };
    let metrics_path = out.join(&cfg.outputs.metrics);
    match simulate(&spec) {
        Ok(r) => {
            fs::write(out.join(&cfg.outputs.trajectory), r.to_csv())?;
            fs::write(out.join(&cfg.outputs.plot), plot_data(&cfg, &r, &cfg.outputs.plot))?;
            file.wall_clock_seconds = Some(r.wall_clock_seconds);
            file.metrics = Some(&r.metrics);
            fs::write(&metrics_path, toml::to_string(&file)?)?;
            println!(
                "{}: {} m={} steady_state_err={:.4e} sync_l2={:.4e} ({:.2}s)",
                cfg.name,
                label,
                r.m,
                r.metrics.steady_state_err,
                r.metrics.sync_l2,
                r.wall_clock_seconds
            );
            println!("wrote {}", out.display());
            Ok(exit::OK)
        }
        Err(Error::NumericalBlowup { time, index }) => {
            file.status = "blowup";
            file.blowup_time = Some(time);
            file.blowup_index = Some(index);
            fs::write(&metrics_path, toml::to_string(&file)?)?;
            eprintln!("error: numerical blowup at t = {time} (state component {index})");
            Ok(exit::BLOWUP)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(exit::CONFIG_INVALID)
        }
    }
}

/// Prints the certificate and returns the exit code.
pub fn certify_cmd(config: &Path) -> anyhow::Result<u8> {
    let Some(cfg) = load(config) else { return Ok(exit::CONFIG_INVALID) };
    let built = cfg.plant_params().and_then(|p| cfg.controller.build(cfg.topology.m).map(|c| (p, c)));
    let (plant, controller) = match built {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return Ok(exit::CONFIG_INVALID);
        }
    };
    let grid = FrequencyGrid::standard();
    let mut failures: Vec<String> = Vec::new();
    match &controller {
        ControllerSpec::Spr(g) => {
            let cert = spr_certify_frequency(&plant, g, &grid)?;
            println!("SPR certificate, {} agents", cert.agents.len());
            println!("{:>5} {:>12} {:>12} {:>10} {:>4}  verdict", "agent", "rh_margin", "min_re", "omega", "rd");
            for (i, a) in cert.agents.iter().enumerate() {
                let mut why = Vec::new();
                if !a.rh.pass {
                    why.push("routh-hurwitz margin not positive".to_string());
                }
                if a.relative_degree != 1 {
                    why.push(format!("relative degree {}", a.relative_degree));
                }
                if a.min_real <= 0.0 {
                    why.push("not positive real".to_string());
                }
                println!(
                    "{:>5} {:>12.6} {:>12.4e} {:>10.4} {:>4}  {}",
                    i + 1,
                    a.rh.margin,
                    a.min_real,
                    a.argmin_omega,
                    a.relative_degree,
                    if a.spr { "ok".into() } else { why.join(", ") }
                );
                failures.extend(why.into_iter().map(|w| format!("agent {}: {w}", i + 1)));
            }
            println!("verdict: {}", if cert.verdict { "certified" } else { "not certified" });
        }
        ControllerSpec::NonSpr { scenario, params } => {
            let map = match &cfg.controller {
                ControllerConfig::NonSpr { certify_map: Some(m), .. } => *m,
                _ => NonSprMap::for_scenario(*scenario),
            };
            let cert = nonspr_certify(&plant, params, map, &grid)?;
            println!("non-SPR certificate ({map:?}), {} agents", cert.agents.len());
            println!("{:>5} {:>12} {:>10} {:>4} {:>12}  verdict", "agent", "min_re", "omega", "rd", "max_pole");
            for (i, a) in cert.agents.iter().enumerate() {
                println!(
                    "{:>5} {:>12.4e} {:>10.4} {:>4} {:>12.4e}  {}",
                    i + 1,
                    a.min_real,
                    a.argmin_omega,
                    a.relative_degree,
                    a.max_pole_real,
                    if a.verdict { "ok".into() } else { a.reasons.join(", ") }
                );
                failures.extend(a.reasons.iter().map(|w| format!("agent {}: {w}", i + 1)));
            }
            println!("verdict: {}", if cert.verdict { "certified" } else { "not certified" });
        }
    }
    if failures.is_empty() {
        Ok(exit::OK)
    } else {
        for f in &failures {
            eprintln!("{f}");
        }
        Ok(exit::NOT_CERTIFIED)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkArgs {
    pub ms: Vec<usize>,
    pub topologies: Vec<TopologyKind>,
    pub controllers: Vec<ControllerKind>,
    pub reps: usize,
    pub warmup: usize,
}

pub fn benchmark_cmd(args: &BenchmarkArgs, out: &Path, ov: Overrides) -> anyhow::Result<u8> {
    if args.ms.is_empty() || args.reps == 0 {
        eprintln!("error: benchmark needs at least one m and reps >= 1");
        return Ok(exit::CONFIG_INVALID);
    }
    let mut suite = BenchmarkSuite::table();
    suite.ms = args.ms.clone();
    suite.topologies = args.topologies.clone();
    suite.controllers = args.controllers.clone();
    suite.repetitions = args.reps;
    suite.warmup = args.warmup;
    if let Some(dt) = ov.dt {
        suite.integrator.dt = dt;
    }
    if let Some(h) = ov.horizon {
        suite.integrator.horizon = h;
    }
    if let Err(e) = suite.integrator.validate() {
        eprintln!("error: {e}");
        return Ok(exit::CONFIG_INVALID);
    }
    let cells = match benchmark(&suite) {
        Ok(c) => c,
        Err(Error::NumericalBlowup { time, index }) => {
            eprintln!("error: numerical blowup at t = {time} (state component {index})");
            return Ok(exit::BLOWUP);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit::CONFIG_INVALID);
        }
    };
    fs::create_dir_all(out)?;
    let table = benchmark_table(&cells);
    fs::write(out.join("benchmark.csv"), &table)?;
    let mut samples = String::from("m,topology,controller,rep,seconds,simulated_seconds\n");
    for c in &cells {
        for (k, s) in c.samples.iter().enumerate() {
            let _ = writeln!(samples, "{},{},{},{},{s},{}", c.m, c.topology, c.controller.label(), k + 1, c.simulated_seconds);
        }
    }
    fs::write(out.join("benchmark_samples.csv"), samples)?;
    print!("{table}");
    Ok(exit::OK)
}
