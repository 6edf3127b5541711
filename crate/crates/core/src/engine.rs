//! Fixed-step RK4 integration of the stacked closed loop, run metrics,
//! the Lyapunov monitor and runtime benchmarking.

use std::fmt::Write as _;
use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Network, TopologyKind, TopologyPreset};
use crate::nonspr::{nonspr_control_into, CompensatorParams, NonSprControllerState, NonSprView, Scenario, ShapedSignals};
use crate::plant::{accel_into, PlantParams, PlantState};
use crate::scalar::Scalar;
use crate::signals::{DisturbanceKind, DisturbanceProfile, LeaderSignal};
use crate::spr::{spr_control_into, SprControllerState, SprGains, SprSignals};

/// Any state entry above this magnitude aborts the run.
pub const BLOWUP_THRESHOLD: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Spr,
    NonSprS1,
    NonSprS2,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Spr => "spr",
            ControllerKind::NonSprS1 => "nonspr_s1",
            ControllerKind::NonSprS2 => "nonspr_s2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec<T> {
    Spr(SprGains<T>),
    NonSpr { scenario: Scenario, params: CompensatorParams<T> },
}

impl<T: Scalar> ControllerSpec<T> {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::Spr(_) => ControllerKind::Spr,
            ControllerSpec::NonSpr { scenario: Scenario::Scenario1, .. } => ControllerKind::NonSprS1,
            ControllerSpec::NonSpr { scenario: Scenario::Scenario2, .. } => ControllerKind::NonSprS2,
        }
    }

    fn m(&self) -> usize {
        match self {
            ControllerSpec::Spr(g) => g.m(),
            ControllerSpec::NonSpr { params, .. } => params.m(),
        }
    }
}

/// Stop early once the RMS tracking error `‖x - x0 1‖₂/√m` has stayed
/// below `tol` for `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleRule {
    pub tol: f64,
    pub hold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle: Option<SettleRule>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-3, horizon: 30.0, stride: 10, settle: None }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::ConfigInvalid("dt must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::ConfigInvalid("horizon must be at least dt".into()));
        }
        if self.stride == 0 {
            return Err(Error::ConfigInvalid("stride must be at least 1".into()));
        }
        if let Some(s) = self.settle {
            if !(s.tol > 0.0 && s.hold >= 0.0) {
                return Err(Error::ConfigInvalid("settle rule needs tol > 0 and hold >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Optional overrides of the zero initial state. `k_hat` defaults to `K★`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialConditions<T> {
    pub x: Option<Vec<T>>,
    pub v: Option<Vec<T>>,
    pub integral_error: Option<Vec<T>>,
    pub j_hat: Option<Vec<T>>,
    pub b_hat: Option<Vec<T>>,
    pub k_hat: Option<Vec<T>>,
}

/// Everything needed to run one closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec<T> {
    pub network: Network<T>,
    pub plant: PlantParams<T>,
    pub controller: ControllerSpec<T>,
    pub leader: LeaderSignal<T>,
    pub disturbance: DisturbanceProfile<T>,
    pub integrator: IntegratorConfig,
    pub initial: InitialConditions<T>,
    /// Record the Lyapunov function (SPR only, uses the true plant).
    pub monitor_lyapunov: bool,
}

impl<T: Scalar> SimulationSpec<T> {
    /// Baseline plant and gains, two-tone leader, no disturbance, default integrator.
    pub fn baseline_spr(network: Network<T>) -> Self {
        let m = network.m();
        Self {
            network,
            plant: PlantParams::baseline(m),
            controller: ControllerSpec::Spr(SprGains::baseline(m)),
            leader: LeaderSignal::TwoTone,
            disturbance: DisturbanceProfile::none(),
            integrator: IntegratorConfig::default(),
            initial: InitialConditions::default(),
            monitor_lyapunov: false,
        }
    }

    pub fn baseline_nonspr(network: Network<T>, scenario: Scenario) -> Self {
        let m = network.m();
        Self {
            controller: ControllerSpec::NonSpr { scenario, params: CompensatorParams::default_for(m) },
            ..Self::baseline_spr(network)
        }
    }

    pub fn m(&self) -> usize {
        self.network.m()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        let bad = |what: &str, got: usize| Error::ConfigInvalid(format!("{what} has {got} agents, network has {m}"));
        if self.plant.m() != m {
            return Err(bad("plant", self.plant.m()));
        }
        if self.controller.m() != m {
            return Err(bad("controller", self.controller.m()));
        }
        match &self.controller {
            ControllerSpec::Spr(g) => {
                SprGains::new(g.phi.clone(), g.lambda.clone(), g.gamma_j.clone(), g.gamma_b.clone())
                    .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
            }
            ControllerSpec::NonSpr { params, .. } => {
                params.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
            }
        }
        if self.monitor_lyapunov && self.controller.kind() != ControllerKind::Spr {
            return Err(Error::WrongControllerKind);
        }
        if let Some(s) = &self.disturbance.scaling {
            if s.len() != m {
                return Err(bad("disturbance scaling", s.len()));
            }
        }
        let ic = &self.initial;
        for (what, v) in [
            ("initial x", &ic.x),
            ("initial v", &ic.v),
            ("initial integral_error", &ic.integral_error),
            ("initial j_hat", &ic.j_hat),
            ("initial b_hat", &ic.b_hat),
            ("initial k_hat", &ic.k_hat),
        ] {
            if let Some(v) = v {
                if v.len() != m {
                    return Err(bad(what, v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::ConfigInvalid(format!("{what} must be finite")));
                }
            }
        }
        self.integrator.validate()
    }
}

/// Named partition of the flat state vector into blocks of `m` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    m: usize,
    blocks: Vec<&'static str>,
}

impl StateLayout {
    pub fn for_controller(kind: ControllerKind, m: usize) -> Self {
        let mut blocks = vec!["x", "v"];
        match kind {
            ControllerKind::Spr => blocks.extend(["integral_error", "j_hat", "b_hat"]),
            ControllerKind::NonSprS1 | ControllerKind::NonSprS2 => {
                blocks.extend(["omega_dd", "omega_d", "lead", "k_hat", "j_hat", "b_hat"]);
                if kind == ControllerKind::NonSprS2 {
                    blocks.extend(["pre_e", "pre_dd", "pre_d"]);
                }
            }
        }
        Self { m, blocks }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m * self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[&'static str] {
        &self.blocks
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        let k = self.blocks.iter().position(|b| *b == name)?;
        Some(k * self.m..(k + 1) * self.m)
    }

    /// Block and agent (zero-based) owning flat index `idx`.
    pub fn locate(&self, idx: usize) -> Option<(&'static str, usize)> {
        if self.m == 0 || idx >= self.len() {
            return None;
        }
        Some((self.blocks[idx / self.m], idx % self.m))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerState<T> {
    Spr(SprControllerState<T>),
    NonSpr(NonSprControllerState<T>),
}

/// Flat closed-loop state with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState<T> {
    pub layout: StateLayout,
    pub data: Vec<T>,
}

impl<T: Scalar> StackedState<T> {
    pub fn pack(plant: &PlantState<T>, ctrl: &ControllerState<T>, scenario: Option<Scenario>) -> Result<Self> {
        let m = plant.m();
        let (kind, parts): (ControllerKind, Vec<&[T]>) = match ctrl {
            ControllerState::Spr(c) => {
                (ControllerKind::Spr, vec![&plant.x, &plant.v, &c.integral_error, &c.j_hat, &c.b_hat])
            }
            ControllerState::NonSpr(c) => {
                let mut parts: Vec<&[T]> =
                    vec![&plant.x, &plant.v, &c.omega_dd, &c.omega_d, &c.lead, &c.k_hat, &c.j_hat, &c.b_hat];
                let kind = match scenario {
                    Some(Scenario::Scenario2) => {
                        parts.extend([c.pre_e.as_slice(), &c.pre_dd, &c.pre_d]);
                        ControllerKind::NonSprS2
                    }
                    _ => ControllerKind::NonSprS1,
                };
                (kind, parts)
            }
        };
        let layout = StateLayout::for_controller(kind, m);
        let mut data = Vec::with_capacity(layout.len());
        for (name, p) in layout.blocks().iter().zip(&parts) {
            if p.len() != m {
                return Err(Error::DimensionMismatch { what: name, expected: m, got: p.len() });
            }
            data.extend_from_slice(p);
        }
        Ok(Self { layout, data })
    }

    fn block(&self, name: &str) -> Vec<T> {
        self.layout.range(name).map(|r| self.data[r].to_vec()).unwrap_or_else(|| vec![T::zero(); self.layout.m()])
    }

    pub fn unpack(&self) -> (PlantState<T>, ControllerState<T>) {
        let plant = PlantState { x: self.block("x"), v: self.block("v") };
        let ctrl = if self.layout.range("integral_error").is_some() {
            ControllerState::Spr(SprControllerState {
                integral_error: self.block("integral_error"),
                j_hat: self.block("j_hat"),
                b_hat: self.block("b_hat"),
            })
        } else {
            ControllerState::NonSpr(NonSprControllerState {
                omega_dd: self.block("omega_dd"),
                omega_d: self.block("omega_d"),
                lead: self.block("lead"),
                k_hat: self.block("k_hat"),
                j_hat: self.block("j_hat"),
                b_hat: self.block("b_hat"),
                pre_e: self.block("pre_e"),
                pre_dd: self.block("pre_dd"),
                pre_d: self.block("pre_d"),
            })
        };
        (plant, ctrl)
    }
}

/// Run-level summary. Stored as `f64` regardless of the scalar type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Trapezoidal `∫‖e‖² dt`.
    pub sync_l2: f64,
    /// `max ‖e(t)‖∞` over the last tenth of the run.
    pub steady_state_err: f64,
    pub estimate_final: Vec<f64>,
    pub max_abs_estimate: f64,
    pub final_time: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_max_increase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settled_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<T> {
    pub m: usize,
    pub times: Vec<T>,
    /// One row per recorded time.
    pub x: Vec<Vec<T>>,
    pub e: Vec<Vec<T>>,
    pub estimate_names: Vec<&'static str>,
    /// Estimates concatenated in `estimate_names` order, one row per time.
    pub estimates: Vec<Vec<T>>,
    pub lyapunov: Option<Vec<T>>,
    pub metrics: RunMetrics,
    pub wall_clock_seconds: f64,
}

impl<T: Scalar> RunResult<T> {
    /// CSV with columns `t, x1.., e1.., <estimate>1..`. Wall-clock time is
    /// not part of it, so identical runs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for prefix in ["x", "e"].iter().chain(&self.estimate_names) {
            for i in 1..=self.m {
                let _ = write!(out, ",{prefix}{i}");
            }
        }
        if self.lyapunov.is_some() {
            out.push_str(",V");
        }
        out.push('\n');
        for k in 0..self.times.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in self.x[k].iter().chain(&self.e[k]).chain(&self.estimates[k]) {
                let _ = write!(out, ",{v}");
            }
            if let Some(l) = &self.lyapunov {
                let _ = write!(out, ",{}", l[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn final_x(&self) -> &[T] {
        self.x.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Recomputes `(sync_l2, steady_state_err)` from recorded error rows.
/// Matches the streamed metrics exactly when every step was recorded.
pub fn metrics_from_trajectory<T: Scalar>(times: &[T], e: &[Vec<T>]) -> (f64, f64) {
    let sq = |r: &Vec<T>| r.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>();
    let inf = |r: &Vec<T>| r.iter().fold(0.0f64, |a, v| a.max(v.to_f64_lossy().abs()));
    let mut l2 = 0.0;
    for k in 1..times.len() {
        let h = (times[k] - times[k - 1]).to_f64_lossy();
        l2 += 0.5 * h * (sq(&e[k - 1]) + sq(&e[k]));
    }
    let end = times.last().map(|t| t.to_f64_lossy()).unwrap_or(0.0);
    let steady = times
        .iter()
        .zip(e)
        .filter(|(t, _)| t.to_f64_lossy() >= 0.9 * end - 1e-12)
        .fold(0.0f64, |a, (_, r)| a.max(inf(r)));
    (l2, steady)
}

struct Work<T> {
    spr: SprSignals<T>,
    shaped: ShapedSignals<T>,
    u: Vec<T>,
    delta: Vec<T>,
    zeros: Vec<T>,
    k: [Vec<T>; 4],
    tmp: Vec<T>,
}

/// Borrowed view of a spec that evaluates the stacked vector field.
struct System<'a, T> {
    spec: &'a SimulationSpec<T>,
    m: usize,
    layout: StateLayout,
}

impl<'a, T: Scalar> System<'a, T> {
    fn new(spec: &'a SimulationSpec<T>) -> Self {
        let m = spec.m();
        Self { spec, m, layout: StateLayout::for_controller(spec.controller.kind(), m) }
    }

    fn work(&self) -> Work<T> {
        let m = self.m;
        let n = self.layout.len();
        Work {
            spr: SprSignals::with_len(m),
            shaped: ShapedSignals::with_len(m),
            u: vec![T::zero(); m],
            delta: vec![T::zero(); m],
            zeros: vec![T::zero(); m],
            k: [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]],
            tmp: vec![T::zero(); n],
        }
    }

    fn initial_state(&self) -> Vec<T> {
        let m = self.m;
        let mut y = vec![T::zero(); self.layout.len()];
        let ic = &self.spec.initial;
        let mut put = |name: &str, v: &Option<Vec<T>>| {
            if let (Some(r), Some(v)) = (self.layout.range(name), v) {
                y[r].copy_from_slice(v);
            }
        };
        put("x", &ic.x);
        put("v", &ic.v);
        put("integral_error", &ic.integral_error);
        put("j_hat", &ic.j_hat);
        put("b_hat", &ic.b_hat);
        if let ControllerSpec::NonSpr { params, .. } = &self.spec.controller {
            let k = ic.k_hat.clone().unwrap_or_else(|| params.k_star.clone());
            let r = self.layout.range("k_hat").expect("k_hat block");
            y[r].copy_from_slice(&k[..m]);
        }
        y
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T], w: &mut Work<T>) {
        let m = self.m;
        let spec = self.spec;
        let leader = spec.leader.eval(t);
        spec.disturbance.eval_into(t, &mut w.delta);
        let b = |k: usize| k * m..(k + 1) * m;
        let (x, v) = (&y[b(0)], &y[b(1)]);
        match &spec.controller {
            ControllerSpec::Spr(g) => {
                spr_control_into(&spec.network, g, &y[b(2)], &y[b(3)], &y[b(4)], x, v, leader, &mut w.spr, &mut w.u);
                let s = &w.spr;
                for i in 0..m {
                    dy[2 * m + i] = s.e[i];
                    dy[3 * m + i] = g.gamma_j[i] * s.theta[i] * s.zeta[i];
                    dy[4 * m + i] = g.gamma_b[i] * s.theta[i] * s.v[i];
                }
            }
            ControllerSpec::NonSpr { scenario, params } => {
                let s2 = *scenario == Scenario::Scenario2;
                let pre = |k: usize| if s2 { &y[b(k)] } else { w.zeros.as_slice() };
                let view = NonSprView {
                    omega_dd: &y[b(2)],
                    omega_d: &y[b(3)],
                    lead: &y[b(4)],
                    k_hat: &y[b(5)],
                    j_hat: &y[b(6)],
                    b_hat: &y[b(7)],
                    pre_e: pre(8),
                    pre_dd: pre(9),
                    pre_d: pre(10),
                };
                nonspr_control_into(*scenario, &spec.network, params, view, x, v, leader, &mut w.shaped, &mut w.u);
                let s = &w.shaped;
                let (gj, gb) = if s2 { (&params.gamma_k, &params.gamma_k) } else { (&params.gamma_j, &params.gamma_b) };
                for i in 0..m {
                    dy[2 * m + i] = s.rates.omega_dd[i];
                    dy[3 * m + i] = s.rates.omega_d[i];
                    dy[4 * m + i] = s.rates.lead[i];
                    dy[5 * m + i] = params.gamma_k[i] * s.e[i] * s.regressor[0][i];
                    dy[6 * m + i] = gj[i] * s.e[i] * s.regressor[1][i];
                    dy[7 * m + i] = gb[i] * s.e[i] * s.regressor[2][i];
                    if s2 {
                        dy[8 * m + i] = s.rates.pre_e[i];
                        dy[9 * m + i] = s.rates.pre_dd[i];
                        dy[10 * m + i] = s.rates.pre_d[i];
                    }
                }
            }
        }
        dy[..m].copy_from_slice(v);
        accel_into(&spec.plant, v, &w.u, &w.delta, &mut dy[m..2 * m]);
    }

    fn rk4_step(&self, t: T, dt: T, y: &mut [T], w: &mut Work<T>) {
        let half = dt / T::lit(2.0);
        let mut k = std::mem::take(&mut w.k);
        let mut tmp = std::mem::take(&mut w.tmp);
        self.rhs(t, y, &mut k[0], w);
        for j in 0..y.len() {
            tmp[j] = y[j] + half * k[0][j];
        }
        self.rhs(t + half, &tmp, &mut k[1], w);
        for j in 0..y.len() {
            tmp[j] = y[j] + half * k[1][j];
        }
        self.rhs(t + half, &tmp, &mut k[2], w);
        for j in 0..y.len() {
            tmp[j] = y[j] + dt * k[2][j];
        }
        self.rhs(t + dt, &tmp, &mut k[3], w);
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        for j in 0..y.len() {
            y[j] += sixth * (k[0][j] + two * (k[1][j] + k[2][j]) + k[3][j]);
        }
        w.k = k;
        w.tmp = tmp;
    }

    fn position_error(&self, t: T, y: &[T], out: &mut [T]) {
        let x = &y[..self.m];
        self.spec.network.consensus_into(x, self.spec.leader.eval(t).x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o -= xi;
        }
    }

    /// `Σ ϑ² + Σ J̃²/(Γ_J J) + Σ B̃²/(Γ_B J)` with the true plant.
    fn lyapunov(&self, t: T, y: &[T], w: &mut Work<T>) -> T {
        let ControllerSpec::Spr(g) = &self.spec.controller else {
            return T::nan();
        };
        let m = self.m;
        let b = |k: usize| k * m..(k + 1) * m;
        let leader = self.spec.leader.eval(t);
        spr_control_into(&self.spec.network, g, &y[b(2)], &y[b(3)], &y[b(4)], &y[b(0)], &y[b(1)], leader, &mut w.spr, &mut w.u);
        let (jt, bt) = (self.spec.plant.inertia(), self.spec.plant.damping());
        let mut v = T::zero();
        for i in 0..m {
            let dj = y[3 * m + i] - jt[i];
            let db = y[4 * m + i] - bt[i];
            v += w.spr.theta[i] * w.spr.theta[i] + dj * dj / (g.gamma_j[i] * jt[i]) + db * db / (g.gamma_b[i] * jt[i]);
        }
        v
    }

    fn estimate_names(&self) -> Vec<&'static str> {
        match self.spec.controller.kind() {
            ControllerKind::Spr => vec!["j_hat", "b_hat"],
            _ => vec!["k_hat", "j_hat", "b_hat"],
        }
    }

    fn estimates(&self, y: &[T]) -> Vec<T> {
        self.estimate_names()
            .iter()
            .flat_map(|n| y[self.layout.range(n).expect("estimate block")].iter().copied())
            .collect()
    }
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

/// Integrates the closed loop over `[0, T]` with classical RK4, recomputing
/// the control at every stage.
pub fn simulate<T: Scalar>(spec: &SimulationSpec<T>) -> Result<RunResult<T>> {
    spec.validate()?;
    let start = Instant::now();
    let sys = System::new(spec);
    let m = sys.m;
    let cfg = &spec.integrator;
    let dt = T::lit(cfg.dt);
    let n = cfg.steps();
    let mut w = sys.work();
    let mut y = sys.initial_state();
    let mut e = vec![T::zero(); m];
    let limit = T::lit(BLOWUP_THRESHOLD);

    let mut times = Vec::new();
    let mut xs = Vec::new();
    let mut es = Vec::new();
    let mut ests = Vec::new();
    let mut lyap = spec.monitor_lyapunov.then(Vec::new);

    // streamed metrics, kept as (t, ‖e‖∞) for the steady-state window
    let mut l2 = 0.0f64;
    let mut inf_hist: Vec<(f64, f64)> = Vec::with_capacity(n + 1);
    let mut max_est = 0.0f64;
    let mut lyap_prev: Option<f64> = None;
    let mut lyap_max_inc = f64::NEG_INFINITY;
    let mut settled_since: Option<f64> = None;
    let mut settled_at = None;

    let mut t = T::zero();
    sys.position_error(t, &y, &mut e);
    let mut prev_sq: f64 = e.iter().map(|v| v.to_f64_lossy().powi(2)).sum();
    inf_hist.push((0.0, inf_norm(&e).to_f64_lossy()));

    let mut record = |k_t: T, y: &[T], e: &[T], w: &mut Work<T>, lyap: &mut Option<Vec<T>>| {
        times.push(k_t);
        xs.push(y[..m].to_vec());
        es.push(e.to_vec());
        ests.push(sys.estimates(y));
        if let Some(l) = lyap.as_mut() {
            l.push(sys.lyapunov(k_t, y, w));
        }
    };
    record(t, &y, &e, &mut w, &mut lyap);
    if spec.monitor_lyapunov {
        lyap_prev = Some(sys.lyapunov(t, &y, &mut w).to_f64_lossy());
    }

    let mut steps = 0;
    for k in 1..=n {
        sys.rk4_step(t, dt, &mut y, &mut w);
        t = T::lit(k as f64 * cfg.dt);
        steps = k;
        if let Some(idx) = y.iter().position(|v| !(v.is_finite() && v.abs() <= limit)) {
            return Err(Error::NumericalBlowup { time: t.to_f64_lossy(), index: idx });
        }
        sys.position_error(t, &y, &mut e);
        let sq: f64 = e.iter().map(|v| v.to_f64_lossy().powi(2)).sum();
        l2 += 0.5 * cfg.dt * (prev_sq + sq);
        prev_sq = sq;
        let tf = t.to_f64_lossy();
        let ei = inf_norm(&e).to_f64_lossy();
        inf_hist.push((tf, ei));
        for r in ["j_hat", "b_hat", "k_hat"] {
            if let Some(r) = sys.layout.range(r) {
                max_est = max_est.max(inf_norm(&y[r]).to_f64_lossy());
            }
        }
        if let Some(prev) = lyap_prev {
            let v = sys.lyapunov(t, &y, &mut w).to_f64_lossy();
            lyap_max_inc = lyap_max_inc.max(v - prev);
            lyap_prev = Some(v);
        }
        let mut stop = false;
        if let Some(rule) = cfg.settle {
            let x0 = spec.leader.eval(t).x;
            let ms = y[..m].iter().map(|&xi| (xi - x0).to_f64_lossy().powi(2)).sum::<f64>() / m as f64;
            if ms.sqrt() < rule.tol {
                let since = *settled_since.get_or_insert(tf);
                if tf - since >= rule.hold {
                    settled_at = Some(since);
                    stop = true;
                }
            } else {
                settled_since = None;
            }
        }
        if k % cfg.stride == 0 || k == n || stop {
            record(t, &y, &e, &mut w, &mut lyap);
        }
        if stop {
            break;
        }
    }

    let end = t.to_f64_lossy();
    let steady_state_err = inf_hist
        .iter()
        .filter(|(tt, _)| *tt >= 0.9 * end - 1e-12)
        .fold(0.0f64, |a, (_, v)| a.max(*v));
    let estimate_final: Vec<f64> = sys.estimates(&y).iter().map(|v| v.to_f64_lossy()).collect();
    let metrics = RunMetrics {
        sync_l2: l2,
        steady_state_err,
        estimate_final,
        max_abs_estimate: max_est,
        final_time: end,
        steps,
        lyapunov_max_increase: spec.monitor_lyapunov.then_some(lyap_max_inc),
        settled_at,
    };
    let estimate_names = sys.estimate_names();
    Ok(RunResult {
        m,
        times,
        x: xs,
        e: es,
        estimate_names,
        estimates: ests,
        lyapunov: lyap,
        metrics,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Lyapunov function series of an SPR run.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    /// Largest one-step increase of `V` over the whole run.
    pub max_step_increase: f64,
}

/// Runs `spec` with the monitor on. Harness-only: it reads the true plant.
pub fn lyapunov_monitor<T: Scalar>(spec: &SimulationSpec<T>) -> Result<LyapunovTrace<T>> {
    if spec.controller.kind() != ControllerKind::Spr {
        return Err(Error::WrongControllerKind);
    }
    let mut s = spec.clone();
    s.monitor_lyapunov = true;
    let r = simulate(&s)?;
    Ok(LyapunovTrace {
        times: r.times,
        values: r.lyapunov.unwrap_or_default(),
        max_step_increase: r.metrics.lyapunov_max_increase.unwrap_or(f64::NEG_INFINITY),
    })
}

/// One point at which the error-dynamics identity is checked.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample<T> {
    pub t: T,
    pub plant: PlantState<T>,
    pub ctrl: SprControllerState<T>,
    /// Constant per-agent disturbance.
    pub delta: Vec<T>,
}

/// Worst relative mismatch between the central difference of `ϑ` along
/// the simulated flow and `-(Φ/J)ϑ - (J̃ζ + B̃v)/J - δ/J`.
///
/// The identity is exact when `z̈ = ẍ0`, so `spec` should use a star graph.
/// The controller in `spec` must be SPR.
pub fn error_dynamics_oracle<T: Scalar>(spec: &SimulationSpec<T>, samples: &[OracleSample<T>], dt: T) -> Result<T> {
    let ControllerSpec::Spr(g) = &spec.controller else {
        return Err(Error::WrongControllerKind);
    };
    let m = spec.m();
    let mut worst = T::zero();
    for s in samples {
        let mut local = spec.clone();
        local.disturbance = DisturbanceProfile {
            kind: DisturbanceKind::Custom { constant: T::one(), terms: vec![] },
            scaling: Some(s.delta.clone()),
        };
        let sys = System::new(&local);
        let mut w = sys.work();
        let base = StackedState::pack(&s.plant, &ControllerState::Spr(s.ctrl.clone()), None)?.data;
        let theta_at = |t: T, y: &[T], w: &mut Work<T>| -> Vec<T> {
            let b = |k: usize| k * m..(k + 1) * m;
            let l = local.leader.eval(t);
            spr_control_into(&local.network, g, &y[b(2)], &y[b(3)], &y[b(4)], &y[b(0)], &y[b(1)], l, &mut w.spr, &mut w.u);
            w.spr.theta.clone()
        };
        let mut fwd = base.clone();
        sys.rk4_step(s.t, dt, &mut fwd, &mut w);
        let mut bwd = base.clone();
        sys.rk4_step(s.t, -dt, &mut bwd, &mut w);
        let th_f = theta_at(s.t + dt, &fwd, &mut w);
        let th_b = theta_at(s.t - dt, &bwd, &mut w);
        let th = theta_at(s.t, &base, &mut w);
        let (jt, bt) = (spec.plant.inertia(), spec.plant.damping());
        let mut num = T::zero();
        let mut den = T::zero();
        for i in 0..m {
            let fd = (th_f[i] - th_b[i]) / (dt + dt);
            let jtil = s.ctrl.j_hat[i] - jt[i];
            let btil = s.ctrl.b_hat[i] - bt[i];
            let cf = -(g.phi[i] / jt[i]) * th[i] - (jtil * w.spr.zeta[i] + btil * w.spr.v[i]) / jt[i] - s.delta[i] / jt[i];
            num = num.max((fd - cf).abs());
            den = den.max(cf.abs());
        }
        let rel = if den > T::zero() { num / den } else { num };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Closed-form right-hand side of the error dynamics, exposed for tests.
pub fn error_dynamics_closed_form<T: Scalar>(
    spec: &SimulationSpec<T>,
    sample: &OracleSample<T>,
) -> Result<Vec<T>> {
    let ControllerSpec::Spr(g) = &spec.controller else {
        return Err(Error::WrongControllerKind);
    };
    let m = spec.m();
    let mut sig = SprSignals::with_len(m);
    let mut u = vec![T::zero(); m];
    let l = spec.leader.eval(sample.t);
    let c = &sample.ctrl;
    spr_control_into(&spec.network, g, &c.integral_error, &c.j_hat, &c.b_hat, &sample.plant.x, &sample.plant.v, l, &mut sig, &mut u);
    let (jt, bt) = (spec.plant.inertia(), spec.plant.damping());
    Ok((0..m)
        .map(|i| {
            -(g.phi[i] / jt[i]) * sig.theta[i]
                - ((c.j_hat[i] - jt[i]) * sig.zeta[i] + (c.b_hat[i] - bt[i]) * sig.v[i]) / jt[i]
                - sample.delta[i] / jt[i]
        })
        .collect())
}

/// One cell of the runtime table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub m: usize,
    pub topology: TopologyKind,
    pub controller: ControllerKind,
    pub median_seconds: f64,
    pub samples: Vec<f64>,
    /// Simulated time at which the run stopped.
    pub simulated_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSuite {
    pub ms: Vec<usize>,
    pub topologies: Vec<TopologyKind>,
    pub controllers: Vec<ControllerKind>,
    pub repetitions: usize,
    pub warmup: usize,
    pub integrator: IntegratorConfig,
}

/// Settling criterion used by benchmark cells.
pub const BENCH_SETTLE: SettleRule = SettleRule { tol: 0.1, hold: 2.0 };

impl BenchmarkSuite {
    /// `m ∈ {50, …, 250}` over star, cyclic and path, SPR and Scenario 1.
    pub fn table() -> Self {
        Self {
            ms: vec![50, 100, 150, 200, 250],
            topologies: vec![TopologyKind::Star, TopologyKind::Cyclic, TopologyKind::Series],
            controllers: vec![ControllerKind::Spr, ControllerKind::NonSprS1],
            repetitions: 20,
            warmup: 1,
            integrator: IntegratorConfig { settle: Some(BENCH_SETTLE), stride: 1000, ..IntegratorConfig::default() },
        }
    }
}

/// Disturbance-free baseline scenario for one benchmark cell.
pub fn benchmark_spec(
    m: usize,
    topology: TopologyKind,
    controller: ControllerKind,
    integrator: &IntegratorConfig,
) -> Result<SimulationSpec<f64>> {
    let net = TopologyPreset::new(topology, m).realize::<f64>()?;
    let mut spec = match controller {
        ControllerKind::Spr => SimulationSpec::baseline_spr(net),
        ControllerKind::NonSprS1 => SimulationSpec::baseline_nonspr(net, Scenario::Scenario1),
        ControllerKind::NonSprS2 => SimulationSpec::baseline_nonspr(net, Scenario::Scenario2),
    };
    spec.integrator = integrator.clone();
    Ok(spec)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock seconds per cell. Cells run one after another so the
/// timings never overlap.
pub fn benchmark(suite: &BenchmarkSuite) -> Result<Vec<BenchmarkCell>> {
    if suite.ms.is_empty() || suite.topologies.is_empty() || suite.controllers.is_empty() {
        return Err(Error::ConfigInvalid("benchmark suite is empty".into()));
    }
    if suite.repetitions == 0 {
        return Err(Error::ConfigInvalid("repetitions must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for &controller in &suite.controllers {
        for &topology in &suite.topologies {
            for &m in &suite.ms {
                let spec = benchmark_spec(m, topology, controller, &suite.integrator)?;
                let mut simulated = 0.0;
                for _ in 0..suite.warmup {
                    simulate(&spec)?;
                }
                let mut samples = Vec::with_capacity(suite.repetitions);
                for _ in 0..suite.repetitions {
                    let t0 = Instant::now();
                    let r = simulate(&spec)?;
                    samples.push(t0.elapsed().as_secs_f64());
                    simulated = r.metrics.final_time;
                }
                let median_seconds = median(&mut samples.clone());
                cells.push(BenchmarkCell { m, topology, controller, median_seconds, samples, simulated_seconds: simulated });
            }
        }
    }
    Ok(cells)
}

/// Rows of `m`, one column per (controller, topology) pair.
pub fn benchmark_table(cells: &[BenchmarkCell]) -> String {
    let mut cols: Vec<(ControllerKind, TopologyKind)> = Vec::new();
    let mut ms: Vec<usize> = Vec::new();
    for c in cells {
        if !cols.contains(&(c.controller, c.topology)) {
            cols.push((c.controller, c.topology));
        }
        if !ms.contains(&c.m) {
            ms.push(c.m);
        }
    }
    let mut out = String::from("m");
    for (k, t) in &cols {
        let _ = write!(out, ",{}_{}", k.label(), t);
    }
    out.push('\n');
    for m in ms {
        let _ = write!(out, "{m}");
        for (k, t) in &cols {
            match cells.iter().find(|c| c.m == m && c.controller == *k && c.topology == *t) {
                Some(c) => {
                    let _ = write!(out, ",{:.6}", c.median_seconds);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
