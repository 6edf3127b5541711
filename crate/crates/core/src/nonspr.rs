//! Frequency-shaped controllers for the non-SPR case.
//!
//! Both scenarios drive the plant through the phase-lead compensator
//! `C_w = φ(s+p)/(s+q)`. Scenario 1 feeds back the shaped output
//! `y = v + Θ∘x`; Scenario 2 exchanges positions only and shapes the
//! regressor with `1/(s+Θ)` instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::plant::{PlantParams, PlantState};
use crate::poly::{min_real_part, FrequencyGrid, Poly, Rational};
use crate::scalar::Scalar;
use crate::signals::LeaderSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Output shaping, local velocity available.
    #[serde(alias = "s1", alias = "1")]
    Scenario1,
    /// Regressor shaping, positions only on the network.
    #[serde(alias = "s2", alias = "2")]
    Scenario2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorParams<T> {
    pub phi: Vec<T>,
    /// Compensator zeros.
    pub p: Vec<T>,
    /// Compensator poles.
    pub q: Vec<T>,
    /// Shaping constants.
    pub theta: Vec<T>,
    /// Leader shaping constant used in `y0 = ẋ0 + θ0 x0`.
    pub theta0: T,
    pub k_star: Vec<T>,
    pub gamma_k: Vec<T>,
    pub gamma_j: Vec<T>,
    pub gamma_b: Vec<T>,
}

fn positive<T: Scalar>(name: &str, v: &[T], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::InvalidParameter(format!("{name} has {} entries, expected {m}", v.len())));
    }
    match v.iter().position(|&g| !(g.is_finite() && g > T::zero())) {
        Some(i) => Err(Error::InvalidParameter(format!("{name}[{}] must be positive", i + 1))),
        None => Ok(()),
    }
}

impl<T: Scalar> CompensatorParams<T> {
    /// Validates positivity and the phase-lead ordering `p < q`.
    pub fn validate(&self) -> Result<()> {
        let m = self.phi.len();
        if m == 0 {
            return Err(Error::InvalidParameter("compensator needs at least one follower".into()));
        }
        positive("phi", &self.phi, m)?;
        positive("p", &self.p, m)?;
        positive("q", &self.q, m)?;
        positive("theta", &self.theta, m)?;
        positive("k_star", &self.k_star, m)?;
        positive("gamma_k", &self.gamma_k, m)?;
        positive("gamma_j", &self.gamma_j, m)?;
        positive("gamma_b", &self.gamma_b, m)?;
        positive("theta0", &[self.theta0], 1)?;
        if let Some(i) = (0..m).find(|&i| self.p[i] >= self.q[i]) {
            return Err(Error::InvalidParameter(format!("p[{}] must be below q[{}] for phase lead", i + 1, i + 1)));
        }
        Ok(())
    }

    /// Uniform compensator with baseline `φ_i` and `Γ = 5`; `θ0 = Θ`.
    pub fn uniform(m: usize, p: f64, q: f64, theta: f64, k_star: f64) -> Self {
        let c = |v: f64| vec![T::lit(v); m];
        Self {
            phi: (1..=m).map(|i| T::lit(1.5 + 0.5 * i as f64)).collect(),
            p: c(p),
            q: c(q),
            theta: c(theta),
            theta0: T::lit(theta),
            k_star: c(k_star),
            gamma_k: c(5.0),
            gamma_j: c(5.0),
            gamma_b: c(5.0),
        }
    }

    /// Defaults that pass both shaped certificates for the baseline plant.
    pub fn default_for(m: usize) -> Self {
        Self::uniform(m, DEFAULT_P, DEFAULT_Q, DEFAULT_THETA, DEFAULT_K_STAR)
    }

    pub fn m(&self) -> usize {
        self.phi.len()
    }
}

pub const DEFAULT_P: f64 = 0.5;
pub const DEFAULT_Q: f64 = 5.0;
pub const DEFAULT_THETA: f64 = 1.0;
pub const DEFAULT_K_STAR: f64 = 50.0;

/// Filter states and estimates. All filters start at rest.
#[derive(Debug, Clone, PartialEq)]
pub struct NonSprControllerState<T> {
    /// `C_w⁻¹` applied to `ẍ0`.
    pub omega_dd: Vec<T>,
    /// `C_w⁻¹` applied to `ẋ0`.
    pub omega_d: Vec<T>,
    /// Forward `C_w` state.
    pub lead: Vec<T>,
    pub k_hat: Vec<T>,
    pub j_hat: Vec<T>,
    pub b_hat: Vec<T>,
    /// Scenario 2 regressor prefilters, one per channel.
    pub pre_e: Vec<T>,
    pub pre_dd: Vec<T>,
    pub pre_d: Vec<T>,
}

impl<T: Scalar> NonSprControllerState<T> {
    /// Filters at rest, `K̂ = K★`, `Ĵ = B̂ = 0`.
    pub fn initial(cp: &CompensatorParams<T>) -> Self {
        let z = vec![T::zero(); cp.m()];
        Self {
            omega_dd: z.clone(),
            omega_d: z.clone(),
            lead: z.clone(),
            k_hat: cp.k_star.clone(),
            j_hat: z.clone(),
            b_hat: z.clone(),
            pre_e: z.clone(),
            pre_dd: z.clone(),
            pre_d: z,
        }
    }

    pub(crate) fn view(&self) -> NonSprView<'_, T> {
        NonSprView {
            omega_dd: &self.omega_dd,
            omega_d: &self.omega_d,
            lead: &self.lead,
            k_hat: &self.k_hat,
            j_hat: &self.j_hat,
            b_hat: &self.b_hat,
            pre_e: &self.pre_e,
            pre_dd: &self.pre_dd,
            pre_d: &self.pre_d,
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) struct NonSprView<'a, T> {
    pub omega_dd: &'a [T],
    pub omega_d: &'a [T],
    pub lead: &'a [T],
    pub k_hat: &'a [T],
    pub j_hat: &'a [T],
    pub b_hat: &'a [T],
    pub pre_e: &'a [T],
    pub pre_dd: &'a [T],
    pub pre_d: &'a [T],
}

/// State derivatives of every filter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterRates<T> {
    pub omega_dd: Vec<T>,
    pub omega_d: Vec<T>,
    pub lead: Vec<T>,
    pub pre_e: Vec<T>,
    pub pre_dd: Vec<T>,
    pub pre_d: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapedSignals<T> {
    /// Shaped outputs `v + Θ∘x` (Scenario 1 only, zero otherwise).
    pub y: Vec<T>,
    pub y0: T,
    /// `z_y` in Scenario 1, `z` in Scenario 2.
    pub z: Vec<T>,
    /// Error used by the adaptive law: `e_y` or `e`.
    pub e: Vec<T>,
    /// Position error `z - x`, reported in both scenarios.
    pub e_pos: Vec<T>,
    pub omega_dd: Vec<T>,
    pub omega_d: Vec<T>,
    /// Regressor channels for `(K̂, Ĵ, B̂)`.
    pub regressor: [Vec<T>; 3],
    pub rates: FilterRates<T>,
}

impl<T: Scalar> ShapedSignals<T> {
    pub(crate) fn with_len(m: usize) -> Self {
        let z = vec![T::zero(); m];
        Self {
            y: z.clone(),
            y0: T::zero(),
            z: z.clone(),
            e: z.clone(),
            e_pos: z.clone(),
            omega_dd: z.clone(),
            omega_d: z.clone(),
            regressor: [z.clone(), z.clone(), z.clone()],
            rates: FilterRates {
                omega_dd: z.clone(),
                omega_d: z.clone(),
                lead: z.clone(),
                pre_e: z.clone(),
                pre_dd: z.clone(),
                pre_d: z,
            },
        }
    }
}

/// Realization of `φ(s+p)/(s+q)`: returns `(dstate/dt, output)`.
///
/// The inverse `(1/φ)(s+q)/(s+p)` is `lead_filter_step_deriv(st, w, q, p, 1/φ)`.
pub fn lead_filter_step_deriv<T: Scalar>(state: T, input: T, p: T, q: T, phi: T) -> (T, T) {
    (-q * state + input, phi * ((p - q) * state + input))
}

/// `1/(s+Θ)`: the state is the output.
pub fn prefilter_deriv<T: Scalar>(state: T, input: T, theta: T) -> T {
    -theta * state + input
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn nonspr_control_into<T: Scalar>(
    scenario: Scenario,
    net: &Network<T>,
    cp: &CompensatorParams<T>,
    cs: NonSprView<'_, T>,
    x: &[T],
    v: &[T],
    leader: LeaderSample<T>,
    sig: &mut ShapedSignals<T>,
    u: &mut [T],
) {
    let m = x.len();
    for i in 0..m {
        let inv_phi = T::one() / cp.phi[i];
        let (d2, o2) = lead_filter_step_deriv(cs.omega_dd[i], leader.a, cp.q[i], cp.p[i], inv_phi);
        let (d1, o1) = lead_filter_step_deriv(cs.omega_d[i], leader.v, cp.q[i], cp.p[i], inv_phi);
        sig.rates.omega_dd[i] = d2;
        sig.rates.omega_d[i] = d1;
        sig.omega_dd[i] = o2;
        sig.omega_d[i] = o1;
    }
    net.consensus_into(x, leader.x, &mut sig.e_pos);
    for i in 0..m {
        sig.e_pos[i] -= x[i];
    }
    match scenario {
        Scenario::Scenario1 => {
            for i in 0..m {
                sig.y[i] = v[i] + cp.theta[i] * x[i];
            }
            sig.y0 = leader.v + cp.theta0 * leader.x;
            net.consensus_into(&sig.y, sig.y0, &mut sig.z);
            for i in 0..m {
                sig.e[i] = sig.z[i] - sig.y[i];
                sig.regressor[0][i] = sig.e[i];
                sig.regressor[1][i] = sig.omega_dd[i];
                sig.regressor[2][i] = sig.omega_d[i];
            }
        }
        Scenario::Scenario2 => {
            net.consensus_into(x, leader.x, &mut sig.z);
            sig.y0 = T::zero();
            for i in 0..m {
                sig.y[i] = T::zero();
                sig.e[i] = sig.e_pos[i];
                sig.regressor[0][i] = cs.pre_e[i];
                sig.regressor[1][i] = cs.pre_dd[i];
                sig.regressor[2][i] = cs.pre_d[i];
            }
        }
    }
    for i in 0..m {
        let th = cp.theta[i];
        sig.rates.pre_e[i] = prefilter_deriv(cs.pre_e[i], sig.e[i], th);
        sig.rates.pre_dd[i] = prefilter_deriv(cs.pre_dd[i], sig.omega_dd[i], th);
        sig.rates.pre_d[i] = prefilter_deriv(cs.pre_d[i], sig.omega_d[i], th);
        // r_w - K̂ y = Ĵ Ω̈ + B̂ Ω̇ + K̂ (z - y)
        let inner = cs.j_hat[i] * sig.omega_dd[i] + cs.b_hat[i] * sig.omega_d[i] + cs.k_hat[i] * sig.e[i];
        let (dl, out) = lead_filter_step_deriv(cs.lead[i], inner, cp.p[i], cp.q[i], cp.phi[i]);
        sig.rates.lead[i] = dl;
        u[i] = out;
    }
}

fn control<T: Scalar>(
    scenario: Scenario,
    net: &Network<T>,
    cp: &CompensatorParams<T>,
    cs: &NonSprControllerState<T>,
    s: &PlantState<T>,
    leader: LeaderSample<T>,
    name: &'static str,
) -> Result<(Vec<T>, ShapedSignals<T>)> {
    let m = net.m();
    for (what, len) in [
        ("compensator", cp.m()),
        ("omega_dd", cs.omega_dd.len()),
        ("omega_d", cs.omega_d.len()),
        ("lead", cs.lead.len()),
        ("k_hat", cs.k_hat.len()),
        ("j_hat", cs.j_hat.len()),
        ("b_hat", cs.b_hat.len()),
        ("pre_e", cs.pre_e.len()),
        ("pre_dd", cs.pre_dd.len()),
        ("pre_d", cs.pre_d.len()),
        ("position", s.x.len()),
        ("velocity", s.v.len()),
    ] {
        if len != m {
            return Err(Error::DimensionMismatch { what, expected: m, got: len });
        }
    }
    let v = cs.view();
    let finite = [v.omega_dd, v.omega_d, v.lead, v.k_hat, v.j_hat, v.b_hat, v.pre_e, v.pre_dd, v.pre_d, &s.x, &s.v]
        .iter()
        .flat_map(|s| s.iter())
        .chain([&leader.x, &leader.v, &leader.a])
        .all(|x| x.is_finite());
    if !finite {
        return Err(Error::NonFiniteInput(name));
    }
    let mut sig = ShapedSignals::with_len(m);
    let mut u = vec![T::zero(); m];
    nonspr_control_into(scenario, net, cp, v, &s.x, &s.v, leader, &mut sig, &mut u);
    Ok((u, sig))
}

/// Output-shaped control: `u = C_w(Ĵ Ω̈ + B̂ Ω̇ + K̂ e_y)`.
pub fn scenario1_control<T: Scalar>(
    net: &Network<T>,
    cp: &CompensatorParams<T>,
    cs: &NonSprControllerState<T>,
    s: &PlantState<T>,
    leader: LeaderSample<T>,
) -> Result<(Vec<T>, ShapedSignals<T>)> {
    control(Scenario::Scenario1, net, cp, cs, s, leader, "scenario1_control")
}

/// Position-only control: `u = C_w(Ĵ Ω̈ + B̂ Ω̇ + K̂ e)` with prefiltered regressor.
pub fn scenario2_control<T: Scalar>(
    net: &Network<T>,
    cp: &CompensatorParams<T>,
    cs: &NonSprControllerState<T>,
    s: &PlantState<T>,
    leader: LeaderSample<T>,
) -> Result<(Vec<T>, ShapedSignals<T>)> {
    control(Scenario::Scenario2, net, cp, cs, s, leader, "scenario2_control")
}

/// Estimate derivatives `(dK̂, dĴ, dB̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRates<T> {
    pub k_hat: Vec<T>,
    pub j_hat: Vec<T>,
    pub b_hat: Vec<T>,
}

/// Gradient law `dΞ̂/dt = Γ∘e∘η`.
///
/// With `u = C_w(...)` the error obeys `e = -W Ξ̃ η` for `Ξ̃ = Ξ̂ - Ξ★`, so
/// the stabilizing update carries a positive sign. In Scenario 1 this makes
/// `dK̂/dt = Γ e_y² ≥ 0`.
pub fn nonspr_adapt_deriv<T: Scalar>(cp: &CompensatorParams<T>, sig: &ShapedSignals<T>) -> EstimateRates<T> {
    let m = sig.e.len();
    let ch = |g: &[T], k: usize| (0..m).map(|i| g[i] * sig.e[i] * sig.regressor[k][i]).collect();
    EstimateRates { k_hat: ch(&cp.gamma_k, 0), j_hat: ch(&cp.gamma_j, 1), b_hat: ch(&cp.gamma_b, 2) }
}

pub fn scenario1_adapt_deriv<T: Scalar>(cp: &CompensatorParams<T>, sig: &ShapedSignals<T>) -> EstimateRates<T> {
    nonspr_adapt_deriv(cp, sig)
}

/// Scenario 2 uses one gain for all three channels; `gamma_k` is applied.
pub fn scenario2_adapt_deriv<T: Scalar>(cp: &CompensatorParams<T>, sig: &ShapedSignals<T>) -> EstimateRates<T> {
    let uniform = CompensatorParams {
        gamma_j: cp.gamma_k.clone(),
        gamma_b: cp.gamma_k.clone(),
        ..cp.clone()
    };
    nonspr_adapt_deriv(&uniform, sig)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonSprMap {
    Unshaped,
    Scenario1Shaped,
    Scenario2Composite,
}

impl NonSprMap {
    pub fn for_scenario(s: Scenario) -> Self {
        match s {
            Scenario::Scenario1 => NonSprMap::Scenario1Shaped,
            Scenario::Scenario2 => NonSprMap::Scenario2Composite,
        }
    }
}

/// Closed-loop map of one agent under nominal gain `K★`.
#[allow(clippy::too_many_arguments)]
pub fn nonspr_closed_loop<T: Scalar>(which: NonSprMap, j: T, b: T, phi: T, p: T, q: T, theta: T, k: T) -> Rational<T> {
    let cw_num = Poly::monic_linear(p).scale(phi);
    let base = Poly::new(vec![T::zero(), b, j]).mul(&Poly::monic_linear(q));
    let shape = Poly::monic_linear(theta);
    match which {
        NonSprMap::Unshaped => Rational::new(cw_num.clone(), base.add(&cw_num.scale(k))),
        NonSprMap::Scenario1Shaped => {
            let n = cw_num.mul(&shape);
            Rational::new(n.clone(), base.add(&n.scale(k)))
        }
        NonSprMap::Scenario2Composite => Rational::new(cw_num.mul(&shape), base.add(&cw_num.scale(k))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonSprAgentCertificate<T> {
    pub min_real: T,
    pub argmin_omega: T,
    pub relative_degree: isize,
    /// Largest real part among the closed-loop poles.
    pub max_pole_real: T,
    pub verdict: bool,
    /// Why the agent failed, if it did.
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonSprCertificate<T> {
    pub map: NonSprMap,
    pub agents: Vec<NonSprAgentCertificate<T>>,
    pub verdict: bool,
}

impl<T: Scalar> NonSprCertificate<T> {
    pub fn reasons(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in self.agents.iter().flat_map(|a| &a.reasons) {
            if !out.contains(r) {
                out.push(r.clone());
            }
        }
        out
    }
}

pub fn nonspr_certify<T: Scalar>(
    p: &PlantParams<T>,
    cp: &CompensatorParams<T>,
    which: NonSprMap,
    grid: &FrequencyGrid<T>,
) -> Result<NonSprCertificate<T>> {
    if grid.is_empty() {
        return Err(Error::GridEmpty);
    }
    cp.validate()?;
    if cp.m() != p.m() {
        return Err(Error::DimensionMismatch { what: "compensator", expected: p.m(), got: cp.m() });
    }
    let mut agents = Vec::with_capacity(p.m());
    for i in 0..p.m() {
        let w = nonspr_closed_loop(
            which,
            p.inertia()[i],
            p.damping()[i],
            cp.phi[i],
            cp.p[i],
            cp.q[i],
            cp.theta[i],
            cp.k_star[i],
        );
        let (min_real, argmin_omega) = min_real_part(&w, grid);
        let relative_degree = w.relative_degree();
        let max_pole_real = w.den.max_root_real_part()?;
        let mut reasons = Vec::new();
        if relative_degree > 1 {
            reasons.push(format!("relative degree {relative_degree}"));
        }
        if max_pole_real >= T::zero() {
            reasons.push("unstable closed loop".to_string());
        }
        if min_real <= T::zero() {
            reasons.push("not positive real".to_string());
        }
        agents.push(NonSprAgentCertificate {
            min_real,
            argmin_omega,
            relative_degree,
            max_pole_real,
            verdict: reasons.is_empty(),
            reasons,
        });
    }
    let verdict = agents.iter().all(|a| a.verdict);
    Ok(NonSprCertificate { map: which, agents, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{TopologyKind, TopologyPreset};
    use proptest::prelude::*;

    fn star(m: usize) -> Network<f64> {
        TopologyPreset::new(TopologyKind::Star, m).realize().unwrap()
    }

    #[test]
    fn lead_filter_pure_gain_when_p_equals_q() {
        let (_, out) = lead_filter_step_deriv(123.0, 0.7, 3.0, 3.0, 2.0);
        assert_eq!(out, 1.4);
    }

    #[test]
    fn lead_filter_dc_gain() {
        let (p, q, phi, w): (f64, f64, f64, f64) = (1.0, 10.0, 2.0, 0.3);
        let settled: f64 = w / q;
        let (d, out) = lead_filter_step_deriv(settled, w, p, q, phi);
        assert!(d.abs() < 1e-15);
        assert!((out - phi * p / q * w).abs() < 1e-15);
    }

    fn rk4_scalar(f: impl Fn(f64, f64) -> f64, mut s: f64, dt: f64, n: usize) -> f64 {
        for k in 0..n {
            let t = k as f64 * dt;
            let k1 = f(t, s);
            let k2 = f(t + dt / 2.0, s + dt / 2.0 * k1);
            let k3 = f(t + dt / 2.0, s + dt / 2.0 * k2);
            let k4 = f(t + dt, s + dt * k3);
            s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        s
    }

    #[test]
    fn compensator_then_inverse_recovers_sine() {
        let (p, q, phi) = (1.0, 10.0, 2.0);
        let dt = 1e-3;
        let (mut a, mut b) = (0.0, 0.0);
        let mut worst: f64 = 0.0;
        let n = 20_000;
        for k in 0..n {
            let t = k as f64 * dt;
            // both filters are linear in their state; advance them together with RK4
            let f = |t: f64, a: f64, b: f64| {
                let (da, mid) = lead_filter_step_deriv(a, t.sin(), p, q, phi);
                let (db, out) = lead_filter_step_deriv(b, mid, q, p, 1.0 / phi);
                (da, db, out)
            };
            let (a1, b1, out) = f(t, a, b);
            let (a2, b2, _) = f(t + dt / 2.0, a + dt / 2.0 * a1, b + dt / 2.0 * b1);
            let (a3, b3, _) = f(t + dt / 2.0, a + dt / 2.0 * a2, b + dt / 2.0 * b2);
            let (a4, b4, _) = f(t + dt, a + dt * a3, b + dt * b3);
            if t > 10.0 {
                worst = worst.max((out - t.sin()).abs());
            }
            a += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            b += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        assert!(worst < 0.01, "{worst}");
    }

    #[test]
    fn filter_step_response_matches_closed_form() {
        let (p, q, phi, w) = (0.5, 4.0, 1.5, 2.0);
        let dt = 1e-3;
        for k in 1..=64 {
            let t = k as f64 * 0.1;
            let n = (t / dt).round() as usize;
            let s = rk4_scalar(|_, s| lead_filter_step_deriv(s, w, p, q, phi).0, 0.0, dt, n);
            let out = lead_filter_step_deriv(s, w, p, q, phi).1;
            // φ[(p/q) w + (1 - p/q) w e^{-qt}]
            let exact = phi * w * (p / q + (1.0 - p / q) * (-q * t).exp());
            assert!((out - exact).abs() < 1e-6);
            let pf = rk4_scalar(|_, s| prefilter_deriv(s, w, 3.0), 0.0, dt, n);
            assert!((pf - w / 3.0 * (1.0 - (-3.0 * t).exp())).abs() < 1e-6);
        }
    }

    #[test]
    fn prefilter_dc_gain() {
        assert_eq!(prefilter_deriv(0.5, 2.0, 4.0), 0.0);
    }

    #[test]
    fn disconnected_network_reductions() {
        let net = Network::<f64>::new(2, []).unwrap();
        let cp = CompensatorParams::default_for(2);
        let cs = NonSprControllerState::initial(&cp);
        let s = PlantState { x: vec![1.0, -2.0], v: vec![0.5, 0.0] };
        let (_, s1) = scenario1_control(&net, &cp, &cs, &s, LeaderSample { x: 3.0, v: 1.0, a: 0.0 }).unwrap();
        for i in 0..2 {
            assert_eq!(s1.z[i], 0.0);
            assert_eq!(s1.e[i], -s1.y[i]);
            assert_eq!(s1.y[i], s.v[i] + cp.theta[i] * s.x[i]);
        }
        let (_, s2) = scenario2_control(&net, &cp, &cs, &s, LeaderSample::default()).unwrap();
        assert_eq!(s2.e, vec![-1.0, 2.0]);
        assert_eq!(s2.rates.pre_e, vec![-1.0, 2.0]);
    }

    #[test]
    fn sync_equilibrium_holds_constant_force() {
        // constant leader c, x = c, Θ = θ0, settled filters, B̂ = B
        let net = star(1);
        let mut cp = CompensatorParams::default_for(1);
        cp.theta0 = cp.theta[0];
        let c = 1.3;
        let cs = NonSprControllerState::initial(&cp);
        let s = PlantState { x: vec![c], v: vec![0.0] };
        let (u, sig) = scenario1_control(&net, &cp, &cs, &s, LeaderSample { x: c, v: 0.0, a: 0.0 }).unwrap();
        assert!(sig.e[0].abs() < 1e-15);
        assert_eq!(u, vec![0.0]);
        assert!(sig.rates.lead[0].abs() < 1e-15);
    }

    #[test]
    fn adapt_signs_and_values() {
        let cp = CompensatorParams::<f64>::default_for(1);
        let mut sig = ShapedSignals::with_len(1);
        sig.e[0] = 1.0;
        sig.regressor = [vec![1.0], vec![-0.5], vec![0.0]];
        let r = scenario1_adapt_deriv(&cp, &sig);
        assert!((r.j_hat[0] + 2.5).abs() < 1e-15);
        assert!(r.k_hat[0] >= 0.0);
        sig.e[0] = 0.2;
        sig.regressor = [vec![1.0], vec![1.0], vec![1.0]];
        let r = scenario2_adapt_deriv(&cp, &sig);
        assert!((r.k_hat[0] - 1.0).abs() < 1e-15);
        sig.e[0] = 0.0;
        let r = scenario2_adapt_deriv(&cp, &sig);
        assert_eq!((r.k_hat[0], r.j_hat[0], r.b_hat[0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn construction_rejects_bad_params() {
        let mut cp = CompensatorParams::<f64>::default_for(2);
        cp.theta[1] = 0.0;
        assert!(cp.validate().is_err());
        let mut cp = CompensatorParams::<f64>::default_for(2);
        cp.p[0] = 20.0;
        assert!(cp.validate().is_err());
        assert!(CompensatorParams::<f64>::default_for(2).validate().is_ok());
    }

    #[test]
    fn unshaped_rejected_for_relative_degree() {
        let cert = nonspr_certify(
            &PlantParams::<f64>::baseline(8),
            &CompensatorParams::default_for(8),
            NonSprMap::Unshaped,
            &FrequencyGrid::standard(),
        )
        .unwrap();
        assert!(!cert.verdict);
        assert!(cert.reasons().contains(&"relative degree 2".to_string()));
        assert!(cert.agents.iter().all(|a| a.relative_degree == 2));
    }

    #[test]
    fn default_compensator_certifies_both_shaped_maps() {
        for which in [NonSprMap::Scenario1Shaped, NonSprMap::Scenario2Composite] {
            let cert = nonspr_certify(
                &PlantParams::<f64>::baseline(8),
                &CompensatorParams::default_for(8),
                which,
                &FrequencyGrid::standard(),
            )
            .unwrap();
            assert!(cert.verdict, "{which:?}: {:?}", cert.reasons());
        }
    }

    proptest! {
        #[test]
        fn shaped_output_identity(x in -5.0f64..5.0, v in -5.0f64..5.0) {
            let net = star(1);
            let cp = CompensatorParams::default_for(1);
            let cs = NonSprControllerState::initial(&cp);
            let s = PlantState { x: vec![x], v: vec![v] };
            let (_, sig) = scenario1_control(&net, &cp, &cs, &s, LeaderSample::default()).unwrap();
            prop_assert!((sig.y[0] - cp.theta[0] * x - v).abs() < 1e-12);
        }

        #[test]
        fn scenario2_ignores_velocities_of_others(v in prop::collection::vec(-5.0f64..5.0, 3)) {
            let net = TopologyPreset::new(TopologyKind::Cyclic, 3).realize::<f64>().unwrap();
            let cp = CompensatorParams::default_for(3);
            let cs = NonSprControllerState::initial(&cp);
            let base = PlantState { x: vec![0.1, 0.2, 0.3], v: vec![0.0; 3] };
            let moved = PlantState { x: base.x.clone(), v: v.clone() };
            let l = LeaderSample { x: 0.0, v: 1.0, a: -1.0 };
            let (u0, s0) = scenario2_control(&net, &cp, &cs, &base, l).unwrap();
            let (u1, s1) = scenario2_control(&net, &cp, &cs, &moved, l).unwrap();
            prop_assert_eq!(u0, u1);
            prop_assert_eq!(s0.regressor, s1.regressor);
        }
    }
}
