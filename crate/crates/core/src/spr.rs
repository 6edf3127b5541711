//! Passivity-certified controller.
//!
//! The reparameterized input is `u = Φ∘ϑ + Ĵ∘ζ + B̂∘v` with
//! `ϑ = ė + 2Λ∘e + Λ²∘∫e` and `ζ = ẍ0 + 2Λ∘ė + Λ²∘e`. The estimates follow
//! the gradient law `dĴ/dt = Γ_J∘ϑ∘ζ`, `dB̂/dt = Γ_B∘ϑ∘v`.

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::plant::{PlantParams, PlantState};
use crate::poly::{min_real_part, FrequencyGrid, Poly, Rational};
use crate::scalar::Scalar;
use crate::signals::LeaderSample;

fn check_positive<T: Scalar>(name: &str, v: &[T], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::InvalidParameter(format!("{name} has {} entries, expected {m}", v.len())));
    }
    if let Some(i) = v.iter().position(|&g| !(g.is_finite() && g > T::zero())) {
        return Err(Error::InvalidParameter(format!("{name}[{}] must be positive", i + 1)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprGains<T> {
    pub phi: Vec<T>,
    pub lambda: Vec<T>,
    /// Adaptation gain for `Ĵ`.
    pub gamma_j: Vec<T>,
    /// Adaptation gain for `B̂`.
    pub gamma_b: Vec<T>,
}

impl<T: Scalar> SprGains<T> {
    pub fn new(phi: Vec<T>, lambda: Vec<T>, gamma_j: Vec<T>, gamma_b: Vec<T>) -> Result<Self> {
        let m = phi.len();
        if m == 0 {
            return Err(Error::InvalidParameter("gains need at least one follower".into()));
        }
        check_positive("phi", &phi, m)?;
        check_positive("lambda", &lambda, m)?;
        check_positive("gamma_j", &gamma_j, m)?;
        check_positive("gamma_b", &gamma_b, m)?;
        Ok(Self { phi, lambda, gamma_j, gamma_b })
    }

    /// `φ_i = 1.5 + 0.5 i`, `λ_i = 1`, `Γ = 5`.
    pub fn baseline(m: usize) -> Self {
        Self {
            phi: (1..=m).map(|i| T::lit(1.5 + 0.5 * i as f64)).collect(),
            lambda: vec![T::one(); m],
            gamma_j: vec![T::lit(5.0); m],
            gamma_b: vec![T::lit(5.0); m],
        }
    }

    pub fn m(&self) -> usize {
        self.phi.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprControllerState<T> {
    /// Elementwise time integral of the synchronization error.
    pub integral_error: Vec<T>,
    pub j_hat: Vec<T>,
    pub b_hat: Vec<T>,
}

impl<T: Scalar> SprControllerState<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            integral_error: vec![T::zero(); m],
            j_hat: vec![T::zero(); m],
            b_hat: vec![T::zero(); m],
        }
    }
}

/// Per-evaluation quantities derived from the state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SprSignals<T> {
    /// `z = A_m x + A_0 x0`
    pub z: Vec<T>,
    /// `e = z - x`
    pub e: Vec<T>,
    pub e_dot: Vec<T>,
    pub zeta: Vec<T>,
    /// `ϑ`
    pub theta: Vec<T>,
    /// Local velocity, the second regressor channel.
    pub v: Vec<T>,
}

impl<T: Scalar> SprSignals<T> {
    pub(crate) fn with_len(m: usize) -> Self {
        let z = vec![T::zero(); m];
        Self { z: z.clone(), e: z.clone(), e_dot: z.clone(), zeta: z.clone(), theta: z.clone(), v: z }
    }
}

/// `ė = A_m v + A_0 ẋ0 - v`.
///
/// Simulation privilege: this is the only place where neighbour
/// velocities are read. Everything else in the controller consumes local
/// state, neighbour positions and the leader broadcast.
pub(crate) fn error_rate_into<T: Scalar>(net: &Network<T>, v: &[T], leader_v: T, out: &mut [T]) {
    net.consensus_into(v, leader_v, out);
    for (o, &vi) in out.iter_mut().zip(v) {
        *o -= vi;
    }
}

/// Slice form of [`spr_control`] used by the integrator. Writes `u` and
/// every field of `sig`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn spr_control_into<T: Scalar>(
    net: &Network<T>,
    gains: &SprGains<T>,
    integral_error: &[T],
    j_hat: &[T],
    b_hat: &[T],
    x: &[T],
    v: &[T],
    leader: LeaderSample<T>,
    sig: &mut SprSignals<T>,
    u: &mut [T],
) {
    net.consensus_into(x, leader.x, &mut sig.z);
    error_rate_into(net, v, leader.v, &mut sig.e_dot);
    let two = T::lit(2.0);
    for i in 0..x.len() {
        let lam = gains.lambda[i];
        let e = sig.z[i] - x[i];
        let ed = sig.e_dot[i];
        sig.e[i] = e;
        sig.zeta[i] = leader.a + two * lam * ed + lam * lam * e;
        sig.theta[i] = ed + two * lam * e + lam * lam * integral_error[i];
        sig.v[i] = v[i];
        u[i] = gains.phi[i] * sig.theta[i] + j_hat[i] * sig.zeta[i] + b_hat[i] * v[i];
    }
}

/// Reparameterized control input and the signals it was built from.
pub fn spr_control<T: Scalar>(
    net: &Network<T>,
    gains: &SprGains<T>,
    cs: &SprControllerState<T>,
    s: &PlantState<T>,
    leader: LeaderSample<T>,
) -> Result<(Vec<T>, SprSignals<T>)> {
    let m = net.m();
    for (what, len) in [
        ("gains", gains.m()),
        ("integral state", cs.integral_error.len()),
        ("j_hat", cs.j_hat.len()),
        ("b_hat", cs.b_hat.len()),
        ("position", s.x.len()),
        ("velocity", s.v.len()),
    ] {
        if len != m {
            return Err(Error::DimensionMismatch { what, expected: m, got: len });
        }
    }
    let finite = cs
        .integral_error
        .iter()
        .chain(&cs.j_hat)
        .chain(&cs.b_hat)
        .chain(&s.x)
        .chain(&s.v)
        .chain([&leader.x, &leader.v, &leader.a])
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFiniteInput("spr_control"));
    }
    let mut sig = SprSignals::with_len(m);
    let mut u = vec![T::zero(); m];
    spr_control_into(net, gains, &cs.integral_error, &cs.j_hat, &cs.b_hat, &s.x, &s.v, leader, &mut sig, &mut u);
    Ok((u, sig))
}

/// Time derivatives of the controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct SprRates<T> {
    /// `d(∫e)/dt = e`
    pub integral_error: Vec<T>,
    pub j_hat: Vec<T>,
    pub b_hat: Vec<T>,
}

pub fn spr_adapt_deriv<T: Scalar>(gains: &SprGains<T>, sig: &SprSignals<T>) -> SprRates<T> {
    let m = sig.theta.len();
    SprRates {
        integral_error: sig.e.clone(),
        j_hat: (0..m).map(|i| gains.gamma_j[i] * sig.theta[i] * sig.zeta[i]).collect(),
        b_hat: (0..m).map(|i| gains.gamma_b[i] * sig.theta[i] * sig.v[i]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMargin<T> {
    /// `2(b_i + φ_i) - J_i λ_i`
    pub margin: T,
    pub pass: bool,
}

/// Routh–Hurwitz condition for the cubic closed-loop denominator.
pub fn rh_gain_check<T: Scalar>(p: &PlantParams<T>, gains: &SprGains<T>) -> Vec<GainMargin<T>> {
    (0..p.m())
        .map(|i| {
            let margin = T::lit(2.0) * (p.damping()[i] + gains.phi[i]) - p.inertia()[i] * gains.lambda[i];
            GainMargin { margin, pass: margin > T::zero() }
        })
        .collect()
}

/// `W_u,i(s) = φ(s+λ)² / (J s³ + (b+φ) s² + 2φλ s + φλ²)`.
pub fn closed_loop_wu<T: Scalar>(j: T, b: T, phi: T, lambda: T) -> Rational<T> {
    let s_lam = Poly::monic_linear(lambda);
    let num = s_lam.mul(&s_lam).scale(phi);
    let two = T::lit(2.0);
    let den = Poly::new(vec![phi * lambda * lambda, two * phi * lambda, b + phi, j]);
    Rational::new(num, den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprAgentCertificate<T> {
    pub rh: GainMargin<T>,
    /// `min Re W_u,i(jω)` over the grid.
    pub min_real: T,
    pub argmin_omega: T,
    pub relative_degree: isize,
    pub spr: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprCertificate<T> {
    pub agents: Vec<SprAgentCertificate<T>>,
    pub verdict: bool,
}

/// Frequency-sweep certificate that each `W_u,i` is SPR.
pub fn spr_certify_frequency<T: Scalar>(
    p: &PlantParams<T>,
    gains: &SprGains<T>,
    grid: &FrequencyGrid<T>,
) -> Result<SprCertificate<T>> {
    if grid.is_empty() {
        return Err(Error::GridEmpty);
    }
    if gains.m() != p.m() {
        return Err(Error::DimensionMismatch { what: "gains", expected: p.m(), got: gains.m() });
    }
    let rh = rh_gain_check(p, gains);
    let agents: Vec<_> = (0..p.m())
        .map(|i| {
            let w = closed_loop_wu(p.inertia()[i], p.damping()[i], gains.phi[i], gains.lambda[i]);
            let (min_real, argmin_omega) = min_real_part(&w, grid);
            let relative_degree = w.relative_degree();
            let spr = rh[i].pass && relative_degree == 1 && min_real > T::zero();
            SprAgentCertificate { rh: rh[i], min_real, argmin_omega, relative_degree, spr }
        })
        .collect();
    let verdict = agents.iter().all(|a| a.spr);
    Ok(SprCertificate { agents, verdict })
}
