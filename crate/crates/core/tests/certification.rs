use passync::nonspr::{nonspr_certify, CompensatorParams, NonSprMap};
use passync::plant::PlantParams;
use passync::poly::FrequencyGrid;
use passync::spr::{closed_loop_wu, rh_gain_check, spr_certify_frequency, SprGains};

const OMEGAS: [f64; 10] = [1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0];

/// Real part of `φ(jω+λ)² / (J(jω)³ + (b+φ)(jω)² + 2φλ jω + φλ²)` in plain
/// real arithmetic.
fn re_wu(j: f64, b: f64, phi: f64, lam: f64, w: f64) -> f64 {
    let nr = phi * (lam * lam - w * w);
    let ni = phi * 2.0 * lam * w;
    let dr = phi * lam * lam - (b + phi) * w * w;
    let di = 2.0 * phi * lam * w - j * w * w * w;
    (nr * dr + ni * di) / (dr * dr + di * di)
}

fn agent_params(i: usize) -> (f64, f64, f64) {
    let i = i as f64;
    (0.5 + 0.1 * i, -1.3 - 0.1 * i, 1.5 + 0.5 * i)
}

#[test]
fn wu_matches_hand_oracle() {
    for i in 1..=8 {
        let (j, b, phi) = agent_params(i);
        let w = closed_loop_wu(j, b, phi, 1.0);
        for om in OMEGAS {
            let got = w.at_jw(om).re;
            let want = re_wu(j, b, phi, 1.0, om);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "agent {i} ω={om}: {got} vs {want}");
        }
    }
}

#[test]
fn dc_gain_is_one_for_every_agent() {
    for i in 1..=8 {
        let (j, b, phi) = agent_params(i);
        let re = re_wu(j, b, phi, 1.0, 0.0);
        assert!((re - 1.0).abs() < 1e-15);
    }
}

#[test]
fn high_frequency_sign_follows_damping_excess() {
    // Re W ~ φ((b+φ) - 2Jλ) / (J²ω²) as ω → ∞
    for i in 1..=8 {
        let (j, b, phi) = agent_params(i);
        let excess = b + phi - 2.0 * j;
        let re = re_wu(j, b, phi, 1.0, 1e4);
        if excess.abs() > 1e-9 {
            assert_eq!(re > 0.0, excess > 0.0, "agent {i}");
        }
    }
}

#[test]
fn agent_one_is_not_spr() {
    let (j, b, phi) = agent_params(1);
    assert!(re_wu(j, b, phi, 1.0, 10.0) < 0.0);
    let cert = spr_certify_frequency(&PlantParams::<f64>::baseline(8), &SprGains::baseline(8), &FrequencyGrid::standard()).unwrap();
    assert!(cert.agents[0].rh.pass);
    assert!(cert.agents[0].min_real < 0.0);
    assert!(!cert.agents[0].spr);
    let oracle_min = OMEGAS.iter().map(|&w| re_wu(j, b, phi, 1.0, w)).fold(f64::INFINITY, f64::min);
    assert!(cert.agents[0].min_real <= oracle_min + 1e-12);
}

#[test]
fn baseline_margins() {
    let m = rh_gain_check(&PlantParams::<f64>::baseline(8), &SprGains::baseline(8));
    for (i, g) in m.iter().enumerate() {
        let (j, b, phi) = agent_params(i + 1);
        assert_eq!(g.margin, 2.0 * (b + phi) - j);
        assert!(g.pass);
    }
    assert!((m[7].margin - 5.5).abs() < 1e-12);
}

#[test]
fn spr_restored_by_larger_phi() {
    // b + φ > 2Jλ is needed at high frequency
    let p = PlantParams::<f64>::baseline(8);
    let mut g = SprGains::baseline(8);
    for i in 0..8 {
        let (j, b, _) = agent_params(i + 1);
        g.phi[i] = 2.0 * j - b + 1.0;
    }
    let cert = spr_certify_frequency(&p, &g, &FrequencyGrid::standard()).unwrap();
    assert!(cert.verdict, "{:?}", cert.agents.iter().map(|a| a.min_real).collect::<Vec<_>>());
}

#[test]
fn shaped_maps_against_direct_evaluation() {
    let cp = CompensatorParams::<f64>::default_for(8);
    let p = PlantParams::<f64>::baseline(8);
    let grid = FrequencyGrid::from_points(OMEGAS.to_vec());
    let s1 = nonspr_certify(&p, &cp, NonSprMap::Scenario1Shaped, &grid).unwrap();
    for i in 0..8 {
        let (j, b, phi) = agent_params(i + 1);
        let (pp, q, th, k) = (cp.p[i], cp.q[i], cp.theta[i], cp.k_star[i]);
        let min = OMEGAS
            .iter()
            .map(|&w| {
                let s = num_complex::Complex64::new(0.0, w);
                let cw = phi * (s + pp) / (s + q);
                (cw * (s + th) / (j * s * s + b * s + k * cw * (s + th))).re
            })
            .fold(f64::INFINITY, f64::min);
        assert!((s1.agents[i].min_real - min).abs() < 1e-10);
    }
}

#[test]
fn unshaped_rejected_with_reason() {
    let cert = nonspr_certify(
        &PlantParams::<f64>::baseline(8),
        &CompensatorParams::default_for(8),
        NonSprMap::Unshaped,
        &FrequencyGrid::standard(),
    )
    .unwrap();
    assert!(!cert.verdict);
    assert_eq!(cert.reasons()[0], "relative degree 2");
}
