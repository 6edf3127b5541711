//! TOML scenario files and their translation into simulation specs.

use std::path::Path;

use anyhow::Context;
use passync::engine::{ControllerSpec, InitialConditions, IntegratorConfig, SimulationSpec};
use passync::graph::{Network, TopologyKind, TopologyPreset};
use passync::nonspr::{CompensatorParams, NonSprMap, Scenario};
use passync::plant::PlantParams;
use passync::signals::{DisturbanceKind, DisturbanceProfile, LeaderSignal, Sinusoid};
use passync::spr::SprGains;
use serde::{Deserialize, Serialize};

/// One experiment: network, plant, controller, signals, integrator and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub leader: LeaderConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub m: usize,
    /// Raw leader weight before normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_weight: Option<f64>,
    /// Only the first `leader_access` followers hear the leader.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_access: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_edge_groups: Vec<String>,
    /// `[follower, source, weight]`, source 0 is the leader.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub custom_edges: Vec<(usize, usize, f64)>,
}

impl TopologyConfig {
    pub fn preset(kind: TopologyKind, m: usize) -> Self {
        Self { kind, m, leader_weight: None, leader_access: None, removed_edge_groups: Vec::new(), custom_edges: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PlantConfig {
    #[default]
    Baseline,
    Explicit { j: Vec<f64>, b: Vec<f64> },
}

/// A scalar applied to every agent or one value per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Uniform(f64),
    PerAgent(Vec<f64>),
}

impl Param {
    fn expand(&self, m: usize, name: &str) -> passync::Result<Vec<f64>> {
        match self {
            Param::Uniform(v) => Ok(vec![*v; m]),
            Param::PerAgent(v) if v.len() == m => Ok(v.clone()),
            Param::PerAgent(v) => Err(passync::Error::ConfigInvalid(format!(
                "{name} has {} entries, expected {m}",
                v.len()
            ))),
        }
    }
}

fn or_default(p: &Option<Param>, default: Vec<f64>, m: usize, name: &str) -> passync::Result<Vec<f64>> {
    p.as_ref().map_or(Ok(default), |p| p.expand(m, name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerConfig {
    Spr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_j: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_b: Option<Param>,
    },
    #[serde(rename = "nonspr")]
    NonSpr {
        scenario: Scenario,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<Param>,
        /// Defaults to the first agent's `theta`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_star: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_k: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_j: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_b: Option<Param>,
        /// Map checked by `certify`; defaults to the scenario's own map.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        certify_map: Option<NonSprMap>,
    },
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig::spr()
    }
}

impl ControllerConfig {
    pub fn spr() -> Self {
        ControllerConfig::Spr { phi: None, lambda: None, gamma_j: None, gamma_b: None }
    }

    pub fn nonspr(scenario: Scenario) -> Self {
        ControllerConfig::NonSpr {
            scenario,
            phi: None,
            p: None,
            q: None,
            theta: None,
            theta0: None,
            k_star: None,
            gamma_k: None,
            gamma_j: None,
            gamma_b: None,
            certify_map: None,
        }
    }

    pub fn build(&self, m: usize) -> passync::Result<ControllerSpec<f64>> {
        match self {
            ControllerConfig::Spr { phi, lambda, gamma_j, gamma_b } => {
                let d = SprGains::<f64>::baseline(m);
                let g = SprGains::new(
                    or_default(phi, d.phi, m, "phi")?,
                    or_default(lambda, d.lambda, m, "lambda")?,
                    or_default(gamma_j, d.gamma_j, m, "gamma_j")?,
                    or_default(gamma_b, d.gamma_b, m, "gamma_b")?,
                )?;
                Ok(ControllerSpec::Spr(g))
            }
            ControllerConfig::NonSpr { scenario, phi, p, q, theta, theta0, k_star, gamma_k, gamma_j, gamma_b, .. } => {
                let d = CompensatorParams::<f64>::default_for(m);
                let theta = or_default(theta, d.theta, m, "theta")?;
                let cp = CompensatorParams {
                    phi: or_default(phi, d.phi, m, "phi")?,
                    p: or_default(p, d.p, m, "p")?,
                    q: or_default(q, d.q, m, "q")?,
                    theta0: theta0.unwrap_or(theta[0]),
                    theta,
                    k_star: or_default(k_star, d.k_star, m, "k_star")?,
                    gamma_k: or_default(gamma_k, d.gamma_k, m, "gamma_k")?,
                    gamma_j: or_default(gamma_j, d.gamma_j, m, "gamma_j")?,
                    gamma_b: or_default(gamma_b, d.gamma_b, m, "gamma_b")?,
                };
                cp.validate()?;
                Ok(ControllerSpec::NonSpr { scenario: *scenario, params: cp })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidConfig {
    #[serde(default)]
    pub sin: f64,
    #[serde(default)]
    pub cos: f64,
    pub omega: f64,
}

impl From<SinusoidConfig> for Sinusoid<f64> {
    fn from(s: SinusoidConfig) -> Self {
        Sinusoid::new(s.sin, s.cos, s.omega)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderConfig {
    /// `sin t + 0.75 cos 2t`
    #[default]
    TwoTone,
    Zero,
    Constant { value: f64 },
    Sum { terms: Vec<SinusoidConfig> },
}

impl LeaderConfig {
    pub fn build(&self) -> LeaderSignal<f64> {
        match self {
            LeaderConfig::TwoTone => LeaderSignal::TwoTone,
            LeaderConfig::Zero => LeaderSignal::Zero,
            LeaderConfig::Constant { value } => LeaderSignal::Constant(*value),
            LeaderConfig::Sum { terms } => LeaderSignal::Custom(terms.iter().map(|&t| t.into()).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceName {
    #[default]
    None,
    D1,
    D2,
    D3,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    #[serde(default)]
    pub kind: DisturbanceName,
    /// Offset for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    /// Sinusoids for `custom`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<SinusoidConfig>,
    /// Per-agent multiplier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Vec<f64>>,
}

impl DisturbanceConfig {
    pub fn named(kind: DisturbanceName) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn build(&self) -> passync::Result<DisturbanceProfile<f64>> {
        let custom = self.constant.is_some() || !self.terms.is_empty();
        if custom && self.kind != DisturbanceName::Custom {
            return Err(passync::Error::ConfigInvalid("constant/terms are only allowed for kind = \"custom\"".into()));
        }
        let kind = match self.kind {
            DisturbanceName::None => DisturbanceKind::None,
            DisturbanceName::D1 => DisturbanceKind::D1,
            DisturbanceName::D2 => DisturbanceKind::D2,
            DisturbanceName::D3 => DisturbanceKind::D3,
            DisturbanceName::Custom => DisturbanceKind::Custom {
                constant: self.constant.unwrap_or(0.0),
                terms: self.terms.iter().map(|&t| t.into()).collect(),
            },
        };
        Ok(DisturbanceProfile { kind, scaling: self.scaling.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral_error: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trajectory: String,
    pub metrics: String,
    pub plot: String,
    /// Record every n-th step; overrides `integrator.stride`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decimation: Option<usize>,
    /// Add a `V` column (SPR only).
    pub lyapunov: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            metrics: "metrics.toml".into(),
            plot: "plot.csv".into(),
            decimation: None,
            lyapunov: false,
        }
    }
}

impl ScenarioConfig {
    /// Baseline plant and SPR gains on a preset, two-tone leader, no disturbance.
    pub fn baseline(kind: TopologyKind, m: usize) -> Self {
        Self {
            name: format!("{kind}-m{m}"),
            topology: TopologyConfig::preset(kind, m),
            plant: PlantConfig::Baseline,
            controller: ControllerConfig::spr(),
            leader: LeaderConfig::TwoTone,
            disturbance: DisturbanceConfig::default(),
            integrator: IntegratorConfig::default(),
            initial: InitialConfig::default(),
            outputs: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn network(&self) -> passync::Result<Network<f64>> {
        let t = &self.topology;
        let preset = TopologyPreset {
            kind: t.kind,
            m: t.m,
            leader_weight_override: t.leader_weight,
            leader_access: t.leader_access,
            removed_edges: t.removed_edge_groups.clone(),
            custom_edges: t.custom_edges.clone(),
        };
        preset.realize()
    }

    pub fn plant_params(&self) -> passync::Result<PlantParams<f64>> {
        let m = self.topology.m;
        match &self.plant {
            PlantConfig::Baseline if m == 0 => Err(passync::Error::ConfigInvalid("m must be at least 1".into())),
            PlantConfig::Baseline => Ok(PlantParams::baseline(m)),
            PlantConfig::Explicit { j, b } => {
                if j.len() != m {
                    return Err(passync::Error::ConfigInvalid(format!("plant.j has {} entries, expected {m}", j.len())));
                }
                PlantParams::new(j.clone(), b.clone())
            }
        }
    }

    /// Validated simulation spec.
    pub fn to_spec(&self) -> passync::Result<SimulationSpec<f64>> {
        let network = self.network()?;
        let m = network.m();
        let mut integrator = self.integrator.clone();
        if let Some(n) = self.outputs.decimation {
            integrator.stride = n;
        }
        let i = &self.initial;
        let spec = SimulationSpec {
            network,
            plant: self.plant_params()?,
            controller: self.controller.build(m)?,
            leader: self.leader.build(),
            disturbance: self.disturbance.build()?,
            integrator,
            initial: InitialConditions {
                x: i.x.clone(),
                v: i.v.clone(),
                integral_error: i.integral_error.clone(),
                j_hat: i.j_hat.clone(),
                b_hat: i.b_hat.clone(),
                k_hat: i.k_hat.clone(),
            },
            monitor_lyapunov: self.outputs.lyapunov,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_baseline_defaults() {
        let c = ScenarioConfig::from_toml("[topology]\nkind = \"star\"\nm = 8\n").unwrap();
        assert_eq!(c, ScenarioConfig { name: String::new(), ..ScenarioConfig::baseline(TopologyKind::Star, 8) });
        let spec = c.to_spec().unwrap();
        assert_eq!(spec.controller, ControllerSpec::Spr(SprGains::baseline(8)));
    }

    #[test]
    fn per_agent_and_uniform_params() {
        let text = r#"
            [topology]
            kind = "path"
            m = 3
            [controller]
            kind = "spr"
            phi = [4.0, 5.0, 6.0]
            lambda = 2.0
        "#;
        let spec = ScenarioConfig::from_toml(text).unwrap().to_spec().unwrap();
        let ControllerSpec::Spr(g) = spec.controller else { panic!("expected SPR") };
        assert_eq!(g.phi, vec![4.0, 5.0, 6.0]);
        assert_eq!(g.lambda, vec![2.0; 3]);
        assert_eq!(g.gamma_j, vec![5.0; 3]);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let text = "[topology]\nkind = \"star\"\nm = 3\n[controller]\nkind = \"spr\"\nphi = [1.0, 2.0]\n";
        let err = ScenarioConfig::from_toml(text).unwrap().to_spec().unwrap_err();
        assert!(matches!(err, passync::Error::ConfigInvalid(_)), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ScenarioConfig::from_toml("[topology]\nkind = \"star\"\nm = 3\nweight = 1\n").is_err());
        assert!(ScenarioConfig::from_toml("[topology]\nkind = \"ring\"\nm = 3\n").is_err());
    }

    #[test]
    fn nonspr_theta0_follows_theta() {
        let text = "[topology]\nkind = \"star\"\nm = 2\n[controller]\nkind = \"nonspr\"\nscenario = \"s2\"\ntheta = 3.0\n";
        let spec = ScenarioConfig::from_toml(text).unwrap().to_spec().unwrap();
        match spec.controller {
            ControllerSpec::NonSpr { scenario, params } => {
                assert_eq!(scenario, Scenario::Scenario2);
                assert_eq!(params.theta0, 3.0);
            }
            _ => panic!("expected non-SPR"),
        }
    }

    #[test]
    fn custom_disturbance_fields_need_custom_kind() {
        let mut d = DisturbanceConfig::named(DisturbanceName::D1);
        d.constant = Some(0.1);
        assert!(d.build().is_err());
        d.kind = DisturbanceName::Custom;
        assert!(d.build().is_ok());
    }
}
