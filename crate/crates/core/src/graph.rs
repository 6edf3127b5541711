//! Directed leader–follower communication graph.
//!
//! Node `0` is the leader, followers are numbered `1..=m`. An edge
//! `(i, j, w)` means follower `i` receives the position of node `j` with
//! weight `w > 0`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    /// Receiving follower, `1..=m`.
    pub follower: usize,
    /// Sending node, `0` for the leader.
    pub source: usize,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    m: usize,
    /// Sorted by `(follower, source)`; at most one edge per pair.
    edges: Vec<Edge<T>>,
    /// Named edge groups, as `(follower, source)` pairs, for declarative removals.
    groups: BTreeMap<String, Vec<(usize, usize)>>,
    /// Incoming follower links per follower, zero-based, for O(E) products.
    incoming: Vec<Vec<(usize, T)>>,
    leader: Vec<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(m: usize, edges: impl IntoIterator<Item = Edge<T>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("network needs at least one follower".into()));
        }
        let mut map: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for e in edges {
            if e.follower == 0 || e.follower > m || e.source > m {
                return Err(Error::InvalidEdge {
                    follower: e.follower,
                    from: e.source,
                    reason: "node id out of range",
                });
            }
            if e.follower == e.source {
                return Err(Error::InvalidEdge {
                    follower: e.follower,
                    from: e.source,
                    reason: "self-loop",
                });
            }
            if !(e.weight.is_finite() && e.weight > T::zero()) {
                return Err(Error::InvalidEdge {
                    follower: e.follower,
                    from: e.source,
                    reason: "weight must be finite and positive",
                });
            }
            if map.insert((e.follower, e.source), e.weight).is_some() {
                return Err(Error::InvalidEdge {
                    follower: e.follower,
                    from: e.source,
                    reason: "duplicate edge",
                });
            }
        }
        let edges = map
            .into_iter()
            .map(|((follower, source), weight)| Edge { follower, source, weight })
            .collect();
        Ok(Self::from_sorted(m, edges, BTreeMap::new()))
    }

    fn from_sorted(
        m: usize,
        edges: Vec<Edge<T>>,
        groups: BTreeMap<String, Vec<(usize, usize)>>,
    ) -> Self {
        let mut incoming = vec![Vec::new(); m];
        let mut leader = vec![T::zero(); m];
        for e in &edges {
            if e.source == 0 {
                leader[e.follower - 1] = e.weight;
            } else {
                incoming[e.follower - 1].push((e.source - 1, e.weight));
            }
        }
        Self { m, edges, groups, incoming, leader }
    }

    pub fn with_group(mut self, name: &str, pairs: Vec<(usize, usize)>) -> Self {
        self.groups.insert(name.to_string(), pairs);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<(usize, usize)>> {
        &self.groups
    }

    pub fn weight(&self, follower: usize, source: usize) -> T {
        self.edges
            .iter()
            .find(|e| e.follower == follower && e.source == source)
            .map_or_else(T::zero, |e| e.weight)
    }

    /// Diagonal of `A_0`.
    pub fn leader_weights(&self) -> &[T] {
        &self.leader
    }

    /// Follower-to-follower in-links of follower `i` (zero-based), zero-based sources.
    pub fn in_links(&self, i: usize) -> &[(usize, T)] {
        &self.incoming[i]
    }

    /// `A_m`, with `A_m[i][j] = w_ij`.
    pub fn follower_adjacency(&self) -> Matrix<T> {
        let mut a = Matrix::zeros(self.m, self.m);
        for (i, row) in self.incoming.iter().enumerate() {
            for &(j, w) in row {
                a[(i, j)] = w;
            }
        }
        a
    }

    /// `A_0` as a dense diagonal matrix.
    pub fn leader_matrix(&self) -> Matrix<T> {
        let mut a = Matrix::zeros(self.m, self.m);
        for (i, &w) in self.leader.iter().enumerate() {
            a[(i, i)] = w;
        }
        a
    }

    /// `d_i`: total follower-to-follower incoming weight.
    pub fn degrees(&self) -> Vec<T> {
        self.incoming
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    /// `w_i = d_i + w_i0`.
    pub fn total_incoming(&self) -> Vec<T> {
        self.degrees()
            .into_iter()
            .zip(&self.leader)
            .map(|(d, &l)| d + l)
            .collect()
    }

    /// `L = I - A_m`: the operator in `e = -L x + A_0 x0`. Equal to
    /// `D_m + A_0 - A_m` whenever the balance condition holds.
    pub fn laplacian(&self) -> Matrix<T> {
        let mut l = Matrix::identity(self.m);
        for (i, row) in self.incoming.iter().enumerate() {
            for &(j, w) in row {
                l[(i, j)] -= w;
            }
        }
        l
    }

    /// `‖(L - A_0)·1‖∞ = ‖1 - (A_m + A_0)·1‖∞`.
    pub fn balance_residual(&self) -> T {
        self.total_incoming()
            .into_iter()
            .map(|w| (T::one() - w).abs())
            .fold(T::zero(), T::max)
    }

    /// `z = A_m x + A_0 x0`, written into `out`.
    pub fn consensus_into(&self, x: &[T], x0: T, out: &mut [T]) {
        for i in 0..self.m {
            let mut acc = self.leader[i] * x0;
            for &(j, w) in &self.incoming[i] {
                acc += w * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn consensus(&self, x: &[T], x0: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.m];
        self.consensus_into(x, x0, &mut out);
        out
    }

    /// Divide every incoming weight of follower `i` by `w_i`. Rows already
    /// summing to one within a few ulps are left untouched, which makes the
    /// operation idempotent.
    pub fn normalize(&self) -> Result<Self> {
        let totals = self.total_incoming();
        let tol = T::epsilon() * T::lit(8.0);
        for (i, &w) in totals.iter().enumerate() {
            if w <= T::zero() {
                return Err(Error::IsolatedFollower(i + 1));
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let w = totals[e.follower - 1];
                let weight = if (w - T::one()).abs() <= tol { e.weight } else { e.weight / w };
                Edge { weight, ..*e }
            })
            .collect();
        Ok(Self::from_sorted(self.m, edges, self.groups.clone()))
    }

    /// Drop every edge listed in the named groups. No re-normalization.
    pub fn remove_groups(&self, names: &[String]) -> Result<Self> {
        let mut drop = Vec::new();
        for name in names {
            let pairs = self
                .groups
                .get(name)
                .ok_or_else(|| Error::UnknownEdgeGroup(name.clone()))?;
            drop.extend(pairs.iter().copied());
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| !drop.contains(&(e.follower, e.source)))
            .copied()
            .collect();
        Ok(Self::from_sorted(self.m, edges, self.groups.clone()))
    }

    /// Followers reachable from the leader along information-flow edges.
    pub fn reachable_from_leader(&self) -> Vec<bool> {
        // out-neighbours of node j: followers i with an edge (i, j)
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.m + 1];
        for e in &self.edges {
            out[e.source].push(e.follower);
        }
        let mut seen = vec![false; self.m + 1];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for &f in &out[n] {
                if !seen[f] {
                    seen[f] = true;
                    queue.push_back(f);
                }
            }
        }
        seen[1..].to_vec()
    }

    pub fn check_connectivity(&self) -> Result<ConnectivityReport<T>> {
        self.check_connectivity_with(T::lit(1e-10))
    }

    pub fn check_connectivity_with(&self, tol: T) -> Result<ConnectivityReport<T>> {
        let reach = self.reachable_from_leader();
        let unreachable: Vec<usize> = reach
            .iter()
            .enumerate()
            .filter(|(_, &r)| !r)
            .map(|(i, _)| i + 1)
            .collect();
        let eigenvalues = self.laplacian().eigenvalues()?;
        let min_real = eigenvalues.iter().map(|c| c.re).fold(T::infinity(), T::min);
        let leader = self.leader_weights();
        Ok(ConnectivityReport {
            leader_reachable: unreachable.is_empty(),
            unreachable,
            has_leader_edge: leader.iter().any(|&w| w > T::zero()),
            leader_weights_in_unit_interval: leader.iter().all(|&w| w >= T::zero() && w <= T::one()),
            min_real_eigenvalue: min_real,
            positive_stable: min_real > tol,
            balance_residual: self.balance_residual(),
            eigenvalues,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityReport<T> {
    pub leader_reachable: bool,
    pub unreachable: Vec<usize>,
    pub has_leader_edge: bool,
    pub leader_weights_in_unit_interval: bool,
    /// `min Re σ(L)`.
    pub min_real_eigenvalue: T,
    pub positive_stable: bool,
    pub balance_residual: T,
    pub eigenvalues: Vec<Complex<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Star,
    Cyclic,
    #[serde(alias = "path")]
    Series,
    Arbitrary,
    Custom,
}

impl FromStr for TopologyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "star" => Ok(Self::Star),
            "cyclic" | "cycle" => Ok(Self::Cyclic),
            "series" | "path" => Ok(Self::Series),
            "arbitrary" => Ok(Self::Arbitrary),
            "custom" => Ok(Self::Custom),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Star => "star",
            Self::Cyclic => "cyclic",
            Self::Series => "path",
            Self::Arbitrary => "arbitrary",
            Self::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Declarative description of one of the benchmark topologies.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyPreset {
    pub kind: TopologyKind,
    pub m: usize,
    /// Replaces the raw leader weight before normalization: every leader
    /// edge for star/cyclic/custom, `w_10` for the path, `w_20` for the
    /// arbitrary graph.
    pub leader_weight_override: Option<f64>,
    /// Keep leader edges on the first `k` followers only.
    pub leader_access: Option<usize>,
    /// Edge groups removed after normalization.
    pub removed_edges: Vec<String>,
    /// `(follower, source, weight)` triples for `Custom`.
    pub custom_edges: Vec<(usize, usize, f64)>,
}

impl TopologyPreset {
    pub fn new(kind: TopologyKind, m: usize) -> Self {
        Self {
            kind,
            m,
            leader_weight_override: None,
            leader_access: None,
            removed_edges: Vec::new(),
            custom_edges: Vec::new(),
        }
    }

    /// Build, normalize, then apply removals.
    pub fn realize<T: Scalar>(&self) -> Result<Network<T>> {
        let net = build_preset::<T>(self)?.normalize()?;
        if self.removed_edges.is_empty() {
            Ok(net)
        } else {
            net.remove_groups(&self.removed_edges)
        }
    }
}

/// Arbitrary-graph link groups: I = 2↔4, II = 5↔7, III = 7↔8.
const ARBITRARY_GROUPS: [(&str, [(usize, usize); 2]); 3] = [
    ("I", [(2, 4), (4, 2)]),
    ("II", [(5, 7), (7, 5)]),
    ("III", [(7, 8), (8, 7)]),
];

/// `(follower, source, weight)` for the 8-agent arbitrary graph.
const ARBITRARY_WEIGHTS: [(usize, usize, f64); 15] = [
    (1, 0, 1.0),
    (2, 0, 0.75),
    (2, 4, 0.25),
    (3, 0, 1.0),
    (4, 1, 0.5),
    (4, 2, 0.5),
    (5, 2, 0.25),
    (5, 7, 0.75),
    (6, 3, 0.75),
    (6, 8, 0.25),
    (7, 5, 0.5),
    (7, 6, 0.45),
    (7, 8, 0.05),
    (8, 6, 0.5),
    (8, 7, 0.5),
];

/// Un-normalized network with the preset's raw weights.
pub fn build_preset<T: Scalar>(preset: &TopologyPreset) -> Result<Network<T>> {
    let m = preset.m;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let lw = |default: f64| preset.leader_weight_override.unwrap_or(default);
    let mut raw: Vec<(usize, usize, f64)> = Vec::new();
    match preset.kind {
        TopologyKind::Star => raw.extend((1..=m).map(|i| (i, 0, lw(1.0)))),
        TopologyKind::Cyclic => {
            for i in 1..=m {
                raw.push((i, 0, lw(0.5)));
                let prev = if i == 1 { m } else { i - 1 };
                let next = if i == m { 1 } else { i + 1 };
                let mut nbrs = vec![prev, next];
                nbrs.dedup();
                for j in nbrs {
                    if j != i {
                        raw.push((i, j, 0.25));
                    }
                }
            }
        }
        TopologyKind::Series => {
            raw.push((1, 0, lw(1.0)));
            raw.extend((2..=m).map(|i| (i, i - 1, 1.0)));
        }
        TopologyKind::Arbitrary => {
            if m != 8 {
                return Err(Error::ArbitraryRequiresEight(m));
            }
            for &(i, j, w) in &ARBITRARY_WEIGHTS {
                let w = if (i, j) == (2, 0) { lw(w) } else { w };
                raw.push((i, j, w));
            }
        }
        TopologyKind::Custom => {
            for &(i, j, w) in &preset.custom_edges {
                let w = if j == 0 { lw(w) } else { w };
                raw.push((i, j, w));
            }
        }
    }
    if let Some(k) = preset.leader_access {
        raw.retain(|&(i, j, _)| j != 0 || i <= k);
    }
    // a zero override removes the edge rather than storing a zero weight
    raw.retain(|&(_, _, w)| w != 0.0);
    let mut net = Network::new(
        m,
        raw.into_iter().map(|(follower, source, w)| Edge {
            follower,
            source,
            weight: T::lit(w),
        }),
    )?;
    if preset.kind == TopologyKind::Arbitrary {
        for (name, pairs) in ARBITRARY_GROUPS {
            net = net.with_group(name, pairs.to_vec());
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset(kind: TopologyKind, m: usize) -> TopologyPreset {
        TopologyPreset::new(kind, m)
    }

    #[test]
    fn star_is_identity_leader() {
        let net = build_preset::<f64>(&preset(TopologyKind::Star, 8)).unwrap();
        assert_eq!(net.leader_weights(), &[1.0; 8]);
        assert!(net.follower_adjacency().row_sums().iter().all(|&s| s == 0.0));
        assert_eq!(net.normalize().unwrap(), net);
    }

    #[test]
    fn arbitrary_agent_seven_weights() {
        let net = build_preset::<f64>(&preset(TopologyKind::Arbitrary, 8)).unwrap();
        assert_eq!(net.weight(7, 5), 0.5);
        assert_eq!(net.weight(7, 6), 0.45);
        assert_eq!(net.weight(7, 8), 0.05);
        assert_eq!(net.weight(7, 0), 0.0);
        assert_eq!(net.in_links(6).len(), 3);
    }

    #[test]
    fn arbitrary_requires_eight() {
        assert_eq!(
            build_preset::<f64>(&preset(TopologyKind::Arbitrary, 7)),
            Err(Error::ArbitraryRequiresEight(7))
        );
    }

    #[test]
    fn unknown_preset_name() {
        assert_eq!("wheel".parse::<TopologyKind>(), Err(Error::UnknownPreset("wheel".into())));
        assert_eq!("path".parse::<TopologyKind>(), Ok(TopologyKind::Series));
    }

    #[test]
    fn series_single_follower() {
        let net = build_preset::<f64>(&preset(TopologyKind::Series, 1)).unwrap();
        assert_eq!(net.edges().len(), 1);
        assert_eq!(net.weight(1, 0), 1.0);
        assert_eq!(net.follower_adjacency().rows(), 1);
        assert_eq!(net.follower_adjacency()[(0, 0)], 0.0);
    }

    #[test]
    fn cyclic_is_already_balanced() {
        let net = build_preset::<f64>(&preset(TopologyKind::Cyclic, 8)).unwrap();
        for w in net.total_incoming() {
            assert_eq!(w, 1.0);
        }
        assert_eq!(net.normalize().unwrap(), net);
        assert_eq!(net.weight(1, 8), 0.25);
        assert_eq!(net.weight(1, 2), 0.25);
    }

    #[test]
    fn custom_single_follower_normalizes_to_one() {
        let mut p = preset(TopologyKind::Custom, 1);
        p.custom_edges = vec![(1, 0, 4.0)];
        let net = build_preset::<f64>(&p).unwrap().normalize().unwrap();
        assert_eq!(net.weight(1, 0), 1.0);
    }

    #[test]
    fn isolated_follower_rejected() {
        let mut p = preset(TopologyKind::Custom, 2);
        p.custom_edges = vec![(1, 0, 1.0)];
        let net = build_preset::<f64>(&p).unwrap();
        assert_eq!(net.normalize(), Err(Error::IsolatedFollower(2)));
    }

    #[test]
    fn invalid_edges_rejected() {
        let bad = |f, s, w: f64| Network::<f64>::new(3, [Edge { follower: f, source: s, weight: w }]);
        assert!(matches!(bad(1, 1, 1.0), Err(Error::InvalidEdge { reason: "self-loop", .. })));
        assert!(bad(4, 0, 1.0).is_err());
        assert!(bad(1, 0, -0.5).is_err());
        assert!(bad(1, 0, f64::NAN).is_err());
    }

    #[test]
    fn star_connectivity() {
        let net = preset(TopologyKind::Star, 8).realize::<f64>().unwrap();
        let rep = net.check_connectivity().unwrap();
        assert!(rep.leader_reachable && rep.positive_stable);
        assert!((rep.min_real_eigenvalue - 1.0).abs() < 1e-14);
        assert_eq!(net.laplacian(), Matrix::identity(8));
    }

    #[test]
    fn two_followers_without_leader() {
        // L = [[1, -1], [-1, 1]] has eigenvalues {0, 2}
        let mut p = preset(TopologyKind::Custom, 2);
        p.custom_edges = vec![(1, 2, 0.3), (2, 1, 0.7)];
        let net = p.realize::<f64>().unwrap();
        let rep = net.check_connectivity().unwrap();
        assert!(!rep.leader_reachable);
        assert_eq!(rep.unreachable, vec![1, 2]);
        assert!(rep.min_real_eigenvalue.abs() < 1e-12);
        assert!(!rep.positive_stable);
        assert!(!rep.has_leader_edge);
    }

    #[test]
    fn removing_star_leader_edge() {
        let mut p = preset(TopologyKind::Star, 1);
        p.leader_weight_override = Some(0.0);
        let net = build_preset::<f64>(&p).unwrap();
        assert!(net.edges().is_empty());
        assert!(!net.check_connectivity().unwrap().leader_reachable);
    }

    #[test]
    fn link_removal_keeps_reachability_but_breaks_balance() {
        let mut p = preset(TopologyKind::Arbitrary, 8);
        p.removed_edges = vec!["I".into(), "II".into(), "III".into()];
        let net = p.realize::<f64>().unwrap();
        let rep = net.check_connectivity().unwrap();
        assert!(rep.leader_reachable);
        assert!(rep.positive_stable);
        assert!(rep.balance_residual > 0.1);
        assert_eq!(net.weight(2, 4), 0.0);
        assert_eq!(net.weight(8, 7), 0.0);
        assert_eq!(net.weight(8, 6), 0.5);
    }

    #[test]
    fn unknown_group() {
        let net = preset(TopologyKind::Arbitrary, 8).realize::<f64>().unwrap();
        assert_eq!(net.remove_groups(&["IV".into()]), Err(Error::UnknownEdgeGroup("IV".into())));
    }

    #[test]
    fn leader_access_limits_leader_edges() {
        let mut p = preset(TopologyKind::Cyclic, 8);
        p.leader_weight_override = Some(0.15);
        p.leader_access = Some(3);
        let net = p.realize::<f64>().unwrap();
        let with_leader = net.leader_weights().iter().filter(|&&w| w > 0.0).count();
        assert_eq!(with_leader, 3);
        assert!(net.balance_residual() < 1e-12);
    }

    #[test]
    fn consensus_matches_dense_product() {
        let net = preset(TopologyKind::Arbitrary, 8).realize::<f64>().unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let dense = net.follower_adjacency().mul_vec(&x);
        let z = net.consensus(&x, 0.3);
        for i in 0..8 {
            let want = dense[i] + net.leader_weights()[i] * 0.3;
            assert!((z[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn f32_network_builds() {
        let net = preset(TopologyKind::Cyclic, 5).realize::<f32>().unwrap();
        assert!(net.balance_residual() < 1e-6);
    }
}
