//! Heterogeneous second-order followers `J ẍ + B ẋ = u + δ`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// True (unknown to the controller) diagonal inertia and damping.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams<T> {
    j: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> PlantParams<T> {
    pub fn new(j: Vec<T>, b: Vec<T>) -> Result<Self> {
        if j.len() != b.len() {
            return Err(Error::DimensionMismatch { what: "plant damping", expected: j.len(), got: b.len() });
        }
        if j.is_empty() {
            return Err(Error::InvalidParameter("plant needs at least one follower".into()));
        }
        if j.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("plant parameters"));
        }
        if let Some(i) = j.iter().position(|&v| v <= T::zero()) {
            return Err(Error::InvalidParameter(format!("inertia J_{} must be positive", i + 1)));
        }
        Ok(Self { j, b })
    }

    /// `J_i = 0.5 + 0.1 i`, `b_i = -1.3 - 0.1 i` for `i = 1..=m`.
    pub fn baseline(m: usize) -> Self {
        let idx = |i: usize| T::from_usize(i + 1).unwrap();
        Self {
            j: (0..m).map(|i| T::lit(0.5) + T::lit(0.1) * idx(i)).collect(),
            b: (0..m).map(|i| T::lit(-1.3) - T::lit(0.1) * idx(i)).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.j.len()
    }

    pub fn inertia(&self) -> &[T] {
        &self.j
    }

    pub fn damping(&self) -> &[T] {
        &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState<T> {
    pub x: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> PlantState<T> {
    pub fn zeros(m: usize) -> Self {
        Self { x: vec![T::zero(); m], v: vec![T::zero(); m] }
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }
}

/// Accelerations `(u + δ - B∘v) / J`, written into `out`. No validation.
#[inline]
pub(crate) fn accel_into<T: Scalar>(p: &PlantParams<T>, v: &[T], u: &[T], delta: &[T], out: &mut [T]) {
    for i in 0..out.len() {
        out[i] = (u[i] + delta[i] - p.b[i] * v[i]) / p.j[i];
    }
}

/// Plant vector field: returns `(ẋ, v̇)`.
pub fn plant_deriv<T: Scalar>(
    p: &PlantParams<T>,
    s: &PlantState<T>,
    u: &[T],
    delta: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let m = p.m();
    for (what, len) in [("position", s.x.len()), ("velocity", s.v.len()), ("input", u.len()), ("disturbance", delta.len())] {
        if len != m {
            return Err(Error::DimensionMismatch { what, expected: m, got: len });
        }
    }
    if s.x.iter().chain(&s.v).chain(u).chain(delta).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("plant_deriv"));
    }
    let mut acc = vec![T::zero(); m];
    accel_into(p, &s.v, u, delta, &mut acc);
    Ok((s.v.clone(), acc))
}
