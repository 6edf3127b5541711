//! Leader trajectory and disturbance profiles as pure functions of time.

use crate::scalar::Scalar;

/// `a·sin(ωt) + b·cos(ωt)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid<T> {
    pub sin_amp: T,
    pub cos_amp: T,
    pub omega: T,
}

impl<T: Scalar> Sinusoid<T> {
    pub fn new(sin_amp: T, cos_amp: T, omega: T) -> Self {
        Self { sin_amp, cos_amp, omega }
    }

    /// Value and first two time derivatives.
    fn eval3(&self, t: T) -> (T, T, T) {
        let (s, c) = (self.omega * t).sin_cos();
        let w = self.omega;
        let x = self.sin_amp * s + self.cos_amp * c;
        let dx = w * (self.sin_amp * c - self.cos_amp * s);
        (x, dx, -w * w * x)
    }

    fn value(&self, t: T) -> T {
        let (s, c) = (self.omega * t).sin_cos();
        self.sin_amp * s + self.cos_amp * c
    }

    fn bound(&self) -> T {
        self.sin_amp.abs() + self.cos_amp.abs()
    }
}

/// Leader position with exact velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSample<T> {
    pub x: T,
    pub v: T,
    pub a: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeaderSignal<T> {
    /// `sin t + 0.75 cos 2t`
    TwoTone,
    Constant(T),
    Zero,
    Custom(Vec<Sinusoid<T>>),
}

impl<T: Scalar> LeaderSignal<T> {
    pub fn eval(&self, t: T) -> LeaderSample<T> {
        let zero = T::zero();
        match self {
            Self::Zero => LeaderSample::default(),
            Self::Constant(c) => LeaderSample { x: *c, v: zero, a: zero },
            Self::TwoTone => {
                let (s1, c1) = t.sin_cos();
                let (s2, c2) = (t + t).sin_cos();
                let k = T::lit(0.75);
                LeaderSample {
                    x: s1 + k * c2,
                    v: c1 - T::lit(1.5) * s2,
                    a: -s1 - T::lit(3.0) * c2,
                }
            }
            Self::Custom(terms) => terms.iter().fold(LeaderSample::default(), |acc, term| {
                let (x, v, a) = term.eval3(t);
                LeaderSample { x: acc.x + x, v: acc.v + v, a: acc.a + a }
            }),
        }
    }
}

impl<T: Scalar> Default for LeaderSample<T> {
    fn default() -> Self {
        Self { x: T::zero(), v: T::zero(), a: T::zero() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind<T> {
    None,
    /// `0.25`
    D1,
    /// `0.45 sin 2t`
    D2,
    /// `0.7 sin 2t + 0.3 cos 3t`
    D3,
    Custom { constant: T, terms: Vec<Sinusoid<T>> },
}

/// Common disturbance `δ(t)` scaled per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceProfile<T> {
    pub kind: DisturbanceKind<T>,
    /// Per-agent multiplier; `None` means all ones.
    pub scaling: Option<Vec<T>>,
}

impl<T: Scalar> DisturbanceProfile<T> {
    pub fn new(kind: DisturbanceKind<T>) -> Self {
        Self { kind, scaling: None }
    }

    pub fn none() -> Self {
        Self::new(DisturbanceKind::None)
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, DisturbanceKind::None)
    }

    /// Unscaled scalar profile value.
    pub fn base(&self, t: T) -> T {
        match &self.kind {
            DisturbanceKind::None => T::zero(),
            DisturbanceKind::D1 => T::lit(0.25),
            DisturbanceKind::D2 => T::lit(0.45) * (t + t).sin(),
            DisturbanceKind::D3 => {
                T::lit(0.7) * (t + t).sin() + T::lit(0.3) * (T::lit(3.0) * t).cos()
            }
            DisturbanceKind::Custom { constant, terms } => {
                terms.iter().fold(*constant, |acc, s| acc + s.value(t))
            }
        }
    }

    /// Upper bound on `|base(t)|` for all `t`.
    pub fn bound(&self) -> T {
        match &self.kind {
            DisturbanceKind::None => T::zero(),
            DisturbanceKind::D1 => T::lit(0.25),
            DisturbanceKind::D2 => T::lit(0.45),
            DisturbanceKind::D3 => T::lit(1.0),
            DisturbanceKind::Custom { constant, terms } => {
                terms.iter().fold(constant.abs(), |acc, s| acc + s.bound())
            }
        }
    }

    pub fn eval_into(&self, t: T, out: &mut [T]) {
        let base = self.base(t);
        match &self.scaling {
            None => out.iter_mut().for_each(|d| *d = base),
            Some(k) => out.iter_mut().zip(k).for_each(|(d, &k)| *d = base * k),
        }
    }

    pub fn eval(&self, t: T, m: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m];
        self.eval_into(t, &mut out);
        out
    }
}
