//! Real polynomials in `s` and rational frequency responses.

use num_complex::Complex;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Polynomial with real coefficients stored in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T>(Vec<T>);

impl<T: Scalar> Poly<T> {
    pub fn new(ascending: Vec<T>) -> Self {
        let mut p = Self(ascending);
        p.trim();
        p
    }

    /// `s + a`
    pub fn monic_linear(a: T) -> Self {
        Self::new(vec![a, T::one()])
    }

    pub fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    fn trim(&mut self) {
        while self.0.len() > 1 && *self.0.last().unwrap() == T::zero() {
            self.0.pop();
        }
        if self.0.is_empty() {
            self.0.push(T::zero());
        }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.0.iter().map(|&c| c * k).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![T::zero(); self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.0.len().max(other.0.len());
        let get = |p: &Self, i: usize| p.0.get(i).copied().unwrap_or_else(T::zero);
        Self::new((0..n).map(|i| get(self, i) + get(other, i)).collect())
    }

    /// Horner evaluation at a complex point.
    pub fn eval(&self, s: Complex<T>) -> Complex<T> {
        self.0
            .iter()
            .rev()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc * s + c)
    }

    /// Roots from the eigenvalues of the companion matrix.
    pub fn roots(&self) -> Result<Vec<Complex<T>>> {
        let n = self.degree();
        if n == 0 {
            return Ok(Vec::new());
        }
        let lead = self.0[n];
        let mut c = Matrix::zeros(n, n);
        for j in 0..n {
            c[(0, j)] = -self.0[n - 1 - j] / lead;
        }
        for i in 1..n {
            c[(i, i - 1)] = T::one();
        }
        c.eigenvalues()
    }

    /// Largest real part among the roots; `-inf` for a constant.
    pub fn max_root_real_part(&self) -> Result<T> {
        Ok(self
            .roots()?
            .iter()
            .map(|r| r.re)
            .fold(T::neg_infinity(), T::max))
    }
}

/// Ratio of two polynomials evaluated on the imaginary axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational<T> {
    pub num: Poly<T>,
    pub den: Poly<T>,
}

impl<T: Scalar> Rational<T> {
    pub fn new(num: Poly<T>, den: Poly<T>) -> Self {
        Self { num, den }
    }

    pub fn relative_degree(&self) -> isize {
        self.den.degree() as isize - self.num.degree() as isize
    }

    pub fn at_jw(&self, omega: T) -> Complex<T> {
        let s = Complex::new(T::zero(), omega);
        self.num.eval(s) / self.den.eval(s)
    }
}

/// Log-spaced angular frequency grid in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T>(Vec<T>);

impl<T: Scalar> FrequencyGrid<T> {
    pub fn log_spaced(lo: T, hi: T, n: usize) -> Self {
        if n == 0 {
            return Self(Vec::new());
        }
        if n == 1 {
            return Self(vec![lo]);
        }
        let (a, b) = (lo.log10(), hi.log10());
        let step = (b - a) / T::from_usize(n - 1).unwrap();
        Self(
            (0..n)
                .map(|k| T::lit(10.0).powf(a + step * T::from_usize(k).unwrap()))
                .collect(),
        )
    }

    /// 400 points over [1e-3, 1e3] rad/s.
    pub fn standard() -> Self {
        Self::log_spaced(T::lit(1e-3), T::lit(1e3), 400)
    }

    pub fn from_points(points: Vec<T>) -> Self {
        Self(points)
    }

    pub fn points(&self) -> &[T] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Minimum of `Re W(jω)` over the grid and the frequency where it occurs.
pub fn min_real_part<T: Scalar>(w: &Rational<T>, grid: &FrequencyGrid<T>) -> (T, T) {
    grid.points()
        .iter()
        .map(|&om| (w.at_jw(om).re, om))
        .fold((T::infinity(), T::nan()), |best, cur| if cur.0 < best.0 { cur } else { best })
}
