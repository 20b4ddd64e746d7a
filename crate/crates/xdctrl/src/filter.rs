//! Discrete-time rational filters in negative powers of `z`, with streaming
//! state in direct-form-II-transposed layout.
//!
//! Coefficient convention: `b = [b_0, b_1, ..]`, `a = [a_0, a_1, ..]` with
//! `a_0 = 1` represent `H(z^{-1}) = (Σ b_k z^{-k}) / (Σ a_k z^{-k})`. A pure
//! delay of `d` samples is `d` leading zeros in `b`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A rational discrete transfer function with real coefficients.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscreteFilter {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl DiscreteFilter {
    /// Normalizes so that `a[0] = 1`.
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a[0] == 0.0 {
            return Err(Error::Domain(
                "denominator must have a nonzero leading coefficient".into(),
            ));
        }
        if b.is_empty() {
            return Err(Error::Domain("numerator must be non-empty".into()));
        }
        let a0 = a[0];
        Ok(Self {
            b: b.iter().map(|c| c / a0).collect(),
            a: a.iter().map(|c| c / a0).collect(),
        })
    }

    /// The identity filter.
    pub fn unity() -> Self {
        Self {
            b: vec![1.0],
            a: vec![1.0],
        }
    }

    /// Evaluates `H` at the point `z` (Horner in `z^{-1}`).
    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        let w = Complex64::new(1.0, 0.0) / z;
        let horner = |c: &[f64]| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &coeff in c.iter().rev() {
                acc = acc * w + coeff;
            }
            acc
        };
        horner(&self.b) / horner(&self.a)
    }

    /// Frequency response at angular frequency `omega` (rad/s) for sampling
    /// period `tau`.
    pub fn frequency_response(&self, omega: f64, tau: f64) -> Complex64 {
        self.evaluate(Complex64::from_polar(1.0, omega * tau))
    }

    /// Gain at `z = 1`.
    pub fn dc_gain(&self) -> f64 {
        let num: f64 = self.b.iter().sum();
        let den: f64 = self.a.iter().sum();
        num / den
    }

    /// Poles in the `z` plane, via the companion matrix of the denominator.
    pub fn poles(&self) -> Vec<Complex64> {
        polynomial_roots_desc(&self.a)
    }

    /// Zeros in the `z` plane.
    pub fn zeros(&self) -> Vec<Complex64> {
        polynomial_roots_desc(&self.b)
    }

    /// True when every pole lies strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    fn order(&self) -> usize {
        self.b.len().max(self.a.len()) - 1
    }

    /// First `len` samples of the impulse response (polynomial long division
    /// of `b` by `a`).
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut h = vec![0.0; len];
        for k in 0..len {
            let mut v = self.b.get(k).copied().unwrap_or(0.0);
            for j in 1..self.a.len().min(k + 1) {
                v -= self.a[j] * h[k - j];
            }
            h[k] = v;
        }
        h
    }
}

/// Roots of `c_0 + c_1 x + .. + c_d x^d` where the coefficients are given
/// ascending in `z^{-1}`; returns roots in the `z` plane. A coefficient list
/// `[a_0, .., a_d]` in `z^{-1}` corresponds to `a_0 z^d + .. + a_d`, so the
/// companion matrix is built on the reversed list.
fn polynomial_roots_desc(coeffs_zinv: &[f64]) -> Vec<Complex64> {
    // Strip trailing zeros (they contribute roots at z = 0 from the delay
    // padding of the numerator, which are kept) — only leading normalization
    // matters here.
    let d = coeffs_zinv.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let lead = coeffs_zinv[0];
    let mut companion = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        companion[(0, i)] = -coeffs_zinv[i + 1] / lead;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// A bank of identical [`DiscreteFilter`]s applied channel-wise to complex
/// signals, with one direct-form-II-transposed state column per channel.
#[derive(Debug, Clone)]
pub struct FilterBank {
    b: Vec<f64>,
    a: Vec<f64>,
    state: DMatrix<Complex64>, // order × channels
}

impl FilterBank {
    pub fn new(filter: &DiscreteFilter, channels: usize) -> Self {
        Self {
            b: filter.b.clone(),
            a: filter.a.clone(),
            state: DMatrix::zeros(filter.order(), channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.state.ncols()
    }

    pub fn reset(&mut self) {
        self.state.fill(Complex64::new(0.0, 0.0));
    }

    /// Advances every channel by one sample.
    pub fn step(&mut self, input: &DVector<Complex64>, output: &mut DVector<Complex64>) {
        debug_assert_eq!(input.len(), self.channels());
        debug_assert_eq!(output.len(), self.channels());
        let ord = self.state.nrows();
        for ch in 0..self.channels() {
            let x = input[ch];
            let y = self.b[0] * x
                + if ord > 0 {
                    self.state[(0, ch)]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            for i in 0..ord {
                let next = if i + 1 < ord {
                    self.state[(i + 1, ch)]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let bi = self.b.get(i + 1).copied().unwrap_or(0.0);
                let ai = self.a.get(i + 1).copied().unwrap_or(0.0);
                self.state[(i, ch)] = next + bi * x - ai * y;
            }
            output[ch] = y;
        }
    }
}
