//! Real trigonometric polynomials on the circle.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// `φ(θ) = Σ_{n≥0} cos[n]·cos(2πnθ) + Σ_{n≥1} sin[n-1]·sin(2πnθ)`.
///
/// `cos` is indexed from frequency 0, `sin` from frequency 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl Default for FourierSeries {
    fn default() -> Self {
        Self::sin_mode(1)
    }
}

#[inline]
fn reduce(theta: f64) -> f64 {
    let t = theta - theta.floor();
    if t >= 1.0 {
        0.0
    } else {
        t
    }
}

impl FourierSeries {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        let s = Self { cos, sin };
        s.check()?;
        Ok(s)
    }

    /// `sin(2πnθ)`.
    pub fn sin_mode(n: usize) -> Self {
        assert!(n >= 1);
        let mut sin = vec![0.0; n];
        sin[n - 1] = 1.0;
        Self {
            cos: Vec::new(),
            sin,
        }
    }

    /// Rejects non-finite coefficients and constant series.
    pub fn check(&self) -> Result<()> {
        if self.cos.iter().chain(&self.sin).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameters(vec![
                "phi coefficients must be finite".into(),
            ]));
        }
        if self.is_constant() {
            return Err(Error::InvalidParameters(vec!["phi is constant".into()]));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().skip(1).all(|&c| c == 0.0) && self.sin.iter().all(|&c| c == 0.0)
    }

    /// Highest frequency with a nonzero coefficient.
    pub fn degree(&self) -> usize {
        let dc = self.cos.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        let ds = self.sin.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
        dc.max(ds)
    }

    /// ℓ¹ norm of the coefficients, an upper bound for `sup|φ|`.
    pub fn max_abs(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }

    /// Upper bound for `sup|φ^{(k)}|`.
    pub fn derivative_bound(&self, k: u32) -> f64 {
        let mut s = 0.0;
        for (n, c) in self.cos.iter().enumerate() {
            if n > 0 || k == 0 {
                s += c.abs() * (TAU * n as f64).powi(k as i32);
            }
        }
        for (i, c) in self.sin.iter().enumerate() {
            s += c.abs() * (TAU * (i + 1) as f64).powi(k as i32);
        }
        s
    }

    /// Rescaled copy with `max_abs ≤ 1`.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs();
        if m <= 1.0 {
            return self.clone();
        }
        Self {
            cos: self.cos.iter().map(|c| c / m).collect(),
            sin: self.sin.iter().map(|c| c / m).collect(),
        }
    }

    /// Complex coefficient `c_m` of `e^{2πimθ}` (m ≥ 0) as (re, im).
    pub fn complex_coefficient(&self, m: usize) -> (f64, f64) {
        let a = self.cos.get(m).copied().unwrap_or(0.0);
        if m == 0 {
            return (a, 0.0);
        }
        let b = self.sin.get(m - 1).copied().unwrap_or(0.0);
        (a / 2.0, -b / 2.0)
    }

    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        self.eval_derivative(theta, 0)
    }

    /// `φ^{(k)}(θ)`. The argument is reduced mod 1 first, and each harmonic
    /// is evaluated at `2π·frac(nθ)`.
    pub fn eval_derivative(&self, theta: f64, k: u32) -> f64 {
        let t = reduce(theta);
        let mut s = 0.0;
        let quarter = (k % 4) as usize;
        let nmax = self.cos.len().max(self.sin.len() + 1);
        for n in 0..nmax {
            let a = self.cos.get(n).copied().unwrap_or(0.0);
            let b = if n >= 1 {
                self.sin.get(n - 1).copied().unwrap_or(0.0)
            } else {
                0.0
            };
            if a == 0.0 && b == 0.0 {
                continue;
            }
            if n == 0 {
                if k == 0 {
                    s += a;
                }
                continue;
            }
            let w = TAU * n as f64;
            let (sn, cs) = (TAU * reduce(n as f64 * t)).sin_cos();
            // d^k/dθ^k of (cos, sin) rotates by k quarter turns
            let (dc, ds) = match quarter {
                0 => (cs, sn),
                1 => (-sn, cs),
                2 => (-cs, -sn),
                _ => (sn, -cs),
            };
            s += w.powi(k as i32) * (a * dc + b * ds);
        }
        s
    }

    /// Normalised Taylor coefficients of `t ↦ φ(θ + t·scale)`:
    /// `out[i] = φ^{(i)}(θ)·scale^i / i!` for `i = 0..out.len()`.
    pub fn taylor(&self, theta: f64, scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let t = reduce(theta);
        let nmax = self.cos.len().max(self.sin.len() + 1);
        for n in 0..nmax {
            let a = self.cos.get(n).copied().unwrap_or(0.0);
            let b = if n >= 1 {
                self.sin.get(n - 1).copied().unwrap_or(0.0)
            } else {
                0.0
            };
            if a == 0.0 && b == 0.0 {
                continue;
            }
            if n == 0 {
                out[0] += a;
                continue;
            }
            let w = TAU * n as f64 * scale;
            let (sn, cs) = (TAU * reduce(n as f64 * t)).sin_cos();
            let mut f = 1.0;
            for (i, slot) in out.iter_mut().enumerate() {
                if i > 0 {
                    f *= w / i as f64;
                }
                let (dc, ds) = match i % 4 {
                    0 => (cs, sn),
                    1 => (-sn, cs),
                    2 => (-cs, -sn),
                    _ => (sn, -cs),
                };
                *slot += f * (a * dc + b * ds);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sin_mode_values() {
        let p = FourierSeries::sin_mode(1);
        assert_eq!(p.eval(0.0), 0.0);
        assert!((p.eval(0.25) - 1.0).abs() < 1e-15);
        assert!((p.eval_derivative(0.0, 1) - TAU).abs() < 1e-12);
        assert!((p.eval_derivative(0.25, 2) + TAU * TAU).abs() < 1e-10);
    }

    #[test]
    fn complex_coefficients() {
        let p = FourierSeries {
            cos: vec![0.5, 0.2],
            sin: vec![0.4],
        };
        assert_eq!(p.complex_coefficient(0), (0.5, 0.0));
        assert_eq!(p.complex_coefficient(1), (0.1, -0.2));
        assert_eq!(p.complex_coefficient(2), (0.0, 0.0));
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn constant_rejected() {
        assert!(FourierSeries::new(vec![0.3], vec![0.0]).is_err());
        assert!(FourierSeries::new(vec![0.3], vec![1.0]).is_ok());
    }

    #[test]
    fn normalization() {
        let p = FourierSeries {
            cos: vec![0.0, 1.0],
            sin: vec![1.0],
        };
        let q = p.normalized();
        assert!((q.max_abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let p: FourierSeries = serde_json::from_str(r#"{"cos":[0,0.5],"sin":[1]}"#).unwrap();
        assert_eq!(p.sin, vec![1.0]);
        assert!(serde_json::from_str::<FourierSeries>(r#"{"cos":[],"tan":[1]}"#).is_err());
    }

    proptest! {
        #[test]
        fn periodic_bit_exact(k in 0u64..(1u64 << 52)) {
            // θ and θ+1 are both exact, so reduction restores θ bit for bit
            let theta = k as f64 / (1u64 << 52) as f64;
            let p = FourierSeries { cos: vec![0.1, 0.3, 0.0, -0.2], sin: vec![0.5, 0.0, 0.25] };
            for order in 0..3 {
                prop_assert_eq!(
                    p.eval_derivative(theta, order).to_bits(),
                    p.eval_derivative(theta + 1.0, order).to_bits()
                );
            }
        }

        #[test]
        fn taylor_matches_derivatives(theta in 0.0f64..1.0, scale in 0.01f64..1.0) {
            let p = FourierSeries { cos: vec![0.1, 0.3], sin: vec![0.5, 0.0, 0.25] };
            let mut out = [0.0; 5];
            p.taylor(theta, scale, &mut out);
            let mut fact = 1.0;
            for (i, v) in out.iter().enumerate() {
                if i > 0 { fact *= i as f64; }
                let expect = p.eval_derivative(theta, i as u32) * scale.powi(i as i32) / fact;
                prop_assert!((v - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn bounded_by_l1(theta in 0.0f64..1.0) {
            let p = FourierSeries { cos: vec![0.1, 0.3], sin: vec![0.5, 0.0, 0.25] };
            prop_assert!(p.eval(theta).abs() <= p.max_abs() + 1e-15);
            prop_assert!(p.eval_derivative(theta, 1).abs() <= p.derivative_bound(1) * (1.0 + 1e-14));
        }
    }
}
