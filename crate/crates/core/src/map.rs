//! Orbits of the skew product and the derivative cocycle.
//!
//! Along an orbit `(θ_n, x_n) = F^n(θ, x)` the fibre derivatives satisfy
//!
//! ```text
//! V_{n+1} = f'(x_n)·V_n,                 V_0 = 1
//! H_{n+1} = f'(x_n)·H_n + α·dⁿ·φ'(θ_n),   H_0 = 0
//! ```
//!
//! with `V_n = ∂f_n/∂x` and `H_n = ∂f_n/∂θ`. `V_n` is kept as a mantissa and a
//! binary exponent so it stays finite over millions of steps; `H_n` is kept
//! divided by `dⁿ`.

use crate::digits::DigitStream;
use crate::error::{require, Error, Result};
use crate::kahan::CompensatedSum;
use crate::params::ParameterSet;
use crate::stats::linear_fit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `mant · 2^exp`, renormalised by exact powers of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledReal {
    pub mant: f64,
    pub exp: i64,
}

const RENORM_HI: f64 = 1.157_920_892_373_162e77; // 2^256
const RENORM_LO: f64 = 8.636_168_555_094_445e-78; // 2^-256

impl ScaledReal {
    pub const ONE: Self = Self { mant: 1.0, exp: 0 };

    #[inline]
    pub fn mul(&mut self, f: f64) {
        self.mant *= f;
        let m = self.mant.abs();
        if !(RENORM_LO..=RENORM_HI).contains(&m) && m != 0.0 && m.is_finite() {
            let e = ((self.mant.to_bits() >> 52) & 0x7ff) as i64 - 1023;
            self.mant *= f64::from_bits(((1023 - e) as u64) << 52);
            self.exp += e;
        }
    }

    pub fn ln_abs(&self) -> f64 {
        self.mant.abs().ln() + self.exp as f64 * std::f64::consts::LN_2
    }

    /// Plain value; overflows to ±∞ or underflows to 0 when out of range.
    pub fn to_f64(&self) -> f64 {
        if self.exp > 4096 {
            return self.mant * f64::INFINITY;
        }
        if self.exp < -4096 {
            return self.mant * 0.0;
        }
        let half = self.exp / 2;
        self.mant * 2f64.powi(half as i32) * 2f64.powi((self.exp - half) as i32)
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitState {
    pub theta: f64,
    pub x: f64,
    pub step: u64,
    pub v: ScaledReal,
    /// `H_n / dⁿ`
    pub h_scaled: f64,
    pub log_v: CompensatedSum,
    /// First step at which `x` was exactly 0.
    pub critical_step: Option<u64>,
}

impl OrbitState {
    pub fn new(theta: f64, x: f64) -> Self {
        Self {
            theta,
            x,
            step: 0,
            v: ScaledReal::ONE,
            h_scaled: 0.0,
            log_v: CompensatedSum::new(),
            critical_step: None,
        }
    }

    /// `V_n`, possibly ±∞ for long orbits.
    pub fn v(&self) -> f64 {
        self.v.to_f64()
    }

    /// `log|V_n|` from the compensated sum of `log|f'(x_i)|`.
    pub fn log_abs_v(&self) -> f64 {
        self.log_v.value()
    }

    /// `H_n`, possibly ±∞ for long orbits.
    pub fn h(&self, d: u32) -> f64 {
        self.h_scaled * (d as f64).powi(self.step.min(i32::MAX as u64) as i32)
    }

    pub fn critical_hit(&self) -> bool {
        self.critical_step.is_some()
    }

    /// One step of the fibre and cocycle; the caller supplies the next base
    /// angle.
    #[inline]
    pub fn advance(&mut self, p: &ParameterSet, next_theta: f64) {
        let fp = -2.0 * self.x;
        if fp == 0.0 && self.critical_step.is_none() {
            self.critical_step = Some(self.step);
        }
        let phi = if p.alpha != 0.0 {
            p.phi.eval(self.theta)
        } else {
            0.0
        };
        let dphi = p.phi.eval_derivative(self.theta, 1);
        self.h_scaled = (fp * self.h_scaled + p.alpha * dphi) / p.d as f64;
        self.v.mul(fp);
        self.log_v.add(fp.abs().ln());
        self.x = p.a - self.x * self.x + p.alpha * phi;
        self.theta = next_theta;
        self.step += 1;
    }
}

/// `dθ mod 1` in floating point.
#[inline]
pub fn base_step(theta: f64, d: u32) -> f64 {
    let t = (d as f64 * theta).fract();
    if !(0.0..1.0).contains(&t) {
        0.0
    } else {
        t
    }
}

/// One application of F with the floating base map.
pub fn step(state: &OrbitState, p: &ParameterSet) -> OrbitState {
    let mut s = state.clone();
    let next = base_step(s.theta, p.d);
    s.advance(p, next);
    s
}

pub fn iterate(state: &OrbitState, p: &ParameterSet, n: u64) -> OrbitState {
    let mut s = state.clone();
    for _ in 0..n {
        let next = base_step(s.theta, p.d);
        s.advance(p, next);
    }
    s
}

/// An orbit whose base angle is driven by an exact digit stream.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub state: OrbitState,
    pub base: DigitStream,
}

impl Orbit {
    pub fn new(base: DigitStream, x: f64) -> Self {
        Self {
            state: OrbitState::new(base.theta(), x),
            base,
        }
    }

    #[inline]
    pub fn advance(&mut self, p: &ParameterSet) {
        self.base.advance();
        let t = self.base.theta();
        self.state.advance(p, t);
    }
}

/// `G_n(θ, x) = Σ_{k=1}^n (f^{n−k})'(f^k x) / d^{n−k} · φ'(g^{k−1}θ)` along the
/// unperturbed orbit of `x` and the floating base orbit of θ.
pub fn g_n_series(p: &ParameterSet, theta: f64, x: f64, n: usize) -> f64 {
    let mut xs = Vec::with_capacity(n + 1);
    let mut thetas = Vec::with_capacity(n);
    let (mut xi, mut t) = (x, theta);
    for _ in 0..n {
        xs.push(xi);
        thetas.push(t);
        xi = p.f(xi);
        t = base_step(t, p.d);
    }
    xs.push(xi);
    let mut acc = CompensatedSum::new();
    let mut prod = 1.0;
    for k in (1..=n).rev() {
        acc.add(prod * p.phi.eval_derivative(thetas[k - 1], 1));
        prod *= -2.0 * xs[k - 1] / p.d as f64;
    }
    acc.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub samples: usize,
    pub k_max: usize,
    pub seed: u64,
    /// `max over samples of |V_k|^{1/k}` for `k = 1..=k_max`
    pub max_rate: Vec<f64>,
    /// fitted tail rate
    pub r1: f64,
    /// least constant with `|V_k| ≤ C₁R₁^k` on the samples
    pub c1: f64,
    /// least n with `R₁ⁿ ≤ dⁿ/6`
    pub n0: u32,
}

/// Samples `(θ, x)` uniformly in `𝕋 × B` and fits `|V_k| ≤ C₁R₁^k`.
pub fn verify_domination(
    p: &ParameterSet,
    samples: usize,
    k_max: usize,
    seed: u64,
) -> Result<DominationReport> {
    require(p.d >= 2, || "d must be >= 2".into())?;
    require(samples >= 1 && k_max >= 4, || {
        "need at least one sample and k_max >= 4".into()
    })?;
    let logs: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = rng.random_range(-p.beta..p.beta);
            let base = DigitStream::random(p.d, seed ^ 0x5eed_d16e, i as u64);
            let mut orbit = Orbit::new(base, x);
            (0..k_max)
                .map(|_| {
                    orbit.advance(p);
                    orbit.state.log_abs_v()
                })
                .collect()
        })
        .collect();
    let m: Vec<f64> = (0..k_max)
        .map(|k| {
            logs.iter()
                .map(|l| l[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let max_rate: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(k, v)| (v / (k + 1) as f64).exp())
        .collect();
    let tail: Vec<usize> = (k_max / 2..k_max).collect();
    let ks: Vec<f64> = tail.iter().map(|&k| (k + 1) as f64).collect();
    let ms: Vec<f64> = tail.iter().map(|&k| m[k]).collect();
    let fit = linear_fit(&ks, &ms).ok_or_else(|| Error::MeasurementBug("tail fit".into()))?;
    let r1 = fit.slope.exp();
    let c1 = m
        .iter()
        .enumerate()
        .map(|(k, v)| (v - (k + 1) as f64 * fit.slope).exp())
        .fold(0.0, f64::max);
    if !r1.is_finite() || r1 >= 2.0 {
        return Err(Error::DominationViolated { r1, c1 });
    }
    let d = p.d as f64;
    let mut n0 = 1u32;
    while (r1 / d).powi(n0 as i32) > 1.0 / 6.0 {
        n0 += 1;
    }
    Ok(DominationReport {
        samples,
        k_max,
        seed,
        max_rate,
        r1,
        c1,
        n0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierSeries;
    use proptest::prelude::*;

    fn params() -> ParameterSet {
        ParameterSet::default()
    }

    #[test]
    fn single_step_example() {
        let p = ParameterSet::derive(1.5, 2, 0.0, FourierSeries::default(), 2, 1);
        let s = step(&OrbitState::new(0.25, 0.0), &p);
        assert_eq!(s.theta, 0.5);
        assert_eq!(s.x, 1.5);
        assert_eq!(s.v(), 0.0);
        assert_eq!(s.critical_step, Some(0));
    }

    #[test]
    fn theta_wraps_to_zero() {
        let p = params();
        let s = step(&OrbitState::new(0.5, 0.3), &p);
        assert_eq!(s.theta, 0.0);
    }

    #[test]
    fn scaled_real_survives_long_products() {
        let mut v = ScaledReal::ONE;
        for _ in 0..10_000 {
            v.mul(3.0);
        }
        assert!((v.ln_abs() - 10_000.0 * 3f64.ln()).abs() < 1e-9);
        assert!(v.to_f64().is_infinite());
        for _ in 0..10_000 {
            v.mul(1.0 / 3.0);
        }
        assert!((v.to_f64() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unperturbed_h_is_zero_and_v_matches_product() {
        let p = params().with_alpha(0.0);
        let s = iterate(&OrbitState::new(0.1, 0.3), &p, 5);
        assert_eq!(s.h_scaled, 0.0);
        let mut x = 0.3;
        let mut prod = 1.0;
        for _ in 0..5 {
            prod *= -2.0 * x;
            x = p.f(x);
        }
        assert!((s.v() - prod).abs() <= 1e-14 * prod.abs());
    }

    #[test]
    fn long_orbit_log_consistency() {
        let p = params();
        let mut orbit = Orbit::new(DigitStream::random(2, 1, 0), 0.37);
        for _ in 0..1_000_000 {
            orbit.advance(&p);
        }
        let s = &orbit.state;
        assert!((s.v.ln_abs() - s.log_abs_v()).abs() < 1e-10 * (1.0 + s.log_abs_v().abs()));
        assert!(s.x.abs() < p.beta);
    }

    #[test]
    fn g_series_limit() {
        let p = params();
        let (theta, x, n) = (0.3, 0.2, 8);
        let g = g_n_series(&p, theta, x, n);
        let mut prev = f64::INFINITY;
        for alpha in [1e-3, 1e-4, 1e-5] {
            let q = p.with_alpha(alpha);
            let s = iterate(&OrbitState::new(theta, x), &q, n as u64);
            let diff = (s.h(q.d) / (alpha * (q.d as f64).powi(n as i32 - 1)) - g).abs();
            assert!(diff < prev);
            prev = diff;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn domination_default() {
        let r = verify_domination(&params(), 200, 40, 3).unwrap();
        assert!(r.r1 > 1.0 && r.r1 < 2.0);
        assert!(r.c1.is_finite() && r.c1 >= 1.0);
        assert!((r.r1 / 2.0).powi(r.n0 as i32) <= 1.0 / 6.0);
    }

    #[test]
    fn domination_chebyshev_bound() {
        // a = 2, α = 0: |V_k| ≤ 4^k on [−2, 2]
        let p = ParameterSet::derive(2.0, 2, 0.0, FourierSeries::default(), 1, 1);
        match verify_domination(&p, 200, 30, 1) {
            Ok(r) => {
                assert!(r.c1.is_finite());
                assert!(r.max_rate.iter().all(|&m| m <= 4.0 + 1e-9));
            }
            Err(Error::DominationViolated { c1, r1 }) => {
                assert!(c1.is_finite());
                assert!(r1 <= 4.0 + 1e-9);
            }
            Err(e) => panic!("{e}"),
        }
    }

    proptest! {
        #[test]
        fn base_map_exact_on_dyadics(k in 0u64..(1 << 40), n in 0u64..=40) {
            let theta = k as f64 / (1u64 << 40) as f64;
            let p = params();
            let s = iterate(&OrbitState::new(theta, 0.1), &p, n);
            let expect = ((k << n) & ((1u64 << 40) - 1)) as f64 / (1u64 << 40) as f64;
            prop_assert_eq!(s.theta, expect);
        }

        #[test]
        fn chain_rule(theta in 0.0f64..1.0, x in -1.8f64..1.8, m in 0u64..300, n in 0u64..300) {
            let p = params();
            let s0 = OrbitState::new(theta, x);
            let sm = iterate(&s0, &p, m);
            let tail = iterate(&OrbitState::new(sm.theta, sm.x), &p, n);
            let full = iterate(&s0, &p, m + n);
            let lhs = full.v.ln_abs();
            let rhs = tail.v.ln_abs() + sm.v.ln_abs();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            prop_assert_eq!(full.v.mant.signum(), tail.v.mant.signum() * sm.v.mant.signum());
        }

        #[test]
        fn trapping(theta in 0.0f64..1.0, x in -1.83f64..1.83) {
            let p = params();
            let mut s = OrbitState::new(theta, x);
            for _ in 0..2000 {
                s = step(&s, &p);
                prop_assert!(s.x.abs() < p.beta);
            }
        }
    }
}
