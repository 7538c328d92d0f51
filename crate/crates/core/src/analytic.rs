//! The function class `𝒯_φ` and its non-degeneracy constants.
//!
//! An element is
//!
//! ```text
//! T(θ) = φ'((θ + k₁)/d) + Σ_{n=1}^{N_T} a_n·φ'((θ + k_{n+1})/d^{n+1})
//! ```
//!
//! with `k₁ ∈ {0..d−1}`, `k_{n+1} ∈ {0..d^{n+1}−1}` and
//! `|a_n| ≤ C₁(R₁/d)ⁿ`. The class constants `(l₀, μ, A)` bound
//! `Σ_{i≤l} |T^{(i)}|` from below and above uniformly over the class.

use crate::error::{require, Error, Result};
use crate::fourier::FourierSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TRUNCATION: usize = 40;
/// Largest `l₀` tried before declaring the class degenerate.
pub const MAX_L0: usize = 12;
/// `min Σ_{i≤l}|T^{(i)}|` must exceed this fraction of its mean.
pub const CLASS_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TPhiElement {
    pub d: u32,
    pub k_seq: Vec<u128>,
    pub a_seq: Vec<f64>,
    pub c1: f64,
    pub r1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TPhiValue {
    pub value: f64,
    /// bound on the truncated tail
    pub error_budget: f64,
}

fn pow_u128(d: u32, n: usize) -> Option<u128> {
    let mut m: u128 = 1;
    for _ in 0..n {
        m = m.checked_mul(d as u128)?;
    }
    Some(m)
}

impl TPhiElement {
    pub fn new(d: u32, k_seq: Vec<u128>, a_seq: Vec<f64>, c1: f64, r1: f64) -> Result<Self> {
        require(d >= 2, || "d must be >= 2".into())?;
        require(c1 > 0.0 && r1 > 0.0 && r1 < d as f64, || {
            format!("need C1 > 0 and 0 < R1 < d (got {c1}, {r1})")
        })?;
        require(k_seq.len() == a_seq.len() + 1, || {
            "k_seq must have one more entry than a_seq".into()
        })?;
        for (i, &k) in k_seq.iter().enumerate() {
            let m = pow_u128(d, i + 1).ok_or_else(|| {
                Error::Precondition(format!("d^{} overflows; reduce truncation", i + 1))
            })?;
            require(k < m, || format!("k_{} = {k} out of range", i + 1))?;
        }
        let q = r1 / d as f64;
        for (n, &a) in a_seq.iter().enumerate() {
            let bound = c1 * q.powi(n as i32 + 1);
            require(a.abs() <= bound * (1.0 + 1e-12), || {
                format!("|a_{}| = {} exceeds {bound}", n + 1, a.abs())
            })?;
        }
        Ok(Self {
            d,
            k_seq,
            a_seq,
            c1,
            r1,
        })
    }

    pub fn truncation(&self) -> usize {
        self.a_seq.len()
    }

    /// Random element: k's uniform, `a_n` uniform in `±C₁(R₁/d)ⁿ`.
    pub fn sample<R: Rng>(d: u32, trunc: usize, c1: f64, r1: f64, rng: &mut R) -> Result<Self> {
        let mut k_seq = Vec::with_capacity(trunc + 1);
        for i in 0..=trunc {
            let m = pow_u128(d, i + 1).ok_or_else(|| {
                Error::Precondition(format!("d^{} overflows; reduce truncation", i + 1))
            })?;
            k_seq.push(rng.random_range(0..m));
        }
        let q = r1 / d as f64;
        let a_seq = (1..=trunc)
            .map(|n| {
                let b = c1 * q.powi(n as i32);
                rng.random_range(-b..=b)
            })
            .collect();
        Self::new(d, k_seq, a_seq, c1, r1)
    }

    /// `(θ + k_{n+1}) / d^{n+1}` for term n (n = 0 is the leading term).
    #[inline]
    fn argument(&self, theta: f64, n: usize) -> (f64, f64) {
        let den = pow_u128(self.d, n + 1).expect("checked at construction");
        let denf = den as f64;
        (theta / denf + self.k_seq[n] as f64 / denf, denf)
    }

    /// `T^{(order)}(θ)` with the tail bound of the omitted terms.
    pub fn eval(&self, phi: &FourierSeries, theta: f64, order: u32) -> TPhiValue {
        let (u, den) = self.argument(theta, 0);
        let mut v = phi.eval_derivative(u, 1 + order) * den.powi(-(order as i32));
        for (n, a) in self.a_seq.iter().enumerate() {
            let (u, den) = self.argument(theta, n + 1);
            v += a * phi.eval_derivative(u, 1 + order) * den.powi(-(order as i32));
        }
        let q = self.r1 / self.d as f64;
        let t = self.truncation() as i32;
        let dd = self.d as f64;
        let error_budget = self.c1 * phi.derivative_bound(1 + order) * q.powi(t + 1)
            / (1.0 - q)
            * dd.powi(-(t + 2) * order as i32);
        TPhiValue {
            value: v,
            error_budget,
        }
    }

    /// `[T(θ), T'(θ), …, T^{(max)}(θ)]`.
    pub fn derivatives(&self, phi: &FourierSeries, theta: f64, max: usize) -> Vec<f64> {
        let mut out = vec![0.0; max + 1];
        let mut buf = vec![0.0; max + 2];
        let mut add = |u: f64, den: f64, w: f64, out: &mut [f64]| {
            phi.taylor(u, 1.0, &mut buf);
            let mut fact = 1.0;
            let mut scale = 1.0;
            for i in 0..=max {
                // buf[1+i] = φ^{(1+i)}(u)/(1+i)!
                fact *= (i + 1) as f64;
                out[i] += w * buf[1 + i] * fact * scale;
                scale /= den;
            }
        };
        let (u, den) = self.argument(theta, 0);
        add(u, den, 1.0, &mut out);
        for n in 0..self.a_seq.len() {
            let (u, den) = self.argument(theta, n + 1);
            add(u, den, self.a_seq[n], &mut out);
        }
        out
    }
}

pub fn tphi_eval(t: &TPhiElement, phi: &FourierSeries, theta: f64, order: u32) -> TPhiValue {
    t.eval(phi, theta, order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConstants {
    pub l0: usize,
    pub mu: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassOptions {
    pub samples: usize,
    pub grid_points: usize,
    pub trunc: usize,
    pub seed: u64,
}

impl Default for ClassOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            grid_points: 10_001,
            trunc: DEFAULT_TRUNCATION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub constants: ClassConstants,
    pub c1: f64,
    pub r1: f64,
    pub trunc: usize,
    pub grid_points: usize,
    /// `min` over samples and grid of `Σ_{i≤l₀}|T^{(i)}|`
    pub min_lower_sum: f64,
    /// `max` over samples and grid of `Σ_{i≤l₀+1}|T^{(i)}|`
    pub max_upper_sum: f64,
    /// `min` over samples of `sup_θ|T|`
    pub min_sup_t: f64,
    /// `min/mean` of `Σ_{i≤l}|T^{(i)}|` for `l = 0..=MAX_L0`
    pub margin_by_l: Vec<f64>,
    pub sup_exceeds_two_mu: bool,
}

/// Grid `θ_j = j/(G−1)`, `j = 0..G`, covering the closed interval [0, 1].
fn class_grid(g: usize) -> impl Iterator<Item = f64> + Clone {
    (0..g).map(move |j| j as f64 / (g - 1) as f64)
}

/// Per sample: (min s_l, max s_l, sum s_l) for l = 0..=MAX_L0+1, and sup|T|.
fn sample_sums(t: &TPhiElement, phi: &FourierSeries, g: usize) -> (Vec<[f64; 3]>, f64) {
    let mut acc = vec![[f64::INFINITY, 0.0, 0.0]; MAX_L0 + 2];
    let mut sup_t = 0.0f64;
    for theta in class_grid(g) {
        let ders = t.derivatives(phi, theta, MAX_L0 + 1);
        sup_t = sup_t.max(ders[0].abs());
        let mut s = 0.0;
        for (l, v) in ders.iter().enumerate() {
            s += v.abs();
            let e = &mut acc[l];
            e[0] = e[0].min(s);
            e[1] = e[1].max(s);
            e[2] += s;
        }
    }
    (acc, sup_t)
}

/// Monte-Carlo estimate of `(l₀, μ, A)` over random class elements.
pub fn estimate_class_constants(
    phi: &FourierSeries,
    d: u32,
    c1: f64,
    r1: f64,
    opts: ClassOptions,
) -> Result<ClassReport> {
    require(opts.samples >= 1000, || "need at least 1000 samples".into())?;
    require(opts.grid_points >= 2, || "need at least two grid points".into())?;
    phi.check()?;
    let elements: Vec<TPhiElement> = (0..opts.samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            TPhiElement::sample(d, opts.trunc, c1, r1, &mut rng)
        })
        .collect::<Result<_>>()?;
    let per_sample: Vec<(Vec<[f64; 3]>, f64)> = elements
        .par_iter()
        .map(|t| sample_sums(t, phi, opts.grid_points))
        .collect();
    let levels = MAX_L0 + 2;
    let mut mins = vec![f64::INFINITY; levels];
    let mut maxs = vec![0.0f64; levels];
    let mut sums = vec![0.0f64; levels];
    let mut min_sup_t = f64::INFINITY;
    for (acc, sup_t) in &per_sample {
        for l in 0..levels {
            mins[l] = mins[l].min(acc[l][0]);
            maxs[l] = maxs[l].max(acc[l][1]);
            sums[l] += acc[l][2];
        }
        min_sup_t = min_sup_t.min(*sup_t);
    }
    let count = (opts.samples * opts.grid_points) as f64;
    let margin_by_l: Vec<f64> = (0..=MAX_L0)
        .map(|l| mins[l] / (sums[l] / count))
        .collect();
    let l0 = (1..=MAX_L0)
        .find(|&l| margin_by_l[l] >= CLASS_MARGIN)
        .ok_or_else(|| {
            Error::ClassDegenerate(format!(
                "no l <= {MAX_L0} keeps the derivative sums away from 0"
            ))
        })?;
    let dd = d as f64;
    let mu = mins[l0] / (2.0 * dd);
    let a = 2.0 / dd * maxs[l0 + 1];
    Ok(ClassReport {
        constants: ClassConstants {
            l0,
            mu,
            a,
            samples: opts.samples,
            seed: opts.seed,
        },
        c1,
        r1,
        trunc: opts.trunc,
        grid_points: opts.grid_points,
        min_lower_sum: mins[l0],
        max_upper_sum: maxs[l0 + 1],
        min_sup_t,
        margin_by_l,
        sup_exceeds_two_mu: min_sup_t >= 2.0 * mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn sin() -> FourierSeries {
        FourierSeries::sin_mode(1)
    }

    #[test]
    fn leading_term_only() {
        // a_n = 0, k_1 = 0, d = 2: T(θ) = 2π cos(πθ)
        let t = TPhiElement::new(2, vec![0, 0], vec![0.0], 1.0, 1.5).unwrap();
        for theta in [0.0, 0.2, 0.5, 0.9] {
            let v = t.eval(&sin(), theta, 0).value;
            assert!((v - TAU * (PI * theta).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_honesty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (c1, r1) = (3.0, 1.4);
        let long = TPhiElement::sample(2, 80, c1, r1, &mut rng).unwrap();
        let short = TPhiElement {
            k_seq: long.k_seq[..41].to_vec(),
            a_seq: long.a_seq[..40].to_vec(),
            ..long.clone()
        };
        for theta in [0.1, 0.45, 0.8] {
            for order in 0..3 {
                let a = short.eval(&sin(), theta, order);
                let b = long.eval(&sin(), theta, order);
                assert!((a.value - b.value).abs() <= a.error_budget);
            }
        }
    }

    #[test]
    fn derivative_vector_matches_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = TPhiElement::sample(3, 20, 2.0, 1.5, &mut rng).unwrap();
        let phi = FourierSeries {
            cos: vec![0.0, 0.2],
            sin: vec![0.5, 0.0, 0.3],
        };
        let v = t.derivatives(&phi, 0.37, 4);
        for (i, x) in v.iter().enumerate() {
            let e = t.eval(&phi, 0.37, i as u32).value;
            assert!((x - e).abs() <= 1e-9 * (1.0 + e.abs()), "order {i}: {x} vs {e}");
        }
    }

    #[test]
    fn coefficient_bound_enforced() {
        assert!(TPhiElement::new(2, vec![0, 0], vec![2.0], 1.0, 1.5).is_err());
        assert!(TPhiElement::new(2, vec![2, 0], vec![0.1], 1.0, 1.5).is_err());
    }

    #[test]
    fn class_constants_for_sine() {
        let opts = ClassOptions {
            samples: 1000,
            grid_points: 201,
            trunc: 20,
            seed: 1,
        };
        let r = estimate_class_constants(&sin(), 2, 2.0, 1.3, opts).unwrap();
        let c = &r.constants;
        assert!(c.l0 >= 1 && c.mu > 0.0 && c.a > 0.0);
        // sandwich on the samples themselves
        assert!(2.0 * 2.0 * c.mu <= r.min_lower_sum * (1.0 + 1e-12));
        assert!(r.max_upper_sum <= c.a * 2.0 / 2.0 * (1.0 + 1e-12));
        assert!(r.sup_exceeds_two_mu);
        let json = serde_json::to_value(c).unwrap();
        assert!(json.get("A").is_some() && json.get("l0").is_some());
    }

    #[test]
    fn rejects_constant_phi() {
        let phi = FourierSeries {
            cos: vec![1.0],
            sin: vec![],
        };
        assert!(estimate_class_constants(&phi, 2, 1.0, 1.2, ClassOptions::default()).is_err());
    }
}
