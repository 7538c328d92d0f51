//! Shadowing of the critical orbit by perturbed orbits.
//!
//! Starting from `I₁ = [c₁ − 2α, c₁ + 2α]`, the chain `I_{n+1} = f(I_n) ± α`
//! contains every perturbed orbit that starts within √α of the critical
//! point. `N(α)` is the largest n with `|I_n| < ξ₀` and `Σ_{i≤n}|I_i| ≤ ξ₀`;
//! along such a chain derivatives are comparable to the critical orbit's
//! up to a factor e.

use crate::digits::DigitStream;
use crate::error::{require, Error, Result};
use crate::kahan::CompensatedSum;
use crate::map::Orbit;
use crate::params::ParameterSet;
use crate::stats::linear_fit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

const MAX_CHAIN: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalChain {
    pub alpha: f64,
    pub xi0: f64,
    /// `I_1, …, I_{N+1}` as `(left, right)`
    pub intervals: Vec<(f64, f64)>,
    /// `c_1, …, c_{N+1}`
    pub c_seq: Vec<f64>,
    pub n_alpha: usize,
}

impl IntervalChain {
    pub fn width(&self, n: usize) -> f64 {
        let (l, r) = self.intervals[n - 1];
        r - l
    }

    /// `s(α) = |(f^N)'(c₁)|·α`.
    pub fn s_alpha(&self) -> f64 {
        (self.log_critical_derivative(self.n_alpha) + self.alpha.ln()).exp()
    }

    /// `log|(f^n)'(c₁)| = Σ_{i=1}^{n} log|2c_i|`.
    pub fn log_critical_derivative(&self, n: usize) -> f64 {
        self.c_seq[..n]
            .iter()
            .map(|c| (2.0 * c).abs().ln())
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["n", "left", "right", "c_n", "width"])?;
        for (i, (&(l, r), c)) in self.intervals.iter().zip(&self.c_seq).enumerate() {
            wr.write_record([
                (i + 1).to_string(),
                l.to_string(),
                r.to_string(),
                c.to_string(),
                (r - l).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Image of `[l, r]` under `x ↦ a − x²` when 0 ∉ [l, r].
fn image(a: f64, (l, r): (f64, f64)) -> (f64, f64) {
    let (fl, fr) = (a - l * l, a - r * r);
    (fl.min(fr), fl.max(fr))
}

pub fn build_chain(p: &ParameterSet) -> Result<IntervalChain> {
    let alpha = p.alpha;
    require(alpha > 0.0 && alpha <= p.xi0, || {
        format!("need 0 < alpha <= xi0 (alpha = {alpha}, xi0 = {})", p.xi0)
    })?;
    let c1 = p.a;
    let mut intervals = vec![(c1 - 2.0 * alpha, c1 + 2.0 * alpha)];
    let mut c_seq = vec![c1];
    let mut total = 0.0;
    let mut n_alpha = 0;
    loop {
        let n = intervals.len();
        let cur = intervals[n - 1];
        if cur.0 <= 0.0 && cur.1 >= 0.0 {
            return Err(Error::ChainDegenerate { n });
        }
        let w = cur.1 - cur.0;
        if !(w < p.xi0 && total + w <= p.xi0) || n > MAX_CHAIN {
            break;
        }
        total += w;
        n_alpha = n;
        let (l, r) = image(p.a, cur);
        intervals.push((l - alpha, r + alpha));
        c_seq.push(p.f(c_seq[n - 1]));
    }
    Ok(IntervalChain {
        alpha,
        xi0: p.xi0,
        intervals,
        c_seq,
        n_alpha,
    })
}

/// `Π_{i=m}^{n−1} |f'(x_i)| / |(f^{n−m})'(c_m)|` for `x_i ∈ I_i`.
pub fn distortion_ratio(chain: &IntervalChain, m: usize, xs: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    for (j, x) in xs.iter().enumerate() {
        let c = chain.c_seq[m - 1 + j];
        s.add((x / c).abs().ln());
    }
    s.value().exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub trials: usize,
    pub seed: u64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Random `1 ≤ m < n ≤ N+1` and points `x_i ∈ I_i`; every ratio must lie in
/// `[1/e, e]`.
pub fn check_distortion(chain: &IntervalChain, trials: usize, seed: u64) -> Result<DistortionReport> {
    require(chain.n_alpha >= 1, || "chain has N(alpha) = 0".into())?;
    let top = chain.n_alpha + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut xs = Vec::with_capacity(top);
    for _ in 0..trials {
        let m = rng.random_range(1..top);
        let n = rng.random_range(m + 1..=top);
        xs.clear();
        for i in m..n {
            let (l, r) = chain.intervals[i - 1];
            xs.push(rng.random_range(l..=r));
        }
        let ratio = distortion_ratio(chain, m, &xs);
        let e = std::f64::consts::E;
        if !(ratio > 1.0 / e && ratio < e) {
            return Err(Error::DistortionViolated { ratio, m, n });
        }
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(DistortionReport {
        trials,
        seed,
        min_ratio: lo,
        max_ratio: hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub alpha: f64,
    pub n_alpha: usize,
    pub s_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub entries: Vec<ScalingEntry>,
    /// `min(min s, 1/max s)`
    pub c0: f64,
    /// slope, intercept and r² of N(α) against log(1/α)
    pub fit_slope: Option<f64>,
    pub fit_intercept: Option<f64>,
    pub fit_r2: Option<f64>,
    /// `(1/N) log|(f^N)'(c₁)|` at the smallest α
    pub chi_crit: f64,
    /// `1/chi_crit`, the slope predicted for N(α) against log(1/α)
    pub predicted_slope: f64,
}

pub fn n_alpha_scaling(p: &ParameterSet, alphas: &[f64]) -> Result<ScalingReport> {
    require(!alphas.is_empty(), || "no alpha values".into())?;
    let mut entries = Vec::with_capacity(alphas.len());
    let mut chains = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let chain = build_chain(&p.with_alpha(alpha))?;
        entries.push(ScalingEntry {
            alpha,
            n_alpha: chain.n_alpha,
            s_alpha: chain.s_alpha(),
        });
        chains.push(chain);
    }
    let smin = entries.iter().map(|e| e.s_alpha).fold(f64::INFINITY, f64::min);
    let smax = entries.iter().map(|e| e.s_alpha).fold(0.0, f64::max);
    let c0 = smin.min(1.0 / smax);
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::ScalingBroken(format!("s(alpha) range [{smin}, {smax}]")));
    }
    let mut sorted = entries.clone();
    sorted.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
    if sorted.len() >= 3 {
        let inc = sorted.windows(2).all(|w| w[1].s_alpha > w[0].s_alpha);
        let dec = sorted.windows(2).all(|w| w[1].s_alpha < w[0].s_alpha);
        let la: Vec<f64> = sorted.iter().map(|e| e.alpha.ln()).collect();
        let ls: Vec<f64> = sorted.iter().map(|e| e.s_alpha.ln()).collect();
        if let Some(f) = linear_fit(&la, &ls) {
            if (inc || dec) && f.slope.abs() > 0.5 {
                return Err(Error::ScalingBroken(format!(
                    "s(alpha) drifts monotonically like alpha^{:.3}",
                    f.slope
                )));
            }
        }
    }
    let xs: Vec<f64> = entries.iter().map(|e| -e.alpha.ln()).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.n_alpha as f64).collect();
    let fit = linear_fit(&xs, &ys);
    let (idx, _) = entries
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.alpha.total_cmp(&b.1.alpha))
        .expect("non-empty");
    let chain = &chains[idx];
    let chi_crit = if chain.n_alpha > 0 {
        chain.log_critical_derivative(chain.n_alpha) / chain.n_alpha as f64
    } else {
        f64::NAN
    };
    Ok(ScalingReport {
        entries,
        c0,
        fit_slope: fit.map(|f| f.slope),
        fit_intercept: fit.map(|f| f.intercept),
        fit_r2: fit.map(|f| f.r2),
        chi_crit,
        predicted_slope: 1.0 / chi_crit,
    })
}

/// `|V_n|` along the orbit of `(θ, x)` with an exact base orbit.
pub fn vertical_derivative_along(p: &ParameterSet, theta: f64, x: f64, n: usize) -> f64 {
    let mut orbit = Orbit::new(
        DigitStream::from_theta(p.d, theta, crate::digits::Tail::Zeros),
        x,
    );
    for _ in 0..n {
        orbit.advance(p);
    }
    orbit.state.log_abs_v().exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub samples: usize,
    pub seed: u64,
    pub n_alpha: usize,
    pub c0_scaling: f64,
    pub bound: f64,
    /// `min α·|V_N(F(θ, x))|` over the samples
    pub min_ratio: f64,
}

/// For `|x| < √α`, the derivative accumulated over the N(α) steps after the
/// first iterate is at least `C₀/(e·α)`.
pub fn expansion_after_return(p: &ParameterSet, samples: usize, seed: u64) -> Result<ExpansionReport> {
    require(samples >= 1, || "need samples".into())?;
    let chain = build_chain(p)?;
    let c0 = n_alpha_scaling(p, &[p.alpha])?.c0;
    let bound = c0 / std::f64::consts::E;
    let n = chain.n_alpha;
    let r = p.alpha.sqrt();
    let mut min_ratio = f64::INFINITY;
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x = rng.random_range(-r..r);
        let mut orbit = Orbit::new(DigitStream::random(p.d, seed, i as u64), x);
        orbit.advance(p);
        let start = orbit.state.log_abs_v();
        for _ in 0..n {
            orbit.advance(p);
        }
        let ratio = (orbit.state.log_abs_v() - start + p.alpha.ln()).exp();
        if ratio < bound {
            return Err(Error::ExpansionViolated { ratio, bound });
        }
        min_ratio = min_ratio.min(ratio);
    }
    Ok(ExpansionReport {
        samples,
        seed,
        n_alpha: n,
        c0_scaling: c0,
        bound,
        min_ratio,
    })
}
