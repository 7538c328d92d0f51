//! Curves in the fibre direction, their images under F, and the admissibility
//! diagnostics.
//!
//! A curve of level n with source `(x₀, P_n(j))` is the image of the
//! horizontal segment `{x₀} × P_n(j)` under `Fⁿ`, parametrised by
//! `s ∈ [0, 1)`:
//!
//! ```text
//! X(s) = f_n((s + j)/dⁿ, x₀)
//! ```
//!
//! Samples are taken at `s_i = i/M`. Derivatives in s are exact up to
//! rounding: they come from Taylor jets pushed through the map.

use crate::analytic::ClassConstants;
use crate::error::{require, Error, Result};
use crate::jet;
use crate::params::ParameterSet;
use crate::stats::linear_fit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionElement {
    pub level: u32,
    pub index: u128,
}

pub(crate) fn pow_d(d: u32, n: u32) -> Option<u128> {
    (d as u128).checked_pow(n)
}

impl PartitionElement {
    pub fn new(level: u32, index: u128, d: u32) -> Result<Self> {
        let m = pow_d(d, level)
            .ok_or_else(|| Error::Precondition(format!("d^{level} overflows")))?;
        require(index < m, || format!("index {index} >= d^{level}"))?;
        Ok(Self { level, index })
    }

    /// Left endpoint `j/dⁿ` of the element in the original circle.
    pub fn left(&self, d: u32) -> f64 {
        self.index as f64 / pow_d(d, self.level).expect("checked") as f64
    }

    /// Base angle at step k of the point with local coordinate `s`:
    /// `(s + j mod d^{n−k}) / d^{n−k}`, as (offset, 1/d^{n−k}).
    #[inline]
    pub fn base_affine(&self, d: u32, k: u32) -> (f64, f64) {
        let m = pow_d(d, self.level - k).expect("checked");
        let mf = m as f64;
        ((self.index % m) as f64 / mf, 1.0 / mf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSource {
    pub x0: f64,
    pub element: PartitionElement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub alpha: f64,
    pub d: u32,
    pub values: Vec<f64>,
    /// `derivatives[i][j] = X^{(i+1)}(s_j)`
    pub derivatives: Vec<Vec<f64>>,
    pub source: Option<CurveSource>,
}

impl SampledCurve {
    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn level(&self) -> u32 {
        self.source.map_or(0, |s| s.element.level)
    }

    /// Horizontal segment `{x₀} × 𝕋` (level 0, no source).
    pub fn horizontal(p: &ParameterSet, x0: f64, grid_size: usize, order: usize) -> Self {
        Self {
            alpha: p.alpha,
            d: p.d,
            values: vec![x0; grid_size],
            derivatives: vec![vec![0.0; grid_size]; order],
            source: None,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wr.write_record(["theta", "x"])?;
        let m = self.grid_size() as f64;
        for (i, x) in self.values.iter().enumerate() {
            wr.write_record([(i as f64 / m).to_string(), x.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_svg(&self, title: &str) -> String {
        let m = self.grid_size();
        let stride = (m / 4096).max(1);
        let pts: Vec<(f64, f64)> = (0..m)
            .step_by(stride)
            .map(|i| (i as f64 / m as f64, self.values[i]))
            .collect();
        crate::svg::line_plot(title, "theta", "x", &[("curve", pts)])
    }
}

/// Values (and derivatives up to `order`) of `s ↦ f_n((s + j)/dⁿ, x₀)` at
/// local coordinate `s`.
pub fn evaluate_source(p: &ParameterSet, src: &CurveSource, s: f64, order: usize) -> Vec<f64> {
    let n = src.element.level;
    let l = order + 1;
    let mut x = vec![0.0; l];
    x[0] = src.x0;
    let mut phi = vec![0.0; l];
    let mut tmp = vec![0.0; l];
    for k in 0..n {
        let (off, scale) = src.element.base_affine(p.d, k);
        let theta = s * scale + off;
        if l == 1 {
            x[0] = p.a - x[0] * x[0] + p.alpha * p.phi.eval(theta);
        } else {
            p.phi.taylor(theta, scale, &mut phi);
            jet::fiber_step(&mut x, p.a, p.alpha, &phi, &mut tmp);
        }
    }
    jet::derivatives(&x)
}

fn propagate_unchecked(
    p: &ParameterSet,
    src: CurveSource,
    grid_size: usize,
    order: usize,
) -> SampledCurve {
    let m = grid_size as f64;
    let rows: Vec<Vec<f64>> = (0..grid_size)
        .into_par_iter()
        .map(|i| evaluate_source(p, &src, i as f64 / m, order))
        .collect();
    let values = rows.iter().map(|r| r[0]).collect();
    let derivatives = (1..=order)
        .map(|o| rows.iter().map(|r| r[o]).collect())
        .collect();
    SampledCurve {
        alpha: p.alpha,
        d: p.d,
        values,
        derivatives,
        source: Some(src),
    }
}

/// Image of the horizontal segment `{x₀} × P_n(j)` under `Fⁿ`, sampled on
/// `M` points with derivatives up to `order`.
pub fn propagate(
    p: &ParameterSet,
    x0: f64,
    element: PartitionElement,
    grid_size: usize,
    n0: u32,
    order: usize,
) -> Result<SampledCurve> {
    require(element.level > n0, || {
        format!("level {} must exceed n0 = {n0}", element.level)
    })?;
    require(grid_size >= 8, || "grid must have at least 8 points".into())?;
    require(x0.abs() < p.beta, || format!("x0 = {x0} outside B"))?;
    PartitionElement::new(element.level, element.index, p.d)?;
    Ok(propagate_unchecked(p, CurveSource { x0, element }, grid_size, order))
}

/// A level-`n` curve through `(s_target, 0)`: `x₀` is a root of
/// `x₀ ↦ f_n((s_target + j)/dⁿ, x₀)` found by scanning B and bisecting.
/// `pick` selects among the sign changes found.
pub fn strip_curve(
    p: &ParameterSet,
    element: PartitionElement,
    s_target: f64,
    grid_size: usize,
    n0: u32,
    order: usize,
    pick: u64,
) -> Result<SampledCurve> {
    let h = |x0: f64| {
        evaluate_source(p, &CurveSource { x0, element }, s_target, 0)[0]
    };
    let scan = 4096;
    let lo = -p.beta * (1.0 - 1e-9);
    let step = 2.0 * -lo / scan as f64;
    let mut brackets = Vec::new();
    let mut prev = (lo, h(lo));
    for i in 1..=scan {
        let x = lo + step * i as f64;
        let v = h(x);
        if prev.1 == 0.0 || prev.1.signum() != v.signum() {
            brackets.push((prev.0, x, prev.1));
        }
        prev = (x, v);
    }
    if brackets.is_empty() {
        return Err(Error::CurveNotAdmissible(
            "no x0 places the curve through 0".into(),
        ));
    }
    let (mut l, mut r, fl) = brackets[(pick % brackets.len() as u64) as usize];
    if fl != 0.0 {
        let sl = fl.signum();
        for _ in 0..200 {
            let mid = 0.5 * (l + r);
            if mid <= l || mid >= r {
                break;
            }
            if h(mid).signum() == sl {
                l = mid;
            } else {
                r = mid;
            }
        }
    }
    propagate(p, 0.5 * (l + r), element, grid_size, n0, order)
}

/// Random strip curves: random element at `level`, random target point.
pub fn random_strip_curves(
    p: &ParameterSet,
    level: u32,
    count: usize,
    grid_size: usize,
    n0: u32,
    order: usize,
    seed: u64,
) -> Result<Vec<SampledCurve>> {
    let m = pow_d(p.d, level).ok_or_else(|| Error::Precondition("level too deep".into()))?;
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        attempt += 1;
        require(attempt < 100 * count as u64 + 100, || {
            "could not build admissible strip curves".into()
        })?;
        let element = PartitionElement::new(level, rng.random_range(0..m), p.d)?;
        let s = rng.random_range(0.0..1.0);
        let pick = rng.random::<u64>();
        match strip_curve(p, element, s, grid_size, n0, order, pick) {
            Ok(c) => out.push(c),
            Err(Error::CurveNotAdmissible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Random curves: random element at `level` and random `x₀ ∈ B`.
pub fn random_curves(
    p: &ParameterSet,
    level: u32,
    count: usize,
    grid_size: usize,
    n0: u32,
    order: usize,
    seed: u64,
) -> Result<Vec<SampledCurve>> {
    let m = pow_d(p.d, level).ok_or_else(|| Error::Precondition("level too deep".into()))?;
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let element = PartitionElement::new(level, rng.random_range(0..m), p.d)?;
            let x0 = rng.random_range(-p.beta..p.beta) * (1.0 - 1e-9);
            propagate(p, x0, element, grid_size, n0, order)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HClassReport {
    pub alpha: f64,
    pub level: u32,
    pub l0: usize,
    pub mu: f64,
    #[serde(rename = "A")]
    pub a_const: f64,
    pub block: usize,
    pub max_slope: f64,
    pub slope_over_alpha: f64,
    /// `max|X'| ≤ A·α`
    pub flat: bool,
    /// `min` and `max` over the grid of `Σ_{i=1}^{l₀+1}|X^{(i)}| / α`
    pub min_sum_over_alpha: f64,
    pub max_sum_over_alpha: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// first grid point where the sandwich fails
    pub offending_theta: Option<f64>,
    /// `max|X' − (α/d)·T̂|`
    pub residual: f64,
    pub residual_over_alpha2: f64,
    /// `max|X' − FD4(X)|` on interior points
    pub fd_slope_deviation: f64,
}

impl HClassReport {
    pub fn sandwich_ok(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

/// The constructive class element of a level-n curve, evaluated at local
/// coordinate s. Anchors are refreshed every `block` steps from the orbit of
/// the left endpoint; inside a block they follow the unperturbed map.
pub fn anchored_t_hat(p: &ParameterSet, src: &CurveSource, block: usize, grid: &[f64]) -> Vec<f64> {
    let n = src.element.level as usize;
    let block = block.max(1);
    // left endpoint orbit
    let mut left = Vec::with_capacity(n + 1);
    let mut x = src.x0;
    for k in 0..n {
        left.push(x);
        let (off, _) = src.element.base_affine(p.d, k as u32);
        x = p.a - x * x + p.alpha * p.phi.eval(off);
    }
    let mut anchors = Vec::with_capacity(n);
    let mut y = 0.0;
    for (i, &xl) in left.iter().enumerate() {
        if i % block == 0 {
            y = xl;
        } else {
            y = p.f(y);
        }
        anchors.push(y);
    }
    let d = p.d as f64;
    grid.iter()
        .map(|&s| {
            let mut t = 0.0;
            for k in 1..=n {
                let (off, scale) = src.element.base_affine(p.d, (k - 1) as u32);
                let theta = s * scale + off;
                t = p.phi.eval_derivative(theta, 1)
                    + if k > 1 { -2.0 * anchors[k - 1] / d * t } else { 0.0 };
            }
            t
        })
        .collect()
}

fn fd4_slope_deviation(c: &SampledCurve) -> f64 {
    let m = c.grid_size();
    if c.derivatives.is_empty() || m < 5 {
        return f64::NAN;
    }
    let h = 1.0 / m as f64;
    let v = &c.values;
    (2..m - 2)
        .map(|i| {
            let fd = (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h);
            (fd - c.derivatives[0][i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Sandwich, flatness and `ℋ_C(α)` residual of a curve, without failing on
/// a violated sandwich.
pub fn curve_class_report(
    curve: &SampledCurve,
    p: &ParameterSet,
    constants: &ClassConstants,
    block: usize,
) -> Result<HClassReport> {
    let l0 = constants.l0;
    let alpha = curve.alpha;
    let owned;
    let c = match curve.source {
        Some(src) if curve.derivatives.len() <= l0 => {
            owned = propagate_unchecked(p, src, curve.grid_size(), l0 + 1);
            &owned
        }
        _ => curve,
    };
    let m = c.grid_size();
    let grid: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    let deriv = |i: usize, j: usize| c.derivatives.get(i).map_or(0.0, |v| v[j]);
    let max_slope = (0..m).map(|j| deriv(0, j).abs()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let (mut lower, mut upper) = (0, 0);
    let mut offending = None;
    for j in 0..m {
        let s: f64 = (0..=l0).map(|i| deriv(i, j).abs()).sum();
        lo = lo.min(s);
        hi = hi.max(s);
        let bad_lo = s < constants.mu * alpha;
        let bad_hi = s > constants.a * alpha;
        if bad_lo {
            lower += 1;
        }
        if bad_hi {
            upper += 1;
        }
        if (bad_lo || bad_hi) && offending.is_none() {
            offending = Some(grid[j]);
        }
    }
    let residual = match &c.source {
        Some(src) if alpha > 0.0 => {
            let t = anchored_t_hat(p, src, block, &grid);
            let d = p.d as f64;
            (0..m)
                .map(|j| (deriv(0, j) - alpha / d * t[j]).abs())
                .fold(0.0, f64::max)
        }
        _ => 0.0,
    };
    let over = |v: f64| if alpha > 0.0 { v / alpha } else { f64::NAN };
    Ok(HClassReport {
        alpha,
        level: c.level(),
        l0,
        mu: constants.mu,
        a_const: constants.a,
        block,
        max_slope,
        slope_over_alpha: over(max_slope),
        flat: max_slope <= constants.a * alpha,
        min_sum_over_alpha: over(lo),
        max_sum_over_alpha: over(hi),
        lower_violations: lower,
        upper_violations: upper,
        offending_theta: offending,
        residual,
        residual_over_alpha2: if alpha > 0.0 {
            residual / (alpha * alpha)
        } else {
            f64::NAN
        },
        fd_slope_deviation: fd4_slope_deviation(c),
    })
}

/// As [`curve_class_report`], failing with `CurveNotAdmissible` when the
/// sandwich is violated. At α = 0 every curve is horizontal and the report is
/// returned as is.
pub fn curve_class_diagnostic(
    curve: &SampledCurve,
    p: &ParameterSet,
    constants: &ClassConstants,
) -> Result<HClassReport> {
    let r = curve_class_report(curve, p, constants, 1)?;
    if r.alpha > 0.0 && !r.sandwich_ok() {
        return Err(Error::CurveNotAdmissible(format!(
            "derivative sandwich fails at theta = {} ({} below, {} above)",
            r.offending_theta.unwrap_or(f64::NAN),
            r.lower_violations,
            r.upper_violations
        )));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub curves: usize,
    pub grid_size: usize,
    pub eps: Vec<f64>,
    pub fractions: Vec<f64>,
    pub kappa_hat: Option<f64>,
    pub fit_r2: Option<f64>,
    /// largest ε with `fraction ≤ ε^{κ̂/2}`
    pub eps0_hat: Option<f64>,
    /// `fraction(ε_min) ≤ ε_min^{κ̂/2}`
    pub sanity_ok: bool,
}

/// Fraction of grid points with `|X(θ_i)| < α·ε`, averaged over curves.
pub fn deep_return_measure_many(curves: &[SampledCurve], eps_list: &[f64]) -> Result<DecayReport> {
    require(!curves.is_empty(), || "no curves".into())?;
    require(eps_list.iter().all(|e| *e > 0.0 && *e <= 1.0), || {
        "eps must lie in (0, 1]".into()
    })?;
    let alpha = curves[0].alpha;
    let mut eps = eps_list.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mut fractions = vec![0.0; eps.len()];
    let mut total = 0usize;
    for c in curves {
        let mut counts = vec![0usize; eps.len()];
        for v in &c.values {
            let a = v.abs();
            for (k, e) in eps.iter().enumerate() {
                if a < alpha * e {
                    counts[k] += 1;
                }
            }
        }
        if counts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::MeasurementBug(
                "deep-return count decreases with eps".into(),
            ));
        }
        for (f, n) in fractions.iter_mut().zip(&counts) {
            *f += *n as f64;
        }
        total += c.grid_size();
    }
    fractions.iter_mut().for_each(|f| *f /= total as f64);
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(&fractions)
        .filter(|(_, f)| **f > 0.0)
        .map(|(e, f)| (e.ln(), f.ln()))
        .unzip();
    let fit = linear_fit(&xs, &ys);
    let kappa_hat = fit.map(|f| f.slope);
    let (eps0_hat, sanity_ok) = match kappa_hat {
        Some(k) => {
            let ok = |e: f64, f: f64| f <= e.powf(k / 2.0);
            let eps0 = eps
                .iter()
                .zip(&fractions)
                .filter(|(e, f)| ok(**e, **f))
                .map(|(e, _)| *e)
                .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
            (eps0, ok(eps[0], fractions[0]))
        }
        None => (None, true),
    };
    Ok(DecayReport {
        curves: curves.len(),
        grid_size: curves[0].grid_size(),
        eps,
        fractions,
        kappa_hat,
        fit_r2: fit.map(|f| f.r2),
        eps0_hat,
        sanity_ok,
    })
}

pub fn deep_return_measure(curve: &SampledCurve, eps_list: &[f64]) -> Result<DecayReport> {
    deep_return_measure_many(std::slice::from_ref(curve), eps_list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ClassConstants;
    use crate::fourier::FourierSeries;

    fn consts() -> ClassConstants {
        ClassConstants {
            l0: 2,
            mu: 1e-3,
            a: 1e3,
            samples: 1000,
            seed: 0,
        }
    }

    #[test]
    fn horizontal_curve_not_admissible() {
        let p = ParameterSet::default();
        let c = SampledCurve::horizontal(&p, 0.3, 64, 3);
        assert!(matches!(
            curve_class_diagnostic(&c, &p, &consts()),
            Err(Error::CurveNotAdmissible(_))
        ));
    }

    #[test]
    fn unperturbed_curves_are_horizontal() {
        let p = ParameterSet::default().with_alpha(0.0);
        let e = PartitionElement::new(7, 37, 2).unwrap();
        let c = propagate(&p, 0.4, e, 256, 6, 3).unwrap();
        assert!(c.derivatives.iter().flatten().all(|v| *v == 0.0));
        let r = curve_class_diagnostic(&c, &p, &consts()).unwrap();
        assert_eq!(r.max_slope, 0.0);
    }

    #[test]
    fn level_must_exceed_n0() {
        let p = ParameterSet::default();
        let e = PartitionElement::new(3, 1, 2).unwrap();
        assert!(propagate(&p, 0.1, e, 64, 3, 1).is_err());
        assert!(PartitionElement::new(3, 8, 2).is_err());
    }

    #[test]
    fn jet_slope_matches_cocycle() {
        // X'(s) = H_n(τ(s)) / dⁿ, with H from the orbit cocycle
        let p = ParameterSet::default();
        let e = PartitionElement::new(8, 77, 2).unwrap();
        let src = CurveSource { x0: 0.3, element: e };
        let s = 0.375;
        let jet = evaluate_source(&p, &src, s, 2);
        let theta = (s + 77.0) / 256.0;
        let st = crate::map::iterate(&crate::map::OrbitState::new(theta, 0.3), &p, 8);
        assert!((jet[0] - st.x).abs() < 1e-13);
        assert!((jet[1] - st.h_scaled).abs() < 1e-13);
    }

    #[test]
    fn fd_cross_check() {
        let p = ParameterSet::default().with_alpha(1e-2);
        let e = PartitionElement::new(8, 5, 2).unwrap();
        let c = propagate(&p, 0.2, e, 4096, 6, 1).unwrap();
        let r = curve_class_report(&c, &p, &consts(), 1).unwrap();
        assert!(r.fd_slope_deviation < 1e-6, "{}", r.fd_slope_deviation);
    }

    #[test]
    fn residual_is_second_order() {
        let base = ParameterSet::default();
        let e = PartitionElement::new(9, 300, 2).unwrap();
        let mut ratios = Vec::new();
        for alpha in [1e-3, 1e-4] {
            let p = base.with_alpha(alpha);
            let c = propagate(&p, 0.5, e, 1024, 6, 3).unwrap();
            let r = curve_class_report(&c, &p, &consts(), 1).unwrap();
            ratios.push(r.residual_over_alpha2);
        }
        assert!(ratios[0] / ratios[1] < 4.0 && ratios[1] / ratios[0] < 4.0, "{ratios:?}");
    }

    #[test]
    fn strip_curve_passes_through_zero() {
        let p = ParameterSet::default().with_alpha(1e-2);
        let e = PartitionElement::new(7, 11, 2).unwrap();
        let c = strip_curve(&p, e, 0.5, 1024, 6, 1, 3).unwrap();
        assert!(c.values[512].abs() < 1e-12);
    }

    #[test]
    fn deep_return_on_strip_curve() {
        let p = ParameterSet::default().with_alpha(1e-2);
        let curves = random_strip_curves(&p, 7, 4, 1 << 14, 6, 0, 5).unwrap();
        let r = deep_return_measure_many(&curves, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(r.fractions.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.fractions[2] > 0.0);
        assert!(r.kappa_hat.unwrap() > 0.0);
        assert!(r.sanity_ok);
    }

    #[test]
    fn half_open_grid_and_csv() {
        let p = ParameterSet::default();
        let c = SampledCurve::horizontal(&p, 0.1, 4, 0);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "theta,x\n0,0.1\n0.25,0.1\n0.5,0.1\n0.75,0.1\n");
        let _ = FourierSeries::default();
    }
}
