//! Parameter sets of the skew product and Misiurewicz parameter search.

use crate::error::{require, Error, Result};
use crate::fourier::FourierSeries;
use serde::{Deserialize, Serialize};

/// Root of `f_a^3(c_1) = f_a^2(c_1)` in `[1.5, 1.6]`: the critical value lands
/// on the fixed point `p_2` after two steps.
pub const MISIUREWICZ_2_1: f64 = 1.5436890126920764;

/// Parameters of `F(θ, x) = (dθ mod 1, a − x² + αφ(θ))` together with the
/// derived constants `β` (half-width of the trapping interval `B = [−β, β]`)
/// and `ξ₀` (half the distance of the critical orbit from 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParameterSet")]
pub struct ParameterSet {
    pub a: f64,
    pub d: u32,
    pub alpha: f64,
    pub beta: f64,
    pub xi0: f64,
    pub phi: FourierSeries,
    pub preperiod: u32,
    pub period: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameterSet {
    a: Option<f64>,
    d: Option<u32>,
    alpha: Option<f64>,
    beta: Option<f64>,
    xi0: Option<f64>,
    #[serde(default)]
    phi: FourierSeries,
    preperiod: Option<u32>,
    period: Option<u32>,
}

impl TryFrom<RawParameterSet> for ParameterSet {
    type Error = Error;

    fn try_from(r: RawParameterSet) -> Result<Self> {
        // omitted fields fall back to the default set
        let mut p = ParameterSet::derive(
            r.a.unwrap_or(MISIUREWICZ_2_1),
            r.d.unwrap_or(2),
            r.alpha.unwrap_or(1e-3),
            r.phi,
            r.preperiod.unwrap_or(2),
            r.period.unwrap_or(1),
        );
        if let Some(b) = r.beta {
            p.beta = b;
        }
        if let Some(x) = r.xi0 {
            p.xi0 = x;
        }
        p.validate_basic()?;
        Ok(p)
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::derive(MISIUREWICZ_2_1, 2, 1e-3, FourierSeries::default(), 2, 1)
    }
}

#[inline]
pub fn quadratic(a: f64, x: f64) -> f64 {
    a - x * x
}

/// The fixed point `p₁ = (−1 − √(1+4a))/2` of `x ↦ a − x²`.
pub fn repelling_fixed_point(a: f64) -> f64 {
    (-1.0 - (1.0 + 4.0 * a).sqrt()) / 2.0
}

/// `[c_1, …, c_n]` with `c_i = f^i(0)`.
pub fn critical_orbit(a: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x = 0.0;
    for _ in 0..n {
        x = quadratic(a, x);
        out.push(x);
    }
    out
}

impl ParameterSet {
    /// Builds a parameter set with `β = 0.999|p₁|` and
    /// `ξ₀ = min_{1≤i≤pre+per} |c_i| / 2`.
    pub fn derive(
        a: f64,
        d: u32,
        alpha: f64,
        phi: FourierSeries,
        preperiod: u32,
        period: u32,
    ) -> Self {
        let beta = 0.999 * repelling_fixed_point(a).abs();
        let n = (preperiod + period).max(1) as usize;
        let xi0 = critical_orbit(a, n)
            .iter()
            .map(|c| c.abs())
            .fold(f64::INFINITY, f64::min)
            / 2.0;
        Self {
            a,
            d,
            alpha,
            beta,
            xi0,
            phi,
            preperiod,
            period,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        quadratic(self.a, x)
    }

    /// `c_1, …, c_n`.
    pub fn critical_orbit(&self, n: usize) -> Vec<f64> {
        critical_orbit(self.a, n)
    }

    /// Largest α for which `F(𝕋 × B) ⊂ 𝕋 × int B` is guaranteed.
    pub fn trapping_threshold(&self) -> f64 {
        (self.beta - self.a).min(self.a - self.beta * self.beta + self.beta)
    }

    /// Checks needed by every experiment.
    pub fn validate_basic(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d < 2 {
            problems.push(format!("d must be >= 2 (got {})", self.d));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            problems.push(format!("alpha must be finite and >= 0 (got {})", self.alpha));
        }
        if !self.a.is_finite() {
            problems.push("a must be finite".into());
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            problems.push(format!("beta must be positive (got {})", self.beta));
        }
        if !(self.xi0.is_finite() && self.xi0 >= 0.0) {
            problems.push(format!("xi0 must be >= 0 (got {})", self.xi0));
        }
        if let Err(Error::InvalidParameters(p)) = self.phi.check() {
            problems.extend(p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameters(problems))
        }
    }

    /// Full set of invariants assumed by the shadowing and curve machinery.
    pub fn validate(&self) -> Result<()> {
        let mut problems = match self.validate_basic() {
            Ok(()) => Vec::new(),
            Err(Error::InvalidParameters(p)) => p,
            Err(e) => return Err(e),
        };
        if !(self.a > 1.0 && self.a < 2.0) {
            problems.push(format!("a must lie in (1,2) (got {})", self.a));
        }
        let p1 = repelling_fixed_point(self.a).abs();
        if !(self.beta > self.a && self.beta < p1) {
            problems.push(format!(
                "beta must lie in (a, |p1|) = ({}, {}) (got {})",
                self.a, p1, self.beta
            ));
        }
        if self.a - self.beta * self.beta <= -self.beta {
            problems.push("f(B) is not inside the interior of B".into());
        }
        if self.preperiod < 1 || self.period < 1 {
            problems.push("preperiod and period must be >= 1".into());
        }
        if self.xi0 <= 0.0 {
            problems.push("xi0 must be positive".into());
        }
        let n = (self.preperiod + self.period) as usize;
        for (i, c) in self.critical_orbit(n).iter().enumerate() {
            if c.abs() < 2.0 * self.xi0 * (1.0 - 1e-12) {
                problems.push(format!("|c_{}| = {} < 2 xi0", i + 1, c.abs()));
            }
        }
        if self.phi.max_abs() > 1.0 + 1e-12 {
            problems.push(format!(
                "sup|phi| bound {} exceeds 1; normalise phi",
                self.phi.max_abs()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameters(problems))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameter set serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `g(a) = f_a^{pre+per}(c_1) − f_a^{pre}(c_1)` and its derivative in `a`.
fn misiurewicz_residual(a: f64, preperiod: u32, period: u32) -> (f64, f64) {
    let (mut x, mut dx) = (0.0f64, 0.0f64);
    let (mut xp, mut dxp) = (0.0, 0.0);
    for i in 1..=(preperiod + period + 1) {
        dx = 1.0 - 2.0 * x * dx;
        x = a - x * x;
        if i == preperiod + 1 {
            xp = x;
            dxp = dx;
        }
    }
    (x - xp, dx - dxp)
}

/// Finds `a` in `[lo, hi]` with `f_a^{pre+per}(c_1) = f_a^{pre}(c_1)` by
/// bisection followed by Newton polishing.
pub fn misiurewicz_parameter(preperiod: u32, period: u32, lo: f64, hi: f64) -> Result<f64> {
    require(period >= 1, || "period must be >= 1".into())?;
    require(lo < hi && lo.is_finite() && hi.is_finite(), || {
        format!("bracket [{lo}, {hi}] must be finite with lo < hi")
    })?;
    let g = |a: f64| misiurewicz_residual(a, preperiod, period).0;
    let (mut l, mut h) = (lo, hi);
    let (gl, gh) = (g(l), g(h));
    let mut root = if gl == 0.0 {
        l
    } else if gh == 0.0 {
        h
    } else if gl.signum() == gh.signum() {
        return Err(Error::NoRootInBracket { lo, hi });
    } else {
        let mut gl = gl;
        for _ in 0..200 {
            let m = 0.5 * (l + h);
            if m <= l || m >= h {
                break;
            }
            let gm = g(m);
            if gm == 0.0 {
                l = m;
                h = m;
                break;
            }
            if gm.signum() == gl.signum() {
                l = m;
                gl = gm;
            } else {
                h = m;
            }
        }
        0.5 * (l + h)
    };
    for _ in 0..4 {
        let (r, dr) = misiurewicz_residual(root, preperiod, period);
        if r == 0.0 || dr == 0.0 {
            break;
        }
        let next = root - r / dr;
        if !(next >= lo && next <= hi) || g(next).abs() >= r.abs() {
            break;
        }
        root = next;
    }
    let orbit = critical_orbit(root, (preperiod + period + 1) as usize);
    if let Some(i) = orbit.iter().position(|c| c.abs() < 1e-9) {
        return Err(Error::DegenerateParameter(format!(
            "critical orbit returns to 0 at step {}",
            i + 1
        )));
    }
    Ok(root)
}

/// `|f^{pre+per}(c_1) − f^{pre}(c_1)|` at `a`.
pub fn misiurewicz_defect(a: f64, preperiod: u32, period: u32) -> f64 {
    misiurewicz_residual(a, preperiod, period).0.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_parameter() {
        let a = misiurewicz_parameter(1, 1, 1.9, 2.1).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_parameter() {
        let a = misiurewicz_parameter(2, 1, 1.5, 1.6).unwrap();
        assert!((a - 1.543_689_0).abs() < 1e-6);
        assert!(misiurewicz_defect(a, 2, 1) < 1e-14);
        assert!((a - MISIUREWICZ_2_1).abs() < 1e-15);
        // c_3 is the fixed point p_2 = (−1 + √(1+4a))/2
        let c = critical_orbit(a, 4);
        let p2 = (-1.0 + (1.0 + 4.0 * a).sqrt()) / 2.0;
        assert!((c[2] - p2).abs() < 1e-12);
        assert!((c[3] - p2).abs() < 1e-12);
    }

    #[test]
    fn no_root() {
        assert!(matches!(
            misiurewicz_parameter(1, 1, 1.1, 1.2),
            Err(Error::NoRootInBracket { .. })
        ));
    }

    #[test]
    fn default_set_is_valid() {
        let p = ParameterSet::default();
        p.validate().unwrap();
        assert!((p.xi0 - 0.419_643).abs() < 1e-5);
        assert!(p.trapping_threshold() > 1e-3);
        assert!(p.trapping_threshold() < 1e-2);
    }

    #[test]
    fn full_validation_rejects_out_of_range() {
        let p = ParameterSet::derive(2.0, 2, 0.0, FourierSeries::default(), 1, 1);
        assert!(p.validate().is_err());
        p.validate_basic().unwrap();
        let mut q = ParameterSet::default();
        q.phi = FourierSeries::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!(q.validate().is_err());
        assert!(q.with_alpha(-1.0).validate_basic().is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = ParameterSet::default();
        let s = p.to_json();
        let q = ParameterSet::from_json(&s).unwrap();
        assert_eq!(p, q);
        let bad = s.replacen("\"a\"", "\"bogus\": 1, \"a\"", 1);
        assert!(ParameterSet::from_json(&bad).is_err());
    }

    #[test]
    fn derived_constants_fill_in() {
        let s = r#"{"a":1.5436890126920764,"d":2,"alpha":0.001,"phi":{"sin":[1]},"preperiod":2,"period":1}"#;
        let p = ParameterSet::from_json(s).unwrap();
        assert_eq!(p, ParameterSet::default());
    }
}
