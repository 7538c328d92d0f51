//! Returns of admissible curves to the critical region and the statistics
//! built on them.
//!
//! For a point θ of an admissible curve `X`, write `f_n(θ)` for the fibre
//! coordinate of its n-th image. Time `n` is a return time of θ when some θ'
//! in the same level-n partition element as θ has `|f_n(θ')| ≤ α^0.6`; the
//! return times are `0 = n_0 < n_1 < …`. Along the orbit
//!
//! ```text
//! ∂̂f_n(θ) = Π_{i<n} max(2|f_i(θ)|, 2α)
//! ```
//!
//! is the truncated derivative, and each return gets a depth code `q̂` with
//! `d^{−q̂}α ≤ |f_{n_k}| < d^{−q̂+1}α`.
//!
//! Grid points carry pseudo-random digits below grid resolution, so their
//! base orbits never terminate. An element's return decision is shared by all
//! its grid points: it uses their minimum `|f_n|` and, when that minimum is
//! above `α^0.6` by less than a slope bound, exact evaluations of the
//! element's image curve at probe points.

use crate::curves::SampledCurve;
use crate::digits::{integer_digits, rational_digits, DigitStream, RandomDigits, Tail};
use crate::error::{require, Error, Result};
use crate::fourier::FourierSeries;
use crate::kahan::CompensatedSum;
use crate::map::Orbit;
use crate::params::ParameterSet;
use crate::shadowing::build_chain;
use crate::stats::{linear_fit, mean, quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnOptions {
    pub n_max: usize,
    /// probe points per ambiguous element
    pub probes: usize,
    /// multiplier on the tracked slope bound
    pub slope_safety: f64,
    /// seed of the sub-grid digits
    pub seed: u64,
    /// fewest grid points per element for curves without a source
    pub min_points: usize,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        Self {
            n_max: 100,
            probes: 32,
            slope_safety: 1.5,
            seed: 0,
            min_points: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnEntry {
    pub k: usize,
    pub n_k: usize,
    /// `|f_{n_k}(θ)|`
    pub depth: f64,
    pub q_hat: i64,
    /// `log ∂̂f_{n_k}(θ)`
    pub log_trunc: f64,
    /// `log|∂_x f_{n_k}(θ)|`
    pub log_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub theta_index: usize,
    pub returns: Vec<ReturnEntry>,
    pub horizon: usize,
    pub log_trunc_final: f64,
    pub log_v_final: f64,
    /// the orbit hit x = 0 exactly
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSet {
    pub alpha: f64,
    pub d: u32,
    pub grid_size: usize,
    /// `grid_size = d^grid_digits`
    pub grid_digits: u32,
    pub records: Vec<ReturnRecord>,
    pub probe_evaluations: usize,
}

/// `q̂` with `d^{−q̂}α ≤ depth < d^{−q̂+1}α`; `i64::MAX` at depth 0.
pub fn q_hat(depth: f64, alpha: f64, d: u32) -> i64 {
    if depth == 0.0 {
        return i64::MAX;
    }
    let df = d as f64;
    let mut q = ((alpha / depth).ln() / df.ln()).ceil() as i64;
    let lo = |q: i64| alpha * df.powi(-(q as i32));
    while depth < lo(q) {
        q += 1;
    }
    while depth >= lo(q - 1) {
        q -= 1;
    }
    q
}

/// Depth code with shallow returns zeroed: `q = 0` when `d^{−(q̂−1)} ≥ ε₁`.
pub fn q_code(q_hat: i64, eps1: f64, d: u32) -> i64 {
    if q_hat == i64::MAX {
        return q_hat;
    }
    if q_hat <= 1 || (d as f64).powi((1 - q_hat) as i32) >= eps1 {
        0
    } else {
        q_hat
    }
}

fn grid_digit_count(grid: usize, d: u32) -> Option<u32> {
    let mut m = 1usize;
    let mut k = 0;
    while m < grid {
        m = m.checked_mul(d as usize)?;
        k += 1;
    }
    (m == grid).then_some(k)
}

struct Tracker {
    x: f64,
    base: DigitStream,
    log_trunc: CompensatedSum,
    log_v: CompensatedSum,
    w: f64,
    critical: bool,
    returns: Vec<ReturnEntry>,
}

impl Tracker {
    #[inline]
    fn advance(&mut self, p: &ParameterSet) {
        let ax = 2.0 * self.x.abs();
        self.log_trunc.add(ax.max(2.0 * p.alpha).ln());
        self.log_v.add(ax.ln());
        if ax == 0.0 {
            self.critical = true;
        }
        self.w = 1.0 + ax / p.d as f64 * self.w;
        let theta = self.base.theta();
        self.x = p.a - self.x * self.x + p.alpha * p.phi.eval(theta);
        self.base.advance();
    }

    fn push(&mut self, n: usize, p: &ParameterSet) {
        let depth = self.x.abs();
        self.returns.push(ReturnEntry {
            k: self.returns.len(),
            n_k: n,
            depth,
            q_hat: q_hat(depth, p.alpha, p.d),
            log_trunc: self.log_trunc.value(),
            log_v: self.log_v.value(),
        });
    }
}

/// Fibre value after running the digit string from `x0`.
fn fiber_value(p: &ParameterSet, digits: Vec<u32>, x0: f64, steps: usize) -> f64 {
    let mut base = DigitStream::new(p.d, digits, Tail::Zeros);
    let mut x = x0;
    for _ in 0..steps {
        x = p.a - x * x + p.alpha * p.phi.eval(base.theta());
        base.advance();
    }
    x
}

/// Detects return times for every grid point of an admissible curve.
pub fn detect_returns(curve: &SampledCurve, p: &ParameterSet, opts: &ReturnOptions) -> Result<ReturnSet> {
    let d = p.d;
    let grid = curve.grid_size();
    let m = grid_digit_count(grid, d).ok_or_else(|| {
        Error::Precondition(format!("grid size {grid} must be a power of d = {d}"))
    })?;
    require(opts.probes >= 1 && opts.slope_safety >= 1.0, || {
        "need at least one probe and slope_safety >= 1".into()
    })?;
    let threshold = p.alpha.powf(0.6);
    let sup_dphi = p.phi.derivative_bound(1);
    let src = curve.source;
    if src.is_none() {
        let mut reliable = m as usize;
        let mut size = 1usize;
        while size < opts.min_points && reliable > 0 {
            size *= d as usize;
            reliable -= 1;
        }
        if opts.n_max > reliable {
            return Err(Error::ResolutionExhausted { reliable_n: reliable });
        }
    }
    let level = src.map_or(0, |s| s.element.level as usize);
    let elem_digits = src.map_or(Vec::new(), |s| {
        integer_digits(s.element.index, d, level)
    });

    let mut trackers: Vec<Tracker> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let mut prefix = elem_digits.clone();
            prefix.extend(integer_digits(i as u128, d, m as usize));
            let tail = Tail::Random(RandomDigits::new(opts.seed, i as u64));
            let base = DigitStream::new(d, prefix, tail);
            let mut t = Tracker {
                x: src.map_or(curve.values[i], |s| s.x0),
                base,
                log_trunc: CompensatedSum::new(),
                log_v: CompensatedSum::new(),
                w: 0.0,
                critical: false,
                returns: Vec::new(),
            };
            for _ in 0..level {
                t.advance(p);
            }
            t.log_trunc = CompensatedSum::new();
            t.log_v = CompensatedSum::new();
            t.critical = false;
            t.push(0, p);
            t
        })
        .collect();

    let local_digits = |i: usize, n: usize| -> Vec<u32> {
        let mut v = integer_digits(i as u128, d, m as usize);
        if n <= m as usize {
            v.truncate(n);
        } else {
            v.extend(RandomDigits::new(opts.seed, i as u64).take(d, n - m as usize));
        }
        v
    };
    let probe_hits = |rep: usize, n: usize| -> bool {
        let s = src.expect("probes need a source");
        let mut base = elem_digits.clone();
        base.extend(local_digits(rep, n));
        (0..opts.probes).any(|k| {
            let mut digits = base.clone();
            digits.extend(rational_digits(
                2 * k as u128 + 1,
                2 * opts.probes as u128,
                d,
                80,
            ));
            fiber_value(p, digits, s.x0, level + n).abs() <= threshold
        })
    };

    let mut probe_evaluations = 0usize;
    for n in 1..=opts.n_max {
        trackers.par_iter_mut().for_each(|t| t.advance(p));
        let group = if n <= m as usize {
            (d as usize).pow(m - n as u32)
        } else {
            1
        };
        let decisions: Vec<(bool, usize)> = trackers
            .par_chunks(group)
            .enumerate()
            .map(|(g, members)| {
                let min = members.iter().map(|t| t.x.abs()).fold(f64::INFINITY, f64::min);
                if min <= threshold {
                    return (true, 0);
                }
                if src.is_none() {
                    return (false, 0);
                }
                let w = members.iter().map(|t| t.w).fold(0.0, f64::max);
                let band = opts.slope_safety * p.alpha / d as f64 * sup_dphi * w;
                if min <= threshold + band {
                    (probe_hits(g * group, n), opts.probes)
                } else {
                    (false, 0)
                }
            })
            .collect();
        for (g, &(hit, probes)) in decisions.iter().enumerate() {
            probe_evaluations += probes;
            if hit {
                for t in &mut trackers[g * group..(g + 1) * group] {
                    t.push(n, p);
                }
            }
        }
    }
    let records = trackers
        .into_iter()
        .enumerate()
        .map(|(i, t)| ReturnRecord {
            theta_index: i,
            returns: t.returns,
            horizon: opts.n_max,
            log_trunc_final: t.log_trunc.value(),
            log_v_final: t.log_v.value(),
            critical: t.critical,
        })
        .collect();
    Ok(ReturnSet {
        alpha: p.alpha,
        d,
        grid_size: grid,
        grid_digits: m,
        records,
        probe_evaluations,
    })
}

/// Checks `log|V_n| ≥ log ∂̂f_n + Σ_{n_k < n} min(log(ε₁/d), −q_k log d)` at
/// every recorded return and at the horizon.
pub fn derivative_lower_bound_holds(r: &ReturnRecord, eps1: f64, d: u32) -> bool {
    if r.critical {
        return true;
    }
    let ld = (d as f64).ln();
    let floor = (eps1 / d as f64).ln();
    let bound_before = |n: usize| -> f64 {
        r.returns
            .iter()
            .filter(|e| e.n_k < n)
            .map(|e| floor.min(-(q_code(e.q_hat, eps1, d) as f64) * ld))
            .sum()
    };
    let ok = |log_v: f64, log_trunc: f64, n: usize| {
        log_v >= log_trunc + bound_before(n) - 1e-9 * (1.0 + log_trunc.abs())
    };
    r.returns.iter().all(|e| ok(e.log_v, e.log_trunc, e.n_k))
        && ok(r.log_v_final, r.log_trunc_final, r.horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnElement {
    pub k: usize,
    pub n_k: usize,
    /// index of the element at level `n_k` inside the curve
    pub index: usize,
    pub members: Vec<usize>,
}

impl ReturnSet {
    /// Elements of level `n_k ≤ grid_digits` reached at the k-th return,
    /// with at least `min_members` grid points.
    pub fn return_elements(&self, k: usize, min_members: usize) -> Vec<ReturnElement> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if let Some(e) = r.returns.get(k) {
                if e.n_k <= self.grid_digits as usize {
                    let size = (self.d as usize).pow(self.grid_digits - e.n_k as u32);
                    map.entry((e.n_k, r.theta_index / size)).or_default().push(i);
                }
            }
        }
        map.into_iter()
            .filter(|(_, v)| v.len() >= min_members)
            .map(|((n_k, index), members)| ReturnElement {
                k,
                n_k,
                index,
                members,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W, eps1: f64) -> Result<()> {
        write_records_csv(&self.records, self.d, eps1, w)
    }
}

pub fn write_records_csv<W: Write>(records: &[ReturnRecord], d: u32, eps1: f64, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wr.write_record(["theta_index", "k", "n_k", "depth", "q_hat", "q", "log_trunc"])?;
    for r in records {
        for e in &r.returns {
            wr.write_record([
                r.theta_index.to_string(),
                e.k.to_string(),
                e.n_k.to_string(),
                e.depth.to_string(),
                e.q_hat.to_string(),
                q_code(e.q_hat, eps1, d).to_string(),
                e.log_trunc.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeResult {
    pub k: usize,
    pub n_k: usize,
    pub members: usize,
    pub escaped: usize,
    pub fraction: f64,
}

/// Fraction of an element returning at `n_k` whose next return comes within
/// `N(α) + M` steps.
pub fn escape_fraction(
    records: &[&ReturnRecord],
    p: &ParameterSet,
    budget: usize,
    k: usize,
) -> Result<EscapeResult> {
    require(!records.is_empty(), || "empty element".into())?;
    let n_alpha = build_chain(p)?.n_alpha;
    let first = records[0]
        .returns
        .get(k)
        .ok_or_else(|| Error::InvalidElement(format!("no return with index {k}")))?
        .n_k;
    let mut escaped = 0;
    for r in records {
        let e = r
            .returns
            .get(k)
            .ok_or_else(|| Error::InvalidElement(format!("no return with index {k}")))?;
        if e.n_k != first {
            return Err(Error::InvalidElement(format!(
                "members return at different times ({} and {})",
                first, e.n_k
            )));
        }
        require(r.horizon >= first + n_alpha + budget, || {
            "horizon too short for the escape window".into()
        })?;
        if let Some(next) = r.returns.get(k + 1) {
            if next.n_k - first <= n_alpha + budget {
                escaped += 1;
            }
        }
    }
    Ok(EscapeResult {
        k,
        n_k: first,
        members: records.len(),
        escaped,
        fraction: escaped as f64 / records.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub budget: usize,
    pub n_alpha: usize,
    pub elements: usize,
    pub max_fraction: f64,
    pub mean_fraction: f64,
    pub results: Vec<EscapeResult>,
}

/// Escape fractions over all well-resolved return elements of several return
/// sets.
pub fn escape_statistics(
    sets: &[ReturnSet],
    p: &ParameterSet,
    budget: usize,
    min_members: usize,
) -> Result<EscapeReport> {
    let n_alpha = build_chain(p)?.n_alpha;
    let mut results = Vec::new();
    for set in sets {
        let kmax = set.records.iter().map(|r| r.returns.len()).max().unwrap_or(0);
        for k in 0..kmax {
            for el in set.return_elements(k, min_members) {
                if el.n_k + n_alpha + budget > set.records[el.members[0]].horizon {
                    continue;
                }
                let members: Vec<&ReturnRecord> = el.members.iter().map(|&i| &set.records[i]).collect();
                results.push(escape_fraction(&members, p, budget, k)?);
            }
        }
    }
    let fr: Vec<f64> = results.iter().map(|r| r.fraction).collect();
    Ok(EscapeReport {
        budget,
        n_alpha,
        elements: results.len(),
        max_fraction: fr.iter().copied().fold(0.0, f64::max),
        mean_fraction: if fr.is_empty() { 0.0 } else { mean(&fr) },
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadSetReport {
    pub budget: usize,
    pub n_alpha: usize,
    pub records: usize,
    /// `|ℬ_k|` for `k = 1..=k_max`
    pub fractions: Vec<f64>,
    /// `max_k |ℬ_k|^{1/k}` over nonzero fractions
    pub rate: f64,
    /// `exp` of the least-squares slope of `log|ℬ_k|` against k
    pub rate_lsq: Option<f64>,
}

/// `ℬ_k = {θ : n_k(θ) ≤ (N(α)+M)k}`.
pub fn bad_set_decay(records: &[ReturnRecord], p: &ParameterSet, budget: usize, k_max: usize) -> Result<BadSetReport> {
    require(!records.is_empty() && k_max >= 1, || "need records and k_max >= 1".into())?;
    let n_alpha = build_chain(p)?.n_alpha;
    let span = n_alpha + budget;
    require(records.iter().all(|r| r.horizon >= span * k_max), || {
        format!("horizon must be at least (N + M) k_max = {}", span * k_max)
    })?;
    let fractions: Vec<f64> = (1..=k_max)
        .map(|k| {
            let c = records
                .iter()
                .filter(|r| r.returns.get(k).is_some_and(|e| e.n_k <= span * k))
                .count();
            c as f64 / records.len() as f64
        })
        .collect();
    if fractions.len() >= 2
        && fractions.windows(2).all(|w| w[1] >= w[0])
        && fractions[fractions.len() - 1] > fractions[0]
    {
        return Err(Error::MeasurementBug(
            "bad-set fractions grow with k".into(),
        ));
    }
    let rate = fractions
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(i, f)| f.powf(1.0 / (i + 1) as f64))
        .fold(0.0, f64::max);
    let (ks, ls): (Vec<f64>, Vec<f64>) = fractions
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(i, f)| ((i + 1) as f64, f.ln()))
        .unzip();
    Ok(BadSetReport {
        budget,
        n_alpha,
        records: records.len(),
        fractions,
        rate,
        rate_lsq: linear_fit(&ks, &ls).map(|f| f.slope.exp()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub n: usize,
    pub trim: f64,
    pub points: usize,
    pub trimmed_min: f64,
    pub min: f64,
    pub mean: f64,
    pub fraction_nonpositive: f64,
    /// `exp(trimmed_min · N(α)/M)`
    pub lambda1_hat: f64,
    pub n_alpha: usize,
    pub budget: usize,
}

/// Trimmed lower envelope of `(1/n) log ∂̂f_n` at the record horizon.
pub fn truncated_growth(
    records: &[ReturnRecord],
    p: &ParameterSet,
    budget: usize,
    n: usize,
    trim: f64,
) -> Result<GrowthReport> {
    require((0.0..0.5).contains(&trim), || "trim must lie in [0, 0.5)".into())?;
    require(records.iter().all(|r| r.horizon == n), || {
        format!("records must have horizon n = {n}")
    })?;
    let g: Vec<f64> = records
        .iter()
        .filter(|r| !r.critical)
        .map(|r| r.log_trunc_final / n as f64)
        .collect();
    require(!g.is_empty(), || "no usable records".into())?;
    let n_alpha = build_chain(p)?.n_alpha;
    let trimmed_min = quantile(&g, trim);
    let nonpos = g.iter().filter(|v| **v <= 0.0).count() as f64 / g.len() as f64;
    if nonpos > trim {
        return Err(Error::GrowthViolated(format!(
            "{:.3}% of points have non-positive truncated growth",
            100.0 * nonpos
        )));
    }
    Ok(GrowthReport {
        n,
        trim,
        points: g.len(),
        trimmed_min,
        min: g.iter().copied().fold(f64::INFINITY, f64::min),
        mean: mean(&g),
        fraction_nonpositive: nonpos,
        lambda1_hat: (trimmed_min * n_alpha as f64 / budget as f64).exp(),
        n_alpha,
        budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeDeviationReport {
    pub eps1: f64,
    /// `Δ = log_d(1/ε₁)`
    pub delta: f64,
    pub c: f64,
    pub k_list: Vec<usize>,
    /// `|E_K(c)|`
    pub measures: Vec<f64>,
    /// slope of `log|E_K|` against √K
    pub slope: Option<f64>,
    pub all_codes_exceed_delta: bool,
}

/// `E_K(c) = {θ : Σ_{k=0}^K q_k(θ) ≥ cK}` for each K.
pub fn depth_codes_and_large_deviation(
    records: &[ReturnRecord],
    p: &ParameterSet,
    eps1: f64,
    k_list: &[usize],
    c: f64,
) -> Result<LargeDeviationReport> {
    require(eps1 > 0.0 && eps1 < 1.0, || "eps1 must lie in (0,1)".into())?;
    require(c >= 0.0, || format!("c must be >= 0 (got {c})"))?;
    require(!k_list.is_empty() && !records.is_empty(), || "need K values and records".into())?;
    let d = p.d;
    let delta = (1.0 / eps1).ln() / (d as f64).ln();
    let usable: Vec<&ReturnRecord> = records.iter().filter(|r| !r.critical).collect();
    let mut all_exceed = true;
    for r in &usable {
        for e in &r.returns {
            let q = q_code(e.q_hat, eps1, d);
            if q > 0 && (q as f64) <= delta {
                all_exceed = false;
            }
        }
    }
    if !all_exceed {
        return Err(Error::MeasurementBug("a positive depth code is <= Delta".into()));
    }
    let measures: Vec<f64> = k_list
        .iter()
        .map(|&kk| {
            let count = usable
                .iter()
                .filter(|r| {
                    let s: i64 = r
                        .returns
                        .iter()
                        .take(kk + 1)
                        .map(|e| q_code(e.q_hat, eps1, d))
                        .sum();
                    s as f64 >= c * kk as f64
                })
                .count();
            count as f64 / records.len() as f64
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = k_list
        .iter()
        .zip(&measures)
        .filter(|(_, m)| **m > 0.0)
        .map(|(k, m)| ((*k as f64).sqrt(), m.ln()))
        .unzip();
    Ok(LargeDeviationReport {
        eps1,
        delta,
        c,
        k_list: k_list.to_vec(),
        measures,
        slope: linear_fit(&xs, &ys).map(|f| f.slope),
        all_codes_exceed_delta: all_exceed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutsideExpansionReport {
    pub samples: usize,
    pub n_max: usize,
    pub seed: u64,
    /// orbits must stay at distance ≥ radius from 0
    pub radius: f64,
    pub segments: usize,
    pub lambda_hat: f64,
    /// largest K with `|V_n| ≥ K·radius·λ̂ⁿ` on every segment
    pub k_hat: f64,
    pub delta: f64,
    /// largest K with `|V_n| ≥ K·λ̂ⁿ` on segments ending inside (−δ, δ)
    pub k_hat_strong: Option<f64>,
}

/// Expansion of orbit segments that avoid `(−α^0.6, α^0.6)`.
pub fn viana_expansion_check(
    p: &ParameterSet,
    samples: usize,
    n_max: usize,
    seed: u64,
    radius: Option<f64>,
    delta: f64,
) -> Result<OutsideExpansionReport> {
    require(samples >= 1 && n_max >= 1, || "need samples and n_max >= 1".into())?;
    let radius = radius.unwrap_or(if p.alpha > 0.0 { p.alpha.powf(0.6) } else { 0.1 });
    require(radius > 0.0, || "radius must be positive".into())?;
    // per sample: (n, log|V_n|, |x_n|) for every admissible segment length n
    let segs: Vec<Vec<(usize, f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = rng.random_range(-p.beta..p.beta);
            let mut orbit = Orbit::new(DigitStream::random(p.d, seed ^ 0xe4a1, i as u64), x);
            let mut out = Vec::new();
            for n in 1..=n_max {
                if orbit.state.x.abs() < radius {
                    break;
                }
                orbit.advance(p);
                out.push((n, orbit.state.log_abs_v(), orbit.state.x.abs()));
            }
            out
        })
        .collect();
    let mut env = vec![(f64::INFINITY, 0usize); n_max + 1];
    let mut count = 0;
    for s in &segs {
        for &(n, lv, _) in s {
            env[n].0 = env[n].0.min(lv);
            env[n].1 += 1;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoSegments);
    }
    let need = (samples / 100).max(10).min(samples);
    let (ns, ls): (Vec<f64>, Vec<f64>) = (1..=n_max)
        .filter(|&n| env[n].1 >= need)
        .map(|n| (n as f64, env[n].0))
        .unzip();
    let log_lambda = match linear_fit(&ns, &ls) {
        Some(f) => f.slope,
        None => {
            let n1 = (1..=n_max).find(|&n| env[n].1 > 0).expect("count > 0");
            env[n1].0 / n1 as f64
        }
    };
    let mut k_hat = f64::INFINITY;
    let mut k_strong: Option<f64> = None;
    for s in &segs {
        for &(n, lv, xn) in s {
            let base = lv - n as f64 * log_lambda;
            k_hat = k_hat.min((base - radius.ln()).exp());
            if xn < delta {
                let v = base.exp();
                k_strong = Some(k_strong.map_or(v, |k| k.min(v)));
            }
        }
    }
    Ok(OutsideExpansionReport {
        samples,
        n_max,
        seed,
        radius,
        segments: count,
        lambda_hat: log_lambda.exp(),
        k_hat,
        delta,
        k_hat_strong: k_strong,
    })
}

/// Least `N₀ ≥ 1` and least `m₀` with `d^{N₀} ∤ m₀` and `c_{m₀}(φ) ≠ 0`.
pub fn non_periodicity_order(phi: &FourierSeries, d: u32) -> Option<(u32, usize)> {
    let deg = phi.degree();
    for n0 in 1..=16u32 {
        let q = (d as usize).checked_pow(n0)?;
        for m in 1..=deg {
            let (re, im) = phi.complex_coefficient(m);
            if m % q != 0 && (re != 0.0 || im != 0.0) {
                return Some((n0, m));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub n1: usize,
    pub n0: u32,
    pub m0: usize,
    pub grid: usize,
    /// largest η with `|{|Q(θ) − Q(θ + d^{−N₁})| ≥ 4η}| ≥ 0.99`
    pub eta_hat: f64,
    pub profile_min: f64,
    pub profile_mean: f64,
    /// `∫ Q e^{−2πi m₀θ} dθ` by quadrature
    pub coefficient: (f64, f64),
    /// `(f^{N₁−1})'(f(0))·c_{m₀}`
    pub predicted: (f64, f64),
    pub coefficient_error: f64,
}

/// `Q_{N₁}(θ) = Σ_{k=1}^{N₁} (f^{N₁−k})'(f^k(0))·φ(d^{k−1}θ)` and its
/// separation profile.
pub fn separation_diagnostic(p: &ParameterSet, n1: usize, grid: usize, n0: Option<u32>) -> Result<SeparationReport> {
    require(n1 >= 1 && grid >= 16, || "need N1 >= 1 and grid >= 16".into())?;
    let (n0, m0) = match n0 {
        Some(n0) => {
            let q = (p.d as usize).pow(n0);
            let m0 = (1..=p.phi.degree())
                .find(|&m| {
                    let (re, im) = p.phi.complex_coefficient(m);
                    m % q != 0 && (re != 0.0 || im != 0.0)
                })
                .ok_or_else(|| {
                    Error::Precondition(format!("phi has period d^-{n0}; no usable frequency"))
                })?;
            (n0, m0)
        }
        None => non_periodicity_order(&p.phi, p.d)
            .ok_or_else(|| Error::Precondition("phi is constant".into()))?,
    };
    let top = (p.d as f64).powi(n1 as i32 - 1) * p.phi.degree() as f64 + m0 as f64;
    require(top < grid as f64 / 2.0, || {
        format!("grid {grid} too coarse for frequencies up to {top}")
    })?;
    let c = p.critical_orbit(n1);
    // coefficient of φ(d^{k−1}θ): Π_{i=k}^{N₁−1} f'(c_i)
    let mut coef = vec![1.0; n1 + 1];
    for k in (1..n1).rev() {
        coef[k] = coef[k + 1] * (-2.0 * c[k - 1]);
    }
    let q_at = |theta: f64| -> f64 {
        let mut s = CompensatedSum::new();
        let mut scale = 1.0;
        for k in 1..=n1 {
            s.add(coef[k] * p.phi.eval((scale * theta).fract()));
            scale *= p.d as f64;
        }
        s.value()
    };
    let shift = (p.d as f64).powi(-(n1 as i32));
    let thetas: Vec<f64> = (0..grid).map(|j| j as f64 / grid as f64).collect();
    let qs: Vec<f64> = thetas.par_iter().map(|&t| q_at(t)).collect();
    let profile: Vec<f64> = thetas
        .par_iter()
        .zip(&qs)
        .map(|(&t, &q)| (q - q_at((t + shift).fract())).abs())
        .collect();
    let eta_hat = quantile(&profile, 0.01) / 4.0;
    let (mut re, mut im) = (CompensatedSum::new(), CompensatedSum::new());
    for (j, q) in qs.iter().enumerate() {
        let ang = std::f64::consts::TAU * ((m0 * j) % grid) as f64 / grid as f64;
        re.add(q * ang.cos());
        im.add(-q * ang.sin());
    }
    let coefficient = (re.value() / grid as f64, im.value() / grid as f64);
    let (cr, ci) = p.phi.complex_coefficient(m0);
    let predicted = (coef[1] * cr, coef[1] * ci);
    let coefficient_error = ((coefficient.0 - predicted.0).powi(2) + (coefficient.1 - predicted.1).powi(2)).sqrt();
    Ok(SeparationReport {
        n1,
        n0,
        m0,
        grid,
        eta_hat,
        profile_min: profile.iter().copied().fold(f64::INFINITY, f64::min),
        profile_mean: mean(&profile),
        coefficient,
        predicted,
        coefficient_error,
    })
}
