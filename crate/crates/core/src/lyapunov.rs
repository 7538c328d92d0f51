//! Lyapunov exponents of the skew product.
//!
//! The Jacobian of F is lower triangular,
//!
//! ```text
//! DF(θ, x) = [ d        0    ]
//!            [ αφ'(θ)  −2x   ]
//! ```
//!
//! so the exponents are `log d` along the base and the Birkhoff average of
//! `log|2x|` along the fibre. Ensemble members use independent ChaCha8
//! streams (`seed_from_u64(seed)` + `set_stream(member)`), and every
//! reduction runs in member order, so results do not depend on the thread
//! count.
//!
//! # Checkpoint file layout
//!
//! Long ensemble runs can be checkpointed every [`CHECKPOINT_INTERVAL`]
//! steps. All integers and floats are little-endian.
//!
//! | offset | bytes | field |
//! |-------:|------:|-------|
//! | 0  | 8 | magic `VIANACKP` |
//! | 8  | 4 | format version (`u32`, currently 1) |
//! | 12 | 4 | d (`u32`) |
//! | 16 | 8 | fingerprint of parameters and run configuration (`u64`, FNV-1a) |
//! | 24 | 8 | seed (`u64`) |
//! | 32 | 8 | ensemble size E (`u64`) |
//! | 40 | 8 | n_steps (`u64`) |
//! | 48 | 8 | burn_in (`u64`) |
//! | 56 | 8 | steps completed per member (`u64`) |
//! | 64 | 104·E | member records |
//!
//! A member record holds, in order: x (`f64`), digit window (`u64`), digits
//! consumed (`u64`), ChaCha word position (`u128`), ChaCha stream (`u64`),
//! buffered random bits (`u64`), number of buffered bits (`u32`), restart
//! count (`u32`), member step counter (`u64`), compensated sum of
//! `log|2x|` as sum and compensation (`f64`, `f64`), plain sum of squares
//! (`f64`), running minimum of the
//! checkpointed averages (`f64`).

use crate::digits::{DigitStream, RandomDigits, Tail};
use crate::error::{require, Error, Result};
use crate::kahan::CompensatedSum;
use crate::params::ParameterSet;
use crate::stats::{mean, quantile, std_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_INTERVAL: u64 = 1_000_000;
const MAGIC: &[u8; 8] = b"VIANACKP";
const FORMAT_VERSION: u32 = 1;
const RECORD_BYTES: usize = 104;
const MAX_RESTARTS: u32 = 1000;
const ESCAPE_BOUND: f64 = 1e6;
const BASE_SALT: u64 = 0xba5e_d161_7500_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberConfig {
    pub ensemble: usize,
    pub n_steps: u64,
    pub burn_in: u64,
    pub seed: u64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self {
            ensemble: 100,
            n_steps: 100_000,
            burn_in: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub chi_fiber: f64,
    pub chi_base: f64,
    /// NaN for a single-member ensemble
    pub stderr: f64,
    /// 95% normal half-width, `1.96·stderr`
    pub ci_halfwidth: f64,
    pub n_steps: u64,
    pub burn_in: u64,
    pub ensemble_size: usize,
    pub seed: u64,
    /// restarted members over ensemble size
    pub trimmed_fraction: f64,
    pub restarts: u64,
    /// members whose liminf proxy is positive
    pub frac_positive: f64,
    pub frac_negative: f64,
    pub liminf_min: f64,
    pub liminf_q01: f64,
    /// mean of terminal average minus liminf proxy
    pub liminf_gap_mean: f64,
    /// spread of member averages
    pub member_sd: f64,
    /// `σ/√n` with σ the per-step standard deviation of `log|2x|`, the
    /// CLT scale of uncorrelated steps
    pub clt_scale: f64,
}

#[derive(Debug, Clone)]
struct Member {
    x: f64,
    base: DigitStream,
    step: u64,
    sum: CompensatedSum,
    sum_sq: f64,
    min_avg: f64,
    restarts: u32,
}

fn member_stream(index: usize, attempt: u32) -> u64 {
    index as u64 | ((attempt as u64) << 32)
}

impl Member {
    fn fresh(p: &ParameterSet, seed: u64, index: usize, attempt: u32) -> Self {
        let stream = member_stream(index, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let x = rng.random_range(-p.beta..p.beta);
        Self {
            x,
            base: DigitStream::random(p.d, seed ^ BASE_SALT, stream),
            step: 0,
            sum: CompensatedSum::new(),
            sum_sq: 0.0,
            min_avg: f64::INFINITY,
            restarts: attempt,
        }
    }

    fn run(&mut self, p: &ParameterSet, cfg: &FiberConfig, index: usize, target: u64) -> Result<()> {
        let stride = (cfg.n_steps / 1000).max(1);
        let decade = cfg.n_steps / 10;
        let perturbed = p.alpha != 0.0;
        while self.step < target {
            let x = self.x;
            let ax = 2.0 * x.abs();
            let nx = if perturbed {
                p.a - x * x + p.alpha * p.phi.eval(self.base.theta())
            } else {
                p.a - x * x
            };
            // critical hits, escapes and floating fixed points of repelling
            // orbits restart the member
            if ax == 0.0 || !nx.is_finite() || nx.abs() >= ESCAPE_BOUND || (nx == x && ax > 1.0) {
                let attempt = self.restarts + 1;
                if attempt > MAX_RESTARTS {
                    return Err(Error::MeasurementBug(format!(
                        "member {index} restarted more than {MAX_RESTARTS} times"
                    )));
                }
                *self = Member::fresh(p, cfg.seed, index, attempt);
                continue;
            }
            if self.step >= cfg.burn_in {
                let l = ax.ln();
                self.sum.add(l);
                self.sum_sq += l * l;
                let t = self.step - cfg.burn_in + 1;
                if t >= decade && (t.is_multiple_of(stride) || t == cfg.n_steps) {
                    self.min_avg = self.min_avg.min(self.sum.value() / t as f64);
                }
            }
            self.x = nx;
            self.base.advance();
            self.step += 1;
        }
        Ok(())
    }

    fn chi(&self, cfg: &FiberConfig) -> f64 {
        self.sum.value() / cfg.n_steps as f64
    }
}

/// An ensemble run that can be advanced in pieces and checkpointed.
#[derive(Debug, Clone)]
pub struct FiberRun {
    params: ParameterSet,
    cfg: FiberConfig,
    members: Vec<Member>,
    done: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn fingerprint(p: &ParameterSet, cfg: &FiberConfig) -> u64 {
    let s = format!(
        "{}|{}|{}|{}|{}",
        serde_json::to_string(p).expect("params serialise"),
        cfg.ensemble,
        cfg.n_steps,
        cfg.burn_in,
        cfg.seed
    );
    fnv1a(s.as_bytes())
}

impl FiberRun {
    pub fn new(p: &ParameterSet, cfg: FiberConfig) -> Result<Self> {
        p.validate_basic()?;
        require(cfg.ensemble >= 1 && cfg.n_steps >= 1000, || {
            "need ensemble >= 1 and n_steps >= 1000".into()
        })?;
        let members = (0..cfg.ensemble)
            .map(|i| Member::fresh(p, cfg.seed, i, 0))
            .collect();
        Ok(Self {
            params: p.clone(),
            cfg,
            members,
            done: 0,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.cfg.burn_in + self.cfg.n_steps
    }

    pub fn steps_done(&self) -> u64 {
        self.done
    }

    pub fn is_complete(&self) -> bool {
        self.done >= self.total_steps()
    }

    /// Advances every member by up to `steps` steps.
    pub fn advance(&mut self, steps: u64) -> Result<()> {
        let target = (self.done + steps).min(self.total_steps());
        let (p, cfg) = (&self.params, &self.cfg);
        self.members
            .par_iter_mut()
            .enumerate()
            .map(|(i, m)| m.run(p, cfg, i, target))
            .collect::<Result<Vec<()>>>()?;
        self.done = target;
        Ok(())
    }

    pub fn estimate(&self) -> Result<ExponentEstimate> {
        require(self.is_complete(), || "run is not complete".into())?;
        let cfg = &self.cfg;
        let chis: Vec<f64> = self.members.iter().map(|m| m.chi(cfg)).collect();
        let lim: Vec<f64> = self.members.iter().map(|m| m.min_avg).collect();
        let restarts: u64 = self.members.iter().map(|m| m.restarts as u64).sum();
        let restarted = self.members.iter().filter(|m| m.restarts > 0).count();
        let n = cfg.ensemble as f64;
        let stderr = std_error(&chis);
        let gaps: Vec<f64> = chis.iter().zip(&lim).map(|(c, l)| c - l).collect();
        Ok(ExponentEstimate {
            chi_fiber: mean(&chis),
            chi_base: (self.params.d as f64).ln(),
            stderr,
            ci_halfwidth: 1.96 * stderr,
            n_steps: cfg.n_steps,
            burn_in: cfg.burn_in,
            ensemble_size: cfg.ensemble,
            seed: cfg.seed,
            trimmed_fraction: restarted as f64 / n,
            restarts,
            frac_positive: lim.iter().filter(|v| **v > 0.0).count() as f64 / n,
            frac_negative: chis.iter().filter(|v| **v < 0.0).count() as f64 / n,
            liminf_min: lim.iter().copied().fold(f64::INFINITY, f64::min),
            liminf_q01: quantile(&lim, 0.01),
            liminf_gap_mean: mean(&gaps),
            member_sd: stderr * n.sqrt(),
            clt_scale: self.step_sd() / (cfg.n_steps as f64).sqrt(),
        })
    }

    fn step_sd(&self) -> f64 {
        let per: Vec<f64> = self
            .members
            .iter()
            .map(|m| {
                let nn = self.cfg.n_steps as f64;
                let mu = m.sum.value() / nn;
                (m.sum_sq / nn - mu * mu).max(0.0)
            })
            .collect();
        mean(&per).sqrt()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + RECORD_BYTES * self.members.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.params.d.to_le_bytes());
        buf.extend_from_slice(&fingerprint(&self.params, &self.cfg).to_le_bytes());
        buf.extend_from_slice(&self.cfg.seed.to_le_bytes());
        buf.extend_from_slice(&(self.cfg.ensemble as u64).to_le_bytes());
        buf.extend_from_slice(&self.cfg.n_steps.to_le_bytes());
        buf.extend_from_slice(&self.cfg.burn_in.to_le_bytes());
        buf.extend_from_slice(&self.done.to_le_bytes());
        for m in &self.members {
            let (window, pos) = m.base.raw_state();
            let Tail::Random(r) = m.base.tail() else {
                unreachable!("ensemble members use random digits")
            };
            buf.extend_from_slice(&m.x.to_le_bytes());
            buf.extend_from_slice(&window.to_le_bytes());
            buf.extend_from_slice(&(pos as u64).to_le_bytes());
            buf.extend_from_slice(&r.rng.get_word_pos().to_le_bytes());
            buf.extend_from_slice(&r.rng.get_stream().to_le_bytes());
            buf.extend_from_slice(&r.buf.to_le_bytes());
            buf.extend_from_slice(&r.nbits.to_le_bytes());
            buf.extend_from_slice(&m.restarts.to_le_bytes());
            buf.extend_from_slice(&m.step.to_le_bytes());
            let (s, c) = m.sum.parts();
            buf.extend_from_slice(&s.to_le_bytes());
            buf.extend_from_slice(&c.to_le_bytes());
            buf.extend_from_slice(&m.sum_sq.to_le_bytes());
            buf.extend_from_slice(&m.min_avg.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, p: &ParameterSet, cfg: FiberConfig) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::Format(format!("checkpoint {}: {m}", path.display()));
        if bytes.len() < 64 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut off = 8;
        let mut take = |n: usize| {
            let s = &bytes[off..off + n];
            off += n;
            s
        };
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
        let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
        if u32_at(take(4)) != FORMAT_VERSION {
            return Err(bad("unsupported format version"));
        }
        let d = u32_at(take(4));
        let fp = u64_at(take(8));
        if d != p.d || fp != fingerprint(p, &cfg) {
            return Err(bad("parameters or configuration differ from the checkpoint"));
        }
        let seed = u64_at(take(8));
        let ensemble = u64_at(take(8)) as usize;
        let _n_steps = u64_at(take(8));
        let _burn_in = u64_at(take(8));
        let done = u64_at(take(8));
        if bytes.len() != 64 + RECORD_BYTES * ensemble {
            return Err(bad("truncated member records"));
        }
        let mut off = 64;
        let mut members = Vec::with_capacity(ensemble);
        for _ in 0..ensemble {
            let rec = &bytes[off..off + RECORD_BYTES];
            off += RECORD_BYTES;
            let f = |o: usize| f64::from_le_bytes(rec[o..o + 8].try_into().expect("8 bytes"));
            let u = |o: usize| u64::from_le_bytes(rec[o..o + 8].try_into().expect("8 bytes"));
            let w = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().expect("4 bytes"));
            let word_pos = u128::from_le_bytes(rec[24..40].try_into().expect("16 bytes"));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BASE_SALT);
            rng.set_stream(u(40));
            rng.set_word_pos(word_pos);
            let mut digits = RandomDigits::from_rng(rng);
            digits.buf = u(48);
            digits.nbits = w(56);
            let base = DigitStream::restore(d, u(8), u(16) as usize, Vec::new(), Tail::Random(digits));
            members.push(Member {
                x: f(0),
                base,
                restarts: w(60),
                step: u(64),
                sum: CompensatedSum::from_parts(f(72), f(80)),
                sum_sq: f(88),
                min_avg: f(96),
            });
        }
        Ok(Self {
            params: p.clone(),
            cfg,
            members,
            done,
        })
    }
}

/// Ensemble estimate of the fibre exponent.
pub fn fiber_exponent(p: &ParameterSet, cfg: FiberConfig) -> Result<ExponentEstimate> {
    let mut run = FiberRun::new(p, cfg)?;
    run.advance(run.total_steps())?;
    run.estimate()
}

/// As [`fiber_exponent`], saving state to `path` every
/// [`CHECKPOINT_INTERVAL`] steps and resuming from it when it exists.
pub fn fiber_exponent_checkpointed(p: &ParameterSet, cfg: FiberConfig, path: &Path) -> Result<ExponentEstimate> {
    let mut run = if path.exists() {
        FiberRun::load(path, p, cfg)?
    } else {
        FiberRun::new(p, cfg)?
    };
    while !run.is_complete() {
        run.advance(CHECKPOINT_INTERVAL)?;
        run.save(path)?;
    }
    run.estimate()
}

/// A seeded starting point uniform on `𝕋 × B`, drawn from a stream no
/// ensemble member uses.
pub fn random_start(p: &ParameterSet, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (rng.random_range(0.0..1.0), rng.random_range(-p.beta..p.beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrReport {
    pub n_steps: u64,
    pub renorm_every: usize,
    /// exponents from the QR iteration, largest first
    pub exponents: (f64, f64),
    /// `log d` and the Birkhoff average of `log|2x|` on the same orbit,
    /// largest first
    pub triangular: (f64, f64),
    pub max_deviation: f64,
}

/// Both exponents by QR iteration of the full Jacobian along one orbit.
pub fn qr_spectrum(p: &ParameterSet, theta0: f64, x0: f64, n_steps: u64, renorm_every: usize) -> Result<QrReport> {
    require(renorm_every >= 1 && n_steps >= renorm_every as u64, || {
        "need n_steps >= renorm_every >= 1".into()
    })?;
    require((0.0..1.0).contains(&theta0), || "theta0 must lie in [0,1)".into())?;
    let salt = fnv1a(&[theta0.to_le_bytes(), x0.to_le_bytes()].concat());
    let mut base = DigitStream::from_theta(p.d, theta0, Tail::Random(RandomDigits::new(salt, 0)));
    let d = p.d as f64;
    let mut q = [[1.0, 0.0], [0.0, 1.0]]; // columns
    let (mut l1, mut l2, mut diag) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    let mut x = x0;
    let mut step = 0u64;
    while step < n_steps {
        let mut a = q;
        let block = (renorm_every as u64).min(n_steps - step);
        for _ in 0..block {
            let theta = base.theta();
            let lower = p.alpha * p.phi.eval_derivative(theta, 1);
            let fp = -2.0 * x;
            for col in a.iter_mut() {
                let (u, v) = (col[0], col[1]);
                *col = [d * u, lower * u + fp * v];
            }
            diag.add(fp.abs().ln());
            x = p.a - x * x + p.alpha * p.phi.eval(theta);
            base.advance();
            step += 1;
        }
        let r11 = (a[0][0] * a[0][0] + a[0][1] * a[0][1]).sqrt();
        let q1 = [a[0][0] / r11, a[0][1] / r11];
        let proj = q1[0] * a[1][0] + q1[1] * a[1][1];
        let c2 = [a[1][0] - proj * q1[0], a[1][1] - proj * q1[1]];
        let r22 = (c2[0] * c2[0] + c2[1] * c2[1]).sqrt();
        if !(r11 > 0.0 && r22 > 0.0 && r11.is_finite() && r22.is_finite()) {
            return Err(Error::FrameCollapse { step });
        }
        l1.add(r11.ln());
        l2.add(r22.ln());
        q = [q1, [c2[0] / r22, c2[1] / r22]];
    }
    let n = n_steps as f64;
    let sort = |a: f64, b: f64| if a >= b { (a, b) } else { (b, a) };
    let exponents = sort(l1.value() / n, l2.value() / n);
    let triangular = sort(d.ln(), diag.value() / n);
    let max_deviation = (exponents.0 - triangular.0)
        .abs()
        .max((exponents.1 - triangular.1).abs());
    Ok(QrReport {
        n_steps,
        renorm_every,
        exponents,
        triangular,
        max_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub chi_fiber: f64,
    pub stderr: f64,
    pub frac_positive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub config: FiberConfig,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wr.write_record(["alpha", "chi_fiber", "stderr", "frac_positive"])?;
        for e in &self.entries {
            wr.write_record([
                e.alpha.to_string(),
                e.chi_fiber.to_string(),
                e.stderr.to_string(),
                e.frac_positive.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter(|e| e.alpha > 0.0)
            .map(|e| (e.alpha.log10(), e.chi_fiber))
            .collect();
        crate::svg::line_plot("fibre exponent", "log10 alpha", "chi_fiber", &[("chi", pts)])
    }
}

/// Fibre exponent at each α with the same seed and ensemble.
pub fn exponent_vs_alpha_sweep(p: &ParameterSet, alphas: &[f64], cfg: FiberConfig) -> Result<SweepReport> {
    require(!alphas.is_empty(), || "no alpha values".into())?;
    let entries = alphas
        .iter()
        .map(|&alpha| {
            let e = fiber_exponent(&p.with_alpha(alpha), cfg)?;
            Ok(SweepEntry {
                alpha,
                chi_fiber: e.chi_fiber,
                stderr: e.stderr,
                frac_positive: e.frac_positive,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { entries, config: cfg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierSeries;

    fn chebyshev() -> ParameterSet {
        ParameterSet::derive(2.0, 2, 0.0, FourierSeries::default(), 1, 1)
    }

    #[test]
    fn chebyshev_exponent() {
        let cfg = FiberConfig { ensemble: 50, n_steps: 100_000, burn_in: 1000, seed: 1 };
        let e = fiber_exponent(&chebyshev(), cfg).unwrap();
        let ln2 = 2f64.ln();
        assert!((e.chi_fiber - ln2).abs() <= 3.0 * e.stderr, "{} ± {}", e.chi_fiber, e.stderr);
        assert_eq!(e.chi_base, ln2);
        assert!(e.liminf_gap_mean < 10.0 * e.clt_scale);
    }

    #[test]
    fn liminf_spread_is_clt_scale() {
        let cfg = FiberConfig { ensemble: 50, n_steps: 100_000, burn_in: 1000, seed: 1 };
        let e = fiber_exponent(&ParameterSet::default(), cfg).unwrap();
        assert!(e.liminf_gap_mean >= 0.0 && e.liminf_gap_mean < 10.0 * e.clt_scale, "{e:?}");
        assert!(e.frac_positive > 0.9, "{e:?}");
    }

    #[test]
    fn preconditions() {
        let p = chebyshev();
        let cfg = FiberConfig { ensemble: 0, ..FiberConfig::default() };
        assert!(matches!(fiber_exponent(&p, cfg), Err(Error::Precondition(_))));
        assert!(matches!(qr_spectrum(&p, 0.1, 0.1, 5, 10), Err(Error::Precondition(_))));
    }

    #[test]
    fn single_alpha_sweep_equals_direct_run() {
        let p = ParameterSet::default();
        let cfg = FiberConfig { ensemble: 3, n_steps: 2000, burn_in: 10, seed: 6 };
        let s = exponent_vs_alpha_sweep(&p, &[0.0], cfg).unwrap();
        let e = fiber_exponent(&p.with_alpha(0.0), cfg).unwrap();
        assert_eq!(s.entries[0].chi_fiber, e.chi_fiber);
    }

    #[test]
    fn attracting_fixed_point() {
        let p = ParameterSet::derive(0.5, 2, 0.0, FourierSeries::default(), 1, 1);
        let cfg = FiberConfig { ensemble: 10, n_steps: 10_000, burn_in: 100, seed: 2 };
        let e = fiber_exponent(&p, cfg).unwrap();
        let xstar = (-1.0 + 3f64.sqrt()) / 2.0;
        assert!((e.chi_fiber - (2.0 * xstar).ln()).abs() < 1e-2);
        assert_eq!(e.frac_negative, 1.0);
    }

    #[test]
    fn qr_matches_diagonal_when_unperturbed() {
        let p = ParameterSet::default().with_alpha(0.0);
        let r = qr_spectrum(&p, 0.3, 0.2, 100_000, 10).unwrap();
        assert!(r.max_deviation < 1e-10, "{r:?}");
    }

    #[test]
    fn qr_matches_triangular_structure() {
        let p = ParameterSet::default();
        let r = qr_spectrum(&p, 0.3, 0.2, 200_000, 10).unwrap();
        assert!((r.exponents.0 - 2f64.ln()).abs() < 1e-8);
        assert!(r.max_deviation < 1e-3, "{r:?}");
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let p = ParameterSet::default();
        let cfg = FiberConfig { ensemble: 4, n_steps: 5000, burn_in: 100, seed: 3 };
        let whole = fiber_exponent(&p, cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckp");
        let mut run = FiberRun::new(&p, cfg).unwrap();
        run.advance(1234).unwrap();
        run.save(&path).unwrap();
        let mut resumed = FiberRun::load(&path, &p, cfg).unwrap();
        resumed.advance(u64::MAX / 2).unwrap();
        assert_eq!(resumed.estimate().unwrap(), whole);
        // a different configuration is refused
        let other = FiberConfig { seed: 4, ..cfg };
        assert!(FiberRun::load(&path, &p, other).is_err());
    }

    #[test]
    fn sweep_is_reproducible_for_repeated_alpha() {
        let cfg = FiberConfig { ensemble: 3, n_steps: 2000, burn_in: 10, seed: 5 };
        let s = exponent_vs_alpha_sweep(&ParameterSet::default(), &[1e-3, 1e-3], cfg).unwrap();
        assert_eq!(s.entries[0], s.entries[1]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("alpha,chi_fiber,stderr,frac_positive\n"));
    }
}
