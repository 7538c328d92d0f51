//! Experiment configuration files.
//!
//! A config is a single JSON object. Unknown keys are rejected. Knobs that an
//! experiment does not use are ignored; knobs it uses but the file omits are
//! filled with defaults by [`ExperimentConfig::resolve`].

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use viana::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Lyapunov,
    Sweep,
    Shadow,
    Distortion,
    Curve,
    DeepReturn,
    Returns,
    Escape,
    Badset,
    Growth,
    Ldev,
    Separation,
    Classconst,
    Domination,
    Expansion,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lyapunov => "lyapunov",
            Self::Sweep => "sweep",
            Self::Shadow => "shadow",
            Self::Distortion => "distortion",
            Self::Curve => "curve",
            Self::DeepReturn => "deep-return",
            Self::Returns => "returns",
            Self::Escape => "escape",
            Self::Badset => "badset",
            Self::Growth => "growth",
            Self::Ldev => "ldev",
            Self::Separation => "separation",
            Self::Classconst => "classconst",
            Self::Domination => "domination",
            Self::Expansion => "expansion",
        }
    }

    /// Lyapunov runs accept parameters outside the Misiurewicz range (the
    /// Chebyshev and attracting-cycle oracles live there).
    fn needs_full_validation(self) -> bool {
        !matches!(self, Self::Lyapunov | Self::Sweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub params: ParameterSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renorm_every: Option<usize>,
    /// checkpoint file for long Lyapunov runs
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<usize>,
    /// partition levels of the propagated curves
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(default, rename = "K_list", skip_serializing_if = "Option::is_none")]
    pub k_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// step budget added to N(α) in the return experiments
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_members: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub error: &'static str,
    pub messages: Vec<String>,
}

impl ConfigError {
    fn new(error: &'static str, messages: Vec<String>) -> Self {
        Self { error, messages }
    }

    pub fn one(msg: impl Into<String>) -> Self {
        Self::new("InvalidConfig", vec![msg.into()])
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.error, self.messages.join("; "))
    }
}

impl std::error::Error for ConfigError {}

impl From<viana::Error> for ConfigError {
    fn from(e: viana::Error) -> Self {
        match e {
            viana::Error::InvalidParameters(v) => Self::new("InvalidParameters", v),
            e => Self::new(e.kind(), vec![e.to_string()]),
        }
    }
}

fn fill<T: Clone>(slot: &mut Option<T>, v: T) -> T {
    slot.get_or_insert(v).clone()
}

fn check(ok: bool, msg: &str, errs: &mut Vec<String>) {
    if !ok {
        errs.push(msg.to_string());
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::new("ConfigParse", vec![e.to_string()]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.as_ref().is_none_or(|v| v.contains(&f))
    }

    /// Fills the experiment's knobs with defaults and validates them.
    pub fn resolve(mut self, exp: Experiment) -> Result<Self, ConfigError> {
        if let Some(e) = self.experiment {
            if e != exp {
                return Err(ConfigError::one(format!(
                    "config is for experiment '{}', not '{}'",
                    e.name(),
                    exp.name()
                )));
            }
        }
        self.experiment = Some(exp);
        if exp.needs_full_validation() {
            self.params.validate()?;
        } else {
            self.params.validate_basic()?;
        }
        self.seed.get_or_insert(0);
        fill(&mut self.output_dir, PathBuf::from("out"));
        fill(&mut self.formats, vec![Format::Csv, Format::Json, Format::Svg]);
        let p = &self.params;
        let mut errs = Vec::new();
        use Experiment::*;
        match exp {
            Lyapunov | Sweep => {
                let e = fill(&mut self.ensemble, 100);
                let n = fill(&mut self.n_steps, 100_000);
                fill(&mut self.burn_in, 1000);
                check(e >= 1, "ensemble must be >= 1", &mut errs);
                check(n >= 1000, "n_steps must be >= 1000", &mut errs);
                if exp == Lyapunov {
                    let r = fill(&mut self.renorm_every, 10);
                    check(r >= 1 && r as u64 <= n, "renorm_every must lie in [1, n_steps]", &mut errs);
                } else {
                    let a = fill(&mut self.alphas, vec![0.0, 1e-5, 1e-4, 1e-3]);
                    check(!a.is_empty(), "alphas must be nonempty", &mut errs);
                    check(a.iter().all(|v| v.is_finite() && *v >= 0.0), "alphas must be finite and >= 0", &mut errs);
                }
            }
            Shadow | Distortion | Expansion => {
                check(
                    p.alpha > 0.0 && p.alpha <= p.xi0,
                    &format!("alpha = {} must lie in (0, xi0 = {}]", p.alpha, p.xi0),
                    &mut errs,
                );
                match exp {
                    Shadow => {
                        let a = fill(&mut self.alphas, vec![1e-3, 1e-4, 1e-5, 1e-6]);
                        check(
                            !a.is_empty() && a.iter().all(|v| *v > 0.0 && *v <= p.xi0),
                            "alphas must be nonempty and lie in (0, xi0]",
                            &mut errs,
                        );
                    }
                    Distortion => {
                        let s = fill(&mut self.samples, 10_000);
                        check(s >= 1, "samples must be >= 1", &mut errs);
                    }
                    _ => {
                        let s = fill(&mut self.samples, 1000);
                        let n = fill(&mut self.n_max, 30);
                        let d = fill(&mut self.delta, 0.1);
                        check(s >= 1 && n >= 1, "samples and n_max must be >= 1", &mut errs);
                        check(d > 0.0, "delta must be > 0", &mut errs);
                        if let Some(r) = self.radius {
                            check(r > 0.0, "radius must be > 0", &mut errs);
                        }
                    }
                }
            }
            Curve => {
                let a = fill(&mut self.alphas, vec![1e-3, 1e-4]);
                check(
                    !a.is_empty() && a.iter().all(|v| *v > 0.0 && v.is_finite()),
                    "alphas must be nonempty and positive",
                    &mut errs,
                );
                let g = fill(&mut self.grid_size, 1 << 16);
                check(g >= 8, "grid_size must be >= 8", &mut errs);
                let c = fill(&mut self.curves, 4);
                check(c >= 1, "curves must be >= 1", &mut errs);
                fill(&mut self.samples, 1000);
            }
            DeepReturn => {
                let g = fill(&mut self.grid_size, 1 << 16);
                check(g >= 8, "grid_size must be >= 8", &mut errs);
                let c = fill(&mut self.curves, 20);
                check(c >= 1, "curves must be >= 1", &mut errs);
                let e = fill(&mut self.eps_list, vec![1e-1, 1e-2, 1e-3, 1e-4]);
                check(
                    !e.is_empty() && e.iter().all(|v| *v > 0.0 && *v <= 1.0),
                    "eps_list must be nonempty with entries in (0, 1]",
                    &mut errs,
                );
            }
            Returns | Escape | Badset | Growth | Ldev => {
                check(p.alpha > 0.0, "alpha must be > 0", &mut errs);
                let g = fill(&mut self.grid_size, 1 << 12);
                check(
                    g >= 8 && is_power_of(g, p.d),
                    "grid_size must be a power of d and >= 8",
                    &mut errs,
                );
                let c = fill(&mut self.curves, if exp == Growth { 10 } else { 4 });
                check(c >= 1, "curves must be >= 1", &mut errs);
                fill(&mut self.probes, 32);
                let b = fill(&mut self.budget, 2);
                check(b >= 1, "M must be >= 1", &mut errs);
                match exp {
                    Returns | Escape => {
                        let n = fill(&mut self.n_max, 80);
                        check(n >= 1, "n_max must be >= 1", &mut errs);
                        let e = fill(&mut self.eps1, 1e-2);
                        check(e > 0.0 && e < 1.0, "eps1 must lie in (0, 1)", &mut errs);
                        if exp == Escape {
                            let m = fill(&mut self.min_members, 4);
                            check(m >= 1, "min_members must be >= 1", &mut errs);
                        }
                    }
                    Badset => {
                        let k = fill(&mut self.k_max, 8);
                        check(k >= 1, "k_max must be >= 1", &mut errs);
                    }
                    Growth => {
                        let t = fill(&mut self.trim, 0.01);
                        check((0.0..0.5).contains(&t), "trim must lie in [0, 0.5)", &mut errs);
                        if let Some(n) = self.n {
                            check(n >= 1, "n must be >= 1", &mut errs);
                        }
                    }
                    _ => {
                        let e = fill(&mut self.eps1, 1e-2);
                        check(e > 0.0 && e < 1.0, "eps1 must lie in (0, 1)", &mut errs);
                        let k = fill(&mut self.k_list, vec![1, 2, 4, 8, 16]);
                        check(!k.is_empty(), "K_list must be nonempty", &mut errs);
                        let c = fill(&mut self.c, 1.0);
                        check(c >= 0.0, "c must be >= 0", &mut errs);
                        fill(&mut self.n_max, 200);
                    }
                }
            }
            Separation => {
                let n1 = fill(&mut self.n1, 10);
                let g = fill(&mut self.grid_size, 1 << 16);
                check(n1 >= 1 && g >= 16, "need n1 >= 1 and grid_size >= 16", &mut errs);
            }
            Classconst => {
                let s = fill(&mut self.samples, 1000);
                let g = fill(&mut self.grid_size, 10_001);
                check(s >= 1000, "samples must be >= 1000", &mut errs);
                check(g >= 2, "grid_size must be >= 2", &mut errs);
            }
            Domination => {
                let s = fill(&mut self.samples, 1000);
                let k = fill(&mut self.k_max, 40);
                check(s >= 1 && k >= 4, "need samples >= 1 and k_max >= 4", &mut errs);
            }
        }
        if let Some(levels) = &self.levels {
            check(!levels.is_empty(), "levels must be nonempty", &mut errs);
        }
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::new("InvalidConfig", errs))
        }
    }
}

fn is_power_of(mut g: usize, d: u32) -> bool {
    let d = d as usize;
    while g > 1 && g.is_multiple_of(d) {
        g /= d;
    }
    g == 1
}
