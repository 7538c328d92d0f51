//! One function per experiment. Each returns a deterministic report plus
//! named pass/fail assertions and the CSV/SVG artifacts to write.

use crate::config::{Experiment, ExperimentConfig};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use viana::analytic::{estimate_class_constants, ClassOptions, ClassReport};
use viana::curves::{
    curve_class_report, deep_return_measure_many, random_curves, random_strip_curves, SampledCurve,
};
use viana::lyapunov::{
    exponent_vs_alpha_sweep, fiber_exponent, fiber_exponent_checkpointed, qr_spectrum, random_start, FiberConfig,
};
use viana::map::{verify_domination, DominationReport};
use viana::recurrence::{
    bad_set_decay, depth_codes_and_large_deviation, derivative_lower_bound_holds, detect_returns,
    escape_statistics, separation_diagnostic, truncated_growth, viana_expansion_check, write_records_csv,
    ReturnOptions, ReturnRecord, ReturnSet,
};
use viana::shadowing::{build_chain, check_distortion, expansion_after_return, n_alpha_scaling};
use viana::{Error, ParameterSet, Result};

/// Assertion keys written to `manifest.json`, per experiment.
pub fn assertion_keys(exp: Experiment) -> &'static [&'static str] {
    use Experiment::*;
    match exp {
        Lyapunov => &["chi_base_exact", "positive_fraction_99", "qr_triangular", "liminf_clt_scale"],
        Sweep => &["positive_fraction_99"],
        Shadow => &["s_alpha_bounded", "n_alpha_linear"],
        Distortion => &["distortion_bounded"],
        Curve => &["flat", "residual_alpha2_scaling", "sandwich"],
        DeepReturn => &["kappa_positive", "measure_monotone"],
        Returns => &["derivative_lower_bound"],
        Escape => &["escape_two_thirds", "enough_elements"],
        Badset => &["bad_set_rate"],
        Growth => &["truncated_growth_positive"],
        Ldev => &["codes_exceed_delta"],
        Separation => &["coefficient_identity", "eta_positive"],
        Classconst => &["sup_exceeds_two_mu"],
        Domination => &["domination"],
        Expansion => &["expansion_after_return", "outside_expansion"],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub assertions: BTreeMap<String, bool>,
    /// file name and contents
    pub csv: Vec<(String, Vec<u8>)>,
    pub svg: Vec<(String, String)>,
}

impl Outcome {
    fn new<T: Serialize>(result: &T) -> Self {
        Self {
            report: serde_json::to_value(result).expect("reports serialise"),
            assertions: BTreeMap::new(),
            csv: Vec::new(),
            svg: Vec::new(),
        }
    }

    fn assert(&mut self, key: &str, ok: bool) -> &mut Self {
        self.assertions.insert(key.to_string(), ok);
        self
    }

    pub fn passed(&self) -> bool {
        self.assertions.values().all(|v| *v)
    }
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs the experiment of a resolved config. Assertion-class errors from the
/// library become a report carrying the error with every assertion false.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let exp = cfg
        .experiment
        .ok_or_else(|| Error::Precondition("config is not resolved".into()))?;
    use Experiment::*;
    let out = match exp {
        Lyapunov => lyapunov(cfg),
        Sweep => sweep(cfg),
        Shadow => shadow(cfg),
        Distortion => distortion(cfg),
        Curve => curve(cfg),
        DeepReturn => deep_return(cfg),
        Returns => returns(cfg),
        Escape => escape(cfg),
        Badset => badset(cfg),
        Growth => growth(cfg),
        Ldev => ldev(cfg),
        Separation => separation(cfg),
        Classconst => classconst(cfg),
        Domination => domination(cfg),
        Expansion => expansion(cfg),
    };
    let mut out = match out {
        Err(e) if e.is_assertion() => {
            let mut o = Outcome::new(&json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            for k in assertion_keys(exp) {
                o.assert(k, false);
            }
            o
        }
        r => r?,
    };
    out.report = json!({
        "experiment": exp.name(),
        "seed": cfg.seed(),
        "params": cfg.params,
        "result": out.report,
    });
    Ok(out)
}

fn fiber_config(cfg: &ExperimentConfig) -> FiberConfig {
    FiberConfig {
        ensemble: cfg.ensemble.unwrap_or(100),
        n_steps: cfg.n_steps.unwrap_or(100_000),
        burn_in: cfg.burn_in.unwrap_or(1000),
        seed: cfg.seed(),
    }
}

fn lyapunov(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let fc = fiber_config(cfg);
    let est = match &cfg.checkpoint {
        Some(path) => fiber_exponent_checkpointed(p, fc, path)?,
        None => fiber_exponent(p, fc)?,
    };
    let (theta0, x0) = random_start(p, fc.seed);
    let qr = qr_spectrum(p, theta0, x0, fc.n_steps, cfg.renorm_every.unwrap_or(10))?;
    let mut o = Outcome::new(&json!({ "estimate": est, "qr": qr, "qr_start": [theta0, x0] }));
    o.assert("chi_base_exact", est.chi_base == (p.d as f64).ln())
        .assert("positive_fraction_99", est.frac_positive >= 0.99)
        .assert("qr_triangular", qr.max_deviation <= 1e-3)
        .assert("liminf_clt_scale", est.liminf_gap_mean < 10.0 * est.clt_scale);
    Ok(o)
}

fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let alphas = cfg.alphas.clone().unwrap_or_default();
    let s = exponent_vs_alpha_sweep(&cfg.params, &alphas, fiber_config(cfg))?;
    let mut o = Outcome::new(&s);
    o.assert("positive_fraction_99", s.entries.iter().all(|e| e.frac_positive >= 0.99));
    o.csv.push(("sweep.csv".into(), bytes(|b| s.write_csv(b))?));
    o.svg.push(("sweep.svg".into(), s.to_svg()));
    Ok(o)
}

fn shadow(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let chain = build_chain(p)?;
    let scaling = n_alpha_scaling(p, cfg.alphas.as_deref().unwrap_or(&[]))?;
    let mut o = Outcome::new(&json!({
        "n_alpha": chain.n_alpha,
        "s_alpha": chain.s_alpha(),
        "scaling": scaling,
    }));
    o.assert("s_alpha_bounded", scaling.c0 > 0.01)
        .assert("n_alpha_linear", scaling.fit_r2.is_some_and(|r| r > 0.99));
    o.csv.push(("chain.csv".into(), bytes(|b| chain.write_csv(b))?));
    o.csv.push((
        "scaling.csv".into(),
        table(
            &["alpha", "n_alpha", "s_alpha"],
            scaling
                .entries
                .iter()
                .map(|e| vec![e.alpha.to_string(), e.n_alpha.to_string(), e.s_alpha.to_string()]),
        )?,
    ));
    let pts = scaling
        .entries
        .iter()
        .map(|e| ((1.0 / e.alpha).ln(), e.n_alpha as f64))
        .collect();
    o.svg.push((
        "scaling.svg".into(),
        viana::svg::line_plot("N(alpha)", "log(1/alpha)", "N", &[("N", pts)]),
    ));
    Ok(o)
}

fn distortion(cfg: &ExperimentConfig) -> Result<Outcome> {
    let chain = build_chain(&cfg.params)?;
    let r = check_distortion(&chain, cfg.samples.unwrap_or(10_000), cfg.seed())?;
    let e = std::f64::consts::E;
    let mut o = Outcome::new(&r);
    o.assert("distortion_bounded", r.min_ratio > 1.0 / e && r.max_ratio < e);
    Ok(o)
}

fn domination_of(p: &ParameterSet, seed: u64) -> Result<DominationReport> {
    verify_domination(p, 1000, 40, seed)
}

fn class_report(p: &ParameterSet, dom: &DominationReport, samples: usize, grid: usize, seed: u64) -> Result<ClassReport> {
    let opts = ClassOptions {
        samples,
        grid_points: grid,
        seed,
        ..ClassOptions::default()
    };
    estimate_class_constants(&p.phi, p.d, dom.c1, dom.r1, opts)
}

fn levels(cfg: &ExperimentConfig, n0: u32, default: impl Fn(u32) -> Vec<u32>) -> Vec<u32> {
    cfg.levels.clone().unwrap_or_else(|| default(n0))
}

#[derive(Serialize)]
struct CurveRow {
    alpha: f64,
    level: u32,
    curve: usize,
    slope_over_alpha: f64,
    residual_over_alpha2: f64,
    min_sum_over_alpha: f64,
    max_sum_over_alpha: f64,
    flat: bool,
    sandwich_ok: bool,
}

fn curve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p0 = &cfg.params;
    let seed = cfg.seed();
    let dom = domination_of(p0, seed)?;
    let class = class_report(p0, &dom, cfg.samples.unwrap_or(1000), 10_001, seed)?;
    let k = &class.constants;
    let lv = levels(cfg, dom.n0, |n0| (n0 + 1..=n0 + 6).collect());
    let grid = cfg.grid_size.unwrap_or(1 << 16);
    let count = cfg.curves.unwrap_or(4);
    let mut rows = Vec::new();
    let mut worst = Vec::new();
    let mut first: Option<SampledCurve> = None;
    for &alpha in cfg.alphas.as_deref().unwrap_or(&[]) {
        let p = p0.with_alpha(alpha);
        let mut w = 0.0f64;
        for &level in &lv {
            let curves = random_curves(&p, level, count, grid, dom.n0, k.l0 + 1, seed ^ level as u64)?;
            for (i, c) in curves.iter().enumerate() {
                let r = curve_class_report(c, &p, k, 1)?;
                w = w.max(r.residual_over_alpha2);
                rows.push(CurveRow {
                    alpha,
                    level,
                    curve: i,
                    slope_over_alpha: r.slope_over_alpha,
                    residual_over_alpha2: r.residual_over_alpha2,
                    min_sum_over_alpha: r.min_sum_over_alpha,
                    max_sum_over_alpha: r.max_sum_over_alpha,
                    flat: r.flat,
                    sandwich_ok: r.sandwich_ok(),
                });
            }
            if first.is_none() {
                first = curves.into_iter().next();
            }
        }
        worst.push((alpha, w));
    }
    let ws: Vec<f64> = worst.iter().map(|w| w.1).collect();
    let lo = ws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ws.iter().copied().fold(0.0, f64::max);
    let ratio = hi / lo;
    let mut o = Outcome::new(&json!({
        "n0": dom.n0,
        "constants": k,
        "levels": lv,
        "grid_size": grid,
        "worst_residual_over_alpha2": worst,
        "residual_ratio": ratio,
        "curves": rows,
    }));
    o.assert("flat", rows.iter().all(|r| r.flat))
        .assert("residual_alpha2_scaling", lo > 0.0 && ratio <= 4.0)
        .assert("sandwich", rows.iter().all(|r| r.sandwich_ok));
    o.csv.push((
        "curves.csv".into(),
        table(
            &[
                "alpha",
                "level",
                "curve",
                "slope_over_alpha",
                "residual_over_alpha2",
                "min_sum_over_alpha",
                "max_sum_over_alpha",
                "flat",
                "sandwich_ok",
            ],
            rows.iter().map(|r| {
                vec![
                    r.alpha.to_string(),
                    r.level.to_string(),
                    r.curve.to_string(),
                    r.slope_over_alpha.to_string(),
                    r.residual_over_alpha2.to_string(),
                    r.min_sum_over_alpha.to_string(),
                    r.max_sum_over_alpha.to_string(),
                    r.flat.to_string(),
                    r.sandwich_ok.to_string(),
                ]
            }),
        )?,
    ));
    if let Some(c) = first {
        o.csv.push(("curve.csv".into(), bytes(|b| c.write_csv(b))?));
        o.svg.push(("curve.svg".into(), c.to_svg("admissible curve")));
    }
    Ok(o)
}

fn deep_return(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let seed = cfg.seed();
    let dom = domination_of(p, seed)?;
    let level = levels(cfg, dom.n0, |n0| vec![n0 + 1])[0];
    let curves = random_strip_curves(
        p,
        level,
        cfg.curves.unwrap_or(20),
        cfg.grid_size.unwrap_or(1 << 16),
        dom.n0,
        0,
        seed,
    )?;
    let r = deep_return_measure_many(&curves, cfg.eps_list.as_deref().unwrap_or(&[]))?;
    let mut o = Outcome::new(&r);
    o.assert("kappa_positive", r.kappa_hat.is_some_and(|k| k > 0.0))
        .assert("measure_monotone", r.fractions.windows(2).all(|w| w[0] <= w[1]));
    o.csv.push((
        "deep_return.csv".into(),
        table(
            &["eps", "fraction"],
            r.eps
                .iter()
                .zip(&r.fractions)
                .map(|(e, f)| vec![e.to_string(), f.to_string()]),
        )?,
    ));
    let pts = r
        .eps
        .iter()
        .zip(&r.fractions)
        .filter(|(_, f)| **f > 0.0)
        .map(|(e, f)| (e.log10(), f.log10()))
        .collect();
    o.svg.push((
        "deep_return.svg".into(),
        viana::svg::line_plot("deep returns", "log10 eps", "log10 measure", &[("measure", pts)]),
    ));
    Ok(o)
}

/// Return sets of random strip curves, detected up to `n_max`.
fn return_sets(cfg: &ExperimentConfig, n_max: usize) -> Result<Vec<ReturnSet>> {
    let p = &cfg.params;
    let seed = cfg.seed();
    let dom = domination_of(p, seed)?;
    let level = levels(cfg, dom.n0, |n0| vec![n0 + 1])[0];
    let curves = random_strip_curves(
        p,
        level,
        cfg.curves.unwrap_or(4),
        cfg.grid_size.unwrap_or(1 << 12),
        dom.n0,
        0,
        seed,
    )?;
    let opts = ReturnOptions {
        n_max,
        probes: cfg.probes.unwrap_or(32),
        seed,
        ..ReturnOptions::default()
    };
    curves.iter().map(|c| detect_returns(c, p, &opts)).collect()
}

fn all_records(sets: Vec<ReturnSet>) -> Vec<ReturnRecord> {
    sets.into_iter().flat_map(|s| s.records).collect()
}

fn returns(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let eps1 = cfg.eps1.unwrap_or(1e-2);
    let sets = return_sets(cfg, cfg.n_max.unwrap_or(80))?;
    let probes: usize = sets.iter().map(|s| s.probe_evaluations).sum();
    let records = all_records(sets);
    let usable: Vec<&ReturnRecord> = records.iter().filter(|r| !r.critical).collect();
    let holds = usable
        .iter()
        .filter(|r| derivative_lower_bound_holds(r, eps1, p.d))
        .count();
    let counts: Vec<usize> = records.iter().map(|r| r.returns.len() - 1).collect();
    let mut o = Outcome::new(&json!({
        "records": records.len(),
        "critical": records.len() - usable.len(),
        "probe_evaluations": probes,
        "mean_returns": viana::stats::mean(&counts.iter().map(|c| *c as f64).collect::<Vec<_>>()),
        "max_returns": counts.iter().copied().max().unwrap_or(0),
        "derivative_bound_holds": holds,
    }));
    o.assert("derivative_lower_bound", holds == usable.len());
    o.csv.push(("returns.csv".into(), bytes(|b| write_records_csv(&records, p.d, eps1, b))?));
    Ok(o)
}

fn escape(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let budget = cfg.budget.unwrap_or(2);
    let sets = return_sets(cfg, cfg.n_max.unwrap_or(80))?;
    let r = escape_statistics(&sets, p, budget, cfg.min_members.unwrap_or(4))?;
    let mut o = Outcome::new(&json!({
        "budget": r.budget,
        "n_alpha": r.n_alpha,
        "elements": r.elements,
        "max_fraction": r.max_fraction,
        "mean_fraction": r.mean_fraction,
    }));
    o.assert("escape_two_thirds", r.max_fraction <= 2.0 / 3.0 + 0.05)
        .assert("enough_elements", r.elements >= 200);
    o.csv.push((
        "escape.csv".into(),
        table(
            &["k", "n_k", "members", "escaped", "fraction"],
            r.results.iter().map(|e| {
                vec![
                    e.k.to_string(),
                    e.n_k.to_string(),
                    e.members.to_string(),
                    e.escaped.to_string(),
                    e.fraction.to_string(),
                ]
            }),
        )?,
    ));
    Ok(o)
}

fn badset(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let budget = cfg.budget.unwrap_or(2);
    let k_max = cfg.k_max.unwrap_or(8);
    let n_alpha = build_chain(p)?.n_alpha;
    let records = all_records(return_sets(cfg, (n_alpha + budget) * k_max)?);
    let r = bad_set_decay(&records, p, budget, k_max)?;
    let mut o = Outcome::new(&r);
    o.assert("bad_set_rate", r.rate <= 0.9);
    o.csv.push((
        "badset.csv".into(),
        table(
            &["k", "fraction"],
            r.fractions
                .iter()
                .enumerate()
                .map(|(i, f)| vec![(i + 1).to_string(), f.to_string()]),
        )?,
    ));
    Ok(o)
}

fn growth(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let n = match cfg.n {
        Some(n) => n,
        None => 20 * build_chain(p)?.n_alpha,
    };
    let records = all_records(return_sets(cfg, n)?);
    let r = truncated_growth(&records, p, cfg.budget.unwrap_or(2), n, cfg.trim.unwrap_or(0.01))?;
    let mut o = Outcome::new(&r);
    o.assert("truncated_growth_positive", r.trimmed_min > 0.0);
    o.csv.push((
        "growth.csv".into(),
        table(
            &["record", "critical", "growth"],
            records.iter().enumerate().map(|(i, r)| {
                vec![
                    i.to_string(),
                    r.critical.to_string(),
                    (r.log_trunc_final / n as f64).to_string(),
                ]
            }),
        )?,
    ));
    Ok(o)
}

fn ldev(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let eps1 = cfg.eps1.unwrap_or(1e-2);
    let records = all_records(return_sets(cfg, cfg.n_max.unwrap_or(200))?);
    let k_list = cfg.k_list.clone().unwrap_or_default();
    let r = depth_codes_and_large_deviation(&records, p, eps1, &k_list, cfg.c.unwrap_or(1.0))?;
    let mut o = Outcome::new(&r);
    o.assert("codes_exceed_delta", r.all_codes_exceed_delta);
    o.csv.push((
        "ldev.csv".into(),
        table(
            &["K", "measure"],
            r.k_list
                .iter()
                .zip(&r.measures)
                .map(|(k, m)| vec![k.to_string(), m.to_string()]),
        )?,
    ));
    o.csv.push(("returns.csv".into(), bytes(|b| write_records_csv(&records, p.d, eps1, b))?));
    Ok(o)
}

fn separation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let r = separation_diagnostic(&cfg.params, cfg.n1.unwrap_or(10), cfg.grid_size.unwrap_or(1 << 16), None)?;
    let scale = r.predicted.0.hypot(r.predicted.1);
    let mut o = Outcome::new(&r);
    o.assert("coefficient_identity", r.coefficient_error <= 1e-9 * (1.0 + scale))
        .assert("eta_positive", r.eta_hat > 0.0);
    Ok(o)
}

fn classconst(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let dom = domination_of(p, cfg.seed())?;
    let r = class_report(p, &dom, cfg.samples.unwrap_or(1000), cfg.grid_size.unwrap_or(10_001), cfg.seed())?;
    let mut o = Outcome::new(&r);
    o.assert("sup_exceeds_two_mu", r.sup_exceeds_two_mu);
    o.csv.push((
        "margins.csv".into(),
        table(
            &["l", "margin"],
            r.margin_by_l
                .iter()
                .enumerate()
                .map(|(l, m)| vec![l.to_string(), m.to_string()]),
        )?,
    ));
    Ok(o)
}

fn domination(cfg: &ExperimentConfig) -> Result<Outcome> {
    let r = verify_domination(&cfg.params, cfg.samples.unwrap_or(1000), cfg.k_max.unwrap_or(40), cfg.seed())?;
    let mut o = Outcome::new(&r);
    o.assert("domination", r.r1 < cfg.params.d as f64);
    Ok(o)
}

fn expansion(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let samples = cfg.samples.unwrap_or(1000);
    let after = expansion_after_return(p, samples, cfg.seed())?;
    let outside = viana_expansion_check(
        p,
        samples,
        cfg.n_max.unwrap_or(30),
        cfg.seed(),
        cfg.radius,
        cfg.delta.unwrap_or(0.1),
    )?;
    let mut o = Outcome::new(&json!({ "after_return": after, "outside": outside }));
    o.assert("expansion_after_return", after.min_ratio >= after.bound)
        .assert("outside_expansion", outside.lambda_hat > 1.0 && outside.k_hat > 0.0);
    Ok(o)
}
