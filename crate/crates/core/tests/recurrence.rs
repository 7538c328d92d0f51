use viana::curves::{evaluate_source, random_strip_curves, CurveSource, PartitionElement};
use viana::recurrence::*;
use viana::shadowing::build_chain;
use viana::{Error, FourierSeries, ParameterSet};

fn params(alpha: f64) -> ParameterSet {
    ParameterSet::default().with_alpha(alpha)
}

fn returns_for(alpha: f64, grid_bits: u32, n_max: usize, seed: u64) -> (ParameterSet, ReturnSet) {
    let p = params(alpha);
    let curve = random_strip_curves(&p, 7, 1, 1 << grid_bits, 6, 0, seed).unwrap().remove(0);
    let opts = ReturnOptions {
        n_max,
        ..Default::default()
    };
    let set = detect_returns(&curve, &p, &opts).unwrap();
    (p, set)
}

#[test]
fn depth_codes() {
    assert_eq!(q_hat(0.01 / 8.0, 0.01, 2), 3);
    assert_eq!(q_hat(0.01 / 8.0 * 1.999, 0.01, 2), 3);
    assert_eq!(q_hat(0.01 / 8.0 * 2.0, 0.01, 2), 2);
    assert_eq!(q_hat(0.5, 0.01, 2), -5);
    assert_eq!(q_code(3, 1e-2, 2), 0);
    assert_eq!(q_code(9, 1e-2, 2), 9);
    assert_eq!(q_code(7, 1e-2, 2), 0);
    assert_eq!(q_code(8, 1e-2, 2), 8);
}

#[test]
fn return_spacing_and_derivative_chain() {
    let (p, set) = returns_for(1e-3, 10, 80, 1);
    let n_alpha = build_chain(&p).unwrap().n_alpha;
    let mut returns = 0;
    for r in &set.records {
        assert_eq!(r.returns[0].n_k, 0);
        for w in r.returns.windows(2) {
            assert!(w[1].n_k - w[0].n_k >= n_alpha, "{:?}", w);
        }
        returns += r.returns.len() - 1;
        assert!(derivative_lower_bound_holds(r, 1e-2, p.d));
    }
    assert!(returns > 0);
}

#[test]
fn element_members_share_return_times() {
    let (_, set) = returns_for(1e-2, 10, 30, 2);
    let m = set.grid_digits as usize;
    for k in 1..4 {
        for el in set.return_elements(k, 1) {
            let size = 1usize << (m - el.n_k);
            let lo = el.index * size;
            for i in lo..lo + size {
                assert_eq!(set.records[i].returns[k].n_k, el.n_k);
            }
        }
    }
}

/// Dense evaluation of every element's image curve as an oracle for the
/// element-level return decision.
#[test]
fn probe_decisions_match_dense_evaluation() {
    let p = params(1e-2);
    let threshold = p.alpha.powf(0.6);
    let (m, n_max) = (6usize, 12usize);
    let opts = ReturnOptions { n_max, probes: 64, seed: 9, ..Default::default() };
    let curves = viana::curves::random_curves(&p, 7, 3, 1 << m, 6, 0, 11).unwrap();
    let (mut checked, mut mismatched, mut hits) = (0, 0, 0);
    for curve in &curves {
        let src = curve.source.unwrap();
        let set = detect_returns(curve, &p, &opts).unwrap();
        for n in 1..=n_max {
            let members: Vec<(usize, u128)> = if n <= m {
                (0..1usize << n).map(|e| (e << (m - n), e as u128)).collect()
            } else {
                (0..1usize << m)
                    .map(|i| {
                        let jitter = viana::digits::RandomDigits::new(opts.seed, i as u64).take(2, n - m);
                        let local = jitter.iter().fold(i as u128, |acc, b| (acc << 1) | *b as u128);
                        (i, local)
                    })
                    .collect()
            };
            for (member, local) in members {
                let element = PartitionElement::new(7 + n as u32, (src.element.index << n) + local, 2).unwrap();
                let s = CurveSource { x0: src.x0, element };
                let dense = (0..2048)
                    .map(|j| evaluate_source(&p, &s, (j as f64 + 0.5) / 2048.0, 0)[0].abs())
                    .fold(f64::INFINITY, f64::min);
                let detected = set.records[member].returns.iter().any(|r| r.n_k == n);
                checked += 1;
                hits += detected as usize;
                if (dense <= threshold) != detected {
                    mismatched += 1;
                }
            }
        }
    }
    eprintln!("checked {checked}, hits {hits}, mismatched {mismatched}");
    assert!(hits > 10, "{hits}");
    assert!(mismatched * 100 <= checked, "{mismatched} of {checked}");
}

#[test]
fn escape_fraction_contract() {
    let (p, set) = returns_for(1e-2, 10, 40, 4);
    let els = set.return_elements(1, 4);
    assert!(!els.is_empty());
    let el = &els[0];
    let members: Vec<&ReturnRecord> = el.members.iter().map(|&i| &set.records[i]).collect();
    let r = escape_fraction(&members, &p, 2, 1).unwrap();
    assert!((0.0..=1.0).contains(&r.fraction));
    // members returning at different times are not one element
    let other = set
        .records
        .iter()
        .find(|r| r.returns.get(1).is_some_and(|e| e.n_k != el.n_k));
    if let Some(o) = other {
        let mut mixed = members.clone();
        mixed.push(o);
        assert!(matches!(escape_fraction(&mixed, &p, 2, 1), Err(Error::InvalidElement(_))));
    }
}

#[test]
fn synthetic_escape_and_bad_sets() {
    let p = params(1e-2);
    let entry = |k, n_k| ReturnEntry { k, n_k, depth: 0.01, q_hat: 0, log_trunc: 0.0, log_v: 0.0 };
    let rec = |returns: Vec<ReturnEntry>| ReturnRecord {
        theta_index: 0,
        returns,
        horizon: 100,
        log_trunc_final: 1.0,
        log_v_final: 1.0,
        critical: false,
    };
    let n_alpha = build_chain(&p).unwrap().n_alpha;
    // no return within N + M: fraction 0
    let far = rec(vec![entry(0, 0), entry(1, 10), entry(2, 10 + n_alpha + 3)]);
    let r = escape_fraction(&[&far], &p, 2, 1).unwrap();
    assert_eq!(r.fraction, 0.0);
    let near = rec(vec![entry(0, 0), entry(1, 10), entry(2, 10 + n_alpha + 2)]);
    assert_eq!(escape_fraction(&[&near], &p, 2, 1).unwrap().fraction, 1.0);
    // all returns late: every bad set empty
    let late = rec(vec![entry(0, 0), entry(1, 90)]);
    let b = bad_set_decay(&[late], &p, 2, 8).unwrap();
    assert!(b.fractions.iter().all(|f| *f == 0.0));
    assert_eq!(b.rate, 0.0);
}

#[test]
fn growth_matches_derivative_without_deep_returns() {
    let (p, set) = returns_for(1e-3, 10, 60, 5);
    for r in &set.records {
        if r.returns.iter().all(|e| e.depth >= p.alpha) && !r.critical {
            assert_eq!(r.log_trunc_final, r.log_v_final);
        }
    }
    let g = truncated_growth(&set.records, &p, 2, 60, 0.01).unwrap();
    assert!(g.trimmed_min > 0.0);
    assert!(g.lambda1_hat > 1.0);
}

#[test]
fn large_deviation_contract() {
    let (p, set) = returns_for(1e-2, 10, 60, 6);
    let r = depth_codes_and_large_deviation(&set.records, &p, 1e-2, &[1, 2, 4], 0.0).unwrap();
    let usable = set.records.iter().filter(|r| !r.critical).count() as f64 / set.records.len() as f64;
    assert!(r.measures.iter().all(|m| (*m - usable).abs() < 1e-12));
    assert!(r.all_codes_exceed_delta);
    assert!(depth_codes_and_large_deviation(&set.records, &p, 1e-2, &[1], -1.0).is_err());
    let r = depth_codes_and_large_deviation(&set.records, &p, 1e-2, &[1, 2, 4, 8], 1.0).unwrap();
    assert!(r.measures.windows(2).all(|w| w[1] <= w[0] + 0.05));
}

#[test]
fn coarse_grid_without_source() {
    let p = params(1e-2);
    let curve = viana::curves::SampledCurve::horizontal(&p, 0.1, 64, 0);
    let err = detect_returns(&curve, &p, &ReturnOptions { n_max: 10, ..Default::default() }).unwrap_err();
    assert_eq!(err, Error::ResolutionExhausted { reliable_n: 4 });
}

#[test]
fn separation_single_term() {
    // Q_1 = sin 2πθ: profile 2|sin 2πθ|, so η̂ = sin(π/200)/2
    let p = ParameterSet::default();
    let r = separation_diagnostic(&p, 1, 1 << 16, None).unwrap();
    let exact = (std::f64::consts::PI / 200.0).sin() / 2.0;
    assert!((r.eta_hat - exact).abs() < 1e-3 * exact + 1e-4, "{} vs {exact}", r.eta_hat);
    assert!(r.coefficient_error < 1e-12);
}

#[test]
fn separation_fourier_identity() {
    let p = ParameterSet::default();
    for n1 in [3, 6, 10] {
        let r = separation_diagnostic(&p, n1, 1 << 16, None).unwrap();
        let scale = (r.predicted.0.powi(2) + r.predicted.1.powi(2)).sqrt();
        assert!(r.coefficient_error <= 1e-9 * (1.0 + scale));
        assert!(r.eta_hat > 0.0);
    }
}

#[test]
fn non_periodicity_orders() {
    let even = FourierSeries::sin_mode(2);
    assert_eq!(non_periodicity_order(&even, 2), Some((2, 2)));
    let mixed = FourierSeries { cos: vec![], sin: vec![0.0, 1.0, 0.5] };
    assert_eq!(non_periodicity_order(&mixed, 2), Some((1, 3)));
}

#[test]
fn outside_expansion() {
    let p = params(0.0);
    let r = viana_expansion_check(&p, 400, 30, 1, Some(0.05), 0.1).unwrap();
    assert!(r.lambda_hat > 1.0);
    let q = params(1e-3);
    let r = viana_expansion_check(&q, 400, 30, 1, None, 0.1).unwrap();
    assert!(r.lambda_hat > 1.0);
    assert!(r.k_hat > 0.0);
}
