mod common;

use chansim::protocol::{
    induced_channel, induced_channel_capped, induced_row, induced_row_with, rf_case1_bound, rf_rate_allowance,
    ubound_reference, ubound_slack, Proposal, RowMode, SchemeKind, DEFAULT_MATERIALIZE_CAP,
};
use chansim::{
    build_product_split, build_rf_scheme, build_sc_scheme, build_uniform_fallback, one_shot_converse_bound,
    renyi_capacity, simulation_performance, Channel, Distribution, Extended, RenyiOrder, SimulationScheme,
};
use common::{all_words, binary_renyi_entropy, divergence_bits, random_channel, rng};
use rand::seq::SliceRandom;

const ORDERS: [f64; 4] = [0.5, 1.0, 2.0, f64::INFINITY];

fn order(a: f64) -> RenyiOrder {
    RenyiOrder::new(a).unwrap()
}

fn bsc() -> Channel {
    Channel::bsc(0.1).unwrap()
}

fn word_prob(rows: impl Fn(usize, usize) -> f64, x: &[usize], y: &[usize]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| rows(a, b)).product()
}

fn iid(q: &[f64], y: &[usize]) -> f64 {
    y.iter().map(|&b| q[b]).product()
}

/// Output law of the single-pass rejection procedure,
/// `(1 − p)·P̄/ΣP̄ + p·Q` with `P̄ = min{P, N·Q}` and `p = (1 − ΣP̄/N)^Ñ`.
fn rejection_law(p: &[f64], q: &[f64], n_budget: f64, cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = p.iter().zip(q).map(|(a, b)| a.min(n_budget * b)).collect();
    let mass: f64 = clipped.iter().sum();
    let abort = (1.0 - mass / n_budget).powf(cap);
    clipped.iter().zip(q).map(|(c, b)| (1.0 - abort) * c / mass + abort * b).collect()
}

/// The induced channel of a scheme, rebuilt from its parameters word by word.
fn oracle_channel(scheme: &SimulationScheme, w: &Channel) -> Vec<Vec<f64>> {
    let (nx, ny) = (w.input_size(), w.output_size());
    let n = scheme.n as usize;
    let ys = all_words(ny, n);
    all_words(nx, n)
        .iter()
        .map(|x| match (&scheme.kind, &scheme.proposal) {
            (SchemeKind::UniformFallback, _) => vec![(ny as f64).powi(-(n as i32)); ys.len()],
            (SchemeKind::RateAbove { .. }, Proposal::Single { q }) => {
                let p: Vec<f64> = ys.iter().map(|y| word_prob(|a, b| w.get(a, b), x, y)).collect();
                let qn: Vec<f64> = ys.iter().map(|y| iid(q.probs(), y)).collect();
                rejection_law(&p, &qn, scheme.n_budget.unwrap() as f64, scheme.iteration_cap as f64)
            }
            (SchemeKind::StrongConverse { .. }, Proposal::PerType { entries }) => {
                let counts: Vec<u32> = common::counts_of(x, nx).iter().map(|&c| c as u32).collect();
                let e = entries.iter().find(|e| e.x_type == counts).unwrap();
                let p: Vec<f64> = ys.iter().map(|y| word_prob(|a, b| e.target.get(a, b), x, y)).collect();
                let qn: Vec<f64> = ys.iter().map(|y| iid(e.proposal.probs(), y)).collect();
                rejection_law(&p, &qn, e.n_budget as f64, scheme.iteration_cap as f64)
            }
            _ => panic!("no word-level oracle for this kind"),
        })
        .collect()
}

/// `max_{x^n} D_α(W^n(·|x^n) ‖ N(·|x^n))` from materialized rows.
fn brute_performance(w: &Channel, rows: &[Vec<f64>], n: usize, a: f64) -> f64 {
    let ys = all_words(w.output_size(), n);
    all_words(w.input_size(), n)
        .iter()
        .zip(rows)
        .map(|(x, row)| {
            let p: Vec<f64> = ys.iter().map(|y| word_prob(|u, v| w.get(u, v), x, y)).collect();
            divergence_bits(&p, row, a)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn close_ext(a: Extended, b: f64, tol: f64) -> bool {
    match a {
        Extended::Infinite => b.is_infinite(),
        Extended::Finite(v) => (v - b).abs() <= tol * (1.0 + b.abs()),
    }
}

#[test]
fn rf_rows_match_word_level_rejection() {
    let cases = [(bsc(), 4u32, 0.8), (random_channel(&mut rng(1), 3, 2), 3, 0.6), (random_channel(&mut rng(2), 2, 3), 3, 1.1)];
    for (w, n, r) in cases {
        let scheme = build_rf_scheme(&w, n, r, Extended::Finite(1.0)).unwrap();
        let induced = induced_channel(&scheme, &w).unwrap();
        let oracle = oracle_channel(&scheme, &w);
        for (x, row) in oracle.iter().enumerate() {
            for (y, v) in row.iter().enumerate() {
                assert!((induced.get(x, y) - v).abs() < 1e-12, "x={x} y={y}");
            }
        }
        for a in ORDERS {
            let exact = simulation_performance(&w, &scheme, order(a)).unwrap();
            let brute = brute_performance(&w, &oracle, n as usize, a);
            assert!(close_ext(exact, brute, 1e-9), "α={a}: {exact} vs {brute}");
        }
    }
}

#[test]
fn full_input_enumeration_at_n6() {
    let w = bsc();
    let scheme = build_rf_scheme(&w, 6, 0.75, Extended::Finite(1.0)).unwrap();
    let rows = oracle_channel(&scheme, &w);
    for a in ORDERS {
        let exact = simulation_performance(&w, &scheme, order(a)).unwrap();
        assert!(close_ext(exact, brute_performance(&w, &rows, 6, a), 1e-9), "α={a}");
    }
}

#[test]
fn sc_rows_match_word_level_rejection() {
    let w = random_channel(&mut rng(3), 2, 2);
    let scheme = build_sc_scheme(&w, 3, 0.2, 0.5, 0.05).unwrap();
    let induced = induced_channel(&scheme, &w).unwrap();
    let oracle = oracle_channel(&scheme, &w);
    for (x, row) in oracle.iter().enumerate() {
        for (y, v) in row.iter().enumerate() {
            assert!((induced.get(x, y) - v).abs() < 1e-12);
        }
    }
    for a in ORDERS {
        let exact = simulation_performance(&w, &scheme, order(a)).unwrap();
        assert!(close_ext(exact, brute_performance(&w, &oracle, 3, a), 1e-9));
    }
}

#[test]
fn uniform_fallback_is_additive() {
    let w = random_channel(&mut rng(4), 3, 3);
    let scheme = build_uniform_fallback(&w, 4).unwrap();
    assert_eq!(scheme.communication_bits(), 0.0);
    for a in ORDERS {
        let per_letter = (0..3)
            .map(|x| divergence_bits(w.row(x), &[1.0 / 3.0; 3], a))
            .fold(f64::NEG_INFINITY, f64::max);
        let exact = simulation_performance(&w, &scheme, order(a)).unwrap();
        assert!(close_ext(exact, 4.0 * per_letter, 1e-10));
    }
}

#[test]
fn product_split_matches_materialized_product() {
    let w = bsc();
    let r = 0.5;
    for a in [1.0, 2.0, f64::INFINITY] {
        let scheme = build_product_split(&w, 5, r, order(a), 0.05).unwrap();
        let SchemeKind::ProductSplit { inner, n_prime } = &scheme.kind else { panic!() };
        let Proposal::Single { q } = &scheme.proposal else { panic!() };
        assert!(*n_prime >= 1, "rate leaves room for an inner block");
        let inner = inner.as_ref().unwrap();
        let head = induced_channel(inner, &w).unwrap();
        let (np, n) = (*n_prime as usize, 5usize);
        let hw = all_words(2, np);
        let tw = all_words(2, n - np);
        let rows: Vec<Vec<f64>> = all_words(2, n)
            .iter()
            .map(|x| {
                let xi = hw.iter().position(|h| h[..] == x[..np]).unwrap();
                let mut row = Vec::new();
                for (hi, _) in hw.iter().enumerate() {
                    for t in &tw {
                        row.push(head.get(xi, hi) * iid(q.probs(), t));
                    }
                }
                row
            })
            .collect();
        for b in ORDERS {
            let exact = simulation_performance(&w, &scheme, order(b)).unwrap();
            assert!(close_ext(exact, brute_performance(&w, &rows, n, b), 1e-9), "α={a} β={b}");
        }
    }
}

#[test]
fn aggregated_rows_agree_with_enumerated() {
    let w = random_channel(&mut rng(5), 2, 2);
    let scheme = build_rf_scheme(&w, 8, 0.7, Extended::Finite(0.5)).unwrap();
    let mut r = rng(6);
    for _ in 0..6 {
        let x: Vec<usize> = (0..8).map(|_| rand::Rng::gen_range(&mut r, 0..2)).collect();
        let agg = induced_row_with(&scheme, &w, &x, RowMode::Aggregated).unwrap();
        let en = induced_row_with(&scheme, &w, &x, RowMode::Enumerated).unwrap();
        assert!(agg.classes.len() < en.classes.len());
        assert!((agg.total_mass() - 1.0).abs() < 1e-12);
        for a in ORDERS {
            let (u, v) = (agg.divergence(order(a)), en.divergence(order(a)));
            assert!(close_ext(u, v.to_f64(), 1e-10), "α={a}: {u} vs {v}");
        }
    }
}

#[test]
fn rows_are_permutation_covariant() {
    let w = random_channel(&mut rng(7), 3, 2);
    let scheme = build_rf_scheme(&w, 5, 0.6, Extended::Finite(1.0)).unwrap();
    let x = vec![0, 2, 1, 1, 0];
    let base = induced_row(&scheme, &w, &x).unwrap();
    let mut r = rng(8);
    for _ in 0..5 {
        let mut perm = x.clone();
        perm.shuffle(&mut r);
        let row = induced_row(&scheme, &w, &perm).unwrap();
        for a in ORDERS {
            assert!(close_ext(row.divergence(order(a)), base.divergence(order(a)).to_f64(), 1e-12));
        }
    }
}

#[test]
fn reference_law_dominates_every_row() {
    let w = bsc();
    let schemes = vec![
        build_rf_scheme(&w, 4, 0.8, Extended::Finite(1.0)).unwrap(),
        build_sc_scheme(&w, 4, 0.2, 0.5, 0.05).unwrap(),
        build_product_split(&w, 4, 0.4, RenyiOrder::One, 0.05).unwrap(),
        build_uniform_fallback(&w, 4).unwrap(),
    ];
    let mut r = rng(9);
    for scheme in &schemes {
        let induced = induced_channel(scheme, &w).unwrap();
        let q = ubound_reference(scheme).materialize(DEFAULT_MATERIALIZE_CAP).unwrap();
        // direct construction of the reference law for the per-type scheme
        if let Proposal::PerType { entries } = &scheme.proposal {
            for (yi, y) in all_words(2, 4).iter().enumerate() {
                let m: f64 = entries.iter().map(|e| iid(e.proposal.probs(), y)).sum::<f64>() / entries.len() as f64;
                assert!((q.probs()[yi] - m).abs() < 1e-15);
            }
        }
        let budget = scheme.message_budget as f64;
        for x in 0..induced.input_size() {
            for y in 0..induced.output_size() {
                assert!(induced.get(x, y) <= budget * q.probs()[y] * (1.0 + 1e-12));
            }
        }
        for _ in 0..10 {
            let px = common::random_distribution(&mut r, induced.input_size());
            assert!(ubound_slack(scheme, &induced, &px).unwrap() >= -1e-12);
        }
    }
}

#[test]
fn converse_bound_closed_form_and_gate() {
    let w = bsc();
    for a in [1.0, 2.0, f64::INFINITY] {
        let i = 1.0 - binary_renyi_entropy(0.1, a);
        for (n, c) in [(4u32, 1.0), (10, 2.5), (10, 20.0)] {
            let b = one_shot_converse_bound(&w, n, c, order(a)).unwrap();
            assert!((b - (n as f64 * i - c).max(0.0)).abs() < 1e-6, "α={a} n={n} c={c}");
        }
    }
    // below order one: β-form over [α, 1]
    let alpha = 0.5;
    let (n, c) = (10u32, 1.0);
    let grid = (0..=10_000)
        .map(|k| alpha + (1.0 - alpha) * k as f64 / 10_000.0)
        .map(|b| {
            if b >= 1.0 {
                0.0
            } else {
                alpha * (1.0 - b) / (b * (1.0 - alpha)) * (n as f64 * (1.0 - binary_renyi_entropy(0.1, b)) - c)
            }
        })
        .fold(0.0, f64::max);
    let b = one_shot_converse_bound(&w, n, c, order(alpha)).unwrap();
    assert!((b - grid).abs() < 1e-5, "{b} vs {grid}");

    for n in 1..=5 {
        for scheme in [
            build_rf_scheme(&w, n, 0.3, Extended::Finite(1.0)).unwrap(),
            build_uniform_fallback(&w, n).unwrap(),
            build_product_split(&w, n, 0.3, order(2.0), 0.05).unwrap(),
        ] {
            for a in ORDERS {
                let d = simulation_performance(&w, &scheme, order(a)).unwrap();
                let bound = one_shot_converse_bound(&w, n, scheme.communication_bits(), order(a)).unwrap();
                assert!(d >= Extended::Finite(bound - 1e-9), "n={n} α={a}: {d} < {bound}");
            }
        }
    }
}

#[test]
fn case1_bound_and_rate_allowance() {
    let w = bsc();
    let i2 = renyi_capacity(&w, order(2.0), 1e-10).unwrap().value;
    for dr in [0.05, 0.1, 0.2] {
        for n in 2..=10 {
            let r = i2 + dr;
            let scheme = build_rf_scheme(&w, n, r, Extended::Finite(1.0)).unwrap();
            let d = simulation_performance(&w, &scheme, order(2.0)).unwrap().to_f64();
            let bound = rf_case1_bound(&w, &scheme).unwrap().unwrap();
            assert!(d <= bound, "n={n} r={r}: {d} > {bound}");
            assert!(scheme.rate() <= r + rf_rate_allowance(n) + 1e-12, "n={n}");
        }
    }
    let inf = build_rf_scheme(&w, 4, 0.9, Extended::Infinite).unwrap();
    assert_eq!(rf_case1_bound(&w, &inf).unwrap(), None);
}

#[test]
fn n1_rows_are_the_single_pass_law() {
    let w = random_channel(&mut rng(10), 3, 3);
    let scheme = build_rf_scheme(&w, 1, 1.2, Extended::Finite(1.0)).unwrap();
    let Proposal::Single { q } = &scheme.proposal else { panic!() };
    let induced = induced_channel(&scheme, &w).unwrap();
    for x in 0..3 {
        let plan = chansim::RejectionPlan::new(
            w.row_distribution(x),
            q.clone(),
            scheme.n_budget.unwrap(),
            scheme.iteration_cap,
        )
        .unwrap();
        let (s, _) = chansim::sampling::rejection_output_distribution(&plan);
        for y in 0..3 {
            assert!((induced.get(x, y) - s.probs()[y]).abs() < 1e-14);
        }
    }
}

#[test]
fn schemes_round_trip_through_json() {
    let w = bsc();
    for scheme in [
        build_rf_scheme(&w, 5, 0.8, Extended::Finite(1.0)).unwrap(),
        build_rf_scheme(&w, 5, 0.8, Extended::Infinite).unwrap(),
        build_sc_scheme(&w, 3, 0.2, 0.5, 0.05).unwrap(),
        build_product_split(&w, 6, 0.4, order(2.0), 0.05).unwrap(),
        build_uniform_fallback(&w, 2).unwrap(),
    ] {
        let text = serde_json::to_string(&scheme).unwrap();
        let back: SimulationScheme = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scheme);
        back.validate().unwrap();
    }
    let mut bad = build_rf_scheme(&w, 5, 0.8, Extended::Finite(1.0)).unwrap();
    bad.message_budget += 1;
    assert!(bad.validate().is_err());
}

#[test]
fn protocol_errors() {
    let w = bsc();
    assert!(build_rf_scheme(&w, 0, 0.5, Extended::Finite(1.0)).is_err());
    assert!(build_rf_scheme(&w, 4, -0.5, Extended::Finite(1.0)).is_err());
    assert!(build_rf_scheme(&w, 4, 0.5, Extended::Finite(0.0)).is_err());
    assert!(build_sc_scheme(&w, 4, 0.5, 1.5, 0.05).is_err());
    assert!(build_product_split(&w, 4, 0.5, order(0.5), 0.05).is_err());
    // 2^{nr} past 64 bits
    assert!(build_rf_scheme(&w, 100, 0.9, Extended::Finite(1.0)).is_err());
    let scheme = build_rf_scheme(&w, 6, 0.5, Extended::Finite(1.0)).unwrap();
    assert!(induced_channel_capped(&scheme, &w, 100).is_err());
    let other = Channel::new(vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25]]).unwrap();
    assert!(simulation_performance(&other, &scheme, RenyiOrder::One).is_err());
    assert!(induced_row(&scheme, &w, &[0, 1]).is_err());
    let d = Distribution::uniform(2);
    assert!(ubound_slack(&scheme, &Channel::identity(2), &d).is_err());
}

#[test]
fn converse_bound_with_an_idle_input_below_order_one() {
    // the middle input carries no mass at any order; the β search runs
    // right up to order one, where the objective is badly conditioned
    let w = Channel::new(vec![
        vec![0.8670989035262612, 0.13290109647373893],
        vec![0.36218506776873893, 0.6378149322312612],
        vec![0.1866182538329169, 0.813381746167083],
    ])
    .unwrap();
    let (alpha, c) = (0.5, 0.1);
    let grid = (0..=2_000)
        .map(|k| alpha + (1.0 - alpha) * k as f64 / 2_000.0)
        .map(|b| {
            if b >= 1.0 {
                return 0.0;
            }
            let i = renyi_capacity(&w, order(b), 1e-10).unwrap().value;
            alpha * (1.0 - b) / (b * (1.0 - alpha)) * (i - c)
        })
        .fold(0.0, f64::max);
    let b = one_shot_converse_bound(&w, 1, c, order(alpha)).unwrap();
    assert!((b - grid).abs() < 1e-6, "{b} vs {grid}");
}
