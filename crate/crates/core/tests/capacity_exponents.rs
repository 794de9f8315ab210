mod common;

use chansim::capacity::DEFAULT_TOL;
use chansim::exponents::tilted_channel;
use chansim::{
    capacity_right_derivative, reliability_function, renyi_capacity, renyi_mutual_information, renyi_simulation_rate,
    strong_converse_exponent, sup_t_objective, variational_sc_exponent, Channel, Distribution, Extended,
    JointDistribution, RenyiOrder,
};
use common::{binary_output_grid_capacity, binary_renyi_entropy, divergence_bits, random_channel, rng};
use proptest::prelude::*;

fn order(a: f64) -> RenyiOrder {
    RenyiOrder::new(a).unwrap()
}

fn bsc_capacity(p: f64, alpha: f64) -> f64 {
    1.0 - binary_renyi_entropy(p, alpha)
}

#[test]
fn bsc_matches_closed_form_and_grid() {
    for p in [0.05, 0.1, 0.2, 0.35] {
        let w = Channel::bsc(p).unwrap();
        for a in [0.3, 0.5, 1.0, 2.0, 4.0, f64::INFINITY] {
            let res = renyi_capacity(&w, order(a), DEFAULT_TOL).unwrap();
            let exact = bsc_capacity(p, a);
            assert!((res.value - exact).abs() < 1e-6, "p={p} α={a}: {} vs {exact}", res.value);
            let grid = binary_output_grid_capacity(&w, a, 1e-4);
            assert!((grid - exact).abs() < 1e-6, "grid oracle p={p} α={a}");
            assert!(res.duality_gap <= DEFAULT_TOL);
        }
    }
}

#[test]
fn identity_and_constant_channels() {
    for k in [2usize, 3, 5] {
        let w = Channel::identity(k);
        for a in [0.0, 0.5, 1.0, 3.0, f64::INFINITY] {
            let v = renyi_capacity(&w, order(a), DEFAULT_TOL).unwrap().value;
            assert!((v - (k as f64).log2()).abs() < 1e-6, "k={k} α={a}: {v}");
        }
        let c = Channel::constant(&Distribution::new(vec![1.0; k]).unwrap(), 3);
        for a in [0.0, 0.5, 1.0, 3.0, f64::INFINITY] {
            assert!(renyi_capacity(&c, order(a), DEFAULT_TOL).unwrap().value.abs() < 1e-9);
        }
    }
}

#[test]
fn order_infinity_and_zero_closed_forms() {
    let mut r = rng(11);
    for _ in 0..20 {
        let w = random_channel(&mut r, 3, 3);
        let sum_max: f64 = (0..3).map(|y| (0..3).map(|x| w.get(x, y)).fold(0.0, f64::max)).sum();
        let v = renyi_capacity(&w, RenyiOrder::Infinity, DEFAULT_TOL).unwrap().value;
        assert!((v - sum_max.log2()).abs() < 1e-9);
        // full support in every row: no output can be ruled out
        assert!(renyi_capacity(&w, RenyiOrder::Zero, DEFAULT_TOL).unwrap().value.abs() < 1e-9);
    }
    let bec = Channel::bec(0.3).unwrap();
    let v = renyi_capacity(&bec, RenyiOrder::Zero, DEFAULT_TOL).unwrap().value;
    assert!(v.abs() < 1e-9, "erasure is reachable from every input: {v}");
    // outputs 0 and 1 are each reachable from one of the first two inputs
    let z = Channel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
    let v = renyi_capacity(&z, RenyiOrder::Zero, DEFAULT_TOL).unwrap().value;
    assert!((v - 1.0).abs() < 1e-9, "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Weak duality both ways: every input gives `I_α(P, W) ≤ I_α(W)` and
    /// every output law gives `max_x D_α(W_x‖Q) ≥ I_α(W)`.
    #[test]
    fn capacity_is_a_saddle_value(seed in any::<u64>(), nx in 2usize..5, ny in 2usize..5, a_idx in 0usize..5) {
        let a = [0.5, 1.0, 1.5, 2.0, 4.0][a_idx];
        let mut r = rng(seed);
        let w = random_channel(&mut r, nx, ny);
        let res = renyi_capacity(&w, order(a), DEFAULT_TOL).unwrap();
        prop_assert!(res.duality_gap <= DEFAULT_TOL);
        prop_assert!(res.primal_value <= res.value + 1e-12);
        for _ in 0..10 {
            let p = common::random_distribution(&mut r, nx);
            let joint = JointDistribution::from_input_and_channel(&p, &w).unwrap();
            prop_assert!(renyi_mutual_information(&joint, order(a)) <= res.value + 1e-9);
            let q = common::random_probs(&mut r, ny);
            let worst = (0..nx).map(|x| divergence_bits(w.row(x), &q, a)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(worst >= res.primal_value - 1e-9);
        }
        let q = res.optimal_output.probs();
        let worst = (0..nx).map(|x| divergence_bits(w.row(x), q, a)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((worst - res.value).abs() < 1e-9);
    }

    #[test]
    fn capacity_nondecreasing_in_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_channel(&mut r, 3, 3);
        let vals: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, f64::INFINITY]
            .iter()
            .map(|&a| renyi_capacity(&w, order(a), DEFAULT_TOL).unwrap().value)
            .collect();
        for p in vals.windows(2) {
            prop_assert!(p[0] <= p[1] + 2e-6, "{vals:?}");
        }
    }
}

#[test]
fn duplicate_rows_do_not_change_capacity() {
    let w = Channel::bsc(0.15).unwrap();
    let dup = Channel::new(vec![w.row(0).to_vec(), w.row(1).to_vec(), w.row(0).to_vec()]).unwrap();
    for a in [0.5, 1.0, 2.0] {
        let a1 = renyi_capacity(&w, order(a), DEFAULT_TOL).unwrap().value;
        let a2 = renyi_capacity(&dup, order(a), DEFAULT_TOL).unwrap();
        assert!((a1 - a2.value).abs() < 1e-6);
        assert_eq!(a2.optimal_input.len(), 3);
    }
}

#[test]
fn right_derivative_matches_closed_form() {
    let p = 0.1;
    let w = Channel::bsc(p).unwrap();
    let g = |t: f64| t * bsc_capacity(p, 1.0 + t);
    for t in [0.25, 0.5, 1.0, 2.0] {
        let h = 1e-5;
        let exact = (g(t + h) - g(t - h)) / (2.0 * h);
        let d = capacity_right_derivative(&w, t, 1e-3).unwrap();
        assert!((d.value - exact).abs() < 1e-5, "t={t}: {} vs {exact}", d.value);
        assert!(!d.kink_suspected);
    }
}

#[test]
fn sup_t_matches_dense_grid() {
    let p = 0.1;
    let w = Channel::bsc(p).unwrap();
    let i_inf = bsc_capacity(p, f64::INFINITY);
    for r in [0.55, 0.65, 0.75, 0.8] {
        let (t, v) = sup_t_objective(&w, r, 0.0).unwrap();
        let grid = (0..=40_000)
            .map(|k| k as f64 * 1e-3)
            .map(|t| if t == 0.0 { 0.0 } else { t * (r - bsc_capacity(p, 1.0 + t)) })
            .fold(f64::NEG_INFINITY, f64::max);
        let v = v.finite().unwrap();
        assert!((v - grid).abs() < 1e-5, "r={r}: {v} vs {grid}");
        assert!(v >= grid - 1e-9);
        assert!(t.finite().unwrap() >= 0.0);
    }
    let (t, v) = sup_t_objective(&w, i_inf + 1e-3, 0.0).unwrap();
    assert!(t.is_infinite() && v.is_infinite());
}

#[test]
fn reliability_regimes() {
    let w = Channel::bsc(0.1).unwrap();
    let i1 = bsc_capacity(0.1, 1.0);
    let i_inf = bsc_capacity(0.1, f64::INFINITY);
    let below = reliability_function(&w, i1 - 0.05, RenyiOrder::One).unwrap();
    assert_eq!(below.value, Extended::Finite(0.0));
    let above = reliability_function(&w, i_inf + 0.01, RenyiOrder::One).unwrap();
    assert_eq!(above.value, Extended::Infinite);
    // at order 1 + s only t ≥ s is allowed
    let r = 0.75;
    let rf2 = reliability_function(&w, r, order(2.0)).unwrap().value.finite().unwrap();
    let grid = (1000..=40_000)
        .map(|k| k as f64 * 1e-3)
        .map(|t| t * (r - bsc_capacity(0.1, 1.0 + t)))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    assert!((rf2 - grid).abs() < 1e-5, "{rf2} vs {grid}");
    // order ∞ below I_∞: no decay at all
    assert_eq!(reliability_function(&w, 0.8, RenyiOrder::Infinity).unwrap().value, Extended::Finite(0.0));
}

#[test]
fn strong_converse_beta_form_matches_grid() {
    let p = 0.1;
    let w = Channel::bsc(p).unwrap();
    for alpha in [0.3, 0.5, 0.7] {
        for r in [0.1, 0.3, 0.45] {
            let v = strong_converse_exponent(&w, r, order(alpha)).unwrap().value.finite().unwrap();
            let grid = (0..=20_000)
                .map(|k| alpha + (1.0 - alpha) * k as f64 / 20_000.0)
                .map(|b| {
                    if b >= 1.0 {
                        0.0
                    } else {
                        alpha * (1.0 - b) / (b * (1.0 - alpha)) * (bsc_capacity(p, b) - r)
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((v - grid).abs() < 1e-6, "α={alpha} r={r}: {v} vs {grid}");
        }
    }
    // order ≥ 1: |I_α − r|⁺
    let v = strong_converse_exponent(&w, 0.2, order(2.0)).unwrap().value.finite().unwrap();
    assert!((v - (bsc_capacity(p, 2.0) - 0.2)).abs() < 1e-6);
}

#[test]
fn variational_form_agrees_on_binary_channels() {
    let mut r = rng(5);
    for _ in 0..3 {
        let w = random_channel(&mut r, 2, 2);
        let i1 = renyi_capacity(&w, RenyiOrder::One, DEFAULT_TOL).unwrap().value;
        for alpha in [0.4, 0.6] {
            let rate = 0.5 * i1;
            let beta = strong_converse_exponent(&w, rate, order(alpha)).unwrap().value.finite().unwrap();
            let var = variational_sc_exponent(&w, rate, alpha).unwrap().value;
            assert!((beta - var).abs() < 1e-3, "α={alpha}: {beta} vs {var}");
        }
    }
}

#[test]
fn tilted_objective_matches_dense_grid() {
    let w = Channel::bsc(0.1).unwrap();
    let p = Distribution::new(vec![0.4, 0.6]).unwrap();
    for (alpha, r) in [(0.5, 0.2), (0.3, 0.4), (0.7, 0.1)] {
        let c = alpha / (1.0 - alpha);
        let tc = tilted_channel(&w, &p, r, alpha).unwrap();
        let objective = |a: f64, b: f64| -> f64 {
            let hat = Channel::new(vec![vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap();
            let joint = JointDistribution::from_input_and_channel(&p, &hat).unwrap();
            let d: f64 = (0..2).map(|x| p.probs()[x] * divergence_bits(hat.row(x), w.row(x), 1.0)).sum();
            c * d + (renyi_mutual_information(&joint, RenyiOrder::One) - r).max(0.0)
        };
        let steps = 400;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                best = best.min(objective(i as f64 / steps as f64, j as f64 / steps as f64));
            }
        }
        let at = objective(tc.channel.get(0, 1), tc.channel.get(1, 0));
        assert!((at - tc.value).abs() < 1e-6, "reported value matches its channel");
        assert!(tc.value <= best + 1e-9, "α={alpha}: solver {} above grid {best}", tc.value);
        assert!(best - tc.value < 1e-3, "α={alpha}: grid {best} vs {}", tc.value);
        assert!((0.0..=1.0).contains(&tc.mu));
    }
}

#[test]
fn simulation_rate_sign_test() {
    let w = Channel::bsc(0.1).unwrap();
    for a in [0.5, 1.0, 2.0, f64::INFINITY] {
        let o = order(a);
        let rate = renyi_simulation_rate(&w, o).unwrap();
        let expect = if a < 1.0 { bsc_capacity(0.1, 1.0) } else { bsc_capacity(0.1, a) };
        assert!((rate - expect).abs() < 1e-6);
        let rf = reliability_function(&w, rate + 0.02, o).unwrap().value;
        let sc = strong_converse_exponent(&w, rate - 0.02, o).unwrap().value;
        assert!(rf > Extended::Finite(0.0), "α={a}: E_rf = {rf}");
        assert!(sc > Extended::Finite(0.0), "α={a}: E_sc = {sc}");
    }
}

#[test]
fn exponent_errors() {
    let w = Channel::bsc(0.1).unwrap();
    assert!(reliability_function(&w, -0.1, RenyiOrder::One).is_err());
    assert!(reliability_function(&w, f64::NAN, RenyiOrder::One).is_err());
    assert!(variational_sc_exponent(&w, 0.1, 1.0).is_err());
    assert!(variational_sc_exponent(&w, 0.1, 0.0).is_err());
    assert!(renyi_capacity(&w, RenyiOrder::One, 0.0).is_err());
}
