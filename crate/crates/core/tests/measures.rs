mod common;

use chansim::{
    channel_divergence, renyi_divergence, renyi_fidelity, renyi_mutual_information, Channel, Distribution, Extended,
    JointDistribution, NonnegVector, RenyiOrder,
};
use common::divergence_bits;
use proptest::prelude::*;

const ORDERS: [f64; 9] = [0.0, 0.2, 0.5, 0.9, 1.0, 1.5, 2.0, 4.0, f64::INFINITY];

fn order(a: f64) -> RenyiOrder {
    RenyiOrder::new(a).unwrap()
}

fn div(p: &[f64], q: &[f64], a: f64) -> f64 {
    renyi_divergence(
        &Distribution::new(p.to_vec()).unwrap(),
        &NonnegVector::new(q.to_vec()).unwrap(),
        order(a),
    )
    .unwrap()
    .to_f64()
}

/// `a ≤ b` up to a relative tolerance, with `∞ ≤ ∞`.
fn le(a: f64, b: f64) -> bool {
    a == b || a <= b + 1e-10 * (1.0 + a.abs().min(b.abs()))
}

fn close(a: f64, b: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= 1e-10 * (1.0 + a.abs())
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Probability vectors of length `k`; a third of the entries may vanish.
fn probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 2 => 0.01f64..1.0], k)
        .prop_filter("needs mass", |v| v.iter().any(|&x| x > 0.0))
        .prop_map(normalized)
}

fn positive_probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(normalized)
}

fn pair(k: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (probs(k), probs(k))
}

fn stochastic(nx: usize, ny: usize) -> impl Strategy<Value = Channel> {
    prop::collection::vec(probs(ny), nx).prop_map(|rows| Channel::new(rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_direct_formula((p, q) in (2usize..6).prop_flat_map(pair)) {
        for a in ORDERS {
            prop_assert!(close(div(&p, &q, a), divergence_bits(&p, &q, a)), "order {a}");
        }
    }

    #[test]
    fn nondecreasing_in_order((p, q) in (2usize..6).prop_flat_map(pair)) {
        let values: Vec<f64> = ORDERS.iter().map(|&a| div(&p, &q, a)).collect();
        for w in values.windows(2) {
            prop_assert!(le(w[0], w[1]), "{values:?}");
        }
    }

    #[test]
    fn additive_over_products(
        (p1, q1) in (2usize..4).prop_flat_map(pair),
        (p2, q2) in (2usize..4).prop_flat_map(pair),
    ) {
        let pp = Distribution::new(p1.clone()).unwrap().product(&Distribution::new(p2.clone()).unwrap());
        let qq = Distribution::new(q1.clone()).unwrap().product(&Distribution::new(q2.clone()).unwrap());
        for a in ORDERS {
            let joint = div(pp.probs(), qq.probs(), a);
            let sum = div(&p1, &q1, a) + div(&p2, &q2, a);
            prop_assert!(close(joint, sum), "order {a}: {joint} vs {sum}");
        }
    }

    #[test]
    fn data_processing(
        (p, q) in (2usize..5).prop_flat_map(pair),
        seed in any::<u64>(),
        ny in 2usize..5,
    ) {
        let mut rng = common::rng(seed);
        let w = common::random_channel(&mut rng, p.len(), ny);
        let pw = w.output_distribution(&Distribution::new(p.clone()).unwrap()).unwrap();
        let qw = w.output_distribution(&Distribution::new(q.clone()).unwrap()).unwrap();
        for a in ORDERS {
            prop_assert!(le(div(pw.probs(), qw.probs(), a), div(&p, &q, a)), "order {a}");
        }
    }

    #[test]
    fn fidelity_is_exponential_of_divergence((p, q) in (2usize..5).prop_flat_map(pair)) {
        let pd = Distribution::new(p.clone()).unwrap();
        let qn = NonnegVector::new(q.clone()).unwrap();
        for a in ORDERS {
            let f = renyi_fidelity(&pd, &qn, order(a)).unwrap();
            let d = div(&p, &q, a);
            prop_assert!((f - (-d).exp2()).abs() < 1e-12);
        }
    }

    #[test]
    fn nonnegative_and_zero_on_equal(p in (2usize..6).prop_flat_map(positive_probs), q in (2usize..6).prop_flat_map(positive_probs)) {
        for a in ORDERS {
            prop_assert!(div(&p, &p, a).abs() < 1e-12);
            if p.len() == q.len() {
                prop_assert!(div(&p, &q, a) >= -1e-12);
            }
        }
    }

    /// `I_α(X:Y) = min_Q D_α(P_XY‖P_X×Q)`: any `Q` gives an upper bound,
    /// and a fine grid over binary `Q` comes within the grid error.
    #[test]
    fn mutual_information_is_a_minimum(px in positive_probs(3), w in stochastic(3, 2), q in positive_probs(2)) {
        let p = Distribution::new(px.clone()).unwrap();
        let joint = JointDistribution::from_input_and_channel(&p, &w).unwrap();
        let jp = joint.as_distribution();
        let qd = Distribution::new(q.clone()).unwrap();
        for a in [0.5, 1.0, 2.0, f64::INFINITY] {
            let i = renyi_mutual_information(&joint, order(a));
            let reference = joint.product_of_marginal(&qd);
            prop_assert!(le(i, div(jp.probs(), reference.values(), a)));
            let grid = (0..=2000)
                .map(|k| {
                    let g = Distribution::new(vec![k as f64 / 2000.0, 1.0 - k as f64 / 2000.0]).unwrap();
                    divergence_bits(jp.probs(), joint.product_of_marginal(&g).values(), a)
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(i <= grid + 1e-9 && grid - i < 2e-3, "order {a}: {i} vs grid {grid}");
        }
    }

    #[test]
    fn channel_divergence_is_row_maximum(w in stochastic(3, 3), n in stochastic(3, 3)) {
        for a in ORDERS {
            let (v, arg) = channel_divergence(&w, &n, order(a)).unwrap();
            let rows: Vec<f64> = (0..3).map(|x| divergence_bits(w.row(x), n.row(x), a)).collect();
            let best = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(close(v.to_f64(), best));
            prop_assert!(close(rows[arg], best));
        }
    }
}

#[test]
fn orders_parse_and_print() {
    assert_eq!("inf".parse::<RenyiOrder>().unwrap(), RenyiOrder::Infinity);
    assert_eq!("1".parse::<RenyiOrder>().unwrap(), RenyiOrder::One);
    assert_eq!("0".parse::<RenyiOrder>().unwrap(), RenyiOrder::Zero);
    assert_eq!(RenyiOrder::new(2.5).unwrap().to_string(), "2.5");
    assert_eq!(RenyiOrder::Infinity.to_string(), "inf");
    assert!("-1".parse::<RenyiOrder>().is_err());
    assert!("abc".parse::<RenyiOrder>().is_err());
}

#[test]
fn support_mismatch_is_infinite_above_one() {
    let d = div(&[0.5, 0.5], &[1.0, 0.0], 2.0);
    assert!(d.is_infinite());
    let d = div(&[0.5, 0.5], &[1.0, 0.0], 0.5);
    assert!((d - divergence_bits(&[0.5, 0.5], &[1.0, 0.0], 0.5)).abs() < 1e-12);
    assert_eq!(
        renyi_divergence(&Distribution::new(vec![0.5, 0.5]).unwrap(), &NonnegVector::new(vec![1.0, 0.0]).unwrap(), RenyiOrder::One)
            .unwrap(),
        Extended::Infinite
    );
}

#[test]
fn bad_inputs_are_rejected() {
    assert_eq!(Distribution::new(vec![1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
    assert!(Distribution::new(vec![0.0, 0.0]).is_err());
    assert!(Distribution::new(vec![]).is_err());
    assert!(Distribution::new(vec![1.0, -0.0 - 1e-3]).is_err());
    assert!(NonnegVector::new(vec![f64::NAN]).is_err());
    let p = Distribution::uniform(2);
    assert!(renyi_divergence(&p, &NonnegVector::new(vec![1.0, 1.0, 1.0]).unwrap(), RenyiOrder::One).is_err());
    assert!(Channel::new(vec![vec![0.5, 0.5], vec![0.2, 0.7]]).is_err());
}
