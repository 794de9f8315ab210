//! Helpers shared by the integration tests. Everything here is computed
//! straight from definitions, without going through the library's numerics.

#![allow(dead_code)]

use chansim::{Channel, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector with every entry positive.
pub fn random_probs<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// Like [`random_probs`], but each entry is zeroed with probability
/// `zero_p` (at least one entry survives).
pub fn random_sparse_probs<R: Rng>(rng: &mut R, k: usize, zero_p: f64) -> Vec<f64> {
    let keep = rng.gen_range(0..k);
    let v: Vec<f64> = (0..k)
        .map(|i| {
            if i != keep && rng.gen::<f64>() < zero_p {
                0.0
            } else {
                -rng.gen::<f64>().max(1e-12).ln()
            }
        })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn random_distribution<R: Rng>(rng: &mut R, k: usize) -> Distribution {
    Distribution::new(random_probs(rng, k)).unwrap()
}

pub fn random_channel<R: Rng>(rng: &mut R, nx: usize, ny: usize) -> Channel {
    Channel::new((0..nx).map(|_| random_probs(rng, ny)).collect()).unwrap()
}

/// `D_α(p‖q)` in bits from the textbook formulas.
pub fn divergence_bits(p: &[f64], q: &[f64], alpha: f64) -> f64 {
    let pairs = p.iter().zip(q).filter(|(a, _)| **a > 0.0);
    if alpha == 0.0 {
        let m: f64 = p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(_, b)| b).sum();
        return -m.log2();
    }
    if alpha == 1.0 {
        return pairs
            .map(|(a, b)| if *b == 0.0 { f64::INFINITY } else { a * (a / b).log2() })
            .sum();
    }
    if alpha.is_infinite() {
        return pairs.map(|(a, b)| (a / b).log2()).fold(f64::NEG_INFINITY, f64::max);
    }
    if alpha > 1.0 && pairs.clone().any(|(_, b)| *b == 0.0) {
        return f64::INFINITY;
    }
    let s: f64 = pairs.map(|(a, b)| a.powf(alpha) * b.powf(1.0 - alpha)).sum();
    s.log2() / (alpha - 1.0)
}

/// Binary Rényi entropy in bits.
pub fn binary_renyi_entropy(p: f64, alpha: f64) -> f64 {
    if alpha.is_infinite() {
        return -p.max(1.0 - p).log2();
    }
    if alpha == 1.0 {
        return -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
    }
    (p.powf(alpha) + (1.0 - p).powf(alpha)).log2() / (1.0 - alpha)
}

/// `min_q max_x D_α(W_x‖(q, 1−q))` over the grid `q ∈ {k·step}`.
pub fn binary_output_grid_capacity(w: &Channel, alpha: f64, step: f64) -> f64 {
    let steps = (1.0 / step).round() as usize;
    (1..steps)
        .map(|k| {
            let q = [k as f64 * step, 1.0 - k as f64 * step];
            (0..w.input_size())
                .map(|x| divergence_bits(w.row(x), &q, alpha))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Output law of a chain of accept/reject stages, found by walking every
/// branch of the outcome tree. At stage `j` a symbol `x ~ Q` is drawn and
/// kept with probability `stages[j][x]`; if every stage rejects, the
/// receiver draws a fresh symbol from `Q`.
pub fn brute_force_tree(stages: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
    fn walk(stages: &[Vec<f64>], q: &[f64], reach: f64, out: &mut [f64]) {
        let Some((stage, rest)) = stages.split_first() else {
            for (o, qq) in out.iter_mut().zip(q) {
                *o += reach * qq;
            }
            return;
        };
        for x in 0..q.len() {
            if q[x] == 0.0 {
                continue;
            }
            let branch = reach * q[x];
            out[x] += branch * stage[x];
            let stay = branch * (1.0 - stage[x]);
            if stay > 0.0 {
                walk(rest, q, stay, out);
            }
        }
    }
    let mut out = vec![0.0; q.len()];
    walk(stages, q, 1.0, &mut out);
    out
}

/// Every word of length `n` over `0..k`, lexicographic.
pub fn all_words(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..k).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// `n!/(∏ c_i!)` as a float, fine for the small sizes used in tests.
pub fn multinomial(counts: &[usize]) -> f64 {
    let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
    fact(counts.iter().sum()) / counts.iter().map(|&c| fact(c)).product::<f64>()
}

/// Number of types of length `n` over `k` letters.
pub fn type_count(k: usize, n: usize) -> f64 {
    multinomial(&[n, k - 1])
}

/// Counts of each letter in a word.
pub fn counts_of(word: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &a in word {
        c[a] += 1;
    }
    c
}

/// The schedule recursions, written out step by step: `a_j`, `p_j`, `s_j`
/// with the offer `(1 − λ + s_{j−1})·Q` (λ = 1 for the standard schedule).
pub struct Recursion {
    pub a: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

pub fn recursion(target: &[f64], q: &[f64], n: usize, lambda: f64) -> Recursion {
    let mut rec = Recursion {
        a: Vec::new(),
        p: vec![target.to_vec()],
        s: vec![target.iter().sum()],
    };
    for j in 1..=n {
        let prev = rec.p[j - 1].clone();
        let offer = 1.0 - lambda + rec.s[j - 1];
        let a: Vec<f64> = prev
            .iter()
            .zip(q)
            .map(|(pp, qq)| if *pp <= 0.0 || *qq == 0.0 { 0.0 } else { (pp / (offer * qq)).min(1.0) })
            .collect();
        let next: Vec<f64> = (0..q.len()).map(|x| (prev[x] - offer * q[x] * a[x]).max(0.0)).collect();
        rec.s.push(next.iter().sum());
        rec.p.push(next);
        rec.a.push(a);
    }
    rec
}

/// Target and proposal with `supp(P) ⊆ supp(Q)` over up to four letters.
pub fn random_pair<R: Rng>(r: &mut R) -> (Vec<f64>, Vec<f64>) {
    let k = r.gen_range(2..=4);
    let q = random_sparse_probs(r, k, 0.2);
    let raw: Vec<f64> = random_sparse_probs(r, k, 0.3)
        .iter()
        .zip(&q)
        .map(|(p, qq)| if *qq > 0.0 { *p } else { 0.0 })
        .collect();
    let p = if raw.iter().sum::<f64>() > 0.0 { raw } else { q.clone() };
    let s: f64 = p.iter().sum();
    (p.iter().map(|v| v / s).collect(), q)
}
