//! Method of types: compositions, class sizes, the symmetric law `Φ` on
//! `Y^n`, and exact type-level sums over product distributions.
//!
//! Log quantities returned to callers are in bits.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{sup_t_generic, ExponentError};
use crate::logmath::{ln_factorials, ln_or_neg_inf, log_sum_exp, log_sum_exp_slice, LOG2_E};
use crate::measures::{
    class_divergence_nats, mutual_information_parts, ClassTerm, Extended, JointDistribution,
    RenyiOrder,
};
use crate::par;

/// Default cap on the number of enumerated types.
pub const DEFAULT_TYPE_CAP: usize = 1 << 22;
/// Relative slack used when a type sits on the threshold of an event.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypesError {
    #[error("{count} types exceed the cap of {cap}")]
    CapExceeded { count: f64, cap: usize },
    #[error("type needs a nonempty alphabet and positive length")]
    Empty,
    #[error("type of length {expected} expected, got length {got}")]
    LengthMismatch { expected: u32, got: u32 },
    #[error(transparent)]
    Exponent(#[from] ExponentError),
}

/// Counts of each symbol in a word of length `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeVector {
    counts: Vec<u32>,
    n: u32,
}

impl TypeVector {
    pub fn new(counts: Vec<u32>) -> Result<Self, TypesError> {
        let n: u32 = counts.iter().sum();
        if counts.is_empty() || n == 0 {
            return Err(TypesError::Empty);
        }
        Ok(TypeVector { counts, n })
    }

    /// Type of a word over `0..alphabet_size`.
    pub fn of_word(word: &[usize], alphabet_size: usize) -> Result<Self, TypesError> {
        let mut counts = vec![0u32; alphabet_size];
        for &s in word {
            *counts.get_mut(s).ok_or(TypesError::Empty)? += 1;
        }
        TypeVector::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    /// Exact multinomial `n! / Π c!`.
    pub fn class_size(&self) -> BigUint {
        multinomial(&self.counts)
    }

    /// `log₂` of the class size.
    pub fn log_class_size(&self) -> f64 {
        let table = ln_factorials(self.n as usize);
        ln_multinomial(&table, &self.counts) * LOG2_E
    }

    /// One word of this type, symbols in increasing order.
    pub fn representative(&self) -> Vec<usize> {
        let mut word = Vec::with_capacity(self.n as usize);
        for (s, &c) in self.counts.iter().enumerate() {
            word.extend(std::iter::repeat(s).take(c as usize));
        }
        word
    }
}

fn multinomial(counts: &[u32]) -> BigUint {
    let mut acc = BigUint::from(1u32);
    let mut placed = 0u64;
    // C(placed + c, c) built up one factor at a time stays integral
    for &c in counts {
        for k in 1..=c as u64 {
            placed += 1;
            acc *= placed;
            acc /= k;
        }
    }
    acc
}

pub(crate) fn ln_multinomial(table: &[f64], counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    table[n as usize] - counts.iter().map(|&c| table[c as usize]).sum::<f64>()
}

/// Lexicographic walk over compositions of `n` into `k` parts, starting at
/// `(0, …, 0, n)`.
pub(crate) struct Compositions {
    current: Vec<u32>,
    done: bool,
}

impl Compositions {
    pub(crate) fn new(k: usize, n: u32) -> Self {
        let mut current = vec![0; k];
        if let Some(last) = current.last_mut() {
            *last = n;
        }
        Compositions {
            current,
            done: k == 0,
        }
    }

    pub(crate) fn current(&self) -> Option<&[u32]> {
        (!self.done).then_some(self.current.as_slice())
    }

    pub(crate) fn advance(&mut self) {
        let k = self.current.len();
        let mut right = 0;
        for i in (0..k.saturating_sub(1)).rev() {
            right += self.current[i + 1];
            if right > 0 {
                self.current[i] += 1;
                for v in &mut self.current[i + 1..] {
                    *v = 0;
                }
                self.current[k - 1] = right - 1;
                return;
            }
        }
        self.done = true;
    }
}

/// `|P_n(A)| = C(n + a − 1, a − 1)`.
pub fn num_types(alphabet_size: usize, n: u32) -> BigUint {
    if alphabet_size == 0 {
        return BigUint::from(0u32);
    }
    let mut counts = vec![0u32; 2];
    counts[0] = n;
    counts[1] = alphabet_size as u32 - 1;
    multinomial(&counts)
}

fn num_types_f64(alphabet_size: usize, n: u32) -> f64 {
    let table = ln_factorials(n as usize + alphabet_size);
    (table[n as usize + alphabet_size - 1] - table[n as usize] - table[alphabet_size - 1]).exp()
}

/// All types of length `n`, lexicographic in the counts.
pub fn enumerate_types(alphabet_size: usize, n: u32) -> Result<Vec<TypeVector>, TypesError> {
    enumerate_types_capped(alphabet_size, n, DEFAULT_TYPE_CAP)
}

pub fn enumerate_types_capped(alphabet_size: usize, n: u32, cap: usize) -> Result<Vec<TypeVector>, TypesError> {
    if alphabet_size == 0 || n == 0 {
        return Err(TypesError::Empty);
    }
    let count = num_types_f64(alphabet_size, n);
    if count > cap as f64 {
        return Err(TypesError::CapExceeded { count, cap });
    }
    let mut out = Vec::with_capacity(count.round() as usize);
    let mut walk = Compositions::new(alphabet_size, n);
    while let Some(c) = walk.current() {
        out.push(TypeVector {
            counts: c.to_vec(),
            n,
        });
        walk.advance();
    }
    Ok(out)
}

/// `Φ_{Y^n}`: uniform over types, then uniform within the class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricTypeMixture {
    pub n: u32,
    pub alphabet_size: usize,
}

impl SymmetricTypeMixture {
    pub fn new(alphabet_size: usize, n: u32) -> Result<Self, TypesError> {
        if alphabet_size == 0 || n == 0 {
            return Err(TypesError::Empty);
        }
        Ok(SymmetricTypeMixture { n, alphabet_size })
    }

    pub(crate) fn ln_num_types(&self) -> f64 {
        let table = ln_factorials(self.n as usize + self.alphabet_size);
        table[self.n as usize + self.alphabet_size - 1]
            - table[self.n as usize]
            - table[self.alphabet_size - 1]
    }

    /// `log₂ Φ(y^n)` for any word of the given type.
    pub fn log_word_mass(&self, y_type: &TypeVector) -> Result<f64, TypesError> {
        self.check(y_type)?;
        Ok(-self.ln_num_types() * LOG2_E - y_type.log_class_size())
    }

    /// `Φ(y^n)` for a concrete word.
    pub fn word_mass(&self, word: &[usize]) -> Result<f64, TypesError> {
        let t = TypeVector::of_word(word, self.alphabet_size)?;
        Ok(self.log_word_mass(&t)?.exp2())
    }

    /// `Σ_S |T_S|·Φ(S)`, which should be one.
    pub fn total_mass(&self) -> Result<f64, TypesError> {
        let types = enumerate_types(self.alphabet_size, self.n)?;
        let lns: Vec<f64> = types
            .iter()
            .map(|t| (t.log_class_size() + self.log_word_mass(t).unwrap_or(f64::NEG_INFINITY)) / LOG2_E)
            .collect();
        Ok(log_sum_exp_slice(&lns).exp())
    }

    fn check(&self, t: &TypeVector) -> Result<(), TypesError> {
        if t.alphabet_size() != self.alphabet_size {
            return Err(TypesError::Empty);
        }
        if t.n() != self.n {
            return Err(TypesError::LengthMismatch {
                expected: self.n,
                got: t.n(),
            });
        }
        Ok(())
    }
}

/// `log₂ Φ(y^n)` for a word of type `y_type`.
pub fn phi_log_mass(y_type: &TypeVector) -> f64 {
    let phi = SymmetricTypeMixture {
        n: y_type.n(),
        alphabet_size: y_type.alphabet_size(),
    };
    phi.log_word_mass(y_type).expect("type matches its own mixture")
}

/// One joint type of `(x^n, y^n)` restricted to the support of `P_XY`,
/// reduced to the numbers every type-level sum needs (natural logs).
#[derive(Clone, Copy, Debug)]
pub(crate) struct JointClass {
    /// `ln` of the number of word pairs with this joint type.
    pub ln_mult: f64,
    /// `ln P^n(x^n, y^n)` per pair.
    pub ln_p: f64,
    /// `ln (P_X^n × Φ)(x^n, y^n)` per pair.
    pub ln_ref: f64,
}

struct JointLayout {
    cells: Vec<(usize, usize)>,
    ln_pxy: Vec<f64>,
    ln_px: Vec<f64>,
    ny: usize,
}

impl JointLayout {
    fn new(pxy: &JointDistribution) -> Self {
        let cells: Vec<(usize, usize)> = (0..pxy.nx())
            .flat_map(|x| (0..pxy.ny()).map(move |y| (x, y)))
            .filter(|&(x, y)| pxy.get(x, y) > 0.0)
            .collect();
        let ln_pxy = cells.iter().map(|&(x, y)| pxy.get(x, y).ln()).collect();
        let ln_px = pxy.marginal_x().probs().iter().map(|&v| ln_or_neg_inf(v)).collect();
        JointLayout {
            cells,
            ln_pxy,
            ln_px,
            ny: pxy.ny(),
        }
    }
}

fn check_joint_size(cells: usize, n: u32) -> Result<(), TypesError> {
    let count = num_types_f64(cells, n);
    if count > DEFAULT_TYPE_CAP as f64 * 4.0 {
        return Err(TypesError::CapExceeded {
            count,
            cap: DEFAULT_TYPE_CAP * 4,
        });
    }
    Ok(())
}

/// Folds `f` over every joint type of length `n`, split on the count of the
/// first support cell so that chunks can run in parallel. Chunk results come
/// back in a fixed order.
fn fold_joint_classes<A, F>(pxy: &JointDistribution, n: u32, f: F) -> Result<Vec<A>, TypesError>
where
    A: Send,
    F: Fn(&mut Vec<A>, JointClass) + Sync + Send,
{
    if n == 0 {
        return Err(TypesError::Empty);
    }
    let layout = JointLayout::new(pxy);
    let k = layout.cells.len();
    check_joint_size(k, n)?;
    let table = ln_factorials(n as usize);
    let phi = SymmetricTypeMixture::new(layout.ny, n)?;
    let ln_types_y = phi.ln_num_types();
    let firsts: Vec<u32> = (0..=n).collect();
    let chunks = par::map(firsts, |c0| {
        let mut acc = Vec::new();
        let mut counts = vec![0u32; k];
        counts[0] = c0;
        let mut walk = Compositions::new(k - 1, n - c0);
        if k == 1 {
            if c0 == n {
                f(&mut acc, joint_class(&layout, &table, ln_types_y, &counts));
            }
            return acc;
        }
        while let Some(rest) = walk.current() {
            counts[1..].copy_from_slice(rest);
            f(&mut acc, joint_class(&layout, &table, ln_types_y, &counts));
            walk.advance();
        }
        acc
    });
    Ok(chunks.into_iter().flatten().collect())
}

fn joint_class(layout: &JointLayout, table: &[f64], ln_types_y: f64, counts: &[u32]) -> JointClass {
    let mut x_counts = vec![0u32; layout.ln_px.len()];
    let mut y_counts = vec![0u32; layout.ny];
    let mut ln_p = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let (x, y) = layout.cells[i];
        x_counts[x] += c;
        y_counts[y] += c;
        ln_p += c as f64 * layout.ln_pxy[i];
    }
    let ln_px_word: f64 = x_counts
        .iter()
        .zip(&layout.ln_px)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &l)| c as f64 * l)
        .sum();
    let ln_phi = -ln_types_y - ln_multinomial(table, &y_counts);
    JointClass {
        ln_mult: ln_multinomial(table, counts),
        ln_p,
        ln_ref: ln_px_word + ln_phi,
    }
}

/// Collects every joint class of length `n` (support of `P_XY` only).
pub(crate) fn joint_classes(pxy: &JointDistribution, n: u32) -> Result<Vec<JointClass>, TypesError> {
    fold_joint_classes(pxy, n, |acc, c| acc.push(c))
}

/// `D_α(P_XY^{⊗n} ‖ P_X^{⊗n} × Φ_{Y^n})` in bits, exact up to rounding.
pub fn symmetric_divergence(pxy: &JointDistribution, n: u32, order: RenyiOrder) -> Result<f64, TypesError> {
    let terms: Vec<ClassTerm> = joint_classes(pxy, n)?
        .into_iter()
        .map(|c| ClassTerm {
            ln_mult: c.ln_mult,
            ln_p: c.ln_p,
            ln_q: c.ln_ref,
        })
        .collect();
    Ok(class_divergence_nats(&terms, order) * LOG2_E)
}

/// `log₂ g(n) = k·log₂(n + 1)`.
pub fn log_g(n: u32, g_exponent_poly: u32) -> f64 {
    g_exponent_poly as f64 * ((n + 1) as f64).log2()
}

/// Default polynomial degree of `g`: `|Y| + 1`.
pub fn default_g_exponent(pxy: &JointDistribution) -> u32 {
    pxy.ny() as u32 + 1
}

/// `P^{⊗n}(P^{⊗n} ≥ g(n)·2^{nr}·P_X^{⊗n} × Φ)`, summed over joint types.
///
/// A type on the threshold (within a relative `1e-9`) counts as inside.
pub fn pn_probability(pxy: &JointDistribution, n: u32, r: f64, g_exponent_poly: u32) -> Result<f64, TypesError> {
    Ok(ln_pn_probability(pxy, n, r, g_exponent_poly)?.exp())
}

/// Natural log of [`pn_probability`], accurate when the value underflows.
pub fn ln_pn_probability(pxy: &JointDistribution, n: u32, r: f64, g_exponent_poly: u32) -> Result<f64, TypesError> {
    let shift = (n as f64 * r + log_g(n, g_exponent_poly)) / LOG2_E;
    let parts = fold_joint_classes(pxy, n, |acc: &mut Vec<f64>, c| {
        let rhs = shift + c.ln_ref;
        let slack = TIE_EPS * (1.0 + rhs.abs().max(c.ln_p.abs()));
        if c.ln_p >= rhs - slack {
            acc.push(c.ln_mult + c.ln_p);
        }
    })?;
    Ok(log_sum_exp(parts).min(0.0))
}

/// Markov bound on `−(1/n)·log₂ p_n` at a fixed `t ≥ 0`:
/// `t·r + t·log₂ g(n)/n − (t/n)·D_{1+t}(P^{⊗n} ‖ P_X^{⊗n} × Φ)`.
pub fn pn_markov_exponent(
    pxy: &JointDistribution,
    n: u32,
    r: f64,
    g_exponent_poly: u32,
    t: f64,
) -> Result<f64, TypesError> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let order = RenyiOrder::from_t(t).map_err(ExponentError::from)?;
    let d = symmetric_divergence(pxy, n, order)?;
    let nf = n as f64;
    Ok(t * r + t * log_g(n, g_exponent_poly) / nf - t * d / nf)
}

/// `sup_{t ≥ 0} t(r − I_{1+t}(X:Y))` for a fixed joint law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnPrediction {
    pub t_star: Extended,
    pub value: Extended,
}

pub fn pn_exponent_prediction(pxy: &JointDistribution, r: f64) -> Result<PnPrediction, TypesError> {
    let (px, w) = pxy.conditional();
    let info = |order: RenyiOrder| mutual_information_parts(px.probs(), &w, order).value_nats * LOG2_E;
    let h_inf = info(RenyiOrder::Infinity);
    let (t_star, value) = sup_t_generic(
        |t| {
            if t == 0.0 {
                return Ok(info(RenyiOrder::One));
            }
            Ok(info(RenyiOrder::from_t(t)?))
        },
        h_inf,
        r,
        0.0,
    )?;
    Ok(PnPrediction { t_star, value })
}
