//! Rényi fidelity, divergence and mutual information over finite alphabets.
//!
//! Values at the API boundary are in bits. Internally everything is computed
//! with natural logs and converted once on the way out.
//!
//! Zero-mass conventions: for `α > 1` a term with `p = 0` contributes nothing
//! and a term with `p > 0, q = 0` makes the divergence infinite. For `α < 1`
//! a term with `q = 0` contributes nothing to the order-α sum, so the
//! divergence stays finite as long as the supports overlap.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;
use crate::logmath::{ln_or_neg_inf, log_sum_exp, LOG2_E};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("alphabet mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },
    #[error("entry {index} is negative or not finite: {value}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("vector has no positive mass")]
    ZeroMass,
    #[error("empty alphabet")]
    Empty,
    #[error("invalid Rényi order {0}")]
    InvalidOrder(f64),
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("joint table has {len} entries, expected {nx}x{ny}")]
    Shape { len: usize, nx: usize, ny: usize },
    #[error("unrecognized channel preset {0:?}")]
    Preset(String),
}

/// A real number or `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            Extended::Infinite
        } else {
            Extended::Finite(v)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) if v.is_finite() => s.serialize_f64(*v),
            Extended::Finite(v) => s.serialize_str(&v.to_string()),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Extended::from_f64(v)),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(Extended::Infinite),
                "NaN" | "nan" => Ok(Extended::Finite(f64::NAN)),
                other => other
                    .parse::<f64>()
                    .map(Extended::from_f64)
                    .map_err(serde::de::Error::custom),
            },
        }
    }
}

fn check_entries(values: &[f64]) -> Result<(), MeasureError> {
    if values.is_empty() {
        return Err(MeasureError::Empty);
    }
    for (index, &value) in values.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(MeasureError::InvalidEntry { index, value });
        }
    }
    Ok(())
}

/// Probability vector over `{0, .., n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Normalizes any nonnegative vector with positive mass.
    pub fn new(weights: Vec<f64>) -> Result<Self, MeasureError> {
        check_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(MeasureError::ZeroMass);
        }
        let mut probs = weights;
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform distribution over an empty alphabet");
        Distribution {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn point(size: usize, at: usize) -> Self {
        assert!(at < size);
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        Distribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    pub fn ln_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| ln_or_neg_inf(p)).collect()
    }

    /// `p × q` with index `i * |q| + j`.
    pub fn product(&self, other: &Distribution) -> Distribution {
        let mut probs = Vec::with_capacity(self.len() * other.len());
        for &a in &self.probs {
            for &b in &other.probs {
                probs.push(a * b);
            }
        }
        Distribution { probs }
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = MeasureError;
    /// Text that already sums to one is kept bit for bit.
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        check_entries(&v)?;
        if (v.iter().sum::<f64>() - 1.0).abs() <= 1e-12 {
            return Ok(Distribution { probs: v });
        }
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Nonnegative vector with no normalization constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonnegVector {
    values: Vec<f64>,
}

impl NonnegVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MeasureError> {
        check_entries(&values)?;
        Ok(NonnegVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn normalized(&self) -> Result<Distribution, MeasureError> {
        Distribution::new(self.values.clone())
    }
}

impl From<&Distribution> for NonnegVector {
    fn from(d: &Distribution) -> Self {
        NonnegVector {
            values: d.probs.clone(),
        }
    }
}

impl From<Distribution> for NonnegVector {
    fn from(d: Distribution) -> Self {
        NonnegVector { values: d.probs }
    }
}

/// Joint law on `X × Y`, stored row-major (`x * ny + y`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    nx: usize,
    ny: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(nx: usize, ny: usize, probs: Vec<f64>) -> Result<Self, MeasureError> {
        if probs.len() != nx * ny {
            return Err(MeasureError::Shape {
                len: probs.len(),
                nx,
                ny,
            });
        }
        let d = Distribution::new(probs)?;
        Ok(JointDistribution {
            nx,
            ny,
            probs: d.probs,
        })
    }

    pub fn from_input_and_channel(p: &Distribution, w: &Channel) -> Result<Self, MeasureError> {
        if p.len() != w.input_size() {
            return Err(MeasureError::AlphabetMismatch {
                left: p.len(),
                right: w.input_size(),
            });
        }
        let mut probs = Vec::with_capacity(w.input_size() * w.output_size());
        for x in 0..w.input_size() {
            for &v in w.row(x) {
                probs.push(p.probs[x] * v);
            }
        }
        Ok(JointDistribution {
            nx: w.input_size(),
            ny: w.output_size(),
            probs,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.ny + y]
    }

    pub fn marginal_x(&self) -> Distribution {
        let v = (0..self.nx)
            .map(|x| self.probs[x * self.ny..(x + 1) * self.ny].iter().sum())
            .collect();
        Distribution::new(v).expect("joint has positive mass")
    }

    pub fn marginal_y(&self) -> Distribution {
        let v = (0..self.ny)
            .map(|y| (0..self.nx).map(|x| self.get(x, y)).sum())
            .collect();
        Distribution::new(v).expect("joint has positive mass")
    }

    /// `(P_X, W)` with `P_XY = P_X · W`. Rows outside `supp(P_X)` are uniform.
    pub fn conditional(&self) -> (Distribution, Channel) {
        let px = self.marginal_x();
        let mut rows = Vec::with_capacity(self.nx);
        for x in 0..self.nx {
            let row = &self.probs[x * self.ny..(x + 1) * self.ny];
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                rows.push(row.iter().map(|v| v / mass).collect());
            } else {
                rows.push(vec![1.0 / self.ny as f64; self.ny]);
            }
        }
        let w = Channel::new(rows).expect("conditional rows are stochastic");
        (px, w)
    }

    /// `P_X × Q_Y` for a given output law.
    pub fn product_of_marginal(&self, qy: &Distribution) -> NonnegVector {
        let px = self.marginal_x();
        NonnegVector {
            values: px.product(qy).probs,
        }
    }

    pub fn as_distribution(&self) -> Distribution {
        Distribution {
            probs: self.probs.clone(),
        }
    }
}

/// Rényi order `α ∈ [0, ∞]` with the limiting points tagged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrderRepr", into = "OrderRepr")]
pub enum RenyiOrder {
    Zero,
    One,
    Infinity,
    Finite(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OrderRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<OrderRepr> for RenyiOrder {
    type Error = MeasureError;
    fn try_from(r: OrderRepr) -> Result<Self, Self::Error> {
        match r {
            OrderRepr::Num(v) => RenyiOrder::new(v),
            OrderRepr::Text(t) => t.parse(),
        }
    }
}

impl From<RenyiOrder> for OrderRepr {
    fn from(o: RenyiOrder) -> Self {
        match o {
            RenyiOrder::Infinity => OrderRepr::Text("inf".into()),
            other => OrderRepr::Num(other.alpha()),
        }
    }
}

impl std::str::FromStr for RenyiOrder {
    type Err = MeasureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "∞" => Ok(RenyiOrder::Infinity),
            t => t
                .parse::<f64>()
                .map_err(|_| MeasureError::InvalidOrder(f64::NAN))
                .and_then(RenyiOrder::new),
        }
    }
}

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self, MeasureError> {
        if alpha.is_nan() || alpha < 0.0 {
            return Err(MeasureError::InvalidOrder(alpha));
        }
        Ok(if alpha == 0.0 {
            RenyiOrder::Zero
        } else if alpha == 1.0 {
            RenyiOrder::One
        } else if alpha.is_infinite() {
            RenyiOrder::Infinity
        } else {
            RenyiOrder::Finite(alpha)
        })
    }

    pub fn alpha(self) -> f64 {
        match self {
            RenyiOrder::Zero => 0.0,
            RenyiOrder::One => 1.0,
            RenyiOrder::Infinity => f64::INFINITY,
            RenyiOrder::Finite(a) => a,
        }
    }

    /// `α = 1 + t`.
    pub fn from_t(t: f64) -> Result<Self, MeasureError> {
        RenyiOrder::new(1.0 + t)
    }
}

impl fmt::Display for RenyiOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenyiOrder::Infinity => f.write_str("inf"),
            o => write!(f, "{}", o.alpha()),
        }
    }
}

/// One class of equally weighted atoms: `ln multiplicity`, per-atom `ln p`
/// and per-atom `ln q`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ClassTerm {
    pub ln_mult: f64,
    pub ln_p: f64,
    pub ln_q: f64,
}

/// `D_α(p‖q)` in nats from class terms. Terms with `p = 0` are ignored.
pub(crate) fn class_divergence_nats(terms: &[ClassTerm], order: RenyiOrder) -> f64 {
    let live: Vec<&ClassTerm> = terms
        .iter()
        .filter(|t| t.ln_p > f64::NEG_INFINITY && t.ln_mult > f64::NEG_INFINITY)
        .collect();
    if live.is_empty() {
        return f64::INFINITY;
    }
    match order {
        RenyiOrder::Zero => -log_sum_exp(live.iter().map(|t| t.ln_mult + t.ln_q)),
        RenyiOrder::Infinity => live
            .iter()
            .map(|t| t.ln_p - t.ln_q)
            .fold(f64::NEG_INFINITY, f64::max),
        RenyiOrder::One => {
            let mut acc = 0.0;
            for t in &live {
                if t.ln_q == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                acc += (t.ln_mult + t.ln_p).exp() * (t.ln_p - t.ln_q);
            }
            acc
        }
        RenyiOrder::Finite(alpha) => {
            let s = alpha - 1.0;
            let mut exps = Vec::with_capacity(live.len());
            for t in &live {
                let e = if t.ln_q == f64::NEG_INFINITY {
                    if s > 0.0 {
                        return f64::INFINITY;
                    }
                    f64::NEG_INFINITY
                } else {
                    s * (t.ln_p - t.ln_q)
                };
                exps.push(e);
            }
            let small = exps.iter().all(|e| e.abs() < 1.0);
            let ln_sum = if small {
                let weights: Vec<f64> = live.iter().map(|t| (t.ln_mult + t.ln_p).exp()).collect();
                let total: f64 = weights.iter().sum();
                let delta: f64 = weights.iter().zip(&exps).map(|(w, e)| w * e.exp_m1()).sum();
                total.ln() + (delta / total).ln_1p()
            } else {
                log_sum_exp(live.iter().zip(&exps).map(|(t, e)| t.ln_mult + t.ln_p + e))
            };
            if ln_sum == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            ln_sum / s
        }
    }
}

fn same_len(a: usize, b: usize) -> Result<(), MeasureError> {
    if a != b {
        Err(MeasureError::AlphabetMismatch { left: a, right: b })
    } else {
        Ok(())
    }
}

pub(crate) fn divergence_slices_nats(p: &[f64], q: &[f64], order: RenyiOrder) -> f64 {
    let terms: Vec<ClassTerm> = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| ClassTerm {
            ln_mult: 0.0,
            ln_p: ln_or_neg_inf(a),
            ln_q: ln_or_neg_inf(b),
        })
        .collect();
    class_divergence_nats(&terms, order)
}

/// Order-α fidelity `F_α(p, q) = 2^{-D_α(p‖q)}`.
pub fn renyi_fidelity(
    p: &Distribution,
    q: &NonnegVector,
    order: RenyiOrder,
) -> Result<f64, MeasureError> {
    same_len(p.len(), q.len())?;
    Ok((-divergence_slices_nats(p.probs(), q.values(), order)).exp())
}

/// `D_α(p‖q)` in bits; order `One` is the relative entropy.
pub fn renyi_divergence(
    p: &Distribution,
    q: &NonnegVector,
    order: RenyiOrder,
) -> Result<Extended, MeasureError> {
    same_len(p.len(), q.len())?;
    Ok(Extended::from_f64(
        divergence_slices_nats(p.probs(), q.values(), order) * LOG2_E,
    ))
}

/// Row-wise quantities of the order-α mutual information for input `p`:
/// the value in nats and the optimal output law `Q*`.
pub(crate) struct MutualInfoParts {
    pub value_nats: f64,
    pub q_star: Vec<f64>,
}

/// `I_α(X:Y)` for `P_XY = p · W` via the closed forms.
pub(crate) fn mutual_information_parts(p: &[f64], w: &Channel, order: RenyiOrder) -> MutualInfoParts {
    let ny = w.output_size();
    let supp: Vec<usize> = (0..p.len()).filter(|&x| p[x] > 0.0).collect();
    match order {
        RenyiOrder::Zero => {
            let mut best = 0.0f64;
            let mut best_y = 0;
            for y in 0..ny {
                let m: f64 = supp.iter().filter(|&&x| w.get(x, y) > 0.0).map(|&x| p[x]).sum();
                if m > best {
                    best = m;
                    best_y = y;
                }
            }
            let mut q = vec![0.0; ny];
            q[best_y] = 1.0;
            MutualInfoParts {
                value_nats: -best.min(1.0).ln(),
                q_star: q,
            }
        }
        RenyiOrder::Infinity => {
            let maxes: Vec<f64> = (0..ny)
                .map(|y| supp.iter().map(|&x| w.get(x, y)).fold(0.0, f64::max))
                .collect();
            let total: f64 = maxes.iter().sum();
            MutualInfoParts {
                value_nats: total.ln(),
                q_star: maxes.iter().map(|m| m / total).collect(),
            }
        }
        RenyiOrder::One => {
            let q: Vec<f64> = (0..ny)
                .map(|y| supp.iter().map(|&x| p[x] * w.get(x, y)).sum())
                .collect();
            let mut acc = 0.0;
            for &x in &supp {
                for (y, &v) in w.row(x).iter().enumerate() {
                    if v > 0.0 {
                        acc += p[x] * v * (v / q[y]).ln();
                    }
                }
            }
            MutualInfoParts {
                value_nats: acc.max(0.0),
                q_star: q,
            }
        }
        RenyiOrder::Finite(alpha) => {
            // ln Σ_x P(x) W(y|x)^α, then (1/α) of it per y
            let ln_inner: Vec<f64> = (0..ny)
                .map(|y| {
                    log_sum_exp(
                        supp.iter()
                            .map(|&x| p[x].ln() + alpha * ln_or_neg_inf(w.get(x, y))),
                    ) / alpha
                })
                .collect();
            let ln_total = log_sum_exp(ln_inner.iter().copied());
            let q: Vec<f64> = ln_inner.iter().map(|v| (v - ln_total).exp()).collect();
            MutualInfoParts {
                value_nats: (alpha / (alpha - 1.0) * ln_total).max(0.0),
                q_star: q,
            }
        }
    }
}

/// Order-α mutual information `I_α(X:Y)` in bits.
pub fn renyi_mutual_information(pxy: &JointDistribution, order: RenyiOrder) -> f64 {
    let (px, w) = pxy.conditional();
    mutual_information_parts(px.probs(), &w, order).value_nats * LOG2_E
}

/// `max_x D_α(W(·|x)‖N(·|x))` in bits, with the maximizing row.
pub fn channel_divergence(
    w: &Channel,
    n: &Channel,
    order: RenyiOrder,
) -> Result<(Extended, usize), MeasureError> {
    same_len(w.input_size(), n.input_size())?;
    same_len(w.output_size(), n.output_size())?;
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for x in 0..w.input_size() {
        let d = divergence_slices_nats(w.row(x), n.row(x), order);
        if d > best {
            best = d;
            arg = x;
        }
    }
    Ok((Extended::from_f64(best * LOG2_E), arg))
}
