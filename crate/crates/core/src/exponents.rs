//! Simulation rate, reliability function and strong converse exponent.
//!
//! All exponents are in bits per channel use. The one-dimensional searches
//! rely on concavity of `t ↦ t(r − I_{1+t}(W))` and of the β-objective, and
//! fall back to a dense grid when sampled values do not look unimodal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{capacity_from, CapacityError, CapacityResult};
use crate::channel::Channel;
use crate::logmath::{ln_or_neg_inf, log_sum_exp, LOG2_E};
use crate::measures::{Distribution, Extended, MeasureError, RenyiOrder};
use crate::optim::{golden_max, maximize_on};
use crate::rng;

/// Upper end of the `t` search window.
pub const T_MAX: f64 = 64.0;
const INNER_TOL: f64 = 1e-10;
const ACCEPT_GAP: f64 = 1e-6;
const SEARCH_TOL: f64 = 1e-7;
/// Cap on `|X|·|Y|` for the nested variational optimization.
pub const VARIATIONAL_BUDGET: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("rate must be a nonnegative number, got {0}")]
    InvalidRate(f64),
    #[error("order {0} outside (0, 1)")]
    OrderOutOfRange(f64),
    #[error("|X|·|Y| = {cells} exceeds the budget of {budget}; best bracket [{lower}, {upper}]")]
    Budget {
        cells: usize,
        budget: usize,
        lower: f64,
        upper: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExponentKind {
    ReliabilityFunction,
    StrongConverse,
    SimulationRate,
}

/// Achievers behind an exponent value, when they exist.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub t_star: Option<Extended>,
    pub beta_star: Option<f64>,
    pub input: Option<Distribution>,
    pub output: Option<Distribution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub kind: ExponentKind,
    pub order: RenyiOrder,
    pub rate_r: f64,
    pub value: Extended,
    pub optimizer: Optimizer,
    /// Set for order zero at `r = I_0(W)`, where the exponent is not
    /// determined; `value` is then reported as zero.
    pub boundary: bool,
}

/// `I_α(W)` in bits with the solver gap checked.
pub(crate) fn capacity_checked(w: &Channel, order: RenyiOrder) -> Result<CapacityResult, ExponentError> {
    let res = capacity_from(w, order, INNER_TOL, None);
    if res.duality_gap > ACCEPT_GAP {
        return Err(CapacityError::NotConverged {
            best_gap: res.duality_gap,
            iterations: res.iterations,
            value: res.value,
        }
        .into());
    }
    Ok(res)
}

fn capacity_bits(w: &Channel, order: RenyiOrder) -> Result<f64, ExponentError> {
    Ok(capacity_checked(w, order)?.value)
}

fn check_rate(r: f64) -> Result<(), ExponentError> {
    if r.is_nan() || r < 0.0 {
        Err(ExponentError::InvalidRate(r))
    } else {
        Ok(())
    }
}

/// `I_∞(W) = log Σ_y max_x W(y|x)`.
pub(crate) fn i_infinity(w: &Channel) -> f64 {
    (0..w.output_size())
        .map(|y| (0..w.input_size()).map(|x| w.get(x, y)).fold(0.0, f64::max))
        .sum::<f64>()
        .log2()
}

/// `sup_{t ≥ t_lo} t(r − h(t))` for a nondecreasing `h` with limit `h_inf`.
/// Shared by the channel and fixed-joint versions.
pub(crate) fn sup_t_generic<F>(mut h: F, h_inf: f64, r: f64, t_lo: f64) -> Result<(Extended, Extended), ExponentError>
where
    F: FnMut(f64) -> Result<f64, ExponentError>,
{
    if r >= h_inf {
        return Ok((Extended::Infinite, Extended::Infinite));
    }
    let mut err = None;
    let mut f = |t: f64| -> f64 {
        match h(t) {
            Ok(v) => t * (r - v),
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    };
    // grow the window until the objective turns down
    let mut hi = (2.0 * t_lo).max(t_lo + 1.0).min(T_MAX);
    let mut prev = f(t_lo);
    loop {
        let cur = f(hi);
        if cur < prev || hi >= T_MAX {
            break;
        }
        prev = cur;
        hi = (2.0 * hi).min(T_MAX);
    }
    let (mut t, mut v) = maximize_on(&mut f, t_lo, hi, SEARCH_TOL);
    if hi >= T_MAX && t >= T_MAX - 1e-9 {
        let half = f(T_MAX / 2.0);
        if v > half + 1e-9 && r >= h_inf - 1e-9 {
            return Ok((Extended::Infinite, Extended::Infinite));
        }
    }
    if let Some(e) = err {
        return Err(e);
    }
    if v < 0.0 && t_lo == 0.0 {
        t = 0.0;
        v = 0.0;
    }
    Ok((Extended::Finite(t), Extended::Finite(v)))
}

/// `sup_{t ≥ t_lo} t(r − I_{1+t}(W))` as `(t*, value)`; both are `+∞`
/// when `r ≥ I_∞(W)`.
pub fn sup_t_objective(w: &Channel, r: f64, t_lo: f64) -> Result<(Extended, Extended), ExponentError> {
    check_rate(r)?;
    if !(t_lo >= 0.0) {
        return Err(ExponentError::InvalidRate(t_lo));
    }
    sup_t_generic(
        |t| {
            if t == 0.0 {
                return capacity_bits(w, RenyiOrder::One);
            }
            capacity_bits(w, RenyiOrder::from_t(t)?)
        },
        i_infinity(w),
        r,
        t_lo,
    )
}

fn achievers_at(w: &Channel, order: RenyiOrder) -> (Option<Distribution>, Option<Distribution>) {
    match capacity_checked(w, order) {
        Ok(c) => (Some(c.optimal_input), Some(c.optimal_output)),
        Err(_) => (None, None),
    }
}

/// `E_rf^{(α)}(W, r)`.
pub fn reliability_function(w: &Channel, r: f64, order: RenyiOrder) -> Result<ExponentReport, ExponentError> {
    check_rate(r)?;
    let mut report = ExponentReport {
        kind: ExponentKind::ReliabilityFunction,
        order,
        rate_r: r,
        value: Extended::Finite(0.0),
        optimizer: Optimizer::default(),
        boundary: false,
    };
    if let RenyiOrder::Zero = order {
        let i0 = capacity_checked(w, RenyiOrder::Zero)?;
        if (r - i0.value).abs() <= 1e-12 {
            report.boundary = true;
        } else if r > i0.value {
            report.value = Extended::Infinite;
        }
        report.optimizer.input = Some(i0.optimal_input);
        report.optimizer.output = Some(i0.optimal_output);
        return Ok(report);
    }
    if r >= i_infinity(w) {
        report.value = Extended::Infinite;
        report.optimizer.t_star = Some(Extended::Infinite);
        return Ok(report);
    }
    let alpha = order.alpha();
    if alpha.is_infinite() {
        return Ok(report);
    }
    let t_lo = (alpha - 1.0).max(0.0);
    let (t, v) = sup_t_objective(w, r, t_lo)?;
    report.value = match v {
        Extended::Finite(x) => Extended::Finite(x.max(0.0)),
        inf => inf,
    };
    report.optimizer.t_star = Some(t);
    if let Extended::Finite(ts) = t {
        let o = if ts == 0.0 { RenyiOrder::One } else { RenyiOrder::from_t(ts)? };
        let (p, q) = achievers_at(w, o);
        report.optimizer.input = p;
        report.optimizer.output = q;
    }
    Ok(report)
}

/// `E_sc^{(α)}(W, r)`.
pub fn strong_converse_exponent(w: &Channel, r: f64, order: RenyiOrder) -> Result<ExponentReport, ExponentError> {
    check_rate(r)?;
    let mut report = ExponentReport {
        kind: ExponentKind::StrongConverse,
        order,
        rate_r: r,
        value: Extended::Finite(0.0),
        optimizer: Optimizer::default(),
        boundary: false,
    };
    match order {
        RenyiOrder::Finite(alpha) if alpha < 1.0 => {
            let mut err = None;
            let mut f = |beta: f64| -> f64 {
                if beta >= 1.0 {
                    return 0.0;
                }
                let o = match RenyiOrder::new(beta) {
                    Ok(o) => o,
                    Err(e) => {
                        err.get_or_insert(e.into());
                        return f64::NEG_INFINITY;
                    }
                };
                match capacity_bits(w, o) {
                    Ok(i) => alpha * (1.0 - beta) / (beta * (1.0 - alpha)) * (i - r),
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NEG_INFINITY
                    }
                }
            };
            let (beta, v) = maximize_on(&mut f, alpha, 1.0, SEARCH_TOL);
            if let Some(e) = err {
                return Err(e);
            }
            let (beta, v) = if v <= 0.0 { (1.0, 0.0) } else { (beta, v) };
            report.value = Extended::Finite(v);
            report.optimizer.beta_star = Some(beta);
            let (p, q) = achievers_at(w, RenyiOrder::new(beta)?);
            report.optimizer.input = p;
            report.optimizer.output = q;
        }
        _ => {
            let cap = capacity_checked(w, order)?;
            report.value = Extended::Finite((cap.value - r).max(0.0));
            report.optimizer.beta_star = Some(order.alpha());
            report.optimizer.input = Some(cap.optimal_input);
            report.optimizer.output = Some(cap.optimal_output);
        }
    }
    Ok(report)
}

/// Minimal rate for vanishing order-α simulation error: `I(W)` for
/// `α ∈ (0, 1]`, `I_α(W)` otherwise.
pub fn renyi_simulation_rate(w: &Channel, order: RenyiOrder) -> Result<f64, ExponentError> {
    match order {
        RenyiOrder::Finite(a) if a < 1.0 => capacity_bits(w, RenyiOrder::One),
        o => capacity_bits(w, o),
    }
}

/// Saddle point of the inner problem `min_Ŵ c·D(P·Ŵ‖P·W) + |I(P, Ŵ) − r|⁺`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedChannel {
    pub channel: Channel,
    /// Output law `P·Ŵ`.
    pub output: Distribution,
    /// Weight of the information term at the saddle point, in `[0, 1]`.
    pub mu: f64,
    /// Objective value in bits.
    pub value: f64,
    pub divergence_bits: f64,
    pub information_bits: f64,
}

/// `Ŵ_x ∝ W_x^{a} Q^{1−a}` with `a = c/(c+μ)`.
fn tilt_rows(w: &Channel, q_ln: &[f64], a: f64) -> Vec<Vec<f64>> {
    (0..w.input_size())
        .map(|x| {
            let logs: Vec<f64> = w
                .row(x)
                .iter()
                .zip(q_ln)
                .map(|(&wy, &lq)| {
                    let lw = ln_or_neg_inf(wy);
                    if lw == f64::NEG_INFINITY || (lq == f64::NEG_INFINITY && a < 1.0) {
                        f64::NEG_INFINITY
                    } else {
                        a * lw + (1.0 - a) * lq
                    }
                })
                .collect();
            let z = log_sum_exp(logs.iter().copied());
            if z == f64::NEG_INFINITY {
                return w.row(x).to_vec();
            }
            logs.iter().map(|l| (l - z).exp()).collect()
        })
        .collect()
}

fn output_of(p: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let ny = rows[0].len();
    let mut q = vec![0.0; ny];
    for (x, row) in rows.iter().enumerate() {
        for y in 0..ny {
            q[y] += p[x] * row[y];
        }
    }
    q
}

fn kl_nats(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| if *y > 0.0 { x * (x / y).ln() } else { f64::INFINITY })
        .sum()
}

/// `(Σ_x P_x D(Ŵ_x‖W_x), I(P, Ŵ))` in nats.
fn divergence_and_information(p: &[f64], w: &Channel, rows: &[Vec<f64>]) -> (f64, f64) {
    let q = output_of(p, rows);
    let mut d = 0.0;
    let mut i = 0.0;
    for (x, row) in rows.iter().enumerate() {
        if p[x] > 0.0 {
            d += p[x] * kl_nats(row, w.row(x));
            i += p[x] * kl_nats(row, &q);
        }
    }
    (d, i)
}

/// `G(μ) = min_Ŵ c·D + μ·I` by alternating minimization over `(Ŵ, Q)`.
/// Returns the value in nats with the minimizing rows.
fn lagrangian_min(p: &[f64], w: &Channel, c: f64, mu: f64, q0: &[f64]) -> (f64, Vec<Vec<f64>>) {
    if mu == 0.0 {
        return (0.0, w.rows());
    }
    let a = c / (c + mu);
    let mut q: Vec<f64> = q0.to_vec();
    let mut prev = f64::INFINITY;
    let mut rows = w.rows();
    for _ in 0..5000 {
        let q_ln: Vec<f64> = q.iter().map(|&v| ln_or_neg_inf(v)).collect();
        rows = tilt_rows(w, &q_ln, a);
        q = output_of(p, &rows);
        let (d, i) = divergence_and_information(p, w, &rows);
        let val = c * d + mu * i;
        if (prev - val).abs() < 1e-15 * (1.0 + val.abs()) {
            prev = val;
            break;
        }
        prev = val;
    }
    (prev, rows)
}

fn random_simplex(n: usize, stream: u64) -> Vec<f64> {
    use rand::Rng;
    let mut g = rng::stream(0x7a11, stream);
    let v: Vec<f64> = (0..n).map(|_| -g.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Solves the inner problem for input `p` from `starts` initial output
/// laws. `r` in bits; `c = α/(1−α)`.
pub(crate) fn tilted_channel_with_starts(
    w: &Channel,
    p: &[f64],
    r: f64,
    c: f64,
    starts: usize,
) -> TiltedChannel {
    let r_nats = r / LOG2_E;
    let (d_w, i_w) = divergence_and_information(p, w, &w.rows());
    let finish = |rows: Vec<Vec<f64>>, mu: f64| {
        let (d, i) = divergence_and_information(p, w, &rows);
        let value = c * d + (i - r_nats).max(0.0);
        let channel = Channel::new(rows.clone()).expect("tilted rows are stochastic");
        let out = output_of(p, &rows);
        TiltedChannel {
            channel,
            output: Distribution::new(out).expect("output has mass"),
            mu,
            value: value * LOG2_E,
            divergence_bits: d * LOG2_E,
            information_bits: i * LOG2_E,
        }
    };
    if i_w <= r_nats {
        debug_assert!(d_w == 0.0);
        return finish(w.rows(), 0.0);
    }
    let ny = w.output_size();
    let mut q_starts: Vec<Vec<f64>> = vec![output_of(p, &w.rows()), vec![1.0 / ny as f64; ny]];
    for s in 0..starts.saturating_sub(2) {
        q_starts.push(random_simplex(ny, s as u64));
    }
    q_starts.truncate(starts.max(1));
    let g = |mu: f64| -> f64 {
        q_starts
            .iter()
            .map(|q0| lagrangian_min(p, w, c, mu, q0).0)
            .fold(f64::INFINITY, f64::min)
            - mu * r_nats
    };
    let (mut mu, mut v) = golden_max(g, 0.0, 1.0, 1e-9);
    for end in [0.0, 1.0] {
        let ve = g(end);
        if ve >= v {
            mu = end;
            v = ve;
        }
    }
    let _ = v;
    let rows = q_starts
        .iter()
        .map(|q0| lagrangian_min(p, w, c, mu, q0))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, rows)| rows)
        .expect("at least one start");
    finish(rows, mu)
}

/// Inner minimizer `W̃ = argmin_Ŵ (α/(1−α))·D(P·Ŵ‖P·W) + |I(P, Ŵ) − r|⁺`.
pub fn tilted_channel(w: &Channel, p: &Distribution, r: f64, alpha: f64) -> Result<TiltedChannel, ExponentError> {
    check_rate(r)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ExponentError::OrderOutOfRange(alpha));
    }
    if p.len() != w.input_size() {
        return Err(MeasureError::AlphabetMismatch {
            left: p.len(),
            right: w.input_size(),
        }
        .into());
    }
    Ok(tilted_channel_with_starts(w, p.probs(), r, alpha / (1.0 - alpha), 5))
}

/// Outcome of the variational strong converse computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalResult {
    pub value: f64,
    pub input: Distribution,
    pub tilted: TiltedChannel,
}

/// `max_P min_Ŵ (α/(1−α))·D(P·Ŵ‖P·W) + |I(X:Y)_{P·Ŵ} − r|⁺` for `α ∈ (0, 1)`.
///
/// The inner problem is convex in `Ŵ`; it is solved through its Lagrangian
/// dual in the weight `μ ∈ [0, 1]` of the information term. The outer
/// maximization uses a grid plus golden refinement for binary inputs and
/// pairwise coordinate ascent from several starts otherwise.
pub fn variational_sc_exponent(w: &Channel, r: f64, alpha: f64) -> Result<VariationalResult, ExponentError> {
    check_rate(r)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ExponentError::OrderOutOfRange(alpha));
    }
    let cells = w.input_size() * w.output_size();
    if cells > VARIATIONAL_BUDGET {
        // Ŵ = W is feasible for every P
        let upper = (capacity_bits(w, RenyiOrder::One)? - r).max(0.0);
        return Err(ExponentError::Budget {
            cells,
            budget: VARIATIONAL_BUDGET,
            lower: 0.0,
            upper,
        });
    }
    let c = alpha / (1.0 - alpha);
    let nx = w.input_size();
    let eval = |p: &[f64]| tilted_channel_with_starts(w, p, r, c, 1).value;
    let best_p: Vec<f64> = if nx == 1 {
        vec![1.0]
    } else if nx == 2 {
        let (x, _) = maximize_on(|t| eval(&[t, 1.0 - t]), 0.0, 1.0, 1e-7);
        vec![x, 1.0 - x]
    } else {
        let mut starts = vec![vec![1.0 / nx as f64; nx]];
        starts.extend((0..4).map(|s| random_simplex(nx, 100 + s)));
        let mut best = (f64::NEG_INFINITY, starts[0].clone());
        for start in starts {
            let (v, p) = coordinate_ascent(&eval, start);
            if v > best.0 {
                best = (v, p);
            }
        }
        best.1
    };
    let tilted = tilted_channel_with_starts(w, &best_p, r, c, 5);
    Ok(VariationalResult {
        value: tilted.value,
        input: Distribution::new(best_p)?,
        tilted,
    })
}

/// Moves mass between pairs of inputs, one 1-D search at a time.
fn coordinate_ascent<F: Fn(&[f64]) -> f64>(eval: &F, mut p: Vec<f64>) -> (f64, Vec<f64>) {
    let nx = p.len();
    let mut value = eval(&p);
    for _sweep in 0..30 {
        let before = value;
        for i in 0..nx {
            for j in i + 1..nx {
                let pair = p[i] + p[j];
                if pair <= 0.0 {
                    continue;
                }
                let mut trial = p.clone();
                let (s, v) = maximize_on(
                    |s| {
                        trial[i] = s * pair;
                        trial[j] = (1.0 - s) * pair;
                        eval(&trial)
                    },
                    0.0,
                    1.0,
                    1e-6,
                );
                if v > value {
                    p[i] = s * pair;
                    p[j] = (1.0 - s) * pair;
                    value = v;
                }
            }
        }
        if value - before < 1e-10 {
            break;
        }
    }
    (value, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn zero_capacity_channel_diverges() {
        let w = Channel::constant(&Distribution::uniform(2), 2);
        let (t, v) = sup_t_objective(&w, 0.5, 0.0).unwrap();
        assert!(t.is_infinite() && v.is_infinite());
    }

    #[test]
    fn zero_rate_gives_zero_at_origin() {
        let w = Channel::bsc(0.1).unwrap();
        let (t, v) = sup_t_objective(&w, 0.0, 0.0).unwrap();
        assert_eq!(t, Extended::Finite(0.0));
        assert_eq!(v, Extended::Finite(0.0));
    }

    #[test]
    fn simulation_rate_branches() {
        let w = Channel::bsc(0.1).unwrap();
        let r = renyi_simulation_rate(&w, RenyiOrder::new(0.5).unwrap()).unwrap();
        assert!((r - (1.0 - h2(0.1))).abs() < 1e-9);
        let r = renyi_simulation_rate(&w, RenyiOrder::Infinity).unwrap();
        assert!((r - 1.8f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn reliability_at_rate_equal_capacity_order() {
        let w = Channel::bsc(0.1).unwrap();
        let i2 = capacity_bits(&w, RenyiOrder::new(2.0).unwrap()).unwrap();
        let rep = reliability_function(&w, i2, RenyiOrder::new(2.0).unwrap()).unwrap();
        assert!(rep.value.to_f64().abs() < 1e-9);
        let rep = reliability_function(&w, 1.8f64.log2(), RenyiOrder::new(0.5).unwrap()).unwrap();
        assert!(rep.value.is_infinite());
    }

    #[test]
    fn order_zero_reliability_branches() {
        let w = Channel::new(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]]).unwrap();
        let i0 = 1.5f64.log2();
        let z = RenyiOrder::Zero;
        assert!(reliability_function(&w, i0 + 0.01, z).unwrap().value.is_infinite());
        assert_eq!(reliability_function(&w, i0 - 0.01, z).unwrap().value, Extended::Finite(0.0));
        assert!(reliability_function(&w, i0, z).unwrap().boundary);
    }

    #[test]
    fn strong_converse_simple_branches() {
        let w = Channel::bsc(0.1).unwrap();
        let i1 = 1.0 - h2(0.1);
        let v = strong_converse_exponent(&w, i1, RenyiOrder::One).unwrap().value.to_f64();
        assert!(v.abs() < 1e-9);
        let i2 = capacity_bits(&w, RenyiOrder::new(2.0).unwrap()).unwrap();
        let v = strong_converse_exponent(&w, 0.0, RenyiOrder::new(2.0).unwrap()).unwrap().value.to_f64();
        assert!((v - i2).abs() < 1e-12);
    }

    #[test]
    fn variational_constant_channel_is_zero() {
        let w = Channel::constant(&Distribution::new(vec![0.3, 0.7]).unwrap(), 2);
        let v = variational_sc_exponent(&w, 0.2, 0.5).unwrap();
        assert!(v.value.abs() < 1e-12);
        assert!(variational_sc_exponent(&Channel::identity(5), 0.1, 0.5).is_err());
    }
}
