//! Rényi capacity `I_α(W) = max_P I_α(X:Y) = min_Q max_x D_α(W(·|x)‖Q)`.
//!
//! For `α ∈ (0, ∞)` the primal is climbed with a multiplicative update
//! `P(x) ← P(x)·2^{η(D_x − I)}`, where `D_x = D_α(W(·|x)‖Q*)` and `Q*` is the
//! optimal output for the current input. Every iterate yields a lower bound
//! `I_α(P)` and an upper bound `max_x D_x`, so the gap is certified at each
//! step. `α = 1` with `η = 1` is Blahut–Arimoto. `α = ∞` has a closed form
//! and `α = 0` is a zero-one matrix game solved by linear programming.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;
use crate::logmath::LOG2_E;
use crate::measures::{
    divergence_slices_nats, mutual_information_parts, Distribution, MeasureError, RenyiOrder,
};
use crate::optim::{simplex_max, solve_linear};
use crate::{par, rng};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const RANDOM_STARTS: u64 = 5;
const START_SEED: u64 = 0x00c0_ffee;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("capacity solver did not converge: best gap {best_gap:e} bits after {iterations} iterations")]
    NotConverged {
        best_gap: f64,
        iterations: usize,
        value: f64,
    },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Dual (upper) value in bits.
    pub value: f64,
    /// Best primal value `max_P I_α(X:Y)` found.
    pub primal_value: f64,
    pub optimal_input: Distribution,
    pub optimal_output: Distribution,
    pub duality_gap: f64,
    pub order: RenyiOrder,
    pub iterations: usize,
}

/// Result of a single primal ascent run.
struct Run {
    lower: f64,
    upper: f64,
    input: Vec<f64>,
    output: Vec<f64>,
    iterations: usize,
}

/// `(I_α(P), Q*, D_x)` in nats.
fn evaluate(p: &[f64], w: &Channel, order: RenyiOrder) -> (f64, Vec<f64>, Vec<f64>) {
    let parts = mutual_information_parts(p, w, order);
    let dx = (0..w.input_size())
        .map(|x| divergence_slices_nats(w.row(x), &parts.q_star, order))
        .collect();
    (parts.value_nats, parts.q_star, dx)
}

/// Active-set Newton on the equalization conditions `D_x(P) = λ` for the
/// inputs in the support, `Σ P = 1`. Inputs whose mass would turn negative
/// leave the support; inputs outside it with `D_x > λ` join it. The caller
/// re-certifies whatever comes back.
fn newton_polish(w: &Channel, order: RenyiOrder, p: &[f64]) -> Option<Vec<f64>> {
    let nx = p.len();
    let peak = p.iter().copied().fold(0.0, f64::max);
    let mut support: Vec<usize> = (0..nx).filter(|&x| p[x] > 1e-7 * peak).collect();
    let mut cur: Vec<f64> = (0..nx).map(|x| if support.contains(&x) { p[x] } else { 0.0 }).collect();
    normalize(&mut cur);
    let residual = |q: &[f64], supp: &[usize], lambda: f64| -> Vec<f64> {
        let (_, _, dx) = evaluate(q, w, order);
        let mut f: Vec<f64> = supp.iter().map(|&x| dx[x] - lambda).collect();
        f.push(q.iter().sum::<f64>() - 1.0);
        f
    };
    for _round in 0..2 * nx + 4 {
        let (mut lambda, _, _) = evaluate(&cur, w, order);
        let mut dropped = false;
        for _ in 0..40 {
            let k = support.len();
            if k <= 1 {
                break;
            }
            let f0 = residual(&cur, &support, lambda);
            if f0.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-14 {
                break;
            }
            let mut jac = vec![vec![0.0; k + 1]; k + 1];
            for (j, &xj) in support.iter().enumerate() {
                let h = 1e-7 * cur[xj].max(1e-3);
                let mut bumped = cur.clone();
                bumped[xj] += h;
                let f1 = residual(&bumped, &support, lambda);
                for i in 0..=k {
                    jac[i][j] = (f1[i] - f0[i]) / h;
                }
            }
            for row in jac.iter_mut().take(k) {
                row[k] = -1.0;
            }
            let step = solve_linear(jac, f0.iter().map(|v| -v).collect())?;
            // largest feasible fraction of the step
            let mut scale = 1.0f64;
            let mut blocking = None;
            for (j, &xj) in support.iter().enumerate() {
                if step[j] < 0.0 && cur[xj] + step[j] <= 0.0 {
                    let frac = -cur[xj] / step[j];
                    if frac < scale {
                        scale = frac;
                        blocking = Some(j);
                    }
                }
            }
            if let Some(j) = blocking {
                let x = support.remove(j);
                for (jj, &xj) in support.iter().enumerate() {
                    let idx = if jj >= j { jj + 1 } else { jj };
                    cur[xj] += scale * step[idx];
                }
                cur[x] = 0.0;
                normalize(&mut cur);
                dropped = true;
                break;
            }
            for (j, &xj) in support.iter().enumerate() {
                cur[xj] += step[j];
            }
            lambda += step[k];
        }
        if dropped {
            continue;
        }
        normalize(&mut cur);
        let (value, _, dx) = evaluate(&cur, w, order);
        let outside = (0..nx)
            .filter(|x| !support.contains(x))
            .max_by(|&a, &b| dx[a].total_cmp(&dx[b]));
        match outside {
            Some(x) if dx[x] > value + 1e-13 => {
                support.push(x);
                support.sort_unstable();
                cur[x] = 1e-3;
                normalize(&mut cur);
            }
            _ => return Some(cur),
        }
    }
    Some(cur)
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
}

const POLISH_EVERY: usize = 200;

fn ascend(w: &Channel, order: RenyiOrder, start: Vec<f64>, tol_nats: f64, max_iter: usize) -> Run {
    let mut p = start;
    let (mut value, mut q, mut dx) = evaluate(&p, w, order);
    let mut best = Run {
        lower: value,
        upper: dx.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        input: p.clone(),
        output: q.clone(),
        iterations: 0,
    };
    let mut eta = 1.0f64;
    let mut iter = 0;
    let mut stalled = false;
    let mut polish_now = true;
    while iter < max_iter && best.upper - best.lower > tol_nats {
        if iter % POLISH_EVERY == 0 || polish_now {
            polish_now = false;
            if let Some(cand) = newton_polish(w, order, &p) {
                let (v, qc, dc) = evaluate(&cand, w, order);
                let up = dc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if v > best.lower {
                    best.lower = v;
                    best.input = cand.clone();
                }
                if up < best.upper {
                    best.upper = up;
                    best.output = qc.clone();
                }
                if best.upper - best.lower <= tol_nats {
                    break;
                }
                // keep a trace of every input alive so a wrongly dropped one
                // can still regrow under the multiplicative update
                let mixed: Vec<f64> = cand.iter().zip(&p).map(|(c, o)| c + 1e-9 * o).collect();
                let total: f64 = mixed.iter().sum();
                let mixed: Vec<f64> = mixed.into_iter().map(|m| m / total).collect();
                let (vm, _, dm) = evaluate(&mixed, w, order);
                if vm >= value {
                    p = mixed;
                    value = vm;
                    dx = dm;
                }
            }
        }
        iter += 1;
        let mut cand: Vec<f64> = p
            .iter()
            .zip(&dx)
            .map(|(&px, &d)| {
                if px > 0.0 {
                    px * (eta * (d - value)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = cand.iter().sum();
        cand.iter_mut().for_each(|v| *v /= total);
        let (v_new, q_new, dx_new) = evaluate(&cand, w, order);
        if v_new + 1e-15 >= value {
            p = cand;
            value = v_new;
            q = q_new;
            dx = dx_new;
            eta = (eta * 1.25).min(64.0);
        } else {
            eta *= 0.5;
            if eta < 1e-12 {
                // near order one the objective is only known to about
                // 1e-16/|α − 1|, which can stop the ascent early
                if stalled {
                    break;
                }
                stalled = true;
                polish_now = true;
                eta = 1.0;
            }
            continue;
        }
        let upper = dx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if value > best.lower {
            best.lower = value;
            best.input = p.clone();
        }
        if upper < best.upper {
            best.upper = upper;
            best.output = q.clone();
        }
    }
    best.iterations = iter;
    best
}

/// Collapses identical rows. Returns the reduced channel and, for each
/// original input, the index of its representative.
fn dedupe_rows(w: &Channel) -> (Channel, Vec<usize>) {
    let mut reps: Vec<usize> = Vec::new();
    let mut map = Vec::with_capacity(w.input_size());
    for x in 0..w.input_size() {
        match reps.iter().position(|&r| w.row(r) == w.row(x)) {
            Some(k) => map.push(k),
            None => {
                map.push(reps.len());
                reps.push(x);
            }
        }
    }
    let reduced = Channel::new(reps.iter().map(|&r| w.row(r).to_vec()).collect()).expect("rows of a channel");
    (reduced, map)
}

/// Lifts an input law on the reduced channel back to the original inputs,
/// placing each class's mass on its first member.
fn lift_input(p: &[f64], map: &[usize]) -> Vec<f64> {
    let mut seen = vec![false; p.len()];
    map.iter()
        .map(|&k| {
            if seen[k] {
                0.0
            } else {
                seen[k] = true;
                p[k]
            }
        })
        .collect()
}

fn random_start(nx: usize, stream: u64) -> Vec<f64> {
    let mut r = rng::stream(START_SEED, stream);
    let v: Vec<f64> = (0..nx).map(|_| -r.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

fn infinity_order(w: &Channel) -> CapacityResult {
    let maxes: Vec<f64> = (0..w.output_size())
        .map(|y| (0..w.input_size()).map(|x| w.get(x, y)).fold(0.0, f64::max))
        .collect();
    let value = maxes.iter().sum::<f64>().log2();
    CapacityResult {
        value,
        primal_value: value,
        optimal_input: Distribution::uniform(w.input_size()),
        optimal_output: Distribution::new(maxes).expect("rows have mass"),
        duality_gap: 0.0,
        order: RenyiOrder::Infinity,
        iterations: 0,
    }
}

/// Order zero: `min_P max_y Σ_{x: W(y|x)>0} P(x)` as the LP
/// `max Σu, M u ≤ 1, u ≥ 0` with `P = u/Σu`; the dual gives `Q`.
fn zero_order(w: &Channel) -> CapacityResult {
    let (nx, ny) = (w.input_size(), w.output_size());
    let a: Vec<Vec<f64>> = (0..ny)
        .map(|y| (0..nx).map(|x| if w.get(x, y) > 0.0 { 1.0 } else { 0.0 }).collect())
        .collect();
    let sol = simplex_max(&a, &vec![1.0; ny], &vec![1.0; nx]).expect("every input reaches some output");
    let p = Distribution::new(sol.primal.clone()).expect("positive game value");
    let q = Distribution::new(sol.dual.clone()).expect("positive game value");
    let primal = mutual_information_parts(p.probs(), w, RenyiOrder::Zero).value_nats * LOG2_E;
    let dual = (0..nx)
        .map(|x| divergence_slices_nats(w.row(x), q.probs(), RenyiOrder::Zero))
        .fold(f64::NEG_INFINITY, f64::max)
        * LOG2_E;
    CapacityResult {
        value: dual,
        primal_value: primal,
        optimal_input: p,
        optimal_output: q,
        duality_gap: (dual - primal).max(0.0),
        order: RenyiOrder::Zero,
        iterations: 0,
    }
}

fn to_result(run: Run, order: RenyiOrder) -> CapacityResult {
    let upper = run.upper.max(run.lower);
    CapacityResult {
        value: upper * LOG2_E,
        primal_value: run.lower * LOG2_E,
        optimal_input: Distribution::new(run.input).expect("iterate is a distribution"),
        optimal_output: Distribution::new(run.output).expect("iterate is a distribution"),
        duality_gap: (upper - run.lower) * LOG2_E,
        order,
        iterations: run.iterations,
    }
}

/// Single ascent from a given start, without the convergence check. Used by
/// inner loops that tolerate (and account for) a residual gap.
pub(crate) fn capacity_from(
    w: &Channel,
    order: RenyiOrder,
    tol: f64,
    start: Option<&[f64]>,
) -> CapacityResult {
    match order {
        RenyiOrder::Infinity => infinity_order(w),
        RenyiOrder::Zero => zero_order(w),
        _ => {
            let (reduced, map) = dedupe_rows(w);
            let k = reduced.input_size();
            let start = match start {
                Some(s) if k == w.input_size() => s.to_vec(),
                _ => vec![1.0 / k as f64; k],
            };
            let mut run = ascend(&reduced, order, start, tol / LOG2_E, DEFAULT_MAX_ITER);
            run.input = lift_input(&run.input, &map);
            to_result(run, order)
        }
    }
}

/// Order-α Rényi capacity with a certified duality gap `≤ tol` bits.
///
/// Runs from the uniform input and five seeded random inputs (in parallel
/// with the `parallel` feature) and keeps the best lower and upper bounds.
pub fn renyi_capacity(w: &Channel, order: RenyiOrder, tol: f64) -> Result<CapacityResult, CapacityError> {
    if !(tol > 0.0) {
        return Err(CapacityError::BadTolerance(tol));
    }
    let order = RenyiOrder::new(order.alpha())?;
    match order {
        RenyiOrder::Infinity => return Ok(infinity_order(w)),
        RenyiOrder::Zero => return Ok(zero_order(w)),
        _ => {}
    }
    let (reduced, map) = dedupe_rows(w);
    let w = &reduced;
    let nx = w.input_size();
    let tol_nats = tol / LOG2_E;
    let first = ascend(w, order, vec![1.0 / nx as f64; nx], tol_nats, DEFAULT_MAX_ITER);
    let mut runs = Vec::new();
    if first.upper - first.lower > tol_nats && nx > 1 {
        let starts: Vec<Vec<f64>> = (0..RANDOM_STARTS).map(|s| random_start(nx, s)).collect();
        runs = par::map(starts, |s| ascend(w, order, s, tol_nats, DEFAULT_MAX_ITER));
    }
    runs.insert(0, first);
    let mut iterations = 0;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut input = Vec::new();
    let mut output = Vec::new();
    for run in runs {
        iterations = iterations.max(run.iterations);
        if run.lower > lower {
            lower = run.lower;
            input = run.input;
        }
        if run.upper < upper {
            upper = run.upper;
            output = run.output;
        }
    }
    let result = to_result(
        Run {
            lower,
            upper,
            input: lift_input(&input, &map),
            output,
            iterations,
        },
        order,
    );
    if result.duality_gap > tol {
        return Err(CapacityError::NotConverged {
            best_gap: result.duality_gap,
            iterations,
            value: result.value,
        });
    }
    Ok(result)
}

/// Right derivative estimate of `g(t) = t·I_{1+t}(W)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RightDerivative {
    pub value: f64,
    /// Left and right extrapolated slopes disagree: `g` may have a kink at
    /// `t`, and only this flag (not the exact one-sided value) is reliable.
    pub kink_suspected: bool,
}

const DERIVATIVE_TOL: f64 = 1e-11;
const KINK_THRESHOLD: f64 = 10.0 * DEFAULT_TOL;

pub(crate) fn g_of_t(w: &Channel, t: f64) -> Result<f64, CapacityError> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let order = RenyiOrder::from_t(t)?;
    let res = capacity_from(w, order, DERIVATIVE_TOL, None);
    Ok(t * 0.5 * (res.value + res.primal_value))
}

/// Richardson-extrapolated one-sided difference with steps `h, h/2, h/4`.
/// `dir` is `+1` for the right derivative and `-1` for the left one.
fn one_sided(w: &Channel, t: f64, h: f64, g0: f64, dir: f64) -> Result<f64, CapacityError> {
    let diff = |step: f64| -> Result<f64, CapacityError> {
        Ok(dir * (g_of_t(w, t + dir * step)? - g0) / step)
    };
    let d1 = diff(h)?;
    let d2 = diff(h / 2.0)?;
    let d4 = diff(h / 4.0)?;
    let r1 = 2.0 * d2 - d1;
    let r2 = 2.0 * d4 - d2;
    Ok((4.0 * r2 - r1) / 3.0)
}

/// `R̂(t) = ∂⁺_t (t·I_{1+t}(W))` by forward differences with Richardson
/// extrapolation over `h0, h0/2, h0/4`.
pub fn capacity_right_derivative(w: &Channel, t: f64, h0: f64) -> Result<RightDerivative, CapacityError> {
    if !(t >= 0.0) || !(h0 > 0.0) {
        return Err(CapacityError::BadTolerance(h0.min(t)));
    }
    let g0 = g_of_t(w, t)?;
    let value = one_sided(w, t, h0, g0, 1.0)?;
    let kink_suspected = if t >= h0 {
        let left = one_sided(w, t, h0, g0, -1.0)?;
        (value - left).abs() > KINK_THRESHOLD
    } else {
        false
    };
    Ok(RightDerivative { value, kink_suspected })
}
