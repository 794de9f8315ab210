//! Browser bindings for the `www/` demo page.
//!
//! Each operation takes plain text from the page's form fields and returns
//! a JSON string. The `*_json` functions hold the logic and run on any
//! target; the exported wrappers only turn errors into JS exceptions.

use chansim::sampling::{rejection_output_distribution, two_phase_output_distribution};
use chansim::{
    reliability_function, renyi_capacity, renyi_simulation_rate, strong_converse_exponent, Channel, Distribution,
    Extended, RejectionPlan, RenyiOrder, TwoPhasePlan,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest number of rate points a curve request may ask for.
pub const MAX_STEPS: usize = 400;

fn parse_order(alpha: &str) -> Result<RenyiOrder, String> {
    alpha.trim().parse().map_err(|e| format!("order {alpha:?}: {e}"))
}

fn parse_channel(matrix: &str) -> Result<Channel, String> {
    let trimmed = matrix.trim();
    if trimmed.contains(':') {
        Channel::from_preset(trimmed).map_err(|e| e.to_string())
    } else {
        Channel::parse_matrix(trimmed).map_err(|e| e.to_string())
    }
}

fn parse_distribution(text: &str) -> Result<Distribution, String> {
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    Distribution::new(values).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

#[derive(Serialize)]
struct CapacityView {
    value: f64,
    duality_gap: f64,
    optimal_input: Vec<f64>,
    optimal_output: Vec<f64>,
}

/// `I_α(W)` in bits with its optimizers. `matrix` is a preset such as
/// `bsc:0.1` or whitespace-separated rows.
pub fn capacity_json(matrix: &str, alpha: &str) -> Result<String, String> {
    let w = parse_channel(matrix)?;
    let res = renyi_capacity(&w, parse_order(alpha)?, chansim::capacity::DEFAULT_TOL).map_err(|e| e.to_string())?;
    Ok(to_json(&CapacityView {
        value: res.value,
        duality_gap: res.duality_gap,
        optimal_input: res.optimal_input.probs().to_vec(),
        optimal_output: res.optimal_output.probs().to_vec(),
    }))
}

#[derive(Serialize)]
struct CurveView {
    simulation_rate: f64,
    rates: Vec<f64>,
    reliability: Vec<Extended>,
    strong_converse: Vec<Extended>,
}

/// Reliability function and strong converse exponent on an evenly spaced
/// grid of `steps` rates in `[rate_min, rate_max]`.
pub fn exponent_curve_json(matrix: &str, alpha: &str, rate_min: f64, rate_max: f64, steps: usize) -> Result<String, String> {
    if !(2..=MAX_STEPS).contains(&steps) {
        return Err(format!("steps must lie in [2, {MAX_STEPS}]"));
    }
    if !(rate_min >= 0.0 && rate_max > rate_min && rate_max.is_finite()) {
        return Err("need 0 <= rate_min < rate_max".into());
    }
    let w = parse_channel(matrix)?;
    let order = parse_order(alpha)?;
    let mut view = CurveView {
        simulation_rate: renyi_simulation_rate(&w, order).map_err(|e| e.to_string())?,
        rates: Vec::with_capacity(steps),
        reliability: Vec::with_capacity(steps),
        strong_converse: Vec::with_capacity(steps),
    };
    for i in 0..steps {
        let r = rate_min + (rate_max - rate_min) * i as f64 / (steps - 1) as f64;
        view.rates.push(r);
        view.reliability.push(reliability_function(&w, r, order).map_err(|e| e.to_string())?.value);
        view.strong_converse.push(strong_converse_exponent(&w, r, order).map_err(|e| e.to_string())?.value);
    }
    Ok(to_json(&view))
}

#[derive(Serialize)]
struct SamplingView {
    single_pass: Vec<f64>,
    abort_probability: f64,
    single_pass_bits: f64,
    two_phase: Vec<f64>,
    two_phase_abort_probability: f64,
    two_phase_bits: f64,
}

/// Exact output laws of single-pass rejection sampling (`n_budget`, up to
/// `iterations` proposals) and of the two-phase procedure with `repeats`
/// standard rounds, for target `p` and proposal `q`.
pub fn rejection_law_json(p: &str, q: &str, n_budget: u32, iterations: u32, repeats: u32) -> Result<String, String> {
    let (p, q) = (parse_distribution(p)?, parse_distribution(q)?);
    let plan = RejectionPlan::new(p.clone(), q.clone(), n_budget.into(), iterations.into()).map_err(|e| e.to_string())?;
    let (law, abort) = rejection_output_distribution(&plan);
    let two = TwoPhasePlan::new(p, q, n_budget.into(), repeats.into()).map_err(|e| e.to_string())?;
    let two_law = two_phase_output_distribution(&two);
    Ok(to_json(&SamplingView {
        single_pass: law.probs().to_vec(),
        abort_probability: abort,
        single_pass_bits: plan.communication_bits(),
        two_phase: two_law.distribution.probs().to_vec(),
        two_phase_abort_probability: two_law.abort_probability,
        two_phase_bits: two.communication_bits(),
    }))
}

#[wasm_bindgen]
pub fn capacity(matrix: &str, alpha: &str) -> Result<String, JsError> {
    capacity_json(matrix, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exponentCurve)]
pub fn exponent_curve(matrix: &str, alpha: &str, rate_min: f64, rate_max: f64, steps: usize) -> Result<String, JsError> {
    exponent_curve_json(matrix, alpha, rate_min, rate_max, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rejectionLaw)]
pub fn rejection_law(p: &str, q: &str, n_budget: u32, iterations: u32, repeats: u32) -> Result<String, JsError> {
    rejection_law_json(p, q, n_budget, iterations, repeats).map_err(|e| JsError::new(&e))
}
