//! Rejection sampling: the single-pass procedure with clipped target, the
//! standard and variant schedules, and the two-phase composition.
//!
//! Each procedure comes in two forms: an exact output law, and a seeded
//! stochastic run that returns the transmitted index. An aborted run sends
//! index 0 and the receiver falls back to a fresh sample from the proposal.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{divergence_slices_nats, Distribution, MeasureError, NonnegVector, RenyiOrder};
use crate::rng::{categorical, uniform01};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("target and proposal alphabets differ: {0} vs {1}")]
    AlphabetMismatch(usize, usize),
    #[error("target puts mass on symbol {0} where the proposal has none")]
    SupportMismatch(usize),
    #[error("{0} must be at least 1")]
    ZeroBudget(&'static str),
    #[error("variant schedule needs target mass in (0, 1), got {0}")]
    VariantMass(f64),
    #[error("standard schedule needs a target with unit mass, got {0}")]
    StandardMass(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `P̄(x) = min{P(x), N·Q(x)}`.
pub fn clipped_subdistribution(p: &Distribution, q: &Distribution, n_budget: u64) -> NonnegVector {
    let n = n_budget as f64;
    let v = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| a.min(n * b))
        .collect();
    NonnegVector::new(v).expect("entrywise minimum of nonnegative vectors")
}

fn check_pair(p: &[f64], q: &Distribution) -> Result<(), SamplingError> {
    if p.len() != q.len() {
        return Err(SamplingError::AlphabetMismatch(p.len(), q.len()));
    }
    if let Some(x) = (0..p.len()).find(|&x| p[x] > 0.0 && q.probs()[x] == 0.0) {
        return Err(SamplingError::SupportMismatch(x));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionPlan {
    target: Distribution,
    proposal: Distribution,
    n_budget: u64,
    iteration_cap: u64,
}

impl RejectionPlan {
    pub fn new(target: Distribution, proposal: Distribution, n_budget: u64, iteration_cap: u64) -> Result<Self, SamplingError> {
        check_pair(target.probs(), &proposal)?;
        if n_budget == 0 {
            return Err(SamplingError::ZeroBudget("N"));
        }
        if iteration_cap == 0 {
            return Err(SamplingError::ZeroBudget("iteration cap"));
        }
        Ok(RejectionPlan {
            target,
            proposal,
            n_budget,
            iteration_cap,
        })
    }

    pub fn target(&self) -> &Distribution {
        &self.target
    }

    pub fn proposal(&self) -> &Distribution {
        &self.proposal
    }

    pub fn n_budget(&self) -> u64 {
        self.n_budget
    }

    pub fn iteration_cap(&self) -> u64 {
        self.iteration_cap
    }

    /// Indices `0..=Ñ` are sent, so `log₂(Ñ + 1)` bits.
    pub fn communication_bits(&self) -> f64 {
        ((self.iteration_cap as f64) + 1.0).log2()
    }
}

/// `ln p` for the abort probability `p = (1 − m/N)^Ñ`.
pub(crate) fn ln_abort_probability(clipped_mass: f64, n_budget: f64, iterations: f64) -> f64 {
    iterations * (-(clipped_mass / n_budget)).ln_1p()
}

/// Exact law `S = (1 − p)·P̄/ΣP̄ + p·Q` and the abort probability `p`.
pub fn rejection_output_distribution(plan: &RejectionPlan) -> (Distribution, f64) {
    let clipped = clipped_subdistribution(&plan.target, &plan.proposal, plan.n_budget);
    let mass = clipped.mass();
    let p_abort = ln_abort_probability(mass, plan.n_budget as f64, plan.iteration_cap as f64).exp();
    let s = clipped
        .values()
        .iter()
        .zip(plan.proposal.probs())
        .map(|(&c, &q)| (1.0 - p_abort) * c / mass + p_abort * q)
        .collect();
    (Distribution::new(s).expect("mixture of distributions"), p_abort)
}

/// Result of one stochastic run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingOutcome {
    /// Transmitted index; 0 means abort.
    pub index: u64,
    pub accepted_symbol: Option<usize>,
    /// What the receiver outputs: the accepted symbol, or a fresh proposal
    /// sample after an abort.
    pub emitted_symbol: usize,
}

impl SamplingOutcome {
    pub fn aborted(&self) -> bool {
        self.index == 0
    }
}

/// One run of the single-pass procedure: up to `Ñ` proposals, each accepted
/// with probability `P̄(X_j)/(N·Q(X_j))`.
pub fn run_rejection<R: Rng + ?Sized>(plan: &RejectionPlan, rng: &mut R) -> SamplingOutcome {
    let clipped = clipped_subdistribution(&plan.target, &plan.proposal, plan.n_budget);
    let n = plan.n_budget as f64;
    let q = plan.proposal.probs();
    for j in 1..=plan.iteration_cap {
        let x = categorical(rng, q);
        let ratio = (clipped.values()[x] / (n * q[x])).min(1.0);
        if uniform01(rng) < ratio {
            return SamplingOutcome {
                index: j,
                accepted_symbol: Some(x),
                emitted_symbol: x,
            };
        }
    }
    SamplingOutcome {
        index: 0,
        accepted_symbol: None,
        emitted_symbol: categorical(rng, q),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScheduleMode {
    Standard,
    /// Target is a sub-distribution of mass `λ`.
    Variant(f64),
}

/// Per-iteration quantities of the standard or variant schedule.
///
/// `accept_probs[j-1]` is `a_j` for `j = 1..=N`; `residuals`, `residual_mass`
/// and `beta` are indexed by `j = 0..=N` with `β_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionSchedule {
    pub accept_probs: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub residual_mass: Vec<f64>,
    pub beta: Vec<f64>,
    pub mode: ScheduleMode,
}

impl RejectionSchedule {
    pub fn n_budget(&self) -> usize {
        self.accept_probs.len()
    }

    /// `s_N` (or `ŝ_N`).
    pub fn final_residual_mass(&self) -> f64 {
        *self.residual_mass.last().expect("s_0 always present")
    }

    /// `β_N` (or `β̂_N`).
    pub fn final_beta(&self) -> f64 {
        *self.beta.last().expect("β_0 always present")
    }

    /// Probability that no proposal is accepted in `N` iterations: `s_N` for
    /// the standard schedule and `1 − λ + ŝ_N` for the variant.
    pub fn failure_probability(&self) -> f64 {
        match self.mode {
            ScheduleMode::Standard => self.final_residual_mass(),
            ScheduleMode::Variant(lambda) => 1.0 - lambda + self.final_residual_mass(),
        }
    }

    /// Accepted sub-distribution `target − p_N`.
    pub fn accepted(&self) -> Vec<f64> {
        let first = &self.residuals[0];
        let last = self.residuals.last().expect("p_0 always present");
        first.iter().zip(last).map(|(a, b)| (a - b).max(0.0)).collect()
    }
}

/// Runs the schedule recursions for `N` iterations.
pub fn build_schedule(
    target: &NonnegVector,
    proposal: &Distribution,
    n_budget: usize,
    mode: ScheduleMode,
) -> Result<RejectionSchedule, SamplingError> {
    check_pair(target.values(), proposal)?;
    if n_budget == 0 {
        return Err(SamplingError::ZeroBudget("N"));
    }
    let mass = target.mass();
    let lambda = match mode {
        ScheduleMode::Standard => {
            if (mass - 1.0).abs() > 1e-9 {
                return Err(SamplingError::StandardMass(mass));
            }
            1.0
        }
        ScheduleMode::Variant(l) => {
            if !(l > 0.0 && l < 1.0) || (l - mass).abs() > 1e-9 {
                return Err(SamplingError::VariantMass(if l > 0.0 && l < 1.0 { mass } else { l }));
            }
            l
        }
    };
    let q = proposal.probs();
    let mut p: Vec<f64> = target.values().to_vec();
    let mut s = lambda;
    let mut beta = 0.0;
    let mut sched = RejectionSchedule {
        accept_probs: Vec::with_capacity(n_budget),
        residuals: vec![p.clone()],
        residual_mass: vec![s],
        beta: vec![0.0],
        mode,
    };
    for _ in 0..n_budget {
        let reach = 1.0 - lambda + s;
        let mut a = vec![0.0; p.len()];
        for x in 0..p.len() {
            if p[x] <= 0.0 || q[x] == 0.0 {
                p[x] = 0.0;
                continue;
            }
            let offer = reach * q[x];
            if p[x] <= offer {
                a[x] = p[x] / offer;
                p[x] = 0.0;
            } else {
                a[x] = 1.0;
                p[x] -= offer;
            }
        }
        beta += reach;
        s = p.iter().sum();
        sched.accept_probs.push(a);
        sched.residuals.push(p.clone());
        sched.residual_mass.push(s);
        sched.beta.push(beta);
    }
    Ok(sched)
}

/// Output law `U = min{P, β_N Q} + s_N·Q` of the standard schedule.
pub fn standard_output_distribution(sched: &RejectionSchedule, proposal: &Distribution) -> Distribution {
    let s_n = sched.failure_probability();
    let v = sched
        .accepted()
        .iter()
        .zip(proposal.probs())
        .map(|(a, q)| a + s_n * q)
        .collect();
    Distribution::new(v).expect("accepted mass plus fallback is a distribution")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhasePlan {
    target: Distribution,
    proposal: Distribution,
    n_budget: u64,
    repeats: u64,
}

impl TwoPhasePlan {
    pub fn new(target: Distribution, proposal: Distribution, n_budget: u64, repeats: u64) -> Result<Self, SamplingError> {
        check_pair(target.probs(), &proposal)?;
        if n_budget == 0 {
            return Err(SamplingError::ZeroBudget("N"));
        }
        if repeats == 0 {
            return Err(SamplingError::ZeroBudget("K"));
        }
        Ok(TwoPhasePlan {
            target,
            proposal,
            n_budget,
            repeats,
        })
    }

    pub fn target(&self) -> &Distribution {
        &self.target
    }

    pub fn proposal(&self) -> &Distribution {
        &self.proposal
    }

    pub fn n_budget(&self) -> u64 {
        self.n_budget
    }

    pub fn repeats(&self) -> u64 {
        self.repeats
    }

    /// `⌈log₂((K+1)N + 1)⌉`.
    pub fn communication_bits(&self) -> f64 {
        (((self.repeats + 1) * self.n_budget + 1) as f64).log2().ceil()
    }

    /// The standard schedule on `P` and, when `s_N > 0`, the variant
    /// schedule on the residual `P̂ = p_N`.
    pub fn schedules(&self) -> (RejectionSchedule, Option<RejectionSchedule>) {
        let n = self.n_budget as usize;
        let standard = build_schedule(&NonnegVector::from(&self.target), &self.proposal, n, ScheduleMode::Standard)
            .expect("plan was validated");
        let lambda = standard.final_residual_mass();
        let variant = if lambda > 0.0 {
            let residual = NonnegVector::new(standard.residuals[n].clone()).expect("residuals are nonnegative");
            build_schedule(&residual, &self.proposal, n, ScheduleMode::Variant(residual.mass())).ok()
        } else {
            None
        };
        (standard, variant)
    }
}

/// Exact law of the two-phase procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseLaw {
    pub distribution: Distribution,
    /// `S(x) ≥ (1 − s_N^K)·min{P(x), N·Q(x)}` for every `x`.
    pub lower_bound_ok: bool,
    pub s_n: f64,
    pub beta_n: f64,
    pub abort_probability: f64,
}

/// `S = min{P̂, β̂_N Q} + (1 − λ + ŝ_N)·U` with
/// `U = ((1 − s_N^K)/(1 − s_N))·min{P, β_N Q} + s_N^K·Q`.
pub fn two_phase_output_distribution(plan: &TwoPhasePlan) -> TwoPhaseLaw {
    let (standard, variant) = plan.schedules();
    let s_n = standard.final_residual_mass();
    let k = plan.repeats as i32;
    let q = plan.proposal.probs();
    let p0 = standard.accepted();
    let s_k = s_n.powi(k);
    // (1 − s^K)/(1 − s) = 1 + s + … + s^{K−1}
    let geometric: f64 = (0..k).map(|i| s_n.powi(i)).sum();
    let u: Vec<f64> = p0.iter().zip(q).map(|(a, qq)| geometric * a + s_k * qq).collect();
    let (first, fail) = match &variant {
        Some(v) => (v.accepted(), v.failure_probability()),
        None => (vec![0.0; q.len()], 1.0),
    };
    let s: Vec<f64> = first.iter().zip(&u).map(|(a, b)| a + fail * b).collect();
    let n = plan.n_budget as f64;
    let lower_bound_ok = s
        .iter()
        .zip(plan.target.probs().iter().zip(q))
        .all(|(sv, (p, qq))| *sv >= (1.0 - s_k) * p.min(n * qq) - 1e-12);
    TwoPhaseLaw {
        distribution: Distribution::new(s).expect("composition of laws"),
        lower_bound_ok,
        s_n,
        beta_n: standard.final_beta(),
        abort_probability: fail * s_k,
    }
}

/// Upper bound `2^{−(t/(1+t))(log N − D_{1+t}(P‖Q))}` on `s_N` for `t > 0`;
/// at `t = 0` the bound is the trivial 1.
pub fn residual_mass_bound(p: &Distribution, q: &Distribution, n_budget: u64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let order = RenyiOrder::from_t(t).expect("t > 0");
    let d = divergence_slices_nats(p.probs(), q.probs(), order);
    let ln_n = (n_budget as f64).ln();
    (-(t / (1.0 + t)) * (ln_n - d)).exp()
}

/// Steps through one schedule stochastically; returns the accepting
/// iteration `1..=N` and symbol.
fn run_schedule<R: Rng + ?Sized>(sched: &RejectionSchedule, q: &[f64], rng: &mut R) -> Option<(u64, usize)> {
    // the variant starts with an implicit abort branch of mass 1 − λ
    // spread over the iterations; stepping with a_j reproduces its law
    for (j, a) in sched.accept_probs.iter().enumerate() {
        let x = categorical(rng, q);
        if uniform01(rng) < a[x] {
            return Some((j as u64 + 1, x));
        }
    }
    None
}

/// One stochastic run of the two-phase procedure. Indices: variant phase
/// `1..=N`, the `k`-th standard repeat `kN + j`, abort `0`.
pub fn run_two_phase<R: Rng + ?Sized>(plan: &TwoPhasePlan, rng: &mut R) -> SamplingOutcome {
    let (standard, variant) = plan.schedules();
    let q = plan.proposal.probs();
    if let Some(v) = &variant {
        if let Some((j, x)) = run_schedule(v, q, rng) {
            return SamplingOutcome {
                index: j,
                accepted_symbol: Some(x),
                emitted_symbol: x,
            };
        }
    }
    for k in 1..=plan.repeats {
        if let Some((j, x)) = run_schedule(&standard, q, rng) {
            return SamplingOutcome {
                index: k * plan.n_budget + j,
                accepted_symbol: Some(x),
                emitted_symbol: x,
            };
        }
    }
    SamplingOutcome {
        index: 0,
        accepted_symbol: None,
        emitted_symbol: categorical(rng, q),
    }
}
