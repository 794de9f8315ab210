//! Simulation schemes for `W^{×n}` and the channels they induce.
//!
//! Schemes are described by their parameters and proposal laws. Induced rows
//! are computed from the rejection-sampling output formula, either per
//! conditional type of `y^n` given `x^n` or by enumerating all of `Y^n`.
//! Shared randomness is modeled as the pre-shared proposal samples
//! themselves; the decoder for index `j` outputs the `j`-th sample, and an
//! abort outputs a fresh one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;
use crate::exponents::{capacity_checked, tilted_channel, ExponentError};
use crate::logmath::{ln_factorials, ln_or_neg_inf, log1m_exp, log_sum_exp, LOG2_E};
use crate::measures::{class_divergence_nats, ClassTerm, Distribution, Extended, MeasureError, RenyiOrder};
use crate::optim::maximize_on;
use crate::par;
use crate::types::{enumerate_types, ln_multinomial, num_types, Compositions, TypeVector, TypesError};

/// Default cap on `|X|^n·|Y|^n` for a materialized induced channel.
pub const DEFAULT_MATERIALIZE_CAP: usize = 1 << 20;
/// Default slack `δ` in bits for strong converse schemes.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Largest `n·log₂|Y|` for which rows are enumerated word by word.
pub const ENUMERATION_BITS: f64 = 24.0;
const MAX_CLASSES: f64 = (1u64 << 24) as f64;
const MAX_BUDGET_BITS: f64 = 62.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Types(#[from] TypesError),
    #[error("message budget of 2^{bits:.1} exceeds the supported range")]
    BudgetOverflow { bits: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inner optimization failed for input type {x_type:?}: {source}")]
    InnerSolver { x_type: Vec<u32>, source: ExponentError },
    #[error("induced channel has {entries:e} entries, over the cap of {cap}; use induced_row per input word")]
    CapExceeded { entries: f64, cap: usize },
    #[error("row of length {n} over |Y| = {ny} is too large for both enumeration and type aggregation")]
    Infeasible { n: u32, ny: usize },
    #[error("input word must have length {n} over an alphabet of size {nx}")]
    InputWord { n: u32, nx: usize },
    #[error("scheme was built for a channel of shape {expected:?}, got {got:?}")]
    ChannelShape { expected: (usize, usize), got: (usize, usize) },
}

/// Construction behind a scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    /// Rejection sampling of `W^n(·|x^n)` from `Q_Y^{×n}` with `N = 2^{nr}`.
    RateAbove { s: Extended, r: f64 },
    /// Per input type, rejection sampling of a tilted channel.
    StrongConverse { alpha: f64, r: f64, delta: f64 },
    /// No communication; uniform output.
    UniformFallback,
    /// An inner scheme on the first `n_prime` uses, `Q_Y` i.i.d. on the rest.
    ProductSplit {
        inner: Option<Box<SimulationScheme>>,
        n_prime: u32,
    },
}

/// Per-type data of a strong converse scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeProposal {
    pub x_type: Vec<u32>,
    /// Tilted channel `W̃` sampled for words of this type.
    pub target: Channel,
    /// `T·W̃`, used as the proposal.
    pub proposal: Distribution,
    pub n_budget: u64,
    /// Inner objective at `W̃`, in bits.
    pub objective_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Proposal {
    Single { q: Distribution },
    PerType { entries: Vec<TypeProposal> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationScheme {
    pub n: u32,
    /// Number of distinct messages, abort index included.
    pub message_budget: u64,
    /// `N` for single-proposal rejection schemes.
    pub n_budget: Option<u64>,
    /// `Ñ`; zero when the scheme does not sample.
    pub iteration_cap: u64,
    pub proposal: Proposal,
    pub kind: SchemeKind,
    /// `(|X|, |Y|)` of the simulated channel.
    pub shape: (usize, usize),
}

impl SimulationScheme {
    pub fn communication_bits(&self) -> f64 {
        (self.message_budget as f64).log2()
    }

    /// Communication rate `log₂(budget)/n`.
    pub fn rate(&self) -> f64 {
        self.communication_bits() / self.n as f64
    }

    /// Checks the bookkeeping of a scheme read back from text.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::InvalidParameter(m.to_string()));
        if self.n == 0 || self.message_budget == 0 {
            return bad("blocklength and message budget must be positive");
        }
        match (&self.kind, &self.proposal) {
            (SchemeKind::RateAbove { .. }, Proposal::Single { q }) => {
                if self.message_budget != self.iteration_cap + 1 || self.n_budget.is_none() {
                    return bad("rate-above scheme needs budget = Ñ + 1 and a value of N");
                }
                if q.len() != self.shape.1 {
                    return bad("proposal alphabet differs from the channel output");
                }
            }
            (SchemeKind::StrongConverse { .. }, Proposal::PerType { entries }) => {
                let types = num_types(self.shape.0, self.n);
                if types != (entries.len() as u64).into() {
                    return bad("one proposal per input type is required");
                }
                if self.message_budget != entries.len() as u64 * (self.iteration_cap + 1) {
                    return bad("strong converse budget must be |P_n(X)|·(Ñ + 1)");
                }
            }
            (SchemeKind::UniformFallback, Proposal::Single { .. }) => {
                if self.message_budget != 1 {
                    return bad("uniform fallback sends nothing");
                }
            }
            (SchemeKind::ProductSplit { inner, n_prime }, Proposal::Single { .. }) => {
                match inner {
                    Some(s) => {
                        s.validate()?;
                        if s.n != *n_prime || s.message_budget != self.message_budget {
                            return bad("product split must inherit the inner blocklength and budget");
                        }
                    }
                    None if *n_prime != 0 || self.message_budget != 1 => {
                        return bad("product split without inner scheme has n' = 0 and budget 1")
                    }
                    None => {}
                }
                if *n_prime > self.n {
                    return bad("n' exceeds n");
                }
            }
            _ => return bad("proposal form does not match the scheme kind"),
        }
        Ok(())
    }

    fn check_channel(&self, w: &Channel) -> Result<(), ProtocolError> {
        let got = (w.input_size(), w.output_size());
        if got != self.shape {
            return Err(ProtocolError::ChannelShape {
                expected: self.shape,
                got,
            });
        }
        Ok(())
    }

    fn check_word(&self, word: &[usize]) -> Result<(), ProtocolError> {
        if word.len() != self.n as usize || word.iter().any(|&x| x >= self.shape.0) {
            return Err(ProtocolError::InputWord {
                n: self.n,
                nx: self.shape.0,
            });
        }
        Ok(())
    }
}

fn budget_from_bits(bits: f64) -> Result<u64, ProtocolError> {
    if !(bits <= MAX_BUDGET_BITS) {
        return Err(ProtocolError::BudgetOverflow { bits });
    }
    Ok((bits.exp2().round() as u64).max(1))
}

fn order_for_s(s: Extended) -> Result<RenyiOrder, ProtocolError> {
    match s {
        Extended::Infinite => Ok(RenyiOrder::Infinity),
        Extended::Finite(v) if v > 0.0 => Ok(RenyiOrder::from_t(v)?),
        Extended::Finite(v) => Err(ProtocolError::InvalidParameter(format!("s must be positive, got {v}"))),
    }
}

fn check_rate(r: f64) -> Result<(), ProtocolError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(ProtocolError::InvalidParameter(format!("rate must be finite and nonnegative, got {r}")));
    }
    Ok(())
}

/// Reliability scheme: `Q_Y` minimizes `max_x D_{1+s}(W_x‖Q)`,
/// `N = round(2^{nr})`, `Ñ = ⌈ln 2 · N · n · log₂ n⌉` (at least one).
pub fn build_rf_scheme(w: &Channel, n: u32, r: f64, s: Extended) -> Result<SimulationScheme, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::InvalidParameter("blocklength must be positive".into()));
    }
    check_rate(r)?;
    let order = order_for_s(s)?;
    let q = capacity_checked(w, order)?.optimal_output;
    let n_budget = budget_from_bits(n as f64 * r)?;
    let nf = n as f64;
    let iter_real = std::f64::consts::LN_2 * n_budget as f64 * nf * nf.log2();
    if !(iter_real.log2() <= MAX_BUDGET_BITS) {
        return Err(ProtocolError::BudgetOverflow { bits: iter_real.log2() });
    }
    let iteration_cap = (iter_real.ceil() as u64).max(1);
    Ok(SimulationScheme {
        n,
        message_budget: iteration_cap + 1,
        n_budget: Some(n_budget),
        iteration_cap,
        proposal: Proposal::Single { q },
        kind: SchemeKind::RateAbove { s, r },
        shape: (w.input_size(), w.output_size()),
    })
}

/// Strong converse scheme for `α ∈ (0, 1)`: for each input type `T`, the
/// tilted channel `W̃_T` is sampled from `(T·W̃_T)^{×n}` with
/// `N_T = round(2^{n(I(T, W̃_T) + δ)})` and `Ñ = round(2^{nr+1})`. The type
/// is announced, so the budget is `|P_n(X)|·(Ñ + 1)`.
pub fn build_sc_scheme(w: &Channel, n: u32, r: f64, alpha: f64, delta: f64) -> Result<SimulationScheme, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::InvalidParameter("blocklength must be positive".into()));
    }
    check_rate(r)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ExponentError::OrderOutOfRange(alpha).into());
    }
    if !(delta > 0.0) {
        return Err(ProtocolError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let types = enumerate_types(w.input_size(), n)?;
    let iteration_cap = budget_from_bits(n as f64 * r + 1.0)?;
    let solved = par::map(types, |t| {
        let p = Distribution::new(t.frequencies()).expect("types have mass");
        let tilted = tilted_channel(w, &p, r, alpha).map_err(|source| ProtocolError::InnerSolver {
            x_type: t.counts().to_vec(),
            source,
        })?;
        let n_budget = budget_from_bits(n as f64 * (tilted.information_bits + delta))?;
        Ok(TypeProposal {
            x_type: t.counts().to_vec(),
            target: tilted.channel,
            proposal: tilted.output,
            n_budget,
            objective_bits: tilted.value,
        })
    });
    let entries: Vec<TypeProposal> = solved.into_iter().collect::<Result<_, ProtocolError>>()?;
    let message_budget = (entries.len() as u64)
        .checked_mul(iteration_cap + 1)
        .ok_or(ProtocolError::BudgetOverflow {
            bits: (entries.len() as f64).log2() + (iteration_cap as f64 + 1.0).log2(),
        })?;
    Ok(SimulationScheme {
        n,
        message_budget,
        n_budget: None,
        iteration_cap,
        proposal: Proposal::PerType { entries },
        kind: SchemeKind::StrongConverse { alpha, r, delta },
        shape: (w.input_size(), w.output_size()),
    })
}

/// Zero-communication scheme with uniform output.
pub fn build_uniform_fallback(w: &Channel, n: u32) -> Result<SimulationScheme, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::InvalidParameter("blocklength must be positive".into()));
    }
    Ok(SimulationScheme {
        n,
        message_budget: 1,
        n_budget: None,
        iteration_cap: 0,
        proposal: Proposal::Single {
            q: Distribution::uniform(w.output_size()),
        },
        kind: SchemeKind::UniformFallback,
        shape: (w.input_size(), w.output_size()),
    })
}

/// Below-rate scheme for `α ≥ 1`: an rf scheme at rate `r' = I_{1+s}(W) + δ`
/// on the first `n' = ⌊nr/r'⌋` uses and the order-α capacity output on the
/// rest. The inner scheme uses `s = α − 1`, or `s = 1` at `α = 1`.
pub fn build_product_split(
    w: &Channel,
    n: u32,
    r: f64,
    order: RenyiOrder,
    delta: f64,
) -> Result<SimulationScheme, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::InvalidParameter("blocklength must be positive".into()));
    }
    check_rate(r)?;
    if !(delta > 0.0) {
        return Err(ProtocolError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let s = match order {
        RenyiOrder::Infinity => Extended::Infinite,
        RenyiOrder::Finite(a) if a > 1.0 => Extended::Finite(a - 1.0),
        RenyiOrder::One => Extended::Finite(1.0),
        o => {
            return Err(ProtocolError::InvalidParameter(format!(
                "product split needs order at least 1, got {o}"
            )))
        }
    };
    let inner_order = order_for_s(s)?;
    let r_prime = capacity_checked(w, inner_order)?.value + delta;
    let q_tail = capacity_checked(w, order)?.optimal_output;
    let n_prime = ((n as f64 * r / r_prime).floor() as u32).min(n);
    let inner = if n_prime > 0 {
        Some(Box::new(build_rf_scheme(w, n_prime, r_prime, s)?))
    } else {
        None
    };
    let (message_budget, iteration_cap) = inner
        .as_ref()
        .map_or((1, 0), |s| (s.message_budget, s.iteration_cap));
    Ok(SimulationScheme {
        n,
        message_budget,
        n_budget: inner.as_ref().and_then(|s| s.n_budget),
        iteration_cap,
        proposal: Proposal::Single { q: q_tail },
        kind: SchemeKind::ProductSplit { inner, n_prime },
        shape: (w.input_size(), w.output_size()),
    })
}

/// One class of output words sharing the same target and induced mass
/// (natural logs, per word).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowClass {
    pub ln_mult: f64,
    /// `ln W^n(y^n|x^n)`.
    pub ln_target: f64,
    /// `ln N(y^n|x^n)`.
    pub ln_induced: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowMode {
    /// Group `y^n` by conditional type given `x^n`.
    Aggregated,
    /// One class per word, in lexicographic order of `y^n`.
    Enumerated,
}

/// A row `N(·|x^n)` of an induced channel next to the true row `W^n(·|x^n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducedRow {
    pub input_word: Vec<usize>,
    pub mode: RowMode,
    pub classes: Vec<RowClass>,
    /// Abort probability of the rejection stage, zero if there is none.
    pub abort_probability: f64,
    /// `Σ_y min{target, N·proposal}` of the rejection stage, one if there is none.
    pub clipped_mass: f64,
}

impl InducedRow {
    /// `Σ_y N(y|x^n)`; one up to rounding.
    pub fn total_mass(&self) -> f64 {
        log_sum_exp(self.classes.iter().map(|c| c.ln_mult + c.ln_induced)).exp()
    }

    /// `D_α(W^n(·|x^n) ‖ N(·|x^n))` in bits.
    pub fn divergence(&self, order: RenyiOrder) -> Extended {
        let terms: Vec<ClassTerm> = self
            .classes
            .iter()
            .map(|c| ClassTerm {
                ln_mult: c.ln_mult,
                ln_p: c.ln_target,
                ln_q: c.ln_induced,
            })
            .collect();
        Extended::from_f64(class_divergence_nats(&terms, order) * LOG2_E)
    }

    /// Row as a vector over `Y^n`; only for enumerated rows.
    pub fn probabilities(&self) -> Option<Vec<f64>> {
        (self.mode == RowMode::Enumerated).then(|| self.classes.iter().map(|c| c.ln_induced.exp()).collect())
    }
}

/// Quantities of one output class before the rejection stage is applied.
#[derive(Clone, Copy)]
struct RawClass {
    ln_mult: f64,
    ln_true: f64,
    ln_sampled: f64,
    ln_proposal: f64,
}

struct Rejection {
    classes: Vec<RowClass>,
    abort: f64,
    clipped: f64,
}

/// Output law `(1−p)·P̄/ΣP̄ + p·Q` with `P̄ = min{P, N·Q}` and
/// `p = (1 − ΣP̄/N)^Ñ`, evaluated in logs.
fn apply_rejection(raw: &[RawClass], n_budget: u64, iteration_cap: u64) -> Rejection {
    let ln_n = (n_budget as f64).ln();
    let ln_bar: Vec<f64> = raw.iter().map(|c| c.ln_sampled.min(ln_n + c.ln_proposal)).collect();
    let ln_sum = log_sum_exp(raw.iter().zip(&ln_bar).map(|(c, b)| c.ln_mult + b));
    let ln_p = iteration_cap as f64 * log1m_exp((ln_sum - ln_n).min(0.0));
    let ln_keep = log1m_exp(ln_p);
    let classes = raw
        .iter()
        .zip(&ln_bar)
        .map(|(c, &b)| RowClass {
            ln_mult: c.ln_mult,
            ln_target: c.ln_true,
            ln_induced: log_sum_exp([ln_keep + b - ln_sum, ln_p + c.ln_proposal]),
        })
        .collect();
    Rejection {
        classes,
        abort: ln_p.exp(),
        clipped: ln_sum.exp(),
    }
}

/// Per-letter log tables for one rejection stage.
struct LetterTables {
    ln_w: Vec<Vec<f64>>,
    ln_sampled: Vec<Vec<f64>>,
    ln_q: Vec<f64>,
}

impl LetterTables {
    fn new(w: &Channel, sampled: &Channel, q: &Distribution) -> Self {
        let table = |c: &Channel| -> Vec<Vec<f64>> {
            (0..c.input_size())
                .map(|x| c.row(x).iter().map(|&v| ln_or_neg_inf(v)).collect())
                .collect()
        };
        LetterTables {
            ln_w: table(w),
            ln_sampled: table(sampled),
            ln_q: q.probs().iter().map(|&v| ln_or_neg_inf(v)).collect(),
        }
    }

    fn raw_for_counts(&self, k: &[Vec<u32>], ln_mult: f64) -> RawClass {
        let mut c = RawClass {
            ln_mult,
            ln_true: 0.0,
            ln_sampled: 0.0,
            ln_proposal: 0.0,
        };
        for (x, row) in k.iter().enumerate() {
            for (y, &cnt) in row.iter().enumerate() {
                if cnt > 0 {
                    let m = cnt as f64;
                    c.ln_true += m * self.ln_w[x][y];
                    c.ln_sampled += m * self.ln_sampled[x][y];
                    c.ln_proposal += m * self.ln_q[y];
                }
            }
        }
        c
    }

    fn raw_for_word(&self, x: &[usize], y: &[usize]) -> RawClass {
        let mut c = RawClass {
            ln_mult: 0.0,
            ln_true: 0.0,
            ln_sampled: 0.0,
            ln_proposal: 0.0,
        };
        for (&a, &b) in x.iter().zip(y) {
            c.ln_true += self.ln_w[a][b];
            c.ln_sampled += self.ln_sampled[a][b];
            c.ln_proposal += self.ln_q[b];
        }
        c
    }
}

/// Visits every conditional type of `y^n` given an input word with symbol
/// counts `x_counts`, passing the multiplicity and the `|X|×|Y|` counts.
fn for_each_conditional_type<F: FnMut(f64, &[Vec<u32>])>(x_counts: &[u32], ny: usize, mut f: F) {
    let n: u32 = x_counts.iter().sum();
    let table = ln_factorials(n as usize);
    let mut walks: Vec<Compositions> = x_counts.iter().map(|&c| Compositions::new(ny, c)).collect();
    let mut k: Vec<Vec<u32>> = walks.iter().map(|w| w.current().expect("fresh walk").to_vec()).collect();
    loop {
        let ln_mult: f64 = k.iter().map(|row| ln_multinomial(&table, row)).sum();
        f(ln_mult, &k);
        // odometer over the per-symbol compositions
        let mut i = 0;
        loop {
            if i == walks.len() {
                return;
            }
            walks[i].advance();
            match walks[i].current() {
                Some(c) => {
                    k[i].copy_from_slice(c);
                    break;
                }
                None => {
                    walks[i] = Compositions::new(ny, x_counts[i]);
                    k[i].copy_from_slice(walks[i].current().expect("fresh walk"));
                    i += 1;
                }
            }
        }
    }
}

fn conditional_class_count(x_counts: &[u32], ny: usize) -> f64 {
    x_counts
        .iter()
        .map(|&c| {
            let t = ln_factorials(c as usize + ny);
            (t[c as usize + ny - 1] - t[c as usize] - t[ny - 1]).exp()
        })
        .product()
}

fn counts_of(word: &[usize], nx: usize) -> Vec<u32> {
    let mut c = vec![0u32; nx];
    for &x in word {
        c[x] += 1;
    }
    c
}

/// Calls `f` on every word of `A^len` in lexicographic order.
fn for_each_word<F: FnMut(&[usize])>(alphabet: usize, len: usize, mut f: F) {
    let mut word = vec![0usize; len];
    loop {
        f(&word);
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            word[i] += 1;
            if word[i] < alphabet {
                break;
            }
            word[i] = 0;
        }
    }
}

fn enumeration_feasible(n: u32, ny: usize) -> bool {
    n as f64 * (ny as f64).log2() <= ENUMERATION_BITS
}

/// Raw classes of a single-proposal or per-type rejection stage.
fn rejection_raw(tables: &LetterTables, word: &[usize], ny: usize, mode: RowMode) -> Vec<RawClass> {
    let mut raw = Vec::new();
    match mode {
        RowMode::Aggregated => {
            let counts = counts_of(word, tables.ln_w.len());
            for_each_conditional_type(&counts, ny, |ln_mult, k| raw.push(tables.raw_for_counts(k, ln_mult)));
        }
        RowMode::Enumerated => {
            for_each_word(ny, word.len(), |y| raw.push(tables.raw_for_word(word, y)));
        }
    }
    raw
}

/// Classes of `W(·|x)` against a fixed i.i.d. output law.
fn iid_classes(w: &Channel, q: &Distribution, word: &[usize], mode: RowMode) -> Vec<RowClass> {
    let tables = LetterTables::new(w, w, q);
    rejection_raw(&tables, word, w.output_size(), mode)
        .into_iter()
        .map(|c| RowClass {
            ln_mult: c.ln_mult,
            ln_target: c.ln_true,
            ln_induced: c.ln_proposal,
        })
        .collect()
}

fn mode_feasible(scheme: &SimulationScheme, word: &[usize], mode: RowMode) -> bool {
    let ny = scheme.shape.1;
    match mode {
        RowMode::Enumerated => enumeration_feasible(scheme.n, ny),
        RowMode::Aggregated => conditional_class_count(&counts_of(word, scheme.shape.0), ny) <= MAX_CLASSES,
    }
}

fn type_entry<'a>(entries: &'a [TypeProposal], counts: &[u32]) -> &'a TypeProposal {
    let i = entries
        .binary_search_by(|e| e.x_type.as_slice().cmp(counts))
        .expect("every input type has a proposal");
    &entries[i]
}

fn row_in_mode(scheme: &SimulationScheme, w: &Channel, word: &[usize], mode: RowMode) -> InducedRow {
    let ny = w.output_size();
    let finish = |classes: Vec<RowClass>, abort: f64, clipped: f64| InducedRow {
        input_word: word.to_vec(),
        mode,
        classes,
        abort_probability: abort,
        clipped_mass: clipped,
    };
    match (&scheme.kind, &scheme.proposal) {
        (SchemeKind::RateAbove { .. }, Proposal::Single { q }) => {
            let tables = LetterTables::new(w, w, q);
            let raw = rejection_raw(&tables, word, ny, mode);
            let rej = apply_rejection(&raw, scheme.n_budget.unwrap_or(1), scheme.iteration_cap);
            finish(rej.classes, rej.abort, rej.clipped)
        }
        (SchemeKind::StrongConverse { .. }, Proposal::PerType { entries }) => {
            let entry = type_entry(entries, &counts_of(word, w.input_size()));
            let tables = LetterTables::new(w, &entry.target, &entry.proposal);
            let raw = rejection_raw(&tables, word, ny, mode);
            let rej = apply_rejection(&raw, entry.n_budget, scheme.iteration_cap);
            finish(rej.classes, rej.abort, rej.clipped)
        }
        (SchemeKind::UniformFallback, Proposal::Single { q }) => finish(iid_classes(w, q, word, mode), 0.0, 1.0),
        (SchemeKind::ProductSplit { inner, n_prime }, Proposal::Single { q }) => {
            let (head, tail) = word.split_at(*n_prime as usize);
            let tail_classes = if tail.is_empty() {
                vec![RowClass {
                    ln_mult: 0.0,
                    ln_target: 0.0,
                    ln_induced: 0.0,
                }]
            } else {
                iid_classes(w, q, tail, mode)
            };
            let Some(inner) = inner else {
                return finish(tail_classes, 0.0, 1.0);
            };
            let head_row = row_in_mode(inner, w, head, mode);
            let mut classes = Vec::with_capacity(head_row.classes.len() * tail_classes.len());
            for h in &head_row.classes {
                for t in &tail_classes {
                    classes.push(RowClass {
                        ln_mult: h.ln_mult + t.ln_mult,
                        ln_target: h.ln_target + t.ln_target,
                        ln_induced: h.ln_induced + t.ln_induced,
                    });
                }
            }
            finish(classes, head_row.abort_probability, head_row.clipped_mass)
        }
        _ => unreachable!("validated schemes pair kinds with proposal forms"),
    }
}

/// Row `N(·|x^n)` in the requested mode.
pub fn induced_row_with(
    scheme: &SimulationScheme,
    w: &Channel,
    input_word: &[usize],
    mode: RowMode,
) -> Result<InducedRow, ProtocolError> {
    scheme.check_channel(w)?;
    scheme.check_word(input_word)?;
    scheme.validate()?;
    if !mode_feasible(scheme, input_word, mode) {
        return Err(ProtocolError::Infeasible {
            n: scheme.n,
            ny: w.output_size(),
        });
    }
    Ok(row_in_mode(scheme, w, input_word, mode))
}

/// Row `N(·|x^n)`, type-aggregated when possible and enumerated otherwise.
pub fn induced_row(scheme: &SimulationScheme, w: &Channel, input_word: &[usize]) -> Result<InducedRow, ProtocolError> {
    induced_row_with(scheme, w, input_word, RowMode::Aggregated)
        .or_else(|_| induced_row_with(scheme, w, input_word, RowMode::Enumerated))
}

/// Materialized `N: X^n → Y^n`, words indexed lexicographically.
pub fn induced_channel(scheme: &SimulationScheme, w: &Channel) -> Result<Channel, ProtocolError> {
    induced_channel_capped(scheme, w, DEFAULT_MATERIALIZE_CAP)
}

pub fn induced_channel_capped(scheme: &SimulationScheme, w: &Channel, cap: usize) -> Result<Channel, ProtocolError> {
    scheme.check_channel(w)?;
    let n = scheme.n as i32;
    let entries = (w.input_size() as f64).powi(n) * (w.output_size() as f64).powi(n);
    if entries > cap as f64 {
        return Err(ProtocolError::CapExceeded { entries, cap });
    }
    let mut words = Vec::new();
    for_each_word(w.input_size(), scheme.n as usize, |x| words.push(x.to_vec()));
    let rows = par::map(words, |x| {
        induced_row_with(scheme, w, &x, RowMode::Enumerated).map(|r| r.probabilities().expect("enumerated row"))
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_, _>>()?;
    Ok(Channel::new(rows)?)
}

/// `max_{x^n} D_α(W^n(·|x^n) ‖ N(·|x^n))` in bits.
///
/// Rejection and uniform schemes treat all words of one type alike, so one
/// representative per type is enough. A product split is handled through
/// additivity: inner value plus `(n − n')·max_x D_α(W_x‖Q_Y)`.
pub fn simulation_performance(w: &Channel, scheme: &SimulationScheme, order: RenyiOrder) -> Result<Extended, ProtocolError> {
    scheme.check_channel(w)?;
    scheme.validate()?;
    if let SchemeKind::ProductSplit { inner, n_prime } = &scheme.kind {
        let Proposal::Single { q } = &scheme.proposal else {
            unreachable!("validated")
        };
        let tail = (scheme.n - n_prime) as f64;
        let per_letter = (0..w.input_size())
            .map(|x| crate::measures::renyi_divergence(&w.row_distribution(x), &q.into(), order))
            .collect::<Result<Vec<Extended>, _>>()?
            .into_iter()
            .fold(Extended::Finite(0.0), Extended::max);
        let tail_value = match per_letter {
            Extended::Infinite if tail > 0.0 => Extended::Infinite,
            Extended::Infinite => Extended::Finite(0.0),
            Extended::Finite(v) => Extended::Finite(v * tail),
        };
        let head = match inner {
            Some(s) => simulation_performance(w, s, order)?,
            None => Extended::Finite(0.0),
        };
        return Ok(match (head, tail_value) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        });
    }
    let types = enumerate_types(w.input_size(), scheme.n)?;
    let values = par::map(types, |t: TypeVector| {
        induced_row(scheme, w, &t.representative()).map(|row| row.divergence(order))
    });
    let mut best = Extended::Finite(f64::NEG_INFINITY);
    for v in values {
        best = best.max(v?);
    }
    Ok(best)
}

/// Equal-weight mixture of i.i.d. laws on the first `head_len` letters,
/// times an i.i.d. tail. This is the output reference law
/// `Q(y) = Σ_k P_K(k) Σ_j D(y|j,k) / M` of a scheme with `M` messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOutput {
    pub n: u32,
    pub head_len: u32,
    pub mixture: Vec<Distribution>,
    pub tail: Distribution,
}

impl ReferenceOutput {
    /// `ln Q(y^n)`.
    pub fn ln_word_mass(&self, word: &[usize]) -> f64 {
        let (head, tail) = word.split_at(self.head_len as usize);
        let ln_tail: f64 = tail.iter().map(|&y| ln_or_neg_inf(self.tail.probs()[y])).sum();
        if self.mixture.is_empty() || head.is_empty() {
            return ln_tail;
        }
        let ln_m = (self.mixture.len() as f64).ln();
        let head_terms = self
            .mixture
            .iter()
            .map(|q| head.iter().map(|&y| ln_or_neg_inf(q.probs()[y])).sum::<f64>());
        log_sum_exp(head_terms) - ln_m + ln_tail
    }

    /// The law over `Y^n` in lexicographic word order.
    pub fn materialize(&self, cap: usize) -> Result<Distribution, ProtocolError> {
        let ny = self.tail.len();
        let entries = (ny as f64).powi(self.n as i32);
        if entries > cap as f64 {
            return Err(ProtocolError::CapExceeded { entries, cap });
        }
        let mut probs = Vec::with_capacity(entries as usize);
        for_each_word(ny, self.n as usize, |y| probs.push(self.ln_word_mass(y).exp()));
        Ok(Distribution::new(probs)?)
    }
}

/// Output reference law `Q` with `N(y|x) ≤ 2^c·Q(y)` for every `x`, where
/// `c` is the scheme's communication cost.
pub fn ubound_reference(scheme: &SimulationScheme) -> ReferenceOutput {
    let n = scheme.n;
    match (&scheme.kind, &scheme.proposal) {
        (SchemeKind::StrongConverse { .. }, Proposal::PerType { entries }) => ReferenceOutput {
            n,
            head_len: n,
            mixture: entries.iter().map(|e| e.proposal.clone()).collect(),
            tail: entries[0].proposal.clone(),
        },
        (SchemeKind::ProductSplit { inner, n_prime }, Proposal::Single { q }) => match inner {
            Some(s) => {
                let head = ubound_reference(s);
                ReferenceOutput {
                    n,
                    head_len: *n_prime,
                    mixture: head.mixture,
                    tail: q.clone(),
                }
            }
            None => ReferenceOutput {
                n,
                head_len: 0,
                mixture: Vec::new(),
                tail: q.clone(),
            },
        },
        (_, Proposal::Single { q }) => ReferenceOutput {
            n,
            head_len: n,
            mixture: vec![q.clone()],
            tail: q.clone(),
        },
        (_, Proposal::PerType { entries }) => ReferenceOutput {
            n,
            head_len: n,
            mixture: entries.iter().map(|e| e.proposal.clone()).collect(),
            tail: entries[0].proposal.clone(),
        },
    }
}

/// `min_{x,y} [2^c·P_X(x)·Q(y) − P_X(x)·N(y|x)]` over a materialized induced
/// channel; nonnegative when the reference law dominates.
pub fn ubound_slack(scheme: &SimulationScheme, induced: &Channel, p_x: &Distribution) -> Result<f64, ProtocolError> {
    let q = ubound_reference(scheme).materialize(DEFAULT_MATERIALIZE_CAP)?;
    if p_x.len() != induced.input_size() || q.len() != induced.output_size() {
        return Err(MeasureError::AlphabetMismatch {
            left: p_x.len(),
            right: induced.input_size(),
        }
        .into());
    }
    let scale = scheme.message_budget as f64;
    let mut worst = f64::INFINITY;
    for (x, &px) in p_x.probs().iter().enumerate() {
        for (y, &qy) in q.probs().iter().enumerate() {
            worst = worst.min(scale * px * qy - px * induced.get(x, y));
        }
    }
    Ok(worst)
}

/// Lower bound on `max_{x^n} D_α(W^n‖N)` for any simulation of `W^{×n}`
/// using `c` bits: `|n·I_α − c|⁺` for `α ≥ 1`, and
/// `max_{α≤β≤1} α(1−β)/(β(1−α))·(n·I_β − c)` for `α ∈ (0, 1)`.
///
/// Capacities enter through the solver's primal values, which never exceed
/// the true capacity, so rounding does not inflate the bound.
pub fn one_shot_converse_bound(w: &Channel, n: u32, c: f64, order: RenyiOrder) -> Result<f64, ProtocolError> {
    let nf = n as f64;
    let primal = |o: RenyiOrder| -> Result<f64, ProtocolError> { Ok(capacity_checked(w, o)?.primal_value) };
    match order {
        RenyiOrder::Zero => Ok(0.0),
        RenyiOrder::Finite(alpha) if alpha < 1.0 => {
            let mut err = None;
            let f = |beta: f64| -> f64 {
                if beta >= 1.0 {
                    return 0.0;
                }
                let value = RenyiOrder::new(beta).map_err(ProtocolError::from).and_then(primal);
                match value {
                    Ok(i) => alpha * (1.0 - beta) / (beta * (1.0 - alpha)) * (nf * i - c),
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NEG_INFINITY
                    }
                }
            };
            let (_, v) = maximize_on(f, alpha, 1.0, 1e-9);
            if let Some(e) = err {
                return Err(e);
            }
            Ok(v.max(0.0))
        }
        o => Ok((nf * primal(o)? - c).max(0.0)),
    }
}

/// Right-hand side of the Case-1 reliability bound for an rf scheme with
/// finite `s`, in bits:
/// `(1/(s ln 2))·2^{−s(log₂N − n·d)} + p̄/((1−p̄) ln 2)` with
/// `d = max_x D_{1+s}(W_x‖Q_Y)` and `p̄ = (1 − (1 − 2^{−s(log₂N − n·d)})/N)^Ñ`.
/// Returns `None` for other scheme kinds or `s = ∞`.
pub fn rf_case1_bound(w: &Channel, scheme: &SimulationScheme) -> Result<Option<f64>, ProtocolError> {
    let (SchemeKind::RateAbove { s: Extended::Finite(s), .. }, Proposal::Single { q }) = (&scheme.kind, &scheme.proposal)
    else {
        return Ok(None);
    };
    let order = RenyiOrder::from_t(*s)?;
    let qd: crate::measures::NonnegVector = q.into();
    let mut d = 0.0f64;
    for x in 0..w.input_size() {
        d = d.max(crate::measures::renyi_divergence(&w.row_distribution(x), &qd, order)?.to_f64());
    }
    let n_budget = scheme.n_budget.unwrap_or(1) as f64;
    let gap = n_budget.log2() - scheme.n as f64 * d;
    let decay = (-s * gap).exp2();
    let ln_p = scheme.iteration_cap as f64 * (-(1.0 - decay.min(1.0)) / n_budget).ln_1p();
    let p = ln_p.exp();
    let ln2 = std::f64::consts::LN_2;
    Ok(Some(decay / (s * ln2) + p / ((1.0 - p) * ln2)))
}

/// `|(1/n)·c − r|`-style allowance for the rf budget: `(log₂(2n log₂ n) + 2)/n`.
pub fn rf_rate_allowance(n: u32) -> f64 {
    let nf = n as f64;
    ((2.0 * nf * nf.log2()).max(1.0).log2() + 2.0) / nf
}
