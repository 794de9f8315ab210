//! Channel simulation under Rényi divergence.
//!
//! The crate covers the numerical side of the reverse Shannon problem for
//! discrete memoryless channels:
//!
//! - [`measures`]: Rényi fidelity, divergence and mutual information with the
//!   limiting orders 0, 1 and ∞.
//! - [`capacity`]: Rényi capacities with a certified primal/dual gap and the
//!   right derivative of `t ↦ t·I_{1+t}(W)`.
//! - [`exponents`]: simulation rate, reliability function and strong converse
//!   exponent, plus the variational form of the latter.
//! - [`sampling`]: rejection sampling (single pass, standard, variant and
//!   two-phase), both as exact output laws and as seeded stochastic runs.
//! - [`protocol`]: simulation schemes for `W^{×n}`, their induced channels and
//!   exact per-row divergences.
//! - [`types`]: method-of-types machinery and the symmetric reference law `Φ`.
//! - [`harness`]: experiment runners and report export used by the CLI.
//!
//! All information quantities are reported in bits.

pub mod capacity;
pub mod channel;
pub mod exponents;
pub mod harness;
mod logmath;
pub mod measures;
mod optim;
mod par;
pub mod protocol;
pub mod rng;
pub mod sampling;
pub mod types;

pub use capacity::{capacity_right_derivative, renyi_capacity, CapacityResult, RightDerivative};
pub use channel::Channel;
pub use exponents::{
    reliability_function, renyi_simulation_rate, strong_converse_exponent, sup_t_objective,
    variational_sc_exponent, ExponentKind, ExponentReport,
};
pub use measures::{
    channel_divergence, renyi_divergence, renyi_fidelity, renyi_mutual_information, Distribution,
    Extended, JointDistribution, NonnegVector, RenyiOrder,
};
pub use harness::{ExperimentConfig, ExperimentReport, ReportFormat, ReportRecord};
pub use protocol::{
    build_product_split, build_rf_scheme, build_sc_scheme, build_uniform_fallback, one_shot_converse_bound,
    simulation_performance, SimulationScheme,
};
pub use sampling::{RejectionPlan, RejectionSchedule, TwoPhasePlan};
pub use types::{SymmetricTypeMixture, TypeVector};
