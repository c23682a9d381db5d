//! Optimal multiple testing for exchangeable normal means.
//!
//! The crate computes rejection policies that maximize average or minimal
//! power subject to strong FWER or FDR control, certifies them through
//! Lagrangian duality, extends them to maximin policies over a range of
//! alternatives, and compares them with classical step-wise procedures.
//!
//! The pieces, bottom up:
//!
//! * [`model`] — problem definition, alternative densities, configurations.
//! * [`coeffs`] — pointwise objective and error weights.
//! * [`policy`] — the multiplier-defined decision rule and its persistence.
//! * [`quad`] — integration of policy functionals and expectations.
//! * [`solver`] — multiplier search and optimality certificates.
//! * [`maximin`] — the two-signal construction and its verification.
//! * [`baselines`] — Holm, Sidak step-down, BH, MABH, closed Stouffer.
//! * [`eval`] — power, error rates, closed forms, slices, robustness sweeps.
//! * [`cli`] — dataset application and benchmark tables behind the `omt` binary.

pub mod baselines;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod eval;
pub mod maximin;
pub mod model;
pub mod normal;
pub mod policy;
pub mod quad;
pub mod solver;

pub use error::{OmtError, Result};
pub use model::{Config, ErrorMeasure, PVector, PowerKind, PowerObjective, ProblemSpec, RejectionSet};
pub use policy::{DecisionRule, MultiplierVector, OmtPolicy, PolicyFile, Provenance};
pub use quad::{IntegralResult, QuadConfig, Scheme};
