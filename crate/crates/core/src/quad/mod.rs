//! Integration of policy functionals over the ordered region and of
//! expectations under arbitrary configurations.
//!
//! Two integrand forms are supported:
//!
//! * **Q-form** — `int_Q sum_k c_k(u) D_k(u) du` for the objective and error
//!   weights of an [`OmtPolicy`], using `int_Q F = (1/K!) int F(sort z) prod phi(z) dz`.
//! * **Expectation form** — `E_{h,theta}[stat(rejections)]` for any
//!   [`DecisionRule`], integrating against `prod phi(z_j - theta_j h_j)`.
//!
//! Four schemes evaluate them: the line integrator (default, deterministic),
//! a tensor Gauss–Legendre grid, randomized quasi-Monte Carlo, and plain Monte
//! Carlo.

pub(crate) mod grid;
mod integrands;
mod line;
mod sampling;

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{OmtError, Result};
use crate::model::{Config, RejectionSet, MAX_K};
use crate::policy::{DecisionRule, OmtPolicy};

pub use integrands::Stat;
pub use sampling::mc_expectation;


/// Width of the z-range kept on each side of the relevant means.
pub const Z_HALF_WIDTH: f64 = 8.5;

pub(crate) const PANEL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Outer Gauss–Legendre with exact inner segments.
    Line,
    /// Tensor-product Gauss–Legendre in z.
    #[serde(rename = "grid")]
    TensorGrid,
    /// Randomly shifted Kronecker lattice, 16 shifts.
    Qmc,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub scheme: Scheme,
    /// Outer nodes per axis (line), nodes per axis (grid) or sample count.
    pub n: usize,
    pub seed: u64,
    /// Results whose error estimate exceeds this are flagged.
    pub target_tol: f64,
    /// Deterministic schemes pay a second pass at half resolution for the
    /// error estimate; off by default inside solver loops.
    pub error_estimate: bool,
}

impl QuadConfig {
    pub fn line(n: usize) -> Self {
        QuadConfig { scheme: Scheme::Line, n, seed: 0, target_tol: 5e-4, error_estimate: false }
    }

    pub fn grid(n: usize) -> Self {
        QuadConfig { scheme: Scheme::TensorGrid, ..Self::line(n) }
    }

    pub fn qmc(n: usize, seed: u64) -> Self {
        QuadConfig { scheme: Scheme::Qmc, seed, error_estimate: true, ..Self::line(n) }
    }

    pub fn mc(n: usize, seed: u64) -> Self {
        QuadConfig { scheme: Scheme::MonteCarlo, seed, error_estimate: true, ..Self::line(n) }
    }

    pub fn with_error_estimate(mut self) -> Self {
        self.error_estimate = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let min = match self.scheme {
            Scheme::Line | Scheme::TensorGrid => 16,
            Scheme::Qmc => 1024,
            Scheme::MonteCarlo => 10_000,
        };
        if self.n < min {
            return Err(OmtError::invalid(format!("{:?} needs n >= {min}, got {}", self.scheme, self.n)));
        }
        if !(self.target_tol > 0.0) {
            return Err(OmtError::invalid("target_tol must be positive"));
        }
        Ok(())
    }

    fn halved(&self) -> Self {
        QuadConfig { n: (self.n / 2).max(PANEL), ..*self }
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self::line(128)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub abs_error_est: f64,
    pub scheme: Scheme,
    pub n_points: usize,
    /// Error estimate above the configured target.
    pub flagged: bool,
}

impl IntegralResult {
    fn new(value: f64, abs_error_est: f64, cfg: &QuadConfig, n_points: usize) -> Self {
        IntegralResult {
            value,
            abs_error_est,
            scheme: cfg.scheme,
            n_points: n_points.max(1),
            flagged: abs_error_est > cfg.target_tol,
        }
    }
}

/// Composite Gauss–Legendre nodes and weights on `[lo, hi]` with 8-point
/// panels, at least `n` nodes in total.
pub(crate) fn gl_nodes(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    static BASE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let base = BASE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(PANEL).unwrap()).as_node_weight_pairs().to_vec());
    let panels = n.div_ceil(PANEL).max(1);
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * PANEL);
    for p in 0..panels {
        let c = lo + h * (p as f64 + 0.5);
        for &(x, w) in base {
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

pub(crate) fn z_range(means: &[f64]) -> (f64, f64) {
    let lo = means.iter().copied().fold(0.0, f64::min) - Z_HALF_WIDTH;
    let hi = means.iter().copied().fold(0.0, f64::max) + Z_HALF_WIDTH;
    (lo, hi)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Who is false and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub h: Config,
    /// Shift of every coordinate; entries of true nulls are ignored.
    pub thetas: Vec<f64>,
}

impl Scenario {
    pub fn new(h: Config, thetas: Vec<f64>) -> Result<Self> {
        if thetas.len() != h.k {
            return Err(OmtError::invalid(format!("{} shifts for {} hypotheses", thetas.len(), h.k)));
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(OmtError::invalid("shifts must be finite"));
        }
        Ok(Scenario { h, thetas })
    }

    /// The first `l` of `k` hypotheses are false with common shift `theta`.
    pub fn canonical(k: usize, l: usize, theta: f64) -> Self {
        Scenario { h: Config::canonical(k, l), thetas: vec![theta; k] }
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.h.k).map(|j| if self.h.is_false_null(j) { self.thetas[j] } else { 0.0 }).collect()
    }
}

/// Objective and error constraints of a policy, integrated in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIntegrals {
    pub objective: IntegralResult,
    /// `Err_L` for `L = 0..K-1`.
    pub constraints: Vec<IntegralResult>,
}

fn check_k(k: usize, cfg: &QuadConfig) -> Result<()> {
    let deterministic = matches!(cfg.scheme, Scheme::Line | Scheme::TensorGrid);
    if deterministic && k > 3 {
        return Err(OmtError::invalid(format!(
            "deterministic quadrature supports k <= 3 (got {k}); use qmc or mc"
        )));
    }
    if !(2..=MAX_K).contains(&k) {
        return Err(OmtError::invalid(format!("k = {k} unsupported")));
    }
    Ok(())
}

/// Runs `pass` at the configured resolution and, if asked, at half
/// resolution to estimate the error.
fn with_estimate(
    cfg: &QuadConfig,
    pass: impl Fn(&QuadConfig) -> (Vec<f64>, Vec<f64>, usize),
) -> Vec<IntegralResult> {
    let (vals, errs, n_points) = pass(cfg);
    let errs = if cfg.error_estimate && matches!(cfg.scheme, Scheme::Line | Scheme::TensorGrid) {
        let (coarse, _, _) = pass(&cfg.halved());
        vals.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).collect()
    } else {
        errs
    };
    vals.iter().zip(&errs).map(|(&v, &e)| IntegralResult::new(v, e, cfg, n_points)).collect()
}

/// Objective and all error constraints of a multiplier policy.
pub fn policy_integrals(policy: &OmtPolicy, cfg: &QuadConfig) -> Result<PolicyIntegrals> {
    cfg.validate()?;
    let spec = policy.spec();
    check_k(spec.k, cfg)?;
    let form = integrands::QForm::for_policy(policy);
    let mut out = with_estimate(cfg, |c| form.run(c));
    let objective = out.remove(0);
    Ok(PolicyIntegrals { objective, constraints: out })
}

/// `int_Q f(u, depth(u)) du` for a pointwise functional of sorted p-values and
/// the rule's rejection depth.
pub fn integrate_q<R, F>(rule: &R, f: F, cfg: &QuadConfig) -> Result<IntegralResult>
where
    R: DecisionRule + ?Sized,
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    cfg.validate()?;
    check_k(rule.k(), cfg)?;
    let form = integrands::Pointwise { rule, f: &f };
    Ok(with_estimate(cfg, |c| form.run(c)).remove(0))
}

/// `E[stat]` for each requested statistic when the rule is applied under the
/// scenario with independent coordinates.
pub fn expectation<R>(rule: &R, scenario: &Scenario, stats: &[Stat], cfg: &QuadConfig) -> Result<Vec<IntegralResult>>
where
    R: DecisionRule + ?Sized,
{
    cfg.validate()?;
    check_k(rule.k(), cfg)?;
    if scenario.h.k != rule.k() {
        return Err(OmtError::invalid("scenario and rule disagree on k"));
    }
    if cfg.scheme == Scheme::MonteCarlo {
        return mc_expectation(rule, scenario, 0.0, stats, cfg.n, cfg.seed);
    }
    let form = integrands::Expectation {
        rule,
        means: scenario.means(),
        h: scenario.h,
        stats,
        perms: integrands::permutations(rule.k()),
    };
    Ok(with_estimate(cfg, |c| form.run(c)))
}

/// Value of a statistic for one rejection set under configuration `h`.
pub fn stat_value(stat: Stat, rejected: RejectionSet, h: Config) -> f64 {
    integrands::stat_value(stat, rejected.mask, h.mask)
}
