//! Multiplier search and optimality certificates.
//!
//! A multiplier vector `mu` defines a policy (see [`crate::policy`]). The
//! policy is optimal when every error constraint is either tight with
//! `mu_L >= 0` or slack with `mu_L = 0`. The search enumerates candidate sets
//! of tight constraints, solves the tight equations in `log mu`, and accepts
//! the first candidate whose slack constraints hold. Candidates are screened
//! with a cheap quadrature and the winner is re-solved at full resolution.
//!
//! Optimality is then certified by evaluating the dual objective
//! `alpha * sum(mu) + int_Q lambda_1` on an independent tensor grid and
//! comparing it with the primal power.

use std::cell::Cell;

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::brent::BrentRoot;
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmtError, Result};
use crate::model::{ErrorMeasure, ProblemSpec, MAX_K};
use crate::normal;
use crate::policy::{lambda1_from_residuals, DecisionRule, MultiplierVector, OmtPolicy, Provenance, SolverMeta};
use crate::quad::{self, IntegralResult, PolicyIntegrals, QuadConfig, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed excess of an error constraint over alpha.
    pub feas: f64,
    /// Bound on the complementary-slackness residual.
    pub solve: f64,
    /// Bound on the primal-dual gap.
    pub gap: f64,
    /// Multipliers below this count as zero.
    pub mu_zero: f64,
    /// Relative tolerance for negative dual variables.
    pub cert: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { feas: 5e-4, solve: 5e-4, gap: 2e-3, mu_zero: 1e-9, cert: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub tol: Tolerances,
    /// Quadrature used to screen candidate active sets.
    pub coarse: QuadConfig,
    /// Randomizes starting points; `None` uses the deterministic defaults.
    pub seed: Option<u64>,
    pub max_newton: usize,
    /// Nodes per axis of the tensor grid used by the certificate.
    pub certificate_grid: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tol: Tolerances::default(),
            coarse: QuadConfig::line(48),
            seed: None,
            max_newton: 40,
            certificate_grid: 128,
        }
    }
}

impl SearchConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Outcome of [`duality_certificate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda1_integral: f64,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub gap: f64,
    pub negative_fraction: f64,
    pub grid_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub format: u32,
    pub spec: ProblemSpec,
    pub mu_star: MultiplierVector,
    pub constraint_values: Vec<f64>,
    pub constraint_errors: Vec<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub duality_gap: f64,
    pub certificate: DualCertificate,
    pub residuals: Vec<f64>,
    pub residual_norm: f64,
    pub method: String,
    /// Constraint passes spent, coarse and fine together.
    pub evaluations: usize,
    /// FWER only: times a larger multiplier raised its own constraint.
    pub monotonicity_violations: usize,
    pub quad: QuadConfig,
    pub tolerances: Tolerances,
}

impl SolveReport {
    pub fn policy(&self) -> OmtPolicy {
        OmtPolicy::new(self.spec, self.mu_star.clone(), Provenance::Solved).expect("report holds a valid policy")
    }

    pub fn solver_meta(&self) -> SolverMeta {
        SolverMeta { tol: self.tolerances.feas, grid: self.quad.n }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-constraint complementary-slackness residual:
/// `max(c_L - alpha, 0) + mu_L * max(alpha - c_L, 0)`.
pub fn slackness_residuals(alpha: f64, mu: &[f64], c: &[f64]) -> Vec<f64> {
    mu.iter().zip(c).map(|(&m, &cl)| (cl - alpha).max(0.0) + m * (alpha - cl).max(0.0)).collect()
}

/// `Err_L` of the policy induced by `mu`.
pub fn constraint_value(spec: &ProblemSpec, mu: &MultiplierVector, l: usize, cfg: &QuadConfig) -> Result<IntegralResult> {
    if l >= spec.k {
        return Err(OmtError::invalid(format!("L = {l} must be below k = {}", spec.k)));
    }
    let policy = OmtPolicy::new(*spec, mu.clone(), Provenance::Loaded)?;
    Ok(quad::policy_integrals(&policy, cfg)?.constraints[l])
}

/// Counts constraint passes and remembers nothing else.
struct Evaluator<'a> {
    spec: &'a ProblemSpec,
    quad: QuadConfig,
    count: &'a Cell<usize>,
}

impl Evaluator<'_> {
    fn integrals(&self, mu: &[f64]) -> Result<PolicyIntegrals> {
        self.count.set(self.count.get() + 1);
        let policy = OmtPolicy::new(*self.spec, MultiplierVector::new(mu.to_vec())?, Provenance::Loaded)?;
        quad::policy_integrals(&policy, &self.quad)
    }

    fn constraints(&self, mu: &[f64]) -> Result<Vec<f64>> {
        Ok(self.integrals(mu)?.constraints.iter().map(|c| c.value).collect())
    }
}

/// Lowest `log mu` treated as a live multiplier.
const LOG_MU_MIN: f64 = -40.0;
const LOG_MU_MAX: f64 = 60.0;

fn mu_from_log(active: &[usize], x: &[f64], k: usize) -> Vec<f64> {
    let mut mu = vec![0.0; k];
    for (&l, &xl) in active.iter().zip(x) {
        mu[l] = xl.exp();
    }
    mu
}

/// One-dimensional constraint equation in `t = log mu_L` with the other
/// multipliers fixed.
struct LogRoot<'a> {
    ev: &'a Evaluator<'a>,
    base: Vec<f64>,
    l: usize,
    alpha: f64,
    failure: Cell<bool>,
}

impl LogRoot<'_> {
    fn f(&self, t: f64) -> Result<f64> {
        let mut mu = self.base.clone();
        mu[self.l] = t.exp();
        Ok(self.ev.constraints(&mu)?[self.l] - self.alpha)
    }
}

impl CostFunction for LogRoot<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, t: &f64) -> std::result::Result<f64, ArgminError> {
        match self.f(*t) {
            Ok(v) => Ok(v),
            Err(e) => {
                self.failure.set(true);
                Err(ArgminError::msg(e.to_string()))
            }
        }
    }
}

struct Search<'a> {
    spec: &'a ProblemSpec,
    cfg: &'a SearchConfig,
    rng: Option<ChaCha8Rng>,
    monotonicity_violations: usize,
}

impl Search<'_> {
    fn jitter(&mut self, width: f64) -> f64 {
        match self.rng.as_mut() {
            Some(r) => r.random_range(-width..width),
            None => 0.0,
        }
    }

    /// Solves `Err_L(mu with mu_L = e^t) = alpha` for `t`, starting near `t0`.
    fn solve_1d(&mut self, ev: &Evaluator<'_>, base: &[f64], l: usize, t0: f64) -> Result<Option<f64>> {
        let root = LogRoot { ev, base: base.to_vec(), l, alpha: self.spec.alpha, failure: Cell::new(false) };
        let f0 = root.f(t0)?;
        if f0 == 0.0 {
            return Ok(Some(t0));
        }
        // Larger multipliers shrink the rejection region.
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let (mut ta, mut fa) = (t0, f0);
        let mut step = 1.0;
        let tb = loop {
            let t = ta + dir * step;
            if !(LOG_MU_MIN..=LOG_MU_MAX).contains(&t) {
                return Ok(None);
            }
            let ft = root.f(t)?;
            if self.spec.error == ErrorMeasure::Fwer && (ft - fa) * dir > 1e-7 {
                self.monotonicity_violations += 1;
            }
            if ft == 0.0 {
                return Ok(Some(t));
            }
            if ft.signum() != f0.signum() {
                break t;
            }
            ta = t;
            fa = ft;
            step *= 1.6;
        };
        let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
        let solver = BrentRoot::new(lo, hi, 1e-10);
        let res = Executor::new(root, solver).configure(|s| s.param(0.5 * (lo + hi)).max_iters(100)).run();
        match res {
            Ok(r) => Ok(r.state().get_best_param().copied()),
            Err(e) => Err(OmtError::Quadrature(format!("root search for L = {l}: {e}"))),
        }
    }

    /// Damped Newton on the tight equations in `log mu`, finite-difference
    /// Jacobian. Returns `None` when a multiplier collapses or progress stalls.
    fn newton(&mut self, ev: &Evaluator<'_>, active: &[usize], x0: Vec<f64>) -> Result<Option<Vec<f64>>> {
        let k = self.spec.k;
        let alpha = self.spec.alpha;
        let m = active.len();
        let resid = |x: &[f64]| -> Result<Vec<f64>> {
            let c = ev.constraints(&mu_from_log(active, x, k))?;
            Ok(active.iter().map(|&l| c[l] - alpha).collect())
        };
        let norm = |f: &[f64]| f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut x = x0;
        let mut f = resid(&x)?;
        let h = 1e-3;
        for _ in 0..self.cfg.max_newton {
            if norm(&f) < NEWTON_TOL {
                return Ok(Some(x));
            }
            let mut jac = DMatrix::zeros(m, m);
            for j in 0..m {
                let mut xh = x.clone();
                xh[j] += h;
                let fh = resid(&xh)?;
                for i in 0..m {
                    jac[(i, j)] = (fh[i] - f[i]) / h;
                }
            }
            let rhs = DVector::from_iterator(m, f.iter().map(|v| -v));
            let Some(mut dx) = jac.lu().solve(&rhs) else {
                return Ok(None);
            };
            let big = dx.amax();
            if big > 3.0 {
                dx *= 3.0 / big;
            }
            let mut lambda = 1.0;
            let f_norm = norm(&f);
            let mut accepted = false;
            while lambda > 1.0 / 64.0 {
                let xn: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
                if xn.iter().any(|&v| v > LOG_MU_MAX) {
                    lambda *= 0.5;
                    continue;
                }
                let fnew = resid(&xn)?;
                if norm(&fnew) < (1.0 - 1e-4 * lambda) * f_norm {
                    x = xn;
                    f = fnew;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted || x.iter().any(|&v| v < self.cfg.tol.mu_zero.ln() - 2.0) {
                return Ok(None);
            }
        }
        Ok((norm(&f) < NEWTON_TOL).then_some(x))
    }

    /// Solves the tight equations for `active`, other multipliers zero.
    fn solve_set(
        &mut self,
        ev: &Evaluator<'_>,
        active: &[usize],
        start: Option<&[f64]>,
        singles: &[Option<f64>],
    ) -> Result<Option<Vec<f64>>> {
        let k = self.spec.k;
        if active.len() == 1 {
            let l = active[0];
            let t0 = match start {
                Some(mu) if mu[l] > 0.0 => mu[l].ln(),
                _ => singles[l].unwrap_or(0.0) + self.jitter(1.0),
            };
            return Ok(self.solve_1d(ev, &vec![0.0; k], l, t0)?.map(|t| mu_from_log(active, &[t], k)));
        }
        let mut x0 = Vec::with_capacity(active.len());
        for &l in active {
            x0.push(match start {
                Some(mu) if mu[l] > 0.0 => mu[l].ln(),
                _ => singles[l].unwrap_or(-5.0) + self.jitter(1.0),
            });
        }
        Ok(self.newton(ev, active, x0)?.map(|x| mu_from_log(active, &x, k)))
    }

    fn slack_ok(&self, active: &[usize], c: &[f64], margin: f64) -> bool {
        (0..self.spec.k).filter(|l| !active.contains(l)).all(|l| c[l] <= self.spec.alpha + self.cfg.tol.feas + margin)
    }

    /// Gauss–Seidel sweeps: each multiplier solves its own constraint with the
    /// others fixed, or drops to zero when its constraint is slack at zero.
    fn coordinate(&mut self, ev: &Evaluator<'_>, mut mu: Vec<f64>) -> Result<Vec<f64>> {
        let alpha = self.spec.alpha;
        for _ in 0..30 {
            for l in 0..self.spec.k {
                let mut zero = mu.clone();
                zero[l] = 0.0;
                if ev.constraints(&zero)?[l] <= alpha {
                    mu[l] = 0.0;
                    continue;
                }
                let t0 = if mu[l] > 0.0 { mu[l].ln() } else { 0.0 };
                if let Some(t) = self.solve_1d(ev, &mu, l, t0)? {
                    mu[l] = t.exp();
                }
            }
            let c = ev.constraints(&mu)?;
            if norm_inf(&slackness_residuals(alpha, &mu, &c)) <= 0.1 * self.cfg.tol.solve {
                break;
            }
        }
        Ok(mu)
    }
}

const NEWTON_TOL: f64 = 1e-7;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Residual norm over `log mu` for the derivative-free fallback.
struct ResidualCost<'a> {
    ev: &'a Evaluator<'a>,
    alpha: f64,
}

impl CostFunction for ResidualCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        let mu: Vec<f64> = x.iter().map(|&v| if v < LOG_MU_MIN { 0.0 } else { v.min(LOG_MU_MAX).exp() }).collect();
        let c = self.ev.constraints(&mu).map_err(|e| ArgminError::msg(e.to_string()))?;
        Ok(norm_inf(&slackness_residuals(self.alpha, &mu, &c)))
    }
}

fn candidate_sets(k: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> =
        (1u32..1 << k).map(|m| (0..k).filter(|&l| m >> l & 1 == 1).collect::<Vec<_>>()).collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    sets
}

/// Finds optimal multipliers for `spec`, evaluated with quadrature `cfg`.
pub fn solve_mu(spec: &ProblemSpec, cfg: &QuadConfig, search: &SearchConfig) -> Result<SolveReport> {
    spec.validate()?;
    cfg.validate()?;
    search.coarse.validate()?;
    if spec.k > 3 {
        return Err(OmtError::invalid(format!("solving supports k <= 3, got {}", spec.k)));
    }
    if !matches!(cfg.scheme, Scheme::Line | Scheme::TensorGrid) {
        return Err(OmtError::invalid("the multiplier search needs a deterministic quadrature scheme"));
    }
    let k = spec.k;
    let alpha = spec.alpha;
    let count = Cell::new(0);
    let coarse = Evaluator { spec, quad: search.coarse, count: &count };
    let fine = Evaluator { spec, quad: QuadConfig { error_estimate: false, ..*cfg }, count: &count };
    let mut s = Search {
        spec,
        cfg: search,
        rng: search.seed.map(ChaCha8Rng::seed_from_u64),
        monotonicity_violations: 0,
    };

    // Coarse screening margin: the cheap rule is accurate to a few 1e-4.
    let margin = 1e-3;
    let mut singles: Vec<Option<f64>> = vec![None; k];
    let mut found: Option<(Vec<f64>, String)> = None;
    let zero_c = coarse.constraints(&vec![0.0; k])?;
    if zero_c.iter().all(|&c| c <= alpha + search.tol.feas) {
        found = Some((vec![0.0; k], "unconstrained".into()));
    }
    if found.is_none() {
        for active in candidate_sets(k) {
            let Some(mu) = s.solve_set(&coarse, &active, None, &singles)? else { continue };
            if active.len() == 1 {
                singles[active[0]] = Some(mu[active[0]].ln());
            }
            let c = coarse.constraints(&mu)?;
            if !s.slack_ok(&active, &c, margin) {
                continue;
            }
            let Some(mu_f) = s.solve_set(&fine, &active, Some(&mu), &singles)? else { continue };
            let cf = fine.constraints(&mu_f)?;
            if s.slack_ok(&active, &cf, 0.0) {
                let method = if active.len() == 1 { "brent" } else { "newton" };
                found = Some((mu_f, method.into()));
                break;
            }
        }
    }
    if found.is_none() {
        let mu = s.coordinate(&fine, vec![0.0; k])?;
        let c = fine.constraints(&mu)?;
        if norm_inf(&slackness_residuals(alpha, &mu, &c)) <= search.tol.solve {
            found = Some((mu, "coordinate".into()));
        }
    }
    if found.is_none() {
        let mut best: (f64, Vec<f64>) = (f64::INFINITY, vec![0.0; k]);
        let mut rng = ChaCha8Rng::seed_from_u64(search.seed.unwrap_or(0) ^ 0x5eed);
        for _ in 0..10 {
            let x0: Vec<f64> = (0..k).map(|_| rng.random_range(-8.0..4.0)).collect();
            let mut simplex = vec![x0.clone()];
            for j in 0..k {
                let mut v = x0.clone();
                v[j] += 1.0;
                simplex.push(v);
            }
            let nm = NelderMead::new(simplex).with_sd_tolerance(1e-10).map_err(|e| OmtError::Quadrature(e.to_string()))?;
            let cost = ResidualCost { ev: &fine, alpha };
            if let Ok(r) = Executor::new(cost, nm).configure(|c| c.max_iters(200)).run() {
                let st = r.state();
                if st.get_best_cost() < best.0 {
                    best = (st.get_best_cost(), st.get_best_param().cloned().unwrap_or_default());
                }
            }
        }
        let mu: Vec<f64> = best.1.iter().map(|&v| if v < LOG_MU_MIN { 0.0 } else { v.exp() }).collect();
        if best.0 <= search.tol.solve {
            found = Some((mu, "nelder-mead".into()));
        } else {
            let c = fine.constraints(&mu).unwrap_or_default();
            return Err(OmtError::NonConvergence {
                message: format!("no multiplier vector met the slackness tolerance (best {:.3e})", best.0),
                residuals: slackness_residuals(alpha, &mu, &c),
                best_mu: mu,
            });
        }
    }

    let (mut mu, mut method) = found.expect("set above");
    // The fallbacks stop at the slackness tolerance; Newton on the set they
    // identify tightens them to the same point the direct route reaches.
    if method == "coordinate" || method == "nelder-mead" {
        let active: Vec<usize> = (0..k).filter(|&l| mu[l] > search.tol.mu_zero).collect();
        if !active.is_empty() {
            if let Some(polished) = s.solve_set(&fine, &active, Some(&mu), &singles)? {
                if s.slack_ok(&active, &fine.constraints(&polished)?, 0.0) {
                    mu = polished;
                    method = format!("{method}+newton");
                }
            }
        }
    }
    let policy = OmtPolicy::new(*spec, MultiplierVector::new(mu.clone())?, Provenance::Solved)?;
    let integrals = quad::policy_integrals(&policy, cfg)?;
    count.set(count.get() + 1);
    let c: Vec<f64> = integrals.constraints.iter().map(|r| r.value).collect();
    let residuals = slackness_residuals(alpha, &mu, &c);
    let residual_norm = norm_inf(&residuals);
    let active_set: Vec<usize> = (0..k).filter(|&l| mu[l] > search.tol.mu_zero).collect();
    let mut report = SolveReport {
        format: 1,
        spec: *spec,
        mu_star: MultiplierVector::new(mu)?,
        constraint_values: c,
        constraint_errors: integrals.constraints.iter().map(|r| r.abs_error_est).collect(),
        active_set,
        objective: integrals.objective.value,
        duality_gap: f64::NAN,
        certificate: DualCertificate {
            lambda1_integral: f64::NAN,
            dual_objective: f64::NAN,
            primal_objective: integrals.objective.value,
            gap: f64::NAN,
            negative_fraction: 0.0,
            grid_n: 0,
        },
        residuals,
        residual_norm,
        method,
        evaluations: count.get(),
        monotonicity_violations: s.monotonicity_violations,
        quad: *cfg,
        tolerances: search.tol,
    };
    if residual_norm > search.tol.solve {
        return Err(OmtError::NonConvergence {
            message: format!("slackness residual {residual_norm:.3e} above {:.1e}", search.tol.solve),
            best_mu: report.mu_star.as_slice().to_vec(),
            residuals: report.residuals,
        });
    }
    let cert = duality_certificate(spec, &report, search.certificate_grid, &search.tol)?;
    report.duality_gap = cert.gap;
    report.certificate = cert;
    Ok(report)
}

/// Dual objective on an independent tensor grid and the primal-dual gap.
///
/// Pointwise, `lambda_1 = max(0, max_l P_l)` with `P_l` the residual prefix
/// sums, and the remaining dual variables are
/// `lambda_j = max_{l >= j-1} P_l - P_{j-1}`; all must be nonnegative. `lambda_1` is continuous, so plain
/// Gauss–Legendre integrates it well.
pub fn duality_certificate(
    spec: &ProblemSpec,
    report: &SolveReport,
    grid_n: usize,
    tol: &Tolerances,
) -> Result<DualCertificate> {
    spec.check_shape()?;
    let k = spec.k;
    if k > 3 {
        return Err(OmtError::invalid("certificates are computed for k <= 3"));
    }
    let policy = OmtPolicy::new(*spec, report.mu_star.clone(), Provenance::Loaded)?;
    let kernel = policy.kernel();
    let (lo, hi) = quad::z_range(&[spec.theta_obj, spec.theta_con]);
    let kf = quad::factorial(k);
    // Channel 0 accumulates the lambda_1 integral, channel 1 counts grid
    // points with a negative dual variable.
    let (vals, n_points) = quad::grid::tensor_raw(k, grid_n, lo, hi, 2, |z, w, acc| {
        let mut s = [0.0; MAX_K];
        s[..k].copy_from_slice(z);
        s[..k].sort_by(f64::total_cmp);
        let mut r = [0.0; MAX_K];
        kernel.plain(&s[..k], &mut r[..k]);
        let lam1 = lambda1_from_residuals(&r[..k]);
        let dens: f64 = z.iter().map(|&x| normal::pdf(x)).product();
        acc[0] += w * dens * lam1 / kf;
        if min_relative_lambda(&r[..k]) < -tol.cert {
            acc[1] += 1.0;
        }
    });
    let lambda1_integral = vals[0];
    let negative_fraction = vals[1] / n_points as f64;
    let dual_objective = spec.alpha * report.mu_star.sum() + lambda1_integral;
    let gap = (dual_objective - report.objective).abs();
    if negative_fraction > 1e-4 {
        return Err(OmtError::Certificate(format!(
            "negative dual variables on {:.3}% of grid points",
            100.0 * negative_fraction
        )));
    }
    Ok(DualCertificate {
        lambda1_integral,
        dual_objective,
        primal_objective: report.objective,
        gap,
        negative_fraction,
        grid_n,
    })
}

/// Smallest `lambda_j`, `j = 1..K+1`, relative to the residual scale.
fn min_relative_lambda(r: &[f64]) -> f64 {
    let k = r.len();
    let mut prefix = vec![0.0; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] + r[i];
    }
    let scale = r.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut suffix_max = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    for j in (0..=k).rev() {
        suffix_max = suffix_max.max(prefix[j]);
        let lam = if j == 0 { suffix_max.max(0.0) } else { suffix_max - prefix[j] };
        worst = worst.min(lam / scale);
    }
    worst
}

/// Fraction of sampled points whose decision hinges on a residual partial
/// sum within `1e-10` (relative) of zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_samples: usize,
    pub flagged: usize,
    pub fraction: f64,
}

/// Samples `u` uniformly on the cube and checks every partial sum the nested
/// rule consults. Sums without any terms (structural zeros) are ignored.
pub fn integrality_audit(policy: &OmtPolicy, n_samples: usize, seed: u64) -> AuditReport {
    const CHUNK: usize = 1 << 14;
    let k = policy.spec().k;
    let chunks = n_samples.div_ceil(CHUNK);
    let flagged: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut hits = 0;
            let (mut z, mut r, mut abs) = ([0.0; MAX_K], [0.0; MAX_K], [0.0; MAX_K]);
            for _ in 0..len {
                for zj in z.iter_mut().take(k) {
                    *zj = normal::z_score(rng.random::<f64>());
                }
                z[..k].sort_by(f64::total_cmp);
                policy.scaled_residuals_with_abs(&z[..k], &mut r[..k], &mut abs[..k]);
                if near_tie(&r[..k], &abs[..k]) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    AuditReport { n_samples, flagged, fraction: flagged as f64 / n_samples.max(1) as f64 }
}

const TIE_TOL: f64 = 1e-10;

/// True when some level the nested rule visits is decided by a maximal
/// partial sum that is numerically zero but not structurally absent.
fn near_tie(r: &[f64], abs: &[f64]) -> bool {
    let k = r.len();
    let depth = crate::policy::depth_from_residuals(r);
    for j in 0..k.min(depth + 1) {
        let (mut acc, mut acc_abs) = (0.0, 0.0);
        let (mut best, mut best_abs) = (f64::NEG_INFINITY, 0.0);
        for l in j..k {
            acc += r[l];
            acc_abs += abs[l];
            if acc > best {
                best = acc;
                best_abs = acc_abs;
            }
        }
        if best_abs > 0.0 && best.abs() <= TIE_TOL * best_abs {
            return true;
        }
    }
    false
}

impl DecisionRule for SolveReport {
    fn k(&self) -> usize {
        self.spec.k
    }
    fn depth(&self, z_sorted: &[f64]) -> usize {
        self.policy().depth(z_sorted)
    }
    fn name(&self) -> String {
        self.policy().name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slackness_residual_definition() {
        let r = slackness_residuals(0.05, &[0.0, 2.0, 1.0], &[0.04, 0.049, 0.06]);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 2.0 * 0.001).abs() < 1e-15);
        assert!((r[2] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn candidate_order() {
        let sets = candidate_sets(3);
        assert_eq!(sets.len(), 7);
        assert_eq!(sets[0], vec![0]);
        assert_eq!(sets[3], vec![0, 1]);
        assert_eq!(sets[6], vec![0, 1, 2]);
    }

    #[test]
    fn relative_lambda_is_nonnegative_by_construction() {
        for r in [[1.0, -2.0, 3.0], [-1.0, -1.0, -1.0], [0.5, 0.5, -4.0]] {
            assert!(min_relative_lambda(&r) >= 0.0);
        }
    }

    #[test]
    fn tie_detection() {
        assert!(near_tie(&[1e-14, -1.0, -1.0], &[2.0, 1.0, 1.0]));
        assert!(!near_tie(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]));
        assert!(!near_tie(&[0.3, -1.0, -1.0], &[2.0, 1.0, 1.0]));
    }
}
