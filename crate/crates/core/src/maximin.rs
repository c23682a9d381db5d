//! Policies for composite alternatives.
//!
//! The objective is fixed at a signal `theta0` while the error constraints
//! are imposed at a second signal `theta`. Sweeping `theta` and taking the
//! solution of least power gives the candidate `theta_A`; the candidate is
//! then checked on two grids: error control at every shift vector with
//! nonpositive entries, and power at every shift vector at least as strong
//! as `theta0` no lower than at `theta0` itself. Passing both certifies the
//! policy as maximin over the checked grids.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use serde::{Deserialize, Serialize};

use crate::error::{OmtError, Result};
use crate::eval;
use crate::model::{Config, ProblemSpec};
use crate::policy::{DecisionRule, MultiplierVector, OmtPolicy, PolicyFile, Provenance, SolverMeta};
use crate::quad::{self, QuadConfig, Scenario, Stat};
use crate::solver::{solve_mu, SearchConfig, SolveReport};

/// Shift vectors the certificate is checked on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyGrid {
    /// Common shifts of all false nulls for the error sweep.
    pub control_equal: Vec<f64>,
    /// Levels combined into unequal shift vectors for the error sweep.
    pub control_levels: Vec<f64>,
    /// Common shifts for the power sweep; all at most `theta0`.
    pub dominance_equal: Vec<f64>,
    /// Levels combined into unequal shift vectors for the power sweep.
    pub dominance_levels: Vec<f64>,
}

impl VerifyGrid {
    pub fn default_for(theta0: f64) -> Self {
        VerifyGrid {
            control_equal: log_grid(-8.0, -0.05, 25),
            control_levels: vec![-3.0, -2.0, -1.0, -0.5, -0.25],
            dominance_equal: (0..9).map(|i| theta0 * (1.0 + 3.0 * i as f64 / 8.0)).collect(),
            dominance_levels: [1.0, 1.25, 1.5, 2.0, 3.0].iter().map(|m| theta0 * m).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximinSpec {
    /// `theta_obj` is the objective signal `theta0`; `theta_con` is ignored.
    pub base: ProblemSpec,
    /// Candidate constraint signals, strictly descending.
    pub theta_a_grid: Vec<f64>,
    /// Golden-section refinement stops once the bracket is this narrow.
    pub refine_width: f64,
    pub verify: VerifyGrid,
}

impl MaximinSpec {
    /// Nine log-spaced candidates over `[4 theta0, theta0 / 8]` and the
    /// default verification grids.
    pub fn new(base: ProblemSpec) -> Result<Self> {
        let t0 = base.theta_obj;
        let spec = MaximinSpec {
            base,
            theta_a_grid: log_grid(4.0 * t0, t0 / 8.0, 9).into_iter().rev().collect(),
            refine_width: 0.01,
            verify: VerifyGrid::default_for(t0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn theta0(&self) -> f64 {
        self.base.theta_obj
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let t0 = self.theta0();
        if !(t0 < 0.0) {
            return Err(OmtError::invalid(format!("theta0 = {t0} must be negative")));
        }
        let g = &self.theta_a_grid;
        if g.len() < 3 {
            return Err(OmtError::invalid("the theta grid needs at least three points"));
        }
        if g.iter().any(|&t| !(t < 0.0)) || g.windows(2).any(|w| w[1] >= w[0]) {
            return Err(OmtError::invalid("the theta grid must be negative and strictly descending"));
        }
        let v = &self.verify;
        if v.control_equal.iter().chain(&v.control_levels).any(|&t| !(t < 0.0)) {
            return Err(OmtError::invalid("control grids must be negative"));
        }
        if v.dominance_equal.iter().chain(&v.dominance_levels).any(|&t| !(t <= t0)) {
            return Err(OmtError::invalid("dominance grids must lie at or below theta0"));
        }
        if !(self.refine_width > 0.0) {
            return Err(OmtError::invalid("refine width must be positive"));
        }
        Ok(())
    }
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    // Ascending from a to b, both negative: geometric in |theta|.
    let (la, lb) = (a.abs().ln(), b.abs().ln());
    (0..n).map(|i| -(la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Optimal policy with the objective at `theta0` and constraints at `theta`.
pub fn solve_two_theta(
    theta0: f64,
    theta: f64,
    base: &ProblemSpec,
    cfg: &QuadConfig,
    search: &SearchConfig,
) -> Result<SolveReport> {
    if !(theta0 < 0.0 && theta < 0.0) {
        return Err(OmtError::invalid(format!("signals must be negative, got {theta0} and {theta}")));
    }
    let spec = ProblemSpec { theta_obj: theta0, theta_con: theta, ..*base };
    solve_mu(&spec, cfg, search).map_err(|e| match e {
        OmtError::NonConvergence { message, best_mu, residuals } => OmtError::NonConvergence {
            message: format!("{message} (theta0 = {theta0}, theta = {theta})"),
            best_mu,
            residuals,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    /// Power at `theta0` of the policy constrained at `theta`.
    pub power: f64,
    pub mu: Vec<f64>,
}

struct Curve<'a> {
    spec: &'a MaximinSpec,
    cfg: &'a QuadConfig,
    search: &'a SearchConfig,
    points: RefCell<Vec<CurvePoint>>,
}

impl Curve<'_> {
    fn eval(&self, theta: f64) -> Result<f64> {
        if let Some(p) = self.points.borrow().iter().find(|p| p.theta == theta) {
            return Ok(p.power);
        }
        let r = solve_two_theta(self.spec.theta0(), theta, &self.spec.base, self.cfg, self.search)?;
        self.points.borrow_mut().push(CurvePoint { theta, power: r.objective, mu: r.mu_star.as_slice().to_vec() });
        Ok(r.objective)
    }
}

struct ByRef<'a, 'b>(&'a Curve<'b>);

impl CostFunction for ByRef<'_, '_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, theta: &f64) -> std::result::Result<f64, argmin::core::Error> {
        self.0.eval(*theta).map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

/// The constraint signal of least power and every point evaluated on the
/// way, sorted by descending `theta`.
pub fn find_theta_a(spec: &MaximinSpec, cfg: &QuadConfig, search: &SearchConfig) -> Result<(f64, Vec<CurvePoint>)> {
    spec.validate()?;
    let curve = Curve { spec, cfg, search, points: RefCell::new(Vec::new()) };
    let g = &spec.theta_a_grid;
    let powers = g.iter().map(|&t| curve.eval(t)).collect::<Result<Vec<f64>>>()?;
    let i = (0..g.len()).min_by(|&a, &b| powers[a].total_cmp(&powers[b])).expect("grid is nonempty");
    if i == 0 || i == g.len() - 1 {
        return Err(OmtError::invalid(format!(
            "least power at the grid end theta = {}; extend the theta grid",
            g[i]
        )));
    }
    let (lo, hi) = (g[i + 1], g[i - 1]);
    // argmin stops when the bracket is below tol * (|x1| + |x2|).
    let tol = spec.refine_width / (2.0 * g[i].abs());
    let gss = GoldenSectionSearch::new(lo, hi)
        .and_then(|s| s.with_tolerance(tol))
        .map_err(|e| OmtError::invalid(e.to_string()))?;
    Executor::new(ByRef(&curve), gss)
        .configure(|s| s.param(g[i]).max_iters(60))
        .run()
        .map_err(|e| OmtError::Quadrature(format!("theta refinement failed: {e}")))?;
    let mut points = curve.points.into_inner();
    points.sort_by(|a, b| b.theta.total_cmp(&a.theta));
    let best = points.iter().min_by(|a, b| a.power.total_cmp(&b.power)).expect("grid was evaluated");
    Ok((best.theta, points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlValue {
    /// The first `l` nulls are false.
    #[serde(rename = "L")]
    pub l: usize,
    pub thetas: Vec<f64>,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceValue {
    pub thetas: Vec<f64>,
    pub power: f64,
    pub pass: bool,
}

/// Nondecreasing `len`-vectors over `levels`; by exchangeability of the
/// false nulls, orderings are redundant.
fn multisets(levels: &[f64], len: usize) -> Vec<Vec<f64>> {
    fn rec(levels: &[f64], len: usize, from: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in from..levels.len() {
            cur.push(levels[i]);
            rec(levels, len, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(levels, len, 0, &mut Vec::new(), &mut out);
    out
}

fn padded(k: usize, head: &[f64]) -> Vec<f64> {
    let mut t = head.to_vec();
    t.resize(k, 0.0);
    t
}

/// Error rate of `policy` for every number of false nulls below `k` and
/// every shift vector of the grid.
pub fn verify_control<R: DecisionRule + ?Sized>(
    policy: &R,
    spec: &MaximinSpec,
    cfg: &QuadConfig,
) -> Result<Vec<ControlValue>> {
    let k = policy.k();
    let alpha = spec.base.alpha;
    let feas = crate::solver::Tolerances::default().feas;
    let mut vectors: Vec<(usize, Vec<f64>)> = vec![(0, vec![])];
    for l in 1..k {
        vectors.extend(spec.verify.control_equal.iter().map(|&t| (l, vec![t; l])));
        vectors.extend(multisets(&spec.verify.control_levels, l).into_iter().filter(|v| v.iter().any(|&x| x != v[0])).map(|v| (l, v)));
    }
    vectors
        .into_iter()
        .map(|(l, head)| {
            let thetas = padded(k, &head);
            let value = eval::error_rate(policy, Config::canonical(k, l), &thetas, spec.base.error, cfg)?.value;
            Ok(ControlValue { l, thetas, value, pass: value <= alpha + feas })
        })
        .collect()
}

/// Average power over the false nulls at every grid vector at or below
/// `theta0`, against the power at `theta0`.
pub fn verify_dominance<R: DecisionRule + ?Sized>(
    policy: &R,
    spec: &MaximinSpec,
    min_power: f64,
    cfg: &QuadConfig,
) -> Result<Vec<DominanceValue>> {
    let k = policy.k();
    let feas = crate::solver::Tolerances::default().feas;
    let mut vectors: Vec<Vec<f64>> = spec.verify.dominance_equal.iter().map(|&t| vec![t; k]).collect();
    vectors.extend(multisets(&spec.verify.dominance_levels, k).into_iter().filter(|v| v.iter().any(|&x| x != v[0])));
    vectors
        .into_iter()
        .map(|thetas| {
            let s = Scenario::new(Config::canonical(k, k), thetas.clone())?;
            let power = quad::expectation(policy, &s, &[Stat::AvgPower], cfg)?[0].value;
            Ok(DominanceValue { thetas, power, pass: power >= min_power - feas })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximinReport {
    pub format: u32,
    pub spec: MaximinSpec,
    pub theta_a: f64,
    /// Power at `theta0` of the chosen policy.
    pub min_power: f64,
    pub mu: Vec<f64>,
    pub power_curve: Vec<CurvePoint>,
    pub control_check: Vec<ControlValue>,
    pub dominance_check: Vec<DominanceValue>,
    pub certified: bool,
    pub quad: QuadConfig,
}

impl MaximinReport {
    /// Recomputes the certificate from the stored grids rather than trusting
    /// the flags.
    pub fn recheck(&self) -> bool {
        let feas = crate::solver::Tolerances::default().feas;
        let alpha = self.spec.base.alpha;
        !self.control_check.is_empty()
            && !self.dominance_check.is_empty()
            && self.control_check.iter().all(|c| c.value <= alpha + feas)
            && self.dominance_check.iter().all(|d| d.power >= self.min_power - feas)
            && self.power_curve.iter().all(|p| p.power >= self.min_power)
    }

    pub fn policy(&self) -> Result<OmtPolicy> {
        let spec = ProblemSpec { theta_con: self.theta_a, ..self.spec.base };
        OmtPolicy::new(spec, MultiplierVector::new(self.mu.clone())?, Provenance::Maximin)
    }

    pub fn policy_file(&self) -> Result<PolicyFile> {
        Ok(self.policy()?.to_file(SolverMeta { tol: crate::solver::Tolerances::default().feas, grid: self.quad.n }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Searches `theta_A`, verifies the resulting policy and reports whether
/// the maximin certificate holds on the grids.
pub fn maximin(spec: &MaximinSpec, cfg: &QuadConfig, search: &SearchConfig) -> Result<MaximinReport> {
    let (theta_a, power_curve) = find_theta_a(spec, cfg, search)?;
    let best = power_curve.iter().find(|p| p.theta == theta_a).expect("theta_a is on the curve");
    let spec_a = ProblemSpec { theta_con: theta_a, ..spec.base };
    let policy = OmtPolicy::new(spec_a, MultiplierVector::new(best.mu.clone())?, Provenance::Maximin)?;
    let control_check = verify_control(&policy, spec, cfg)?;
    let dominance_check = verify_dominance(&policy, spec, best.power, cfg)?;
    let mut report = MaximinReport {
        format: 1,
        spec: spec.clone(),
        theta_a,
        min_power: best.power,
        mu: best.mu.clone(),
        power_curve,
        control_check,
        dominance_check,
        certified: false,
        quad: *cfg,
    };
    report.certified = report.recheck();
    Ok(report)
}
