//! Multiplier-defined rejection policies.
//!
//! Given multipliers `mu`, the residual at depth `k` is
//! `R_k = a_k - sum_L mu_L b_{L,k}` and the policy rejects the `k*` smallest
//! p-values, where `k*` is the first maximizer of the prefix sums
//! `P_0 = 0, P_l = R_1 + ... + R_l`. This is the nested rule "go one level
//! deeper while some partial sum starting there is positive".

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::{DepthTerms, MonomialTable};
use crate::error::{OmtError, Result};
use crate::model::{alt_density_z, sort_permutation, PVector, ProblemSpec, RejectionSet};
use crate::normal;

/// Nonnegative Lagrange multipliers, one per error constraint `L = 0..K-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiplierVector(Vec<f64>);

impl MultiplierVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some(bad) = mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(OmtError::invalid(format!("multiplier {bad} is not a finite nonnegative number")));
        }
        Ok(MultiplierVector(mu))
    }

    pub fn zeros(k: usize) -> Self {
        MultiplierVector(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// A symmetric rule that rejects the `depth` smallest p-values.
///
/// Rules see sorted z-scores (`z = Phi^{-1}(u)`, ascending), which is the same
/// order as sorted p-values.
pub trait DecisionRule: Sync {
    fn k(&self) -> usize;

    /// Number of rejections at a sorted z-vector.
    fn depth(&self, z_sorted: &[f64]) -> usize;

    fn name(&self) -> String;

    /// A function of the sorted z-vector that is continuous in each
    /// coordinate and nonnegative where depth `from` beats depth `to`; its
    /// zero crossing is the boundary between the two. Integrators use it to
    /// locate boundaries faster than bisection. `None` if unavailable.
    fn margin(&self, _z_sorted: &[f64], _from: usize, _to: usize) -> Option<f64> {
        None
    }

    /// Rejections at an arbitrary p-vector; ties go to the lower index.
    fn decide_full(&self, u: &PVector) -> RejectionSet {
        let z = u.z_scores();
        self.decide_z(&z)
    }

    /// Rejections at an arbitrary (unsorted) z-vector.
    fn decide_z(&self, z: &[f64]) -> RejectionSet {
        let perm = sort_permutation(z);
        let sorted: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        RejectionSet::prefix(&perm, self.depth(&sorted))
    }
}

impl<T: DecisionRule + ?Sized> DecisionRule for &T {
    fn k(&self) -> usize {
        (**self).k()
    }
    fn depth(&self, z_sorted: &[f64]) -> usize {
        (**self).depth(z_sorted)
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn margin(&self, z_sorted: &[f64], from: usize, to: usize) -> Option<f64> {
        (**self).margin(z_sorted, from, to)
    }
}

impl<T: DecisionRule + ?Sized> DecisionRule for Box<T> {
    fn k(&self) -> usize {
        (**self).k()
    }
    fn depth(&self, z_sorted: &[f64]) -> usize {
        (**self).depth(z_sorted)
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn margin(&self, z_sorted: &[f64], from: usize, to: usize) -> Option<f64> {
        (**self).margin(z_sorted, from, to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Solved,
    /// Solved with the constraint signal found by the maximin search.
    Maximin,
    Loaded,
}

/// Residual weights with the multipliers folded in, stored densely by
/// depth and monomial mask.
#[derive(Debug, Clone)]
pub(crate) struct ResidualKernel {
    k: usize,
    theta_obj: f64,
    theta_con: f64,
    objective: Vec<f64>,
    /// `sum_L mu_L b_{L,k}`.
    penalty: Vec<f64>,
    /// Objective minus penalty, available when both use the same
    /// alternative.
    merged: Option<Vec<f64>>,
}

/// Per-position factors for evaluating density products: a monomial over
/// `mask` is `prod_{r in mask} x[r] * prod_{r not in mask} y[r]`.
pub(crate) struct Factors<'a> {
    pub x_obj: &'a [f64],
    pub x_con: &'a [f64],
    pub y: &'a [f64],
}

const MAX_MASKS: usize = 1 << crate::model::MAX_K;

/// Every monomial at once, indexed by mask.
#[inline]
fn monomials(x: &[f64], y: &[f64], out: &mut [f64; MAX_MASKS]) {
    out[0] = 1.0;
    let mut len = 1;
    for (&xr, &yr) in x.iter().zip(y) {
        for m in 0..len {
            let v = out[m];
            out[m] = v * yr;
            out[m + len] = v * xr;
        }
        len *= 2;
    }
}

fn dense(k: usize, terms: &DepthTerms) -> Vec<f64> {
    let n = 1 << k;
    let mut out = vec![0.0; k * n];
    for (d, list) in terms.iter().enumerate() {
        for &(mask, c) in list {
            out[d * n + mask as usize] += c;
        }
    }
    out
}

impl ResidualKernel {
    pub(crate) fn new(spec: &ProblemSpec, mu: &[f64]) -> Self {
        let k = spec.k;
        let table = MonomialTable::for_spec(spec);
        let objective = dense(k, &table.objective);
        let mut penalty = vec![0.0; objective.len()];
        for (l, terms) in table.constraints.iter().enumerate() {
            if mu[l] != 0.0 {
                for (p, c) in penalty.iter_mut().zip(dense(k, terms)) {
                    *p += mu[l] * c;
                }
            }
        }
        let merged = (spec.theta_obj == spec.theta_con)
            .then(|| objective.iter().zip(&penalty).map(|(a, b)| a - b).collect());
        ResidualKernel { k, theta_obj: spec.theta_obj, theta_con: spec.theta_con, objective, penalty, merged }
    }

    /// Residuals for the given factors; `abs` (if given) receives the sum of
    /// absolute term values per depth.
    pub(crate) fn eval(&self, f: &Factors<'_>, out: &mut [f64], abs: Option<&mut [f64]>) {
        let n = 1 << self.k;
        let mut mo = [0.0; MAX_MASKS];
        monomials(f.x_obj, f.y, &mut mo);
        if let (Some(merged), None) = (&self.merged, &abs) {
            for (o, row) in out.iter_mut().zip(merged.chunks_exact(n)) {
                *o = row.iter().zip(&mo[..n]).map(|(c, m)| c * m).sum();
            }
            return;
        }
        let mut mc = [0.0; MAX_MASKS];
        monomials(f.x_con, f.y, &mut mc);
        let rows = self.objective.chunks_exact(n).zip(self.penalty.chunks_exact(n));
        match abs {
            None => {
                for (o, (obj, pen)) in out.iter_mut().zip(rows) {
                    *o = (0..n).map(|m| obj[m] * mo[m] - pen[m] * mc[m]).sum();
                }
            }
            Some(abs) => {
                for ((o, a), (obj, pen)) in out.iter_mut().zip(abs.iter_mut()).zip(rows) {
                    let (mut r, mut s) = (0.0, 0.0);
                    for m in 0..n {
                        let (vo, vp) = (obj[m] * mo[m], pen[m] * mc[m]);
                        r += vo - vp;
                        s += vo.abs() + vp.abs();
                    }
                    *o = r;
                    *a = s;
                }
            }
        }
    }

    /// Residuals at sorted z, rescaled per position by `max(1, g_obj, g_con)`
    /// so that no product overflows. Signs and ratios are preserved.
    pub(crate) fn scaled(&self, z_sorted: &[f64], out: &mut [f64], abs: Option<&mut [f64]>) {
        const N: usize = crate::model::MAX_K;
        let (mut xo, mut xc, mut y) = ([0.0; N], [0.0; N], [0.0; N]);
        for (r, &z) in z_sorted.iter().enumerate() {
            let z = z.clamp(-normal::Z_CLAMP, normal::Z_CLAMP);
            let go = alt_density_z(z, self.theta_obj);
            let gc = if self.merged.is_some() { go } else { alt_density_z(z, self.theta_con) };
            let s = go.max(gc).max(1.0);
            xo[r] = go / s;
            xc[r] = gc / s;
            y[r] = 1.0 / s;
        }
        let k = self.k;
        self.eval(&Factors { x_obj: &xo[..k], x_con: &xc[..k], y: &y[..k] }, out, abs);
    }

    /// Unscaled residuals at sorted z.
    pub(crate) fn plain(&self, z_sorted: &[f64], out: &mut [f64]) {
        const N: usize = crate::model::MAX_K;
        let (mut xo, mut xc) = ([0.0; N], [0.0; N]);
        for (r, &z) in z_sorted.iter().enumerate() {
            xo[r] = alt_density_z(z, self.theta_obj);
            xc[r] = alt_density_z(z, self.theta_con);
        }
        let k = self.k;
        self.eval(&Factors { x_obj: &xo[..k], x_con: &xc[..k], y: &[1.0; N][..k] }, out, None);
    }
}

/// First maximizer of the prefix sums `0, R_1, R_1 + R_2, ...`. Exact ties
/// do not deepen the rejection.
#[inline]
pub fn depth_from_residuals(r: &[f64]) -> usize {
    let (mut best, mut arg, mut acc) = (0.0, 0, 0.0);
    for (i, &ri) in r.iter().enumerate() {
        acc += ri;
        if acc > best {
            best = acc;
            arg = i + 1;
        }
    }
    arg
}

/// `max(0, max_l P_l)`: the pointwise dual variable attached to the first
/// rejection.
#[inline]
pub fn lambda1_from_residuals(r: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for &ri in r {
        acc += ri;
        best = best.max(acc);
    }
    best
}

/// The rejection policy defined by a problem and its multipliers.
#[derive(Debug, Clone)]
pub struct OmtPolicy {
    spec: ProblemSpec,
    mu: MultiplierVector,
    provenance: Provenance,
    kernel: ResidualKernel,
}

impl OmtPolicy {
    pub fn new(spec: ProblemSpec, mu: MultiplierVector, provenance: Provenance) -> Result<Self> {
        spec.check_shape()?;
        if mu.len() != spec.k {
            return Err(OmtError::invalid(format!("expected {} multipliers, got {}", spec.k, mu.len())));
        }
        let kernel = ResidualKernel::new(&spec, mu.as_slice());
        Ok(OmtPolicy { spec, mu, provenance, kernel })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn mu(&self) -> &MultiplierVector {
        &self.mu
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub(crate) fn kernel(&self) -> &ResidualKernel {
        &self.kernel
    }

    /// Unscaled residuals `R_1..R_K` at a sorted p-vector.
    pub fn residuals(&self, u: &PVector) -> Result<Vec<f64>> {
        if !u.is_sorted() || u.len() != self.spec.k {
            return Err(OmtError::invalid("residuals need a sorted p-vector of length k"));
        }
        let g_obj: Vec<f64> = u.z_scores().iter().map(|&z| alt_density_z(z, self.spec.theta_obj)).collect();
        let g_con: Vec<f64> = u.z_scores().iter().map(|&z| alt_density_z(z, self.spec.theta_con)).collect();
        let ones = vec![1.0; self.spec.k];
        let mut out = vec![0.0; self.spec.k];
        self.kernel.eval(&Factors { x_obj: &g_obj, x_con: &g_con, y: &ones }, &mut out, None);
        Ok(out)
    }

    /// Rejection depth at a sorted p-vector.
    pub fn decide(&self, u: &PVector) -> Result<usize> {
        if !u.is_sorted() || u.len() != self.spec.k {
            return Err(OmtError::invalid("decide needs a sorted p-vector of length k"));
        }
        Ok(self.depth(&u.z_scores()))
    }

    /// Residual magnitudes relevant to tie detection: for each depth, the
    /// scaled residual and the sum of absolute term values.
    pub(crate) fn scaled_residuals_with_abs(&self, z_sorted: &[f64], r: &mut [f64], abs: &mut [f64]) {
        self.kernel.scaled(z_sorted, r, Some(abs));
    }

    pub fn to_file(&self, solver: SolverMeta) -> PolicyFile {
        PolicyFile {
            format: 1,
            spec: self.spec,
            mu: self.mu.as_slice().to_vec(),
            solver,
            provenance: self.provenance,
        }
    }
}

impl DecisionRule for OmtPolicy {
    fn k(&self) -> usize {
        self.spec.k
    }

    #[inline]
    fn depth(&self, z_sorted: &[f64]) -> usize {
        let mut r = [0.0; crate::model::MAX_K];
        let r = &mut r[..self.spec.k];
        self.kernel.scaled(z_sorted, r, None);
        depth_from_residuals(r)
    }

    fn name(&self) -> String {
        format!("omt[{}]", self.spec_label())
    }

    /// Difference of the residual prefix sums at the two depths.
    fn margin(&self, z_sorted: &[f64], from: usize, to: usize) -> Option<f64> {
        let mut r = [0.0; crate::model::MAX_K];
        let r = &mut r[..self.spec.k];
        self.kernel.scaled(z_sorted, r, None);
        let prefix = |d: usize| r[..d].iter().sum::<f64>();
        Some(prefix(from) - prefix(to))
    }
}

impl OmtPolicy {
    fn spec_label(&self) -> String {
        let s = &self.spec;
        let power = match s.objective() {
            crate::model::PowerObjective::AnyPower => "any".to_string(),
            crate::model::PowerObjective::AvgPower(l) => format!("avg{l}"),
        };
        format!("k={},{},{},{},theta={}/{}", s.k, s.error, power, s.alpha, s.theta_obj, s.theta_con)
    }
}

impl fmt::Display for OmtPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mu={:?}", self.name(), self.mu.as_slice())
    }
}

/// Solver settings recorded alongside a stored policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub tol: f64,
    pub grid: usize,
}

/// On-disk policy document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: u32,
    pub spec: ProblemSpec,
    pub mu: Vec<f64>,
    pub solver: SolverMeta,
    pub provenance: Provenance,
}

impl PolicyFile {
    /// serde_json writes the shortest representation that round-trips, so
    /// multipliers reload bit-for-bit.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(s)?;
        if file.format != 1 {
            return Err(OmtError::invalid(format!("unsupported policy format {}", file.format)));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn policy(&self) -> Result<OmtPolicy> {
        OmtPolicy::new(self.spec, MultiplierVector::new(self.mu.clone())?, Provenance::Loaded)
    }
}
