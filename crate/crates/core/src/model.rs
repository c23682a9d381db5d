//! Problem definition, p-value densities under the Gaussian shift
//! alternative, hypothesis configurations and rejection sets.
//!
//! A p-value `u` is `Phi(X)` for a test statistic `X ~ N(theta, 1)`, so a false
//! null with standardized shift `theta < 0` has density
//! `g(u) = exp(theta * z - theta^2 / 2)` with `z = Phi^{-1}(u)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{OmtError, Result};
use crate::normal;

/// Largest number of hypotheses accepted anywhere in the crate.
pub const MAX_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMeasure {
    Fwer,
    Fdr,
}

impl fmt::Display for ErrorMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorMeasure::Fwer => "fwer",
            ErrorMeasure::Fdr => "fdr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerKind {
    Avg,
    Any,
}

/// What the policy maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerObjective {
    /// Expected fraction of the `L` false nulls rejected when exactly `L` are false.
    AvgPower(usize),
    /// Probability of at least one rejection when every null is false.
    AnyPower,
}

/// One optimal-multiple-testing instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub k: usize,
    pub alpha: f64,
    pub error: ErrorMeasure,
    pub power: PowerKind,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Signal in the objective.
    pub theta_obj: f64,
    /// Signal of the false nulls in the error constraints.
    pub theta_con: f64,
}

impl ProblemSpec {
    /// Same signal in objective and constraints; average power over all `k`
    /// false nulls.
    pub fn avg(k: usize, alpha: f64, error: ErrorMeasure, theta: f64) -> Self {
        ProblemSpec {
            k,
            alpha,
            error,
            power: PowerKind::Avg,
            l: Some(k),
            theta_obj: theta,
            theta_con: theta,
        }
    }

    pub fn any(k: usize, alpha: f64, error: ErrorMeasure, theta: f64) -> Self {
        ProblemSpec {
            k,
            alpha,
            error,
            power: PowerKind::Any,
            l: None,
            theta_obj: theta,
            theta_con: theta,
        }
    }

    pub fn with_theta_con(mut self, theta_con: f64) -> Self {
        self.theta_con = theta_con;
        self
    }

    pub fn objective(&self) -> PowerObjective {
        match self.power {
            PowerKind::Any => PowerObjective::AnyPower,
            PowerKind::Avg => PowerObjective::AvgPower(self.l.unwrap_or(self.k)),
        }
    }

    /// Structural checks only: sizes and the objective's `L`. Signals may be
    /// zero here so that degenerate instances can still be evaluated.
    pub fn check_shape(&self) -> Result<()> {
        if self.k < 2 || self.k > MAX_K {
            return Err(OmtError::invalid(format!("k = {} outside 2..={MAX_K}", self.k)));
        }
        if let PowerObjective::AvgPower(l) = self.objective() {
            if l == 0 || l > self.k {
                return Err(OmtError::invalid(format!("L = {l} outside 1..={}", self.k)));
            }
        }
        if !self.theta_obj.is_finite() || !self.theta_con.is_finite() || self.theta_obj > 0.0 || self.theta_con > 0.0 {
            return Err(OmtError::invalid("signals must be finite and non-positive"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(OmtError::invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.theta_obj >= 0.0 || self.theta_con >= 0.0 {
            return Err(OmtError::invalid("theta_obj and theta_con must be negative"));
        }
        Ok(())
    }
}

/// A vector of `K` p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct PVector(Vec<f64>);

impl PVector {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() || u.len() > MAX_K {
            return Err(OmtError::invalid(format!("p-vector length {} outside 1..={MAX_K}", u.len())));
        }
        if let Some(bad) = u.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(OmtError::invalid(format!("p-value {bad} outside [0, 1]")));
        }
        Ok(PVector(u))
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

    /// True when the vector lies in the ordered region `u_1 <= ... <= u_K`.
    pub fn is_sorted(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    /// Sorted copy and the sorting permutation: `sorted[r] = u[perm[r]]`.
    /// Ties keep index order.
    pub fn sorted(&self) -> (Vec<f64>, Vec<usize>) {
        let perm = sort_permutation(&self.0);
        (perm.iter().map(|&i| self.0[i]).collect(), perm)
    }

    /// z-scores, clamped to finite values.
    pub fn z_scores(&self) -> Vec<f64> {
        self.0.iter().map(|&p| normal::z_score(p)).collect()
    }
}

/// Stable ascending argsort.
pub fn sort_permutation(x: &[f64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..x.len()).collect();
    perm.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    perm
}

/// Which nulls are false, as a bitmask over 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Config {
    pub k: usize,
    pub mask: u32,
}

impl Config {
    pub fn new(k: usize, mask: u32) -> Result<Self> {
        if k == 0 || k > MAX_K || (mask >> k) != 0 {
            return Err(OmtError::invalid(format!("mask {mask:#b} invalid for k = {k}")));
        }
        Ok(Config { k, mask })
    }

    /// `h_L`: the first `l` nulls are false.
    pub fn canonical(k: usize, l: usize) -> Self {
        assert!(l <= k && k <= MAX_K);
        Config { k, mask: (1u32 << l) - 1 }
    }

    pub fn from_indices(k: usize, false_nulls: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        for &i in false_nulls {
            if i >= k {
                return Err(OmtError::invalid(format!("index {i} out of range for k = {k}")));
            }
            mask |= 1 << i;
        }
        Ok(Config { k, mask })
    }

    /// Number of false nulls.
    pub fn count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_false_null(&self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }
}

/// Rejected hypotheses as a bitmask over 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RejectionSet {
    pub mask: u32,
}

impl RejectionSet {
    pub fn empty() -> Self {
        RejectionSet { mask: 0 }
    }

    /// The `depth` hypotheses with the smallest p-values, given the sorting
    /// permutation.
    pub fn prefix(perm: &[usize], depth: usize) -> Self {
        let mask = perm[..depth].iter().fold(0u32, |m, &i| m | 1 << i);
        RejectionSet { mask }
    }

    pub fn count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    /// 0-based indices of the rejected hypotheses.
    pub fn indices(&self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    /// False rejections `V` and total rejections `R` under configuration `h`.
    pub fn false_true_counts(&self, h: Config) -> (usize, usize) {
        let v = (self.mask & !h.mask).count_ones() as usize;
        (v, self.count())
    }
}

/// Alternative p-value density in z-space: `exp(theta * z - theta^2 / 2)`.
#[inline]
pub fn alt_density_z(z: f64, theta: f64) -> f64 {
    (theta * z - 0.5 * theta * theta).exp()
}

/// Density of a false-null p-value with shift `theta <= 0`.
pub fn alt_density(u: f64, theta: f64) -> Result<f64> {
    if u.is_nan() || theta.is_nan() {
        return Err(OmtError::invalid("NaN input to alt_density"));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(OmtError::invalid(format!("p-value {u} outside [0, 1]")));
    }
    if theta > 0.0 {
        return Err(OmtError::invalid("theta must be non-positive"));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    Ok(alt_density_z(normal::z_score(u), theta))
}

/// Joint density under configuration `h` with independent coordinates:
/// product of `g_{theta_k}(u_k)` over the false nulls.
pub fn joint_density(u: &PVector, h: Config, thetas: &[f64]) -> Result<f64> {
    if u.len() != h.k || thetas.len() != h.k {
        return Err(OmtError::invalid(format!(
            "length mismatch: u = {}, h.k = {}, thetas = {}",
            u.len(),
            h.k,
            thetas.len()
        )));
    }
    let mut f = 1.0;
    for (i, (&ui, &th)) in u.as_slice().iter().zip(thetas).enumerate() {
        if h.is_false_null(i) {
            f *= alt_density(ui, th)?;
        }
    }
    Ok(f)
}

/// Stouffer combination `sum_i Phi^{-1}(u_i) / sqrt(K)`. Boundary p-values give
/// infinities of the matching sign.
pub fn stouffer_stat(u: &[f64]) -> f64 {
    u.iter().map(|&p| normal::quantile(p)).sum::<f64>() / (u.len() as f64).sqrt()
}
