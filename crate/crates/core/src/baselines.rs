//! Classical multiple testing procedures, as [`DecisionRule`]s.
//!
//! Every procedure here rejects a prefix of the sorted p-values, so each is
//! described by its rejection depth on the ascending z-vector. Thresholds are
//! moved to z-space once at construction (`p <= t` iff `z <= Phi^{-1}(t)`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OmtError, Result};
use crate::model::{PVector, RejectionSet, MAX_K};
use crate::normal;
use crate::policy::DecisionRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Holm,
    #[serde(rename = "sidak")]
    SidakStepDown,
    #[serde(rename = "bh")]
    BH,
    #[serde(rename = "mabh")]
    MABH,
    ClosedStouffer,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] =
        [BaselineKind::Holm, BaselineKind::SidakStepDown, BaselineKind::BH, BaselineKind::MABH, BaselineKind::ClosedStouffer];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Holm => "holm",
            BaselineKind::SidakStepDown => "sidak",
            BaselineKind::BH => "bh",
            BaselineKind::MABH => "mabh",
            BaselineKind::ClosedStouffer => "closed-stouffer",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = OmtError;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|b| b.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| OmtError::invalid(format!("unknown procedure '{s}'")))
    }
}

/// A classical procedure at level `alpha` for `k` hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
    pub alpha: f64,
    k: usize,
    /// z-thresholds by rank; meaning depends on `kind`.
    cut: Vec<f64>,
    /// Second threshold row (MABH depth stage).
    cut2: Vec<f64>,
    /// `z_alpha` for the Stouffer tests.
    z_alpha: f64,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind, k: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(OmtError::invalid(format!("alpha = {alpha} outside (0, 1)")));
        }
        if !(1..=MAX_K).contains(&k) {
            return Err(OmtError::invalid(format!("k = {k} unsupported")));
        }
        let kf = k as f64;
        let q = normal::quantile;
        let (cut, cut2): (Vec<f64>, Vec<f64>) = match kind {
            BaselineKind::Holm => ((0..k).map(|r| q(alpha / (kf - r as f64))).collect(), vec![]),
            BaselineKind::SidakStepDown => {
                ((0..k).map(|r| q(1.0 - (1.0 - alpha).powf(1.0 / (kf - r as f64)))).collect(), vec![])
            }
            BaselineKind::BH => ((1..=k).map(|i| q(i as f64 * alpha / kf)).collect(), vec![]),
            BaselineKind::MABH => {
                let second = if k == 1 { kf } else { kf - 1.0 };
                (
                    (1..=k).map(|i| q(i as f64 * alpha / kf)).collect(),
                    (1..=k).map(|i| q((i as f64 * alpha / second).min(1.0))).collect(),
                )
            }
            BaselineKind::ClosedStouffer => (vec![], vec![]),
        };
        Ok(BaselinePolicy { kind, alpha, k, cut, cut2, z_alpha: q(alpha) })
    }

    /// Step-up depth: the largest rank whose z is at or below its threshold.
    fn step_up(z: &[f64], cut: &[f64]) -> usize {
        (0..z.len()).rev().find(|&r| z[r] <= cut[r]).map_or(0, |r| r + 1)
    }

    /// Rank `i` of the sorted vector survives closed testing when every
    /// subset containing it has a Stouffer statistic below `z_alpha`.
    fn closed_stouffer_rejects(&self, z: &[f64], i: usize) -> bool {
        let k = z.len();
        (0u32..1 << k).filter(|s| s & (1 << i) != 0).all(|s| {
            let sum: f64 = (0..k).filter(|&j| s & (1 << j) != 0).map(|j| z[j]).sum();
            sum / (s.count_ones() as f64).sqrt() < self.z_alpha
        })
    }
}

impl DecisionRule for BaselinePolicy {
    fn k(&self) -> usize {
        self.k
    }

    fn depth(&self, z: &[f64]) -> usize {
        match self.kind {
            BaselineKind::Holm | BaselineKind::SidakStepDown => {
                z.iter().zip(&self.cut).take_while(|(x, c)| x <= c).count()
            }
            BaselineKind::BH => Self::step_up(z, &self.cut),
            BaselineKind::MABH => {
                if z.iter().zip(&self.cut).any(|(x, c)| x <= c) {
                    Self::step_up(z, &self.cut2)
                } else {
                    0
                }
            }
            // Rejections form a prefix: a smaller z can replace a larger one
            // in any subset without raising its sum.
            BaselineKind::ClosedStouffer => (0..self.k).take_while(|&i| self.closed_stouffer_rejects(z, i)).count(),
        }
    }

    fn name(&self) -> String {
        self.kind.to_string()
    }
}

fn apply(kind: BaselineKind, u: &PVector, alpha: f64) -> Result<RejectionSet> {
    Ok(BaselinePolicy::new(kind, u.len(), alpha)?.decide_full(u))
}

/// Holm's step-down procedure: thresholds `alpha / (K - k + 1)` at rank `k`.
pub fn holm(u: &PVector, alpha: f64) -> Result<RejectionSet> {
    apply(BaselineKind::Holm, u, alpha)
}

/// Step-down with Sidak thresholds `1 - (1 - alpha)^(1 / (K - k + 1))`.
pub fn sidak_stepdown(u: &PVector, alpha: f64) -> Result<RejectionSet> {
    apply(BaselineKind::SidakStepDown, u, alpha)
}

/// Benjamini–Hochberg: reject up to `max{i : u_(i) <= i alpha / K}`.
pub fn bh(u: &PVector, alpha: f64) -> Result<RejectionSet> {
    apply(BaselineKind::BH, u, alpha)
}

/// Minimally adaptive BH: if BH rejects anything, reject up to
/// `max{i : u_(i) <= i alpha / (K - 1)}`.
pub fn mabh(u: &PVector, alpha: f64) -> Result<RejectionSet> {
    apply(BaselineKind::MABH, u, alpha)
}

/// Closed testing with Stouffer's combination for every intersection.
pub fn closed_stouffer(u: &PVector, alpha: f64) -> Result<RejectionSet> {
    apply(BaselineKind::ClosedStouffer, u, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> PVector {
        PVector::new(v.to_vec()).unwrap()
    }

    fn idx(r: RejectionSet) -> Vec<usize> {
        r.indices()
    }

    #[test]
    fn holm_examples() {
        assert_eq!(idx(holm(&p(&[0.01, 0.02, 0.2]), 0.05).unwrap()), vec![0, 1]);
        assert!(idx(holm(&p(&[0.3, 0.4, 0.5]), 0.05).unwrap()).is_empty());
        assert_eq!(idx(holm(&p(&[0.001, 0.002, 0.003]), 0.05).unwrap()), vec![0, 1, 2]);
        // Order of the input does not matter.
        assert_eq!(idx(holm(&p(&[0.2, 0.02, 0.01]), 0.05).unwrap()), vec![1, 2]);
    }

    #[test]
    fn sidak_thresholds() {
        assert_eq!(idx(sidak_stepdown(&p(&[0.0169, 0.02, 0.04]), 0.05).unwrap()), vec![0, 1, 2]);
        assert!(idx(sidak_stepdown(&p(&[0.018, 0.02, 0.04]), 0.05).unwrap()).is_empty());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(idx(bh(&p(&[0.01, 0.03, 0.2]), 0.05).unwrap()), vec![0, 1]);
        assert!(idx(bh(&p(&[0.04, 0.2, 0.9]), 0.05).unwrap()).is_empty());
        assert_eq!(idx(bh(&p(&[0.016, 0.2, 0.9]), 0.05).unwrap()), vec![0]);
        // Step-up: a failing middle rank does not stop a later success.
        assert_eq!(idx(bh(&p(&[0.02, 0.04, 0.045]), 0.05).unwrap()), vec![0, 1, 2]);
    }

    #[test]
    fn mabh_examples() {
        assert_eq!(idx(mabh(&p(&[0.01, 0.03, 0.2]), 0.05).unwrap()), vec![0, 1]);
        assert_eq!(idx(mabh(&p(&[0.02, 0.026, 0.9]), 0.05).unwrap()), vec![0, 1]);
        assert!(idx(mabh(&p(&[0.04, 0.2, 0.9]), 0.05).unwrap()).is_empty());
    }

    #[test]
    fn closed_stouffer_examples() {
        assert!(idx(closed_stouffer(&p(&[0.001, 0.2, 0.9]), 0.05).unwrap()).is_empty());
        assert_eq!(idx(closed_stouffer(&p(&[0.001, 0.5, 0.5]), 0.05).unwrap()), vec![0]);
        assert!(idx(closed_stouffer(&p(&[0.5, 0.5, 0.5]), 0.05).unwrap()).is_empty());
    }

    #[test]
    fn parses_names() {
        for b in BaselineKind::ALL {
            assert_eq!(b.as_str().parse::<BaselineKind>().unwrap(), b);
            let json = serde_json::to_string(&b).unwrap();
            assert_eq!(json, format!("\"{}\"", b.as_str()));
        }
        assert!("storey".parse::<BaselineKind>().is_err());
    }

    fn triple() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6f64..1.0, 3)
    }

    proptest! {
        /// Lowering a rejected p-value or raising an accepted one keeps the
        /// rejection set.
        #[test]
        fn stepwise_rules_are_monotone(u in triple(), f in 0.0f64..1.0, which in 0usize..3) {
            for kind in [BaselineKind::Holm, BaselineKind::SidakStepDown, BaselineKind::BH, BaselineKind::MABH] {
                let rule = BaselinePolicy::new(kind, 3, 0.05).unwrap();
                let before = rule.decide_full(&p(&u));
                let mut v = u.clone();
                v[which] = if before.contains(which) { u[which] * f } else { u[which] + (1.0 - u[which]) * f };
                prop_assert_eq!(rule.decide_full(&p(&v)), before, "{} at {:?} -> {:?}", kind, u, v);
            }
        }

        #[test]
        fn mabh_contains_bh(u in triple()) {
            let b = bh(&p(&u), 0.05).unwrap();
            let m = mabh(&p(&u), 0.05).unwrap();
            prop_assert!(b.indices().iter().all(|&i| m.contains(i)));
        }
    }
}
