//! Power and error rates of any decision rule, the all-or-nothing Stouffer
//! closed forms, rejection-region slices and robustness sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmtError, Result};
use crate::model::{Config, ErrorMeasure, PVector, MAX_K};
use crate::normal;
use crate::policy::DecisionRule;
use crate::quad::{self, mc_expectation, IntegralResult, QuadConfig, Scenario, Scheme, Stat};

/// Error rates when the first `l` nulls are false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigErrors {
    #[serde(rename = "L")]
    pub l: usize,
    pub fwer: f64,
    pub fdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub policy: String,
    pub thetas: Vec<f64>,
    /// Expected fraction of the false nulls rejected, all nulls false.
    pub avg_power: f64,
    /// Probability of at least one rejection, all nulls false.
    pub any_power: f64,
    pub expected_rejections: f64,
    /// `errors[l]` has the first `l` nulls false with shifts `thetas[..l]`.
    pub errors: Vec<ConfigErrors>,
    pub scheme: Scheme,
    pub n: usize,
}

fn check_thetas<R: DecisionRule + ?Sized>(rule: &R, thetas: &[f64]) -> Result<()> {
    if thetas.len() != rule.k() {
        return Err(OmtError::invalid(format!("{} shifts for {} hypotheses", thetas.len(), rule.k())));
    }
    if thetas.iter().any(|&t| !(t.is_finite() && t <= 0.0)) {
        return Err(OmtError::invalid("shifts of false nulls must be finite and nonpositive"));
    }
    Ok(())
}

/// Average and minimal power with every null false at the given shifts,
/// plus FWER and FDR at each canonical configuration.
pub fn power<R: DecisionRule + ?Sized>(rule: &R, thetas: &[f64], cfg: &QuadConfig) -> Result<PowerReport> {
    check_thetas(rule, thetas)?;
    let k = rule.k();
    let all = Scenario::new(Config::canonical(k, k), thetas.to_vec())?;
    let p = quad::expectation(rule, &all, &[Stat::AvgPower, Stat::AnyRejection, Stat::Rejections], cfg)?;
    let errors = (0..k)
        .map(|l| {
            let s = Scenario::new(Config::canonical(k, l), thetas.to_vec())?;
            let e = quad::expectation(rule, &s, &[Stat::Fwer, Stat::Fdp], cfg)?;
            Ok(ConfigErrors { l, fwer: e[0].value, fdr: e[1].value })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerReport {
        policy: rule.name(),
        thetas: thetas.to_vec(),
        avg_power: p[0].value,
        any_power: p[1].value,
        expected_rejections: p[2].value,
        errors,
        scheme: cfg.scheme,
        n: cfg.n,
    })
}

/// FWER or FDR of a rule when the nulls in `h` are false with the given
/// shifts (entries of true nulls are ignored).
pub fn error_rate<R: DecisionRule + ?Sized>(
    rule: &R,
    h: Config,
    thetas: &[f64],
    measure: ErrorMeasure,
    cfg: &QuadConfig,
) -> Result<IntegralResult> {
    let s = Scenario::new(h, thetas.to_vec())?;
    let stat = match measure {
        ErrorMeasure::Fwer => Stat::Fwer,
        ErrorMeasure::Fdr => Stat::Fdp,
    };
    Ok(quad::expectation(rule, &s, &[stat], cfg)?.remove(0))
}

/// Rejects all `k` hypotheses when `sum z / sqrt(k) < z_alpha`, nothing
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoufferAllOrNothing {
    pub k: usize,
    pub alpha: f64,
    z_alpha: f64,
}

impl StoufferAllOrNothing {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(1..=MAX_K).contains(&k) {
            return Err(OmtError::invalid(format!("k = {k}, alpha = {alpha}")));
        }
        Ok(StoufferAllOrNothing { k, alpha, z_alpha: normal::quantile(alpha) })
    }
}

impl DecisionRule for StoufferAllOrNothing {
    fn k(&self) -> usize {
        self.k
    }
    fn depth(&self, z: &[f64]) -> usize {
        if z.iter().sum::<f64>() / (self.k as f64).sqrt() < self.z_alpha {
            self.k
        } else {
            0
        }
    }
    fn name(&self) -> String {
        "stouffer-all-or-nothing".into()
    }
    fn margin(&self, z: &[f64], from: usize, to: usize) -> Option<f64> {
        let gap = self.z_alpha * (self.k as f64).sqrt() - z.iter().sum::<f64>();
        Some(if from > to { gap } else { -gap })
    }
}

/// FDR of the all-or-nothing Stouffer rule with `l` of `k` nulls false at
/// shift `theta`: `(k - l) / k * Phi(z_alpha - l theta / sqrt(k))`.
pub fn closed_form_fdr(k: usize, l: usize, theta: f64, alpha: f64) -> f64 {
    let (kf, lf) = (k as f64, l as f64);
    (kf - lf) / kf * normal::cdf(normal::quantile(alpha) - lf * theta / kf.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaStar {
    /// Smallest shift at which the all-or-nothing rule controls every `FDR_L`.
    pub theta: f64,
    /// The configuration whose bound is attained.
    pub binding_l: usize,
    /// `bounds[l - 1]`: the shift at which `FDR_l` alone reaches `alpha`;
    /// `-inf` when it never does.
    pub bounds: Vec<f64>,
}

/// Where the all-or-nothing Stouffer rule stops controlling FDR.
pub fn theta_star(k: usize, alpha: f64) -> Result<ThetaStar> {
    if k < 2 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(OmtError::invalid(format!("k = {k}, alpha = {alpha}")));
    }
    let kf = k as f64;
    let z_alpha = normal::quantile(alpha);
    // FDR_l is decreasing in theta, so each bound is a single crossing.
    let bounds: Vec<f64> = (1..k)
        .map(|l| {
            let target = alpha * kf / (kf - l as f64);
            if target >= 1.0 {
                f64::NEG_INFINITY
            } else {
                kf.sqrt() * (z_alpha - normal::quantile(target)) / l as f64
            }
        })
        .collect();
    let (i, &theta) = bounds
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("k >= 2");
    Ok(ThetaStar { theta, binding_l: i + 1, bounds })
}

/// Depth 1 where the two rules reject different numbers, 0 elsewhere.
struct Disagreement<'a, A: ?Sized, B: ?Sized>(&'a A, &'a B);

impl<A: DecisionRule + ?Sized, B: DecisionRule + ?Sized> DecisionRule for Disagreement<'_, A, B> {
    fn k(&self) -> usize {
        self.0.k()
    }
    fn depth(&self, z: &[f64]) -> usize {
        (self.0.depth(z) != self.1.depth(z)) as usize
    }
    fn name(&self) -> String {
        format!("{} vs {}", self.0.name(), self.1.name())
    }
}

/// Lebesgue measure of the p-vectors on which two rules make different
/// numbers of rejections.
pub fn region_disagreement<A, B>(a: &A, b: &B, cfg: &QuadConfig) -> Result<IntegralResult>
where
    A: DecisionRule + ?Sized,
    B: DecisionRule + ?Sized,
{
    if a.k() != b.k() {
        return Err(OmtError::invalid("rules disagree on k"));
    }
    let rule = Disagreement(a, b);
    let null = Scenario::canonical(a.k(), 0, 0.0);
    Ok(quad::expectation(&rule, &null, &[Stat::AnyRejection], cfg)?.remove(0))
}

/// Rejection counts of a three-hypothesis rule on the plane `u_1 = u1`,
/// over `(u2, u3)` in `[u1, 1]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSlice {
    pub policy: String,
    pub u1: f64,
    pub n: usize,
    /// Row-major over `u2`, then `u3`; cell centres.
    pub counts: Vec<u8>,
}

impl RegionSlice {
    pub fn coord(&self, i: usize) -> f64 {
        self.u1 + (1.0 - self.u1) * (i as f64 + 0.5) / self.n as f64
    }

    pub fn count(&self, i2: usize, i3: usize) -> u8 {
        self.counts[i2 * self.n + i3]
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// One header line naming the policy and slice, then `u2,u3,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# policy={} u1={} n={}", self.policy, self.u1, self.n)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["u2", "u3", "count"])?;
        for i2 in 0..self.n {
            for i3 in 0..self.n {
                csv.write_record(&[
                    format!("{:.6}", self.coord(i2)),
                    format!("{:.6}", self.coord(i3)),
                    self.count(i2, i3).to_string(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn region_slice<R: DecisionRule + ?Sized>(rule: &R, u1: f64, n: usize) -> Result<RegionSlice> {
    if rule.k() != 3 {
        return Err(OmtError::invalid("slices are drawn for k = 3"));
    }
    if !(u1 > 0.0 && u1 < 1.0) {
        return Err(OmtError::invalid(format!("u1 = {u1} outside (0, 1)")));
    }
    if n < 64 {
        return Err(OmtError::invalid(format!("slice resolution {n} below 64")));
    }
    let mut s = RegionSlice { policy: rule.name(), u1, n, counts: vec![] };
    s.counts = (0..n)
        .into_par_iter()
        .flat_map_iter(|i2| {
            let s = &s;
            (0..n).map(move |i3| {
                let u = PVector::new(vec![u1, s.coord(i2), s.coord(i3)]).expect("inside (0, 1)");
                rule.decide_full(&u).count() as u8
            })
        })
        .collect();
    Ok(s)
}

/// Monte Carlo estimates under equicorrelated test statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    /// Zero entries are true nulls.
    pub thetas: Vec<f64>,
    pub avg_power: f64,
    pub avg_power_se: f64,
    pub any_power: f64,
    pub any_power_se: f64,
    pub fwer: f64,
    pub fwer_se: f64,
    pub fdr: f64,
    pub fdr_se: f64,
}

/// Power and error of a rule across correlations and shift vectors.
pub fn misspec_sweep<R: DecisionRule + ?Sized>(
    rule: &R,
    rhos: &[f64],
    theta_vectors: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let k = rule.k();
    let mut rows = Vec::with_capacity(rhos.len() * theta_vectors.len());
    for &rho in rhos {
        for thetas in theta_vectors {
            check_thetas(rule, thetas)?;
            let false_nulls: Vec<usize> = (0..k).filter(|&j| thetas[j] != 0.0).collect();
            let s = Scenario::new(Config::from_indices(k, &false_nulls)?, thetas.clone())?;
            let r = mc_expectation(rule, &s, rho, &[Stat::AvgPower, Stat::AnyRejection, Stat::Fwer, Stat::Fdp], n, seed)?;
            rows.push(SweepRow {
                rho,
                thetas: thetas.clone(),
                avg_power: r[0].value,
                avg_power_se: r[0].abs_error_est,
                any_power: r[1].value,
                any_power_se: r[1].abs_error_est,
                fwer: r[2].value,
                fwer_se: r[2].abs_error_est,
                fdr: r[3].value,
                fdr_se: r[3].abs_error_est,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{BaselineKind, BaselinePolicy};

    /// Bisection on the closed form itself, independent of the quantile
    /// inversion used by `theta_star`.
    fn bound_by_bisection(k: usize, l: usize, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if closed_form_fdr(k, l, mid, alpha) > alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn theta_star_three_hypotheses() {
        let t = theta_star(3, 0.05).unwrap();
        assert!((t.theta + 0.356).abs() < 1e-3, "{}", t.theta);
        assert_eq!(t.binding_l, 1);
        assert!((t.bounds[1] + 0.527).abs() < 1e-3, "{}", t.bounds[1]);
        for l in 1..3 {
            assert!((t.bounds[l - 1] - bound_by_bisection(3, l, 0.05)).abs() < 1e-10);
        }
    }

    #[test]
    fn theta_star_two_hypotheses() {
        let t = theta_star(2, 0.05).unwrap();
        assert_eq!(t.binding_l, 1);
        assert!((closed_form_fdr(2, 1, t.theta, 0.05) - 0.05).abs() < 1e-12);
        assert!((t.theta - bound_by_bisection(2, 1, 0.05)).abs() < 1e-10);
    }

    #[test]
    fn closed_form_at_zero_shift() {
        assert!((closed_form_fdr(3, 2, 0.0, 0.05) - 0.05 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let rule = StoufferAllOrNothing::new(3, 0.05).unwrap();
        for theta in [-0.6, -0.356, -0.1] {
            for l in 1..3 {
                let q = error_rate(&rule, Config::canonical(3, l), &[theta; 3], ErrorMeasure::Fdr, &QuadConfig::line(48))
                    .unwrap()
                    .value;
                assert!((q - closed_form_fdr(3, l, theta, 0.05)).abs() < 1e-6, "l={l} theta={theta}: {q}");
            }
        }
    }

    #[test]
    fn global_null_fwer_equals_fdr() {
        let rule = BaselinePolicy::new(BaselineKind::BH, 3, 0.05).unwrap();
        let cfg = QuadConfig::line(32);
        let h = Config::canonical(3, 0);
        let a = error_rate(&rule, h, &[0.0; 3], ErrorMeasure::Fwer, &cfg).unwrap().value;
        let b = error_rate(&rule, h, &[0.0; 3], ErrorMeasure::Fdr, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-12 && (a - 0.05).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn disagreement_of_a_rule_with_itself_is_zero() {
        let rule = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05).unwrap();
        assert_eq!(region_disagreement(&rule, &rule, &QuadConfig::line(32)).unwrap().value, 0.0);
    }

    #[test]
    fn holm_slice_beyond_first_threshold_is_empty() {
        let rule = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05).unwrap();
        assert!(region_slice(&rule, 0.02, 64).unwrap().is_empty());
        assert!(!region_slice(&rule, 0.01, 64).unwrap().is_empty());
        let mabh = BaselinePolicy::new(BaselineKind::MABH, 3, 0.05).unwrap();
        assert!(region_slice(&mabh, 0.106, 64).unwrap().is_empty());
    }

    #[test]
    fn slice_csv_shape() {
        let rule = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05).unwrap();
        let s = region_slice(&rule, 0.01, 64).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# policy=holm u1=0.01 n=64"));
        assert_eq!(lines[1], "u2,u3,count");
        assert_eq!(lines.len(), 2 + 64 * 64);
    }

    #[test]
    fn sweep_is_calibrated_at_independence() {
        let rule = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05).unwrap();
        let rows = misspec_sweep(&rule, &[0.0], &[vec![0.0; 3]], 200_000, 7).unwrap();
        let r = &rows[0];
        // Holm under the global null: 1 - (1 - alpha/3)^3 is the exact FWER.
        let exact = 1.0 - (1.0 - 0.05 / 3.0f64).powi(3);
        assert!((r.fwer - exact).abs() < 4.0 * r.fwer_se, "{} vs {exact}", r.fwer);
        assert_eq!(r.avg_power, 0.0);
    }
}
