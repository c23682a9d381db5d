//! Pointwise weights of the linear program over the ordered region.
//!
//! Every weight is a linear combination of products of alternative densities
//! evaluated at sorted positions. [`MonomialTable`] stores those combinations
//! by subset enumeration; [`dp_constraint`] and [`dp_objective`] compute the
//! same numbers from elementary symmetric polynomials in `O(K^2)` per depth.

use num_rational::Ratio;

use crate::error::{OmtError, Result};
use crate::model::{alt_density_z, Config, ErrorMeasure, PVector, PowerObjective, ProblemSpec};

/// Subset enumeration over at most this many positions.
const MAX_MASK_K: usize = crate::model::MAX_K;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Change in false discovery proportion when going from `k - 1` to `k`
/// rejections while `i` marks the false nulls (1-based depth, `0/0 = 0`).
pub fn r_coefficient(k: usize, i: Config) -> Ratio<i64> {
    assert!(k >= 1 && k <= i.k, "depth {k} outside 1..={}", i.k);
    let true_nulls_upto = |m: usize| (0..m).filter(|&j| !i.is_false_null(j)).count() as i64;
    let frac = |num: i64, den: i64| if den == 0 { Ratio::from_integer(0) } else { Ratio::new(num, den) };
    frac(true_nulls_upto(k), k as i64) - frac(true_nulls_upto(k - 1), k as i64 - 1)
}

/// Sparse weights: for each depth, a list of `(mask, coefficient)` where the
/// mask selects the sorted positions whose density enters the product.
pub type DepthTerms = Vec<Vec<(u32, f64)>>;

/// Objective and constraint weights as sums of density products.
#[derive(Debug, Clone)]
pub struct MonomialTable {
    pub k: usize,
    pub objective: DepthTerms,
    /// Indexed by `L = 0..K-1`.
    pub constraints: Vec<DepthTerms>,
}

fn subsets_of_size(k: usize, l: usize) -> impl Iterator<Item = u32> {
    (0u32..1 << k).filter(move |m| m.count_ones() as usize == l)
}

fn push_term(terms: &mut Vec<(u32, f64)>, mask: u32, c: f64) {
    if c == 0.0 {
        return;
    }
    match terms.iter_mut().find(|(m, _)| *m == mask) {
        Some(t) => t.1 += c,
        None => terms.push((mask, c)),
    }
}

/// Smallest 0-based position not in `mask` (exists whenever `|mask| < k`).
fn min_true_null(mask: u32) -> usize {
    (!mask).trailing_zeros() as usize
}

impl MonomialTable {
    pub fn new(k: usize, objective: PowerObjective, measure: ErrorMeasure) -> Self {
        assert!((1..=MAX_MASK_K).contains(&k));
        let mut obj: DepthTerms = vec![Vec::new(); k];
        match objective {
            PowerObjective::AnyPower => obj[0].push(((1u32 << k) - 1, factorial(k))),
            PowerObjective::AvgPower(l) => {
                let c = factorial(l) * factorial(k - l) / l as f64;
                for mask in subsets_of_size(k, l) {
                    for (depth, terms) in obj.iter_mut().enumerate() {
                        if mask >> depth & 1 == 1 {
                            push_term(terms, mask, c);
                        }
                    }
                }
            }
        }
        let constraints = (0..k).map(|l| constraint_terms(k, l, measure)).collect();
        MonomialTable { k, objective: obj, constraints }
    }

    pub fn for_spec(spec: &ProblemSpec) -> Self {
        Self::new(spec.k, spec.objective(), spec.error)
    }
}

fn constraint_terms(k: usize, l: usize, measure: ErrorMeasure) -> DepthTerms {
    let scale = factorial(l) * factorial(k - l);
    let mut out: DepthTerms = vec![Vec::new(); k];
    for mask in subsets_of_size(k, l) {
        match measure {
            ErrorMeasure::Fwer => push_term(&mut out[min_true_null(mask)], mask, scale),
            ErrorMeasure::Fdr => {
                let cfg = Config { k, mask };
                for (depth, terms) in out.iter_mut().enumerate() {
                    let r = r_coefficient(depth + 1, cfg);
                    push_term(terms, mask, scale * (*r.numer() as f64) / (*r.denom() as f64));
                }
            }
        }
    }
    out
}

/// Evaluate sparse depth terms at per-position densities `g`.
pub fn eval_terms(terms: &DepthTerms, g: &[f64]) -> Vec<f64> {
    terms
        .iter()
        .map(|t| t.iter().map(|&(mask, c)| c * mask_product(mask, g)).sum())
        .collect()
}

#[inline]
pub(crate) fn mask_product(mask: u32, g: &[f64]) -> f64 {
    let mut p = 1.0;
    let mut m = mask;
    while m != 0 {
        p *= g[m.trailing_zeros() as usize];
        m &= m - 1;
    }
    p
}

fn sorted_densities(u: &PVector, theta: f64) -> Result<Vec<f64>> {
    if !u.is_sorted() {
        return Err(OmtError::invalid("p-values must be sorted ascending"));
    }
    Ok(u.z_scores().iter().map(|&z| alt_density_z(z, theta)).collect())
}

fn check_l(spec: &ProblemSpec, l: usize, u: &PVector) -> Result<()> {
    if l >= spec.k {
        return Err(OmtError::invalid(format!("L = {l} must be below k = {}", spec.k)));
    }
    if u.len() != spec.k {
        return Err(OmtError::invalid(format!("expected {} p-values, got {}", spec.k, u.len())));
    }
    Ok(())
}

/// Objective weights `a_1..a_K` at sorted `u`, by subset enumeration.
pub fn objective_coeffs(spec: &ProblemSpec, u: &PVector) -> Result<Vec<f64>> {
    if u.len() != spec.k {
        return Err(OmtError::invalid(format!("expected {} p-values, got {}", spec.k, u.len())));
    }
    let g = sorted_densities(u, spec.theta_obj)?;
    let table = MonomialTable::new(spec.k, spec.objective(), spec.error);
    Ok(eval_terms(&table.objective, &g))
}

/// FWER constraint weights `b_{L,1..K}` at sorted `u`, by subset enumeration.
pub fn fwer_coeffs(spec: &ProblemSpec, l: usize, u: &PVector) -> Result<Vec<f64>> {
    check_l(spec, l, u)?;
    let g = sorted_densities(u, spec.theta_con)?;
    Ok(eval_terms(&constraint_terms(spec.k, l, ErrorMeasure::Fwer), &g))
}

/// FDR constraint weights `b_{L,1..K}` at sorted `u`, by subset enumeration.
pub fn fdr_coeffs(spec: &ProblemSpec, l: usize, u: &PVector) -> Result<Vec<f64>> {
    check_l(spec, l, u)?;
    let g = sorted_densities(u, spec.theta_con)?;
    Ok(eval_terms(&constraint_terms(spec.k, l, ErrorMeasure::Fdr), &g))
}

/// Constraint weights for the problem's error measure, by dynamic programming.
pub fn dp_coeffs(spec: &ProblemSpec, l: usize, u: &PVector) -> Result<Vec<f64>> {
    check_l(spec, l, u)?;
    let g = sorted_densities(u, spec.theta_con)?;
    Ok(dp_constraint(spec.error, l, &g))
}

/// All weights at one sorted point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub a: Vec<f64>,
    /// `b[L][k]`.
    pub b: Vec<Vec<f64>>,
}

pub fn coefficient_row(spec: &ProblemSpec, u: &PVector) -> Result<CoefficientRow> {
    let a = objective_coeffs(spec, u)?;
    let b = (0..spec.k)
        .map(|l| match spec.error {
            ErrorMeasure::Fwer => fwer_coeffs(spec, l, u),
            ErrorMeasure::Fdr => fdr_coeffs(spec, l, u),
        })
        .collect::<Result<_>>()?;
    Ok(CoefficientRow { a, b })
}

/// `e[j]` = j-th elementary symmetric polynomial of `g`.
fn elementary(g: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; g.len() + 1];
    e[0] = 1.0;
    for (n, &x) in g.iter().enumerate() {
        for j in (1..=n + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

#[inline]
fn at(e: &[f64], j: isize) -> f64 {
    if j < 0 {
        0.0
    } else {
        e.get(j as usize).copied().unwrap_or(0.0)
    }
}

/// Constraint weights from per-position densities without subset enumeration.
///
/// With `m` false nulls among the first `k - 1` positions and `c` indicating
/// whether position `k` is a false null, the depth-`k` weight only depends on
/// `(m, c)`, so sums over subsets factor into prefix and suffix symmetric
/// polynomials.
pub fn dp_constraint(measure: ErrorMeasure, l: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let scale = factorial(l) * factorial(k - l);
    let li = l as isize;
    (0..k)
        .map(|d| {
            let suffix = elementary(&g[d + 1..]);
            match measure {
                ErrorMeasure::Fwer => {
                    // First true null at position d: everything before is false.
                    let prefix: f64 = g[..d].iter().product();
                    scale * prefix * at(&suffix, li - d as isize)
                }
                ErrorMeasure::Fdr => {
                    let prefix = elementary(&g[..d]);
                    let depth = d as i64 + 1;
                    let mut total = 0.0;
                    for m in 0..=d {
                        for c in 0..=1usize {
                            let rest = li - m as isize - c as isize;
                            let w = prefix[m] * if c == 1 { g[d] } else { 1.0 } * at(&suffix, rest);
                            if w == 0.0 {
                                continue;
                            }
                            let now = Ratio::new(depth - m as i64 - c as i64, depth);
                            let before = if depth == 1 {
                                Ratio::from_integer(0)
                            } else {
                                Ratio::new(depth - 1 - m as i64, depth - 1)
                            };
                            let r = now - before;
                            total += w * (*r.numer() as f64) / (*r.denom() as f64);
                        }
                    }
                    scale * total
                }
            }
        })
        .collect()
}

/// Objective weights from per-position densities without subset enumeration.
pub fn dp_objective(objective: PowerObjective, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    match objective {
        PowerObjective::AnyPower => {
            let mut a = vec![0.0; k];
            a[0] = factorial(k) * g.iter().product::<f64>();
            a
        }
        PowerObjective::AvgPower(l) => {
            let c = factorial(l) * factorial(k - l) / l as f64;
            (0..k)
                .map(|d| {
                    let prefix = elementary(&g[..d]);
                    let suffix = elementary(&g[d + 1..]);
                    let others: f64 = (0..l).map(|j| at(&prefix, j as isize) * at(&suffix, (l - 1 - j) as isize)).sum();
                    c * g[d] * others
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: usize, idx1: &[usize]) -> Config {
        Config::from_indices(k, &idx1.iter().map(|i| i - 1).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn r_examples() {
        assert_eq!(r_coefficient(3, cfg(3, &[1, 2])), Ratio::new(1, 3));
        assert_eq!(r_coefficient(2, cfg(3, &[2, 3])), Ratio::new(-1, 2));
        assert_eq!(r_coefficient(1, cfg(3, &[2, 3])), Ratio::from_integer(1));
    }

    #[test]
    fn r_telescopes_exactly() {
        for k in 1..=6 {
            for mask in 0u32..1 << k {
                let c = Config { k, mask };
                let mut acc = Ratio::from_integer(0);
                for m in 1..=k {
                    let r = r_coefficient(m, c);
                    assert!(r >= Ratio::from_integer(-1) && r <= Ratio::from_integer(1));
                    acc += r;
                    let true_nulls = (0..m).filter(|&j| !c.is_false_null(j)).count() as i64;
                    assert_eq!(acc, Ratio::new(true_nulls, m as i64));
                }
            }
        }
    }

    fn sorted_u(v: &[f64]) -> PVector {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        PVector::new(v).unwrap()
    }

    fn g_of(u: &PVector, theta: f64) -> Vec<f64> {
        u.z_scores().iter().map(|&z| alt_density_z(z, theta)).collect()
    }

    #[test]
    fn any_power_objective() {
        let spec = ProblemSpec::any(3, 0.05, ErrorMeasure::Fwer, -2.0);
        let a = objective_coeffs(&spec, &sorted_u(&[0.5, 0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(a[0], 6.0 * (-6.0f64).exp(), epsilon = 1e-14);
        assert_eq!(&a[1..], &[0.0, 0.0]);
    }

    #[test]
    fn avg_power_objective_is_proportional_to_full_product() {
        let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fdr, -1.0);
        let u = sorted_u(&[0.02, 0.3, 0.7]);
        let a = objective_coeffs(&spec, &u).unwrap();
        let prod: f64 = g_of(&u, -1.0).iter().product();
        for ak in a {
            assert_abs_diff_eq!(ak, 2.0 * prod, epsilon = 1e-12);
        }
        let flat = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fdr, 0.0);
        let a0 = objective_coeffs(&flat, &u).unwrap();
        let a1 = objective_coeffs(&flat, &sorted_u(&[0.1, 0.2, 0.9])).unwrap();
        assert_eq!(a0, a1);
    }

    #[test]
    fn fwer_examples() {
        let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fwer, -1.5);
        let u = sorted_u(&[0.01, 0.2, 0.6]);
        let g = g_of(&u, -1.5);
        assert_eq!(fwer_coeffs(&spec, 0, &u).unwrap(), vec![6.0, 0.0, 0.0]);
        let b2 = fwer_coeffs(&spec, 2, &u).unwrap();
        assert_abs_diff_eq!(b2[0], 2.0 * g[1] * g[2], epsilon = 1e-12);
        let b1 = fwer_coeffs(&spec, 1, &u).unwrap();
        assert_abs_diff_eq!(b1[0], 2.0 * (g[1] + g[2]), epsilon = 1e-12);
        assert!(fwer_coeffs(&spec, 3, &u).is_err());
        assert!(fwer_coeffs(&spec, 1, &PVector::new(vec![0.5, 0.1, 0.2]).unwrap()).is_err());
    }

    #[test]
    fn fdr_examples_match_three_hypothesis_instance() {
        let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fdr, -2.0);
        let u = sorted_u(&[0.003, 0.04, 0.5]);
        let g = g_of(&u, -2.0);
        let b0 = fdr_coeffs(&spec, 0, &u).unwrap();
        assert_eq!(b0, vec![6.0, 0.0, 0.0]);
        let b1 = fdr_coeffs(&spec, 1, &u).unwrap();
        assert_abs_diff_eq!(b1[0], 2.0 * (g[1] + g[2]), epsilon = 1e-10);
        assert_abs_diff_eq!(b1[1], 2.0 * (g[0] - g[1]) / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b1[2], 2.0 * (g[0] + g[1] - 2.0 * g[2]) / 6.0, epsilon = 1e-10);
        let b2 = fdr_coeffs(&spec, 2, &u).unwrap();
        assert_abs_diff_eq!(b2[0], 2.0 * g[1] * g[2], epsilon = 1e-10);
        assert_abs_diff_eq!(b2[1], 2.0 * (g[0] * g[2] - g[1] * g[2]) / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            b2[2],
            2.0 * (2.0 * g[0] * g[1] - g[0] * g[2] - g[1] * g[2]) / 6.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn fdr_at_zero_signal_matches_direct_fdp() {
        // With flat densities the prefix sum of weights up to depth m is the
        // FDP at depth m summed over all configurations of size L.
        for k in 2..=5 {
            let g = vec![1.0; k];
            for l in 0..k {
                let b = dp_constraint(ErrorMeasure::Fdr, l, &g);
                let scale = factorial(l) * factorial(k - l);
                for m in 1..=k {
                    let lhs: f64 = b[..m].iter().sum();
                    let rhs: f64 = subsets_of_size(k, l)
                        .map(|mask| (0..m).filter(|&j| mask >> j & 1 == 0).count() as f64 / m as f64)
                        .sum();
                    assert_abs_diff_eq!(lhs, scale * rhs, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn depth_one_weight_agrees_across_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let k = rng.random_range(2..=6);
            let g: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..20.0)).collect();
            for l in 0..k {
                let a = dp_constraint(ErrorMeasure::Fwer, l, &g)[0];
                let b = dp_constraint(ErrorMeasure::Fdr, l, &g)[0];
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dp_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let k = if trial < 900 { 3 } else { rng.random_range(2..=6) };
            let theta = -rng.random_range(0.1..3.0);
            let z: Vec<f64> = {
                let mut z: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
                z.sort_by(f64::total_cmp);
                z
            };
            let g: Vec<f64> = z.iter().map(|&x| alt_density_z(x, theta)).collect();
            for measure in [ErrorMeasure::Fwer, ErrorMeasure::Fdr] {
                for l in 0..k {
                    let dp = dp_constraint(measure, l, &g);
                    let en = eval_terms(&constraint_terms(k, l, measure), &g);
                    for (x, y) in dp.iter().zip(&en) {
                        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
                    }
                }
            }
            for obj in [PowerObjective::AnyPower, PowerObjective::AvgPower(1), PowerObjective::AvgPower(k)] {
                let dp = dp_objective(obj, &g);
                let en = eval_terms(&MonomialTable::new(k, obj, ErrorMeasure::Fwer).objective, &g);
                for (x, y) in dp.iter().zip(&en) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn two_hypotheses_by_hand() {
        let g = [3.0, 0.5];
        assert_eq!(dp_constraint(ErrorMeasure::Fwer, 0, &g), vec![2.0, 0.0]);
        assert_eq!(dp_constraint(ErrorMeasure::Fwer, 1, &g), vec![0.5, 3.0]);
        assert_eq!(dp_constraint(ErrorMeasure::Fdr, 1, &g), vec![0.5, 3.0 * 0.5 - 0.5 * 0.5]);
        assert_eq!(dp_objective(PowerObjective::AvgPower(2), &g), vec![1.5, 1.5]);
    }

    #[test]
    fn six_hypotheses_three_false() {
        let spec = ProblemSpec::avg(6, 0.05, ErrorMeasure::Fdr, -1.2);
        let u = sorted_u(&[0.001, 0.02, 0.07, 0.3, 0.5, 0.95]);
        let dp = dp_coeffs(&spec, 3, &u).unwrap();
        let en = fdr_coeffs(&spec, 3, &u).unwrap();
        for (x, y) in dp.iter().zip(&en) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn coefficients_finite_on_open_cube() {
        let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fdr, -2.0);
        let row = coefficient_row(&spec, &sorted_u(&[1e-300, 0.5, 1.0 - 1e-16])).unwrap();
        assert!(row.a.iter().chain(row.b.iter().flatten()).all(|v| v.is_finite()));
    }
}
