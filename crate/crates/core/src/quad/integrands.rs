use serde::{Deserialize, Serialize};

use super::line::{self, LineIntegrand, LineSettings};
use super::{factorial, gl_nodes, grid, sampling, z_range, QuadConfig, Scheme};
use crate::coeffs::{DepthTerms, MonomialTable};
use crate::model::{Config, MAX_K};
use crate::normal;
use crate::policy::{DecisionRule, OmtPolicy};

/// Statistics of one rejection set that expectations can be taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    /// True rejections divided by the number of false nulls.
    AvgPower,
    /// At least one rejection.
    AnyRejection,
    Rejections,
    TrueRejections,
    FalseRejections,
    /// At least one false rejection.
    Fwer,
    /// False rejections over rejections, zero when nothing is rejected.
    Fdp,
}

pub(crate) fn stat_value(stat: Stat, rej: u32, h: u32) -> f64 {
    let r = rej.count_ones() as f64;
    let t = (rej & h).count_ones() as f64;
    let v = (rej & !h).count_ones() as f64;
    match stat {
        Stat::AvgPower => {
            let l = h.count_ones();
            if l == 0 {
                0.0
            } else {
                t / l as f64
            }
        }
        Stat::AnyRejection => (r > 0.0) as u8 as f64,
        Stat::Rejections => r,
        Stat::TrueRejections => t,
        Stat::FalseRejections => v,
        Stat::Fwer => (v > 0.0) as u8 as f64,
        Stat::Fdp => {
            if r > 0.0 {
                v / r
            } else {
                0.0
            }
        }
    }
}

/// Stable insertion sort of a short vector; returns sorted values and the
/// permutation `sorted[r] = z[perm[r]]`.
#[inline]
pub(crate) fn sort_small(z: &[f64]) -> ([f64; MAX_K], [usize; MAX_K]) {
    let mut v = [0.0; MAX_K];
    let mut p = [0usize; MAX_K];
    for (i, &x) in z.iter().enumerate() {
        let mut j = i;
        while j > 0 && v[j - 1] > x {
            v[j] = v[j - 1];
            p[j] = p[j - 1];
            j -= 1;
        }
        v[j] = x;
        p[j] = i;
    }
    (v, p)
}

type Pass = (Vec<f64>, Vec<f64>, usize);

fn line_settings(cfg: &QuadConfig, means: &[f64]) -> LineSettings {
    let (lo, hi) = z_range(means);
    LineSettings { nodes: cfg.n, lo, hi }
}

fn line_pass<I: LineIntegrand>(f: &I, s: &LineSettings) -> Pass {
    let out = line::integrate(f, s);
    let n = out.values.len();
    (out.values, vec![0.0; n], out.evaluations)
}

/// Objective and constraint weights of a multiplier policy.
pub(crate) struct QForm<'a> {
    policy: &'a OmtPolicy,
    k: usize,
    /// `(shift, weights)` per functional; the objective first.
    funcs: Vec<(f64, DepthTerms)>,
}

impl<'a> QForm<'a> {
    pub(crate) fn for_policy(policy: &'a OmtPolicy) -> Self {
        let spec = policy.spec();
        let table = MonomialTable::for_spec(spec);
        let mut funcs = vec![(spec.theta_obj, table.objective)];
        funcs.extend(table.constraints.into_iter().map(|t| (spec.theta_con, t)));
        QForm { policy, k: spec.k, funcs }
    }

    fn means(&self) -> Vec<f64> {
        self.funcs.iter().map(|f| f.0).collect()
    }

    /// Values per unit of `du` at a sorted point.
    fn point(&self, z_sorted: &[f64], out: &mut [f64]) {
        let depth = self.policy.depth(z_sorted);
        let ones = [1.0; MAX_K];
        for (o, (theta, terms)) in out.iter_mut().zip(&self.funcs) {
            let mut g = [0.0; MAX_K];
            for (gr, &z) in g.iter_mut().zip(z_sorted) {
                *gr = crate::model::alt_density_z(z, *theta);
            }
            *o = weighted_sum(terms, depth, &g[..self.k], &ones[..self.k]);
        }
    }

    pub(crate) fn run(&self, cfg: &QuadConfig) -> Pass {
        let kf = factorial(self.k);
        let n_out = self.funcs.len();
        match cfg.scheme {
            Scheme::Line => line_pass(self, &line_settings(cfg, &self.means())),
            Scheme::TensorGrid => {
                let (lo, hi) = z_range(&self.means());
                let (vals, n) = grid::tensor_raw(self.k, cfg.n, lo, hi, n_out, |z, w, acc| {
                    let (s, _) = sort_small(z);
                    let mut buf = [0.0; MAX_K + 1];
                    self.point(&s[..self.k], &mut buf[..n_out]);
                    let w = w * z.iter().map(|&x| normal::pdf(x)).product::<f64>() / kf;
                    acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += w * b);
                });
                (vals, vec![0.0; n_out], n)
            }
            Scheme::Qmc | Scheme::MonteCarlo => sampling::cube_mean(self.k, n_out, cfg, |v, out| {
                let mut z = [0.0; MAX_K];
                for (zj, &vj) in z.iter_mut().zip(v) {
                    *zj = normal::z_score(vj);
                }
                let (s, _) = sort_small(&z[..self.k]);
                self.point(&s[..self.k], out);
                out.iter_mut().for_each(|o| *o /= kf);
            }),
        }
    }
}

#[inline]
fn monomial(mask: u32, x: &[f64], y: &[f64]) -> f64 {
    let mut p = 1.0;
    for r in 0..x.len() {
        p *= if mask >> r & 1 == 1 { x[r] } else { y[r] };
    }
    p
}

#[inline]
fn weighted_sum(terms: &DepthTerms, depth: usize, x: &[f64], y: &[f64]) -> f64 {
    terms[..depth].iter().flatten().map(|&(mask, c)| c * monomial(mask, x, y)).sum()
}

impl LineIntegrand for QForm<'_> {
    fn dim(&self) -> usize {
        self.k
    }

    fn n_out(&self) -> usize {
        self.funcs.len()
    }

    fn signature(&self, z: &[f64]) -> u64 {
        self.policy.depth(z) as u64
    }

    fn margin(&self, z: &[f64], from: u64, to: u64) -> Option<f64> {
        self.policy.margin(z, from as usize, to as usize)
    }

    fn segment(&self, z: &[f64], a: f64, b: f64, sig: u64, out: &mut [f64]) {
        let depth = sig as usize;
        if depth == 0 {
            return;
        }
        let k = self.k;
        let mut y = [0.0; MAX_K];
        for r in 0..k - 1 {
            y[r] = normal::pdf(z[r]);
        }
        y[k - 1] = normal::mass(a, b, 0.0);
        for (o, (theta, terms)) in out.iter_mut().zip(&self.funcs) {
            let mut x = [0.0; MAX_K];
            for r in 0..k - 1 {
                x[r] = normal::pdf(z[r] - theta);
            }
            x[k - 1] = normal::mass(a, b, *theta);
            *o += weighted_sum(terms, depth, &x[..k], &y[..k]);
        }
    }
}

/// A user functional of sorted p-values and the rejection depth.
pub(crate) struct Pointwise<'a, R: ?Sized, F> {
    pub rule: &'a R,
    pub f: &'a F,
}

impl<R, F> Pointwise<'_, R, F>
where
    R: DecisionRule + ?Sized,
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    fn at_sorted(&self, z_sorted: &[f64]) -> f64 {
        let mut u = [0.0; MAX_K];
        for (ur, &z) in u.iter_mut().zip(z_sorted) {
            *ur = normal::cdf(z);
        }
        (self.f)(&u[..z_sorted.len()], self.rule.depth(z_sorted))
    }

    pub(crate) fn run(&self, cfg: &QuadConfig) -> Pass {
        let k = self.rule.k();
        let kf = factorial(k);
        match cfg.scheme {
            Scheme::Line => line_pass(self, &line_settings(cfg, &[])),
            Scheme::TensorGrid => {
                let (lo, hi) = z_range(&[]);
                let (vals, n) = grid::tensor_raw(k, cfg.n, lo, hi, 1, |z, w, acc| {
                    let (s, _) = sort_small(z);
                    let w = w * z.iter().map(|&x| normal::pdf(x)).product::<f64>();
                    acc[0] += w * self.at_sorted(&s[..k]) / kf;
                });
                (vals, vec![0.0], n)
            }
            Scheme::Qmc | Scheme::MonteCarlo => sampling::cube_mean(k, 1, cfg, |v, out| {
                let mut z = [0.0; MAX_K];
                for (zj, &vj) in z.iter_mut().zip(v) {
                    *zj = normal::z_score(vj);
                }
                let (s, _) = sort_small(&z[..k]);
                out[0] = self.at_sorted(&s[..k]) / kf;
            }),
        }
    }
}

impl<R, F> LineIntegrand for Pointwise<'_, R, F>
where
    R: DecisionRule + ?Sized,
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.rule.k()
    }

    fn n_out(&self) -> usize {
        1
    }

    fn signature(&self, z: &[f64]) -> u64 {
        self.rule.depth(z) as u64
    }

    fn margin(&self, z: &[f64], from: u64, to: u64) -> Option<f64> {
        self.rule.margin(z, from as usize, to as usize)
    }

    fn segment(&self, z: &[f64], a: f64, b: f64, sig: u64, out: &mut [f64]) {
        // Smooth within the segment: Gauss–Legendre in u for the line variable.
        let k = z.len();
        let (ua, ub) = (normal::cdf(a), normal::cdf(b));
        if ub <= ua {
            return;
        }
        let outer: f64 = z[..k - 1].iter().map(|&x| normal::pdf(x)).product();
        let mut u = [0.0; MAX_K];
        for (ur, &x) in u.iter_mut().zip(&z[..k - 1]) {
            *ur = normal::cdf(x);
        }
        let mut acc = 0.0;
        for (uk, w) in gl_nodes(8, ua, ub) {
            u[k - 1] = uk;
            acc += w * (self.f)(&u[..k], sig as usize);
        }
        out[0] += outer * acc;
    }
}

/// Expected statistics of any rule under independent shifted coordinates.
pub(crate) struct Expectation<'a, R: ?Sized> {
    pub rule: &'a R,
    pub means: Vec<f64>,
    pub h: Config,
    pub stats: &'a [Stat],
    /// Assignments of hypotheses to sorted positions.
    pub perms: Vec<[usize; MAX_K]>,
}

/// All orderings of `0..k`.
pub(crate) fn permutations(k: usize) -> Vec<[usize; MAX_K]> {
    fn rec(k: usize, cur: &mut [usize; MAX_K], used: u32, depth: usize, out: &mut Vec<[usize; MAX_K]>) {
        if depth == k {
            out.push(*cur);
            return;
        }
        for i in 0..k {
            if used >> i & 1 == 0 {
                cur[depth] = i;
                rec(k, cur, used | 1 << i, depth + 1, out);
            }
        }
    }
    let mut out = Vec::new();
    rec(k, &mut [0; MAX_K], 0, 0, &mut out);
    out
}

impl<R: DecisionRule + ?Sized> Expectation<'_, R> {
    fn add_stats(&self, rej: u32, w: f64, out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(self.stats) {
            *o += w * stat_value(s, rej, self.h.mask);
        }
    }

    pub(crate) fn run(&self, cfg: &QuadConfig) -> Pass {
        let k = self.rule.k();
        let n_out = self.stats.len();
        match cfg.scheme {
            Scheme::Line => line_pass(self, &line_settings(cfg, &self.means)),
            Scheme::TensorGrid => {
                let (lo, hi) = z_range(&self.means);
                let (vals, n) = grid::tensor_raw(k, cfg.n, lo, hi, n_out, |z, w, acc| {
                    let w = w * z.iter().zip(&self.means).map(|(&x, &m)| normal::pdf(x - m)).product::<f64>();
                    self.add_stats(self.rule.decide_z(z).mask, w, acc);
                });
                (vals, vec![0.0; n_out], n)
            }
            Scheme::Qmc | Scheme::MonteCarlo => sampling::cube_mean(k, n_out, cfg, |v, out| {
                let mut z = [0.0; MAX_K];
                for j in 0..k {
                    z[j] = self.means[j] + normal::z_score(v[j]);
                }
                out.iter_mut().for_each(|o| *o = 0.0);
                self.add_stats(self.rule.decide_z(&z[..k]).mask, 1.0, out);
            }),
        }
    }
}

impl<R: DecisionRule + ?Sized> LineIntegrand for Expectation<'_, R> {
    fn dim(&self) -> usize {
        self.rule.k()
    }

    fn n_out(&self) -> usize {
        self.stats.len()
    }

    fn signature(&self, z: &[f64]) -> u64 {
        self.rule.depth(z) as u64
    }

    fn margin(&self, z: &[f64], from: u64, to: u64) -> Option<f64> {
        self.rule.margin(z, from as usize, to as usize)
    }

    fn segment(&self, z: &[f64], a: f64, b: f64, sig: u64, out: &mut [f64]) {
        let depth = sig as usize;
        if depth == 0 && self.stats.iter().all(|&s| stat_value(s, 0, self.h.mask) == 0.0) {
            return;
        }
        let k = z.len();
        for p in &self.perms {
            let w: f64 = (0..k - 1).map(|r| normal::pdf(z[r] - self.means[p[r]])).product::<f64>()
                * normal::mass(a, b, self.means[p[k - 1]]);
            let rej = p[..depth].iter().fold(0u32, |m, &i| m | 1 << i);
            self.add_stats(rej, w, out);
        }
    }
}
