//! Randomized quasi-Monte Carlo and Monte Carlo estimators.
//!
//! Both split work into fixed chunks with their own random streams, so the
//! results depend on the seed but not on the number of threads.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::integrands::{stat_value, Stat};
use super::{IntegralResult, QuadConfig, Scenario, Scheme};
use crate::error::{OmtError, Result};
use crate::model::MAX_K;
use crate::policy::DecisionRule;

const SHIFTS: usize = 16;
const CHUNK: usize = 1 << 14;

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Additive-recurrence generator built on the generalized golden ratio.
fn kronecker_alpha(dim: usize) -> Vec<f64> {
    let mut g = 2.0f64;
    for _ in 0..60 {
        g -= (g.powi(dim as i32 + 1) - g - 1.0) / ((dim + 1) as f64 * g.powi(dim as i32) - 1.0);
    }
    (1..=dim).map(|j| g.powi(-(j as i32)).fract()).collect()
}

#[derive(Default, Clone)]
struct Moments {
    n: f64,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(n_out: usize) -> Self {
        Moments { n: 0.0, sum: vec![0.0; n_out], sq: vec![0.0; n_out] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((s, q), &v) in self.sum.iter_mut().zip(&mut self.sq).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sq[i] += o.sq[i];
        }
    }

    fn mean_and_se(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n.max(1.0);
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let se = self
            .sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / n - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt())
            .collect();
        (mean, se)
    }
}

/// Mean of `f` over the unit cube with a standard-error estimate.
pub(crate) fn cube_mean<F>(dim: usize, n_out: usize, cfg: &QuadConfig, f: F) -> (Vec<f64>, Vec<f64>, usize)
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    match cfg.scheme {
        Scheme::Qmc => {
            let alpha = kronecker_alpha(dim);
            let per = (cfg.n / SHIFTS).max(1);
            let estimates: Vec<Vec<f64>> = (0..SHIFTS)
                .into_par_iter()
                .map(|s| {
                    let mut rng = chunk_rng(cfg.seed, s as u64);
                    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                    let mut acc = vec![0.0; n_out];
                    let mut buf = vec![0.0; n_out];
                    let mut v = [0.0; MAX_K];
                    for i in 1..=per {
                        for j in 0..dim {
                            v[j] = (shift[j] + i as f64 * alpha[j]).fract();
                        }
                        f(&v[..dim], &mut buf);
                        for (a, b) in acc.iter_mut().zip(&buf) {
                            *a += b;
                        }
                    }
                    acc.iter().map(|a| a / per as f64).collect()
                })
                .collect();
            let mut m = Moments::new(n_out);
            for e in &estimates {
                m.push(e);
            }
            let (mean, se) = m.mean_and_se();
            (mean, se, per * SHIFTS)
        }
        _ => {
            let chunks = cfg.n.div_ceil(CHUNK);
            let parts: Vec<Moments> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = chunk_rng(cfg.seed, c as u64);
                    let len = CHUNK.min(cfg.n - c * CHUNK);
                    let mut m = Moments::new(n_out);
                    let mut buf = vec![0.0; n_out];
                    let mut v = [0.0; MAX_K];
                    for _ in 0..len {
                        for x in v.iter_mut().take(dim) {
                            *x = rng.random::<f64>();
                        }
                        f(&v[..dim], &mut buf);
                        m.push(&buf);
                    }
                    m
                })
                .collect();
            let mut total = Moments::new(n_out);
            for p in &parts {
                total.merge(p);
            }
            let (mean, se) = total.mean_and_se();
            (mean, se, cfg.n)
        }
    }
}

/// Maps iid standard normals `e` to equicorrelated ones with correlation `rho`:
/// `z_j = a e_j + b sum(e)`, `a = sqrt(1 - rho)`, `a + k b = sqrt(1 - rho + k rho)`.
pub(crate) fn equicorrelated(rho: f64, e: &[f64], out: &mut [f64]) {
    let k = e.len() as f64;
    let a = (1.0 - rho).sqrt();
    let b = ((1.0 - rho + k * rho).sqrt() - a) / k;
    let s: f64 = e.iter().sum();
    for (o, &x) in out.iter_mut().zip(e) {
        *o = a * x + b * s;
    }
}

/// Monte Carlo expectation of rejection statistics with equicorrelated
/// statistics `X ~ N(theta * h, (1 - rho) I + rho 11')`.
pub fn mc_expectation<R>(
    rule: &R,
    scenario: &Scenario,
    rho: f64,
    stats: &[Stat],
    n: usize,
    seed: u64,
) -> Result<Vec<IntegralResult>>
where
    R: DecisionRule + ?Sized,
{
    let k = rule.k();
    if scenario.h.k != k {
        return Err(OmtError::invalid("scenario and rule disagree on k"));
    }
    let lower = -1.0 / (k as f64 - 1.0);
    if !(rho > lower && rho < 1.0) {
        return Err(OmtError::invalid(format!("correlation {rho} outside ({lower}, 1)")));
    }
    if n < 10_000 {
        return Err(OmtError::invalid(format!("need at least 10^4 samples, got {n}")));
    }
    let means = scenario.means();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let mut m = Moments::new(stats.len());
            let mut buf = vec![0.0; stats.len()];
            let (mut e, mut z) = ([0.0; MAX_K], [0.0; MAX_K]);
            for _ in 0..len {
                for x in e.iter_mut().take(k) {
                    *x = rng.sample(StandardNormal);
                }
                equicorrelated(rho, &e[..k], &mut z[..k]);
                for j in 0..k {
                    z[j] += means[j];
                }
                let rej = rule.decide_z(&z[..k]).mask;
                for (b, &s) in buf.iter_mut().zip(stats) {
                    *b = stat_value(s, rej, scenario.h.mask);
                }
                m.push(&buf);
            }
            m
        })
        .collect();
    let mut total = Moments::new(stats.len());
    for p in &parts {
        total.merge(p);
    }
    let (mean, se) = total.mean_and_se();
    Ok(mean
        .into_iter()
        .zip(se)
        .map(|(v, e)| IntegralResult { value: v, abs_error_est: e, scheme: Scheme::MonteCarlo, n_points: n, flagged: false })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equicorrelation_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (k, rho, n) = (3, 0.5, 200_000);
        let (mut s01, mut s00) = (0.0, 0.0);
        let mut z = [0.0; 3];
        for _ in 0..n {
            let e: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            equicorrelated(rho, &e, &mut z);
            s00 += z[0] * z[0];
            s01 += z[0] * z[1];
        }
        assert!((s00 / n as f64 - 1.0).abs() < 0.01);
        assert!((s01 / n as f64 - rho).abs() < 0.01);
    }

    #[test]
    fn kronecker_generator_is_irrational_looking() {
        let a = kronecker_alpha(1);
        assert!((a[0] - 0.618_033_988_749_894_8).abs() < 1e-12);
    }
}
