//! Tensor-product Gauss–Legendre over a box in z.

use rayon::prelude::*;

use super::gl_nodes;

/// Sums `f(node, weight)` over the tensor grid on `[lo, hi]^k`; `f` adds its
/// weighted contribution to `n_out` accumulators and must include any density
/// factors itself. Slabs along the first axis are reduced in order, so
/// results do not depend on the thread count.
pub(crate) fn tensor_raw<F>(k: usize, n: usize, lo: f64, hi: f64, n_out: usize, f: F) -> (Vec<f64>, usize)
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    let nodes = gl_nodes(n, lo, hi);
    let m = nodes.len();
    let inner = m.pow((k - 1) as u32);
    let slabs: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i0| {
            let mut acc = vec![0.0; n_out];
            let mut z = vec![0.0; k];
            z[0] = nodes[i0].0;
            for idx in 0..inner {
                let mut w = nodes[i0].1;
                let mut rem = idx;
                for zj in z.iter_mut().skip(1) {
                    let (x, wx) = nodes[rem % m];
                    rem /= m;
                    *zj = x;
                    w *= wx;
                }
                f(&z, w, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; n_out];
    for s in &slabs {
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    (out, m * inner)
}
