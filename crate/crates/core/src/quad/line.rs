//! Deterministic integration over the ordered region `z_0 <= ... <= z_{d-1}`.
//!
//! The last coordinate is integrated along lines: on each line a discrete
//! signature (typically the rejection depth) is constant on segments whose
//! integrals are closed forms supplied by the integrand. Segment ends are
//! found by a scan refined with bisection.
//!
//! The remaining coordinates are integrated recursively with composite
//! Gauss–Legendre rules. Slices of a rejection region generally jump when a
//! boundary face is parallel to the slicing direction, so every slice also
//! reports a structure key (the sequence of signatures it saw). Where the key
//! changes between neighbouring nodes the change point is bisected and the
//! pieces on either side are integrated separately. Within a piece of
//! constant structure the slice integral is smooth.

use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;

use super::{gl_nodes, PANEL};
use crate::model::MAX_K;

pub(crate) trait LineIntegrand: Sync {
    fn dim(&self) -> usize;

    fn n_out(&self) -> usize;

    /// Discrete state at an ordered point.
    fn signature(&self, z: &[f64]) -> u64;

    /// Adds the integral over `z_last in [a, b]` with `z[..dim - 1]` held
    /// fixed and constant signature `sig`. `b` may be infinite.
    fn segment(&self, z: &[f64], a: f64, b: f64, sig: u64, out: &mut [f64]);

    /// Continuous function of the last coordinate, nonnegative on the `from`
    /// side of a boundary between signatures `from` and `to`.
    fn margin(&self, _z: &[f64], _from: u64, _to: u64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LineSettings {
    /// Gauss–Legendre nodes across the full outer range; shorter ranges get
    /// proportionally fewer, but at least one panel.
    pub nodes: usize,
    pub lo: f64,
    pub hi: f64,
}

const INNER_STEP: f64 = 0.2;
const INNER_TOL: f64 = 1e-9;
const OUTER_TOL: f64 = 1e-9;
const JUMP_TOL: f64 = 1e-11;

pub(crate) struct LineOutcome {
    pub values: Vec<f64>,
    pub evaluations: usize,
}

struct Slice {
    values: Vec<f64>,
    key: u64,
    evals: usize,
}

pub(crate) fn integrate<I: LineIntegrand>(f: &I, s: &LineSettings) -> LineOutcome {
    let d = f.dim();
    assert!((2..=MAX_K).contains(&d), "line integration needs 2..=MAX_K coordinates");
    let mut z = [0.0; MAX_K];
    let out = slice(f, s, &mut z, 0);
    LineOutcome { values: out.values, evaluations: out.evals }
}

fn slice<I: LineIntegrand>(f: &I, s: &LineSettings, z: &mut [f64; MAX_K], j: usize) -> Slice {
    if j + 1 == f.dim() {
        inner(f, s, z)
    } else {
        outer(f, s, z, j)
    }
}

fn key_of(seq: &[u64]) -> u64 {
    let mut h = DefaultHasher::new();
    seq.hash(&mut h);
    h.finish()
}

/// Run-length compresses consecutive equal keys.
fn push_key(seq: &mut Vec<u64>, k: u64) {
    if seq.last() != Some(&k) {
        seq.push(k);
    }
}

fn inner<I: LineIntegrand>(f: &I, s: &LineSettings, z: &mut [f64; MAX_K]) -> Slice {
    let d = f.dim();
    let start = z[d - 2];
    let mut out = vec![0.0; f.n_out()];
    let mut evals = 0;
    let sig_at = |x: f64, z: &mut [f64; MAX_K], evals: &mut usize| {
        z[d - 1] = x;
        *evals += 1;
        f.signature(&z[..d])
    };

    let mut pts = vec![start];
    if start < s.hi {
        let steps = ((s.hi - start) / INNER_STEP).ceil() as usize;
        pts.extend((1..=steps).map(|i| start + (s.hi - start) * i as f64 / steps as f64));
    }

    let mut seq = Vec::new();
    let mut seg_start = start;
    let mut cur = sig_at(start, z, &mut evals);
    seq.push(cur);
    for w in pts.windows(2) {
        let next = sig_at(w[1], z, &mut evals);
        if next == cur {
            continue;
        }
        // One or more changes inside (w[0], w[1]].
        let mut left = w[0];
        loop {
            let (cut, hi, hi_sig) = match direct_crossing(f, z, left, w[1], cur, next, &mut evals) {
                Some(c) => c,
                None => {
                    let (mut lo, mut hi) = (left, w[1]);
                    let mut hi_sig = next;
                    while hi - lo > INNER_TOL {
                        let mid = 0.5 * (lo + hi);
                        let sm = sig_at(mid, z, &mut evals);
                        if sm == cur {
                            lo = mid;
                        } else {
                            hi = mid;
                            hi_sig = sm;
                        }
                    }
                    (0.5 * (lo + hi), hi, hi_sig)
                }
            };
            f.segment(&z[..d], seg_start, cut, cur, &mut out);
            seg_start = cut;
            cur = hi_sig;
            push_key(&mut seq, cur);
            left = hi;
            if cur == next {
                break;
            }
        }
    }
    f.segment(&z[..d], seg_start, f64::INFINITY, cur, &mut out);
    Slice { values: out, key: key_of(&seq), evals }
}

/// Finds a boundary between `cur` (at `lo`) and `next` (at `hi`) by
/// Illinois regula falsi on the integrand's margin, then confirms that the
/// signatures on both sides of the root are exactly `cur` and `next`.
/// Returns `(cut, right end, signature right of cut)`.
fn direct_crossing<I: LineIntegrand>(
    f: &I,
    z: &mut [f64; MAX_K],
    lo: f64,
    hi: f64,
    cur: u64,
    next: u64,
    evals: &mut usize,
) -> Option<(f64, f64, u64)> {
    let d = f.dim();
    let mut m = |x: f64, z: &mut [f64; MAX_K]| {
        z[d - 1] = x;
        *evals += 1;
        f.margin(&z[..d], cur, next)
    };
    let (mut a, mut b) = (lo, hi);
    let mut fa = m(a, z)?;
    let mut fb = m(b, z)?;
    if !(fa > 0.0 && fb < 0.0) {
        return None;
    }
    let mut side = 0;
    for _ in 0..60 {
        if b - a <= INNER_TOL {
            break;
        }
        let c = ((fa * b - fb * a) / (fa - fb)).clamp(a, b);
        let fc = m(c, z)?;
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else if fc < 0.0 {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            b = c;
        }
        // Regula falsi can stall with one end fixed; step just past the root.
        let w = (b - a).abs();
        if w > INNER_TOL && w < 1e-6 {
            for x in [c - INNER_TOL, c + INNER_TOL] {
                if x > a && x < b {
                    let fx = m(x, z)?;
                    if fx > 0.0 {
                        a = x;
                        fa = fx;
                    } else if fx < 0.0 {
                        b = x;
                        fb = fx;
                    }
                }
            }
        }
    }
    if b - a > INNER_TOL {
        return None;
    }
    let (ea, eb) = ((a - INNER_TOL).max(lo), (b + INNER_TOL).min(hi));
    *evals += 2;
    z[d - 1] = ea;
    let sa = f.signature(&z[..d]);
    z[d - 1] = eb;
    let sb = f.signature(&z[..d]);
    (sa == cur && sb == next).then_some((0.5 * (a + b), eb, next))
}

fn outer<I: LineIntegrand>(f: &I, s: &LineSettings, z: &mut [f64; MAX_K], j: usize) -> Slice {
    let n_out = f.n_out();
    let start = if j == 0 { s.lo } else { z[j - 1] };
    if start >= s.hi {
        return Slice { values: vec![0.0; n_out], key: 0, evals: 0 };
    }
    let density = s.nodes as f64 / (s.hi - s.lo);
    let nodes = piece_nodes(start, s.hi, density);
    let base = *z;
    let child = |x: f64| {
        let mut zz = base;
        zz[j] = x;
        slice(f, s, &mut zz, j + 1)
    };
    let at_nodes: Vec<Slice> = if j == 0 {
        nodes.par_iter().map(|&(x, _)| child(x)).collect()
    } else {
        nodes.iter().map(|&(x, _)| child(x)).collect()
    };
    // The start of the range is the diagonal, where structure piles up;
    // probe it so that pieces shorter than the first node gap are seen.
    let first = child(start);
    let mut evals: usize = first.evals + at_nodes.iter().map(|c| c.evals).sum::<usize>();
    let probes: Vec<(f64, &Slice)> =
        std::iter::once((start, &first)).chain(nodes.iter().map(|n| n.0).zip(&at_nodes)).collect();
    let panel_of = |i: usize| i.saturating_sub(1) / PANEL;

    // A panel is trusted when its nodes agree with each other and with the
    // neighbouring probes on both sides.
    let n_pan = nodes.len() / PANEL;
    let mut bad = vec![false; n_pan];
    for i in 0..probes.len() - 1 {
        if probes[i].1.key != probes[i + 1].1.key {
            bad[panel_of(i)] = true;
            bad[panel_of(i + 1)] = true;
        }
    }
    let width = (s.hi - start) / n_pan as f64;
    let edge = |p: usize| start + width * p as f64;

    let mut values = vec![0.0; n_out];
    let mut seq = Vec::new();
    let mut p = 0;
    while p < n_pan {
        if !bad[p] {
            for i in p * PANEL..(p + 1) * PANEL {
                let w = nodes[i].1;
                values.iter_mut().zip(&at_nodes[i].values).for_each(|(v, c)| *v += w * c);
                push_key(&mut seq, at_nodes[i].key);
            }
            p += 1;
            continue;
        }
        let q = (p..n_pan).find(|&q| !bad[q]).unwrap_or(n_pan);
        // Locate every key change among the run's probes.
        let (a, b) = (edge(p), edge(q));
        let idx = if p == 0 { 0 } else { p * PANEL + 1 }..q * PANEL + 1;
        let mut cuts = vec![a];
        let mut keys = vec![probes[idx.start].1.key];
        for i in idx.start..idx.end - 1 {
            let target = probes[i + 1].1.key;
            let mut left = (probes[i].0, probes[i].1.values.clone());
            let mut cur = probes[i].1.key;
            while cur != target {
                let (mut lo, mut hi) = (left.clone(), (probes[i + 1].0, probes[i + 1].1.values.clone()));
                let mut hi_key = target;
                // Misplacing the cut costs at most width times the jump.
                while hi.0 - lo.0 > OUTER_TOL && (hi.0 - lo.0) * max_diff(&lo.1, &hi.1) > JUMP_TOL {
                    let mid = 0.5 * (lo.0 + hi.0);
                    let c = child(mid);
                    evals += c.evals;
                    if c.key == cur {
                        lo = (mid, c.values);
                    } else {
                        hi = (mid, c.values);
                        hi_key = c.key;
                    }
                }
                cuts.push(0.5 * (lo.0 + hi.0));
                keys.push(hi_key);
                cur = hi_key;
                left = hi;
            }
        }
        cuts.push(b);
        for (w, &k) in cuts.windows(2).zip(&keys) {
            push_key(&mut seq, k);
            if w[1] <= w[0] {
                continue;
            }
            let piece = piece_nodes(w[0], w[1], density);
            let parts: Vec<Slice> = if j == 0 {
                piece.par_iter().map(|&(x, _)| child(x)).collect()
            } else {
                piece.iter().map(|&(x, _)| child(x)).collect()
            };
            for (&(_, wx), c) in piece.iter().zip(&parts) {
                values.iter_mut().zip(&c.values).for_each(|(v, cv)| *v += wx * cv);
                evals += c.evals;
            }
        }
        p = q;
    }
    Slice { values, key: key_of(&seq), evals }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn piece_nodes(a: f64, b: f64, density: f64) -> Vec<(f64, f64)> {
    let n = ((b - a) * density).ceil().max(1.0) as usize;
    gl_nodes(n, a, b)
}
