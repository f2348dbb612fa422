//! Deterministic parallel sample loops.
//!
//! Samples are grouped into fixed blocks of [`BLOCK`] consecutive indices.
//! Each block is reduced sequentially and the block summaries are merged in
//! index order, so the result depends only on `(seed, n)` and not on how
//! many rayon workers happen to run the blocks.

use rayon::prelude::*;

use crate::stats::{Accumulator, MonteCarloEstimate};

pub const BLOCK: u64 = 1024;

/// Mean of `f(i)` over `i in 0..n`.
pub fn estimate<F>(seed: u64, n: u64, f: F) -> MonteCarloEstimate
where
    F: Fn(u64) -> f64 + Sync,
{
    estimate_many(seed, n, 1, |i, out| out[0] = f(i)).remove(0)
}

/// Component-wise means of a vector-valued sample `f(i, out)`, `out.len() == dim`.
pub fn estimate_many<F>(seed: u64, n: u64, dim: usize, f: F) -> Vec<MonteCarloEstimate>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let partial: Vec<Vec<Accumulator>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Accumulator::default(); dim];
            let mut out = vec![0.0; dim];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                out.iter_mut().for_each(|v| *v = 0.0);
                f(i, &mut out);
                for (a, &v) in acc.iter_mut().zip(&out) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Accumulator::default(); dim];
    for block in partial {
        for (t, a) in total.iter_mut().zip(block) {
            *t = t.merge(&a);
        }
    }
    total.into_iter().map(|a| a.into_estimate(seed)).collect()
}

/// Runs `f(i)` for `i in 0..n` in parallel and returns the outputs in index order.
pub fn collect<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
