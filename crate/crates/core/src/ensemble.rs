//! Deterministic parallel ensembles.
//!
//! Members are indexed, each member draws from its own child stream, and
//! results are collected in index order before any reduction. Output is
//! therefore independent of the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Run `f` inside a dedicated pool with `threads` workers (0 = rayon default).
pub fn with_threads<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `f(0), …, f(count - 1)` evaluated in parallel, returned in index order.
pub fn par_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Fallible [`par_map`]; the error of the lowest failing index wins.
pub fn try_par_map<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par_map(count, f).into_iter().collect()
}

/// Fixed-size index blocks, so that chunked reductions do not depend on the pool.
pub fn blocks(count: usize, block: usize) -> Vec<std::ops::Range<usize>> {
    let block = block.max(1);
    (0..count.div_ceil(block))
        .map(|b| b * block..((b + 1) * block).min(count))
        .collect()
}
