//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they fall back to plain sequential iteration. Only order-independent maps
//! go through here: every output element is written by exactly one closure
//! call, so results do not depend on how the work is partitioned. Reductions
//! (dot products, norms) stay sequential for bitwise reproducibility.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent jobs (parameter sweeps, oracle grids) is run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when compiled with the `parallel` feature, sequential otherwise.
    #[default]
    Parallel,
}

/// Smallest slice handed to one rayon task; below this the scheduling cost
/// exceeds the work on a 64x64 grid.
pub const MIN_TASK_ELEMENTS: usize = 8192;

/// Rows per rayon task for rows of `width` elements.
pub fn min_rows(width: usize) -> usize {
    (MIN_TASK_ELEMENTS / width.max(1)).max(1)
}

/// Calls `f(row_index, row)` for every `width`-sized row of `out`.
pub fn for_each_row<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(width)
        .with_min_len(min_rows(width))
        .enumerate()
        .for_each(|(r, row)| f(r, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(width).enumerate().for_each(|(r, row)| f(r, row));
}

/// Elementwise `out[i] = f(i)`.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut()
        .with_min_len(MIN_TASK_ELEMENTS)
        .enumerate()
        .for_each(|(i, o)| *o = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// Maps `f` over `items`, preserving order.
pub fn map_jobs<T, R, F>(items: &[T], execution: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}
