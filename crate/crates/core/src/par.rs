//! Thin wrappers that run in parallel when the `parallel` feature is on.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Call `f(index, chunk)` for every `chunk`-sized piece of `out`.
pub(crate) fn for_each_chunk<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// `(0..n).map(f).collect()`, possibly in parallel; order is preserved.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}
