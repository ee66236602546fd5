//! Data-parallel building blocks with a sequential fallback.
//!
//! With the `parallel` feature (default) the loops run on rayon; without it
//! the same chunking runs on one thread. Chunk boundaries are fixed so the
//! floating-point reduction order, and therefore every result, is identical
//! for any thread count and for both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk size for ordered reductions.
pub(crate) const CHUNK: usize = 4096;

/// Apply `f(start_index, chunk)` to consecutive `size`-element chunks of `out`.
/// Each chunk is written exactly once, so scheduling cannot affect the result.
pub(crate) fn for_each_chunk_mut<T, F>(out: &mut [T], size: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(size)
        .enumerate()
        .for_each(|(c, chunk)| f(c * size, chunk));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(size)
        .enumerate()
        .for_each(|(c, chunk)| f(c * size, chunk));
}

/// Map fixed index ranges `[k*CHUNK, (k+1)*CHUNK)` to partial values, in order.
/// The caller folds the returned vector sequentially.
pub(crate) fn map_chunks<A, F>(n: usize, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(std::ops::Range<usize>) -> A + Sync + Send,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Largest absolute componentwise difference between two equal-length slices.
/// `max` is exact, so the parallel reduction is deterministic.
pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let per_chunk = map_chunks(a.len(), |r| {
        let mut m = 0.0f64;
        for i in r {
            m = m.max((a[i] - b[i]).abs());
        }
        m
    });
    per_chunk.into_iter().fold(0.0, f64::max)
}
