//! Data-parallel helpers that fall back to sequential execution on wasm.
//!
//! Every call site produces per-index outputs with no shared accumulation,
//! so results are identical whichever path runs.

#[cfg(not(target_arch = "wasm32"))]
use rayon::prelude::*;

/// Map `f` over 0..n, preserving index order in the output.
pub(crate) fn map_indexed<T: Send, F: Fn(usize) -> T + Send + Sync>(n: usize, f: F) -> Vec<T> {
    #[cfg(not(target_arch = "wasm32"))]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(target_arch = "wasm32")]
    {
        (0..n).map(f).collect()
    }
}

/// Apply `f` to equal-size chunks of `data` with their chunk index.
pub(crate) fn for_each_chunk<T: Send, F: Fn(usize, &mut [T]) + Send + Sync>(
    data: &mut [T],
    chunk: usize,
    f: F,
) {
    #[cfg(not(target_arch = "wasm32"))]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(target_arch = "wasm32")]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
