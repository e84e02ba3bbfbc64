//! Order-independent parallel map-reduce over path indices.
//!
//! Paths are grouped into fixed-size chunks. Chunks run on the current rayon
//! pool; their accumulators are merged left to right, so the result does not
//! depend on how many threads the pool has.

use rayon::prelude::*;

pub const CHUNK_PATHS: usize = 64;

pub fn map_reduce<A, I, F, M>(n_paths: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
    M: Fn(&mut A, A),
{
    let n_chunks = n_paths.div_ceil(CHUNK_PATHS);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * CHUNK_PATHS).min(n_paths);
            for i in c * CHUNK_PATHS..end {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in partials {
        merge(&mut out, p);
    }
    out
}
