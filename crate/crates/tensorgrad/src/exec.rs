//! Chunked loops that run on rayon when the `parallel` feature is on.
//!
//! Every chunk is computed by exactly one closure call with a fixed
//! summation order inside it, so the parallel and sequential paths produce
//! bit-identical results.

/// Below this many scalar operations a kernel stays on the calling thread.
const PARALLEL_WORK_THRESHOLD: usize = 1 << 14;

/// Calls `f(chunk_index, chunk)` for each `chunk_len`-sized piece of `out`.
/// `work_per_chunk` is a rough operation count used to decide whether
/// spawning is worth it.
pub fn for_each_chunk<F>(out: &mut [f64], chunk_len: usize, work_per_chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk_len == 0 || out.is_empty() {
        return;
    }
    let chunks = out.len() / chunk_len;
    if use_parallel(chunks, work_per_chunk) {
        parallel_chunks(out, chunk_len, work_per_chunk, f);
    } else {
        for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
    }
}

/// Maps `0..n` through `f`, preserving order.
pub fn map_range<T, F>(n: usize, work_per_item: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if use_parallel(n, work_per_item) {
        parallel_map(n, f)
    } else {
        (0..n).map(f).collect()
    }
}

fn use_parallel(items: usize, work_per_item: usize) -> bool {
    cfg!(feature = "parallel") && items > 1 && items.saturating_mul(work_per_item) >= PARALLEL_WORK_THRESHOLD
}

#[cfg(feature = "parallel")]
fn parallel_chunks<F>(out: &mut [f64], chunk_len: usize, work_per_chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    let min_len = (PARALLEL_WORK_THRESHOLD / 4 / work_per_chunk.max(1)).max(1);
    out.par_chunks_mut(chunk_len)
        .with_min_len(min_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

#[cfg(not(feature = "parallel"))]
fn parallel_chunks<F>(out: &mut [f64], chunk_len: usize, _work_per_chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
