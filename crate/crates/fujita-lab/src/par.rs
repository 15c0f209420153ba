//! Data-parallel map helpers. With the `parallel` feature (default) the work
//! runs on the rayon pool; without it, or via the explicitly sequential entry
//! points, everything runs on the calling thread with identical results.

use crate::error::Result;

/// Configure the global worker pool. Returns the effective worker count.
/// Calling it twice, or after the pool has started, keeps the first size;
/// the sequential build accepts the call and ignores the hint.
pub fn install_workers(workers: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            // build_global errs if a pool already exists; the run stays valid
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        1
    }
}

pub fn map_sequential<I, O>(items: &[I], f: impl Fn(&I) -> O) -> Vec<O> {
    items.iter().map(f).collect()
}

pub fn try_map_sequential<I, O>(items: &[I], f: impl Fn(&I) -> Result<O>) -> Result<Vec<O>> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Send + Sync) -> Vec<O> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Send + Sync) -> Vec<O> {
    map_sequential(items, f)
}

#[cfg(feature = "parallel")]
pub fn try_map<I: Sync, O: Send>(
    items: &[I],
    f: impl Fn(&I) -> Result<O> + Send + Sync,
) -> Result<Vec<O>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn try_map<I: Sync, O: Send>(
    items: &[I],
    f: impl Fn(&I) -> Result<O> + Send + Sync,
) -> Result<Vec<O>> {
    try_map_sequential(items, f)
}
