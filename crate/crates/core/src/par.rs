//! Batch evaluation helpers.
//!
//! With the `parallel` feature (default) batches run on the rayon pool;
//! without it they fall back to plain iteration. `map_batch_seq` is always
//! compiled so results of the two paths can be compared directly.

#[cfg(feature = "parallel")]
pub fn map_batch<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_batch<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Sequential reference path, independent of the `parallel` feature.
pub fn map_batch_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Pin the worker pool size. Call once, before any parallel work; later calls
/// are ignored. A no-op without the `parallel` feature.
pub fn configure_workers(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}
