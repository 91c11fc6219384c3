//! Data-parallel helpers.
//!
//! With the `parallel` feature the maps below run on the rayon pool; without
//! it they run on the calling thread. Results are always collected in index
//! order, so any reduction performed afterwards is deterministic.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with parallel maps disabled on the current thread.
///
/// Used by the benchmarks to compare both paths inside one build.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

fn sequential_forced() -> bool {
    FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential_forced() && len > 1 {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    let _ = sequential_forced;
    (0..len).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; returns the first error in index order.
pub fn try_map_indexed<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(len, f).into_iter().collect()
}
