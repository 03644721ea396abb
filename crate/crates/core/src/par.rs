//! Data-parallel map over independent simulation instances.
//!
//! Instances share nothing, so results do not depend on the execution
//! order. With the `parallel` feature the work runs on the rayon pool,
//! otherwise on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to every item, results in input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

/// Always on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
