//! Replication fan-out.
//!
//! Replications are independent tasks addressed by index. Results are
//! always returned in index order so any reduction over them is identical
//! for every worker count, including the sequential path.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

#[allow(clippy::derivable_impls)]
impl Default for Policy {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Policy::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Policy::Sequential
        }
    }
}

/// Evaluates `task(i)` for `i in 0..count` and returns the results in index order.
pub fn map_indexed<T, F>(policy: Policy, count: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match policy {
        Policy::Sequential => (0..count).map(task).collect(),
        #[cfg(feature = "parallel")]
        Policy::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(task).collect()
        }
    }
}

/// Like [`map_indexed`] with the default policy, short-circuiting on the first
/// error by index.
pub fn try_map_indexed<T, E, F>(count: usize, task: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(Policy::default(), count, task).into_iter().collect()
}
