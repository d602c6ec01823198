//! Data-parallel map with a sequential fallback.
//!
//! Every suite in this crate is a map over independent work items. Results
//! are always returned in item order, so the two execution modes produce
//! identical output.

/// How to run a batch of independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when built with the `parallel` feature, and
    /// degrades to sequential otherwise.
    #[default]
    Parallel,
}

/// Applies `f` to `0..count`, returning results in index order.
pub fn map_range<R, F>(exec: Execution, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        Execution::Parallel => parallel_range(count, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_range<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_range<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Runs `f` with parallel work capped at `jobs` threads. `None` or a build
/// without the `parallel` feature runs `f` directly.
pub fn with_jobs<R, F>(jobs: Option<usize>, f: F) -> crate::Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match jobs {
        Some(0) => Err(crate::FppeError::InvalidArgument("jobs must be at least 1".into())),
        #[cfg(feature = "parallel")]
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| crate::FppeError::InvalidArgument(e.to_string())),
        _ => Ok(f()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let seq = map_range(Execution::Sequential, 100, |i| i * i);
        let par = map_range(Execution::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn jobs_cap_is_validated() {
        assert!(with_jobs(Some(0), || ()).is_err());
        assert_eq!(with_jobs(Some(2), || 5).unwrap(), 5);
        assert_eq!(with_jobs(None, || 6).unwrap(), 6);
    }
}
