//! Data-parallel execution of independent work items.
//!
//! With the `parallel` feature the work runs on rayon; without it, or with
//! [`Strategy::Sequential`], items run in order on the calling thread. Results are
//! always returned in index order, so both paths produce identical output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Sequential,
    #[default]
    Parallel,
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, strategy: Strategy, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match strategy {
        Strategy::Sequential => (0..n).map(f).collect(),
        Strategy::Parallel => par_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Number of workers a parallel map would use.
pub fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` with a dedicated pool of `threads` workers.
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> Result<T> {
    if threads == 0 {
        return Err(Error::param("threads", "must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::ResourceCap(format!("cannot start {threads} workers: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(
            map_indexed(100, Strategy::Sequential, f),
            map_indexed(100, Strategy::Parallel, f)
        );
    }

    #[test]
    fn pool_size_is_respected() {
        let n = with_threads(2, worker_count).unwrap();
        assert!(n == 2 || !cfg!(feature = "parallel"));
        assert!(with_threads(0, || ()).is_err());
    }
}
