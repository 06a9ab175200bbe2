//! Sample-level data parallelism with ordered, deterministic results.

use crate::error::{DrcError, Result};

/// How per-sample work is scheduled. Results never depend on the choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads == 0` uses the rayon default.
    Parallel {
        threads: usize,
    },
}

impl Execution {
    /// Reads `DRC_THREADS`: unset means the rayon default, `1` means sequential.
    pub fn from_env() -> Result<Self> {
        match std::env::var("DRC_THREADS") {
            Err(_) => Ok(Execution::Parallel { threads: 0 }),
            Ok(v) => {
                let n: usize = v.trim().parse().map_err(|_| {
                    DrcError::Config(format!("DRC_THREADS must be a positive integer, got {v:?}"))
                })?;
                match n {
                    0 => Err(DrcError::Config("DRC_THREADS must be at least 1".into())),
                    1 => Ok(Execution::Sequential),
                    n => Ok(Execution::Parallel { threads: n }),
                }
            }
        }
    }

    /// Runs `f(0..n)` and returns the results in index order. On failure the
    /// error of the lowest failing index is returned.
    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match *self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel { threads } => parallel_map(n, threads, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DrcError::Config(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}
