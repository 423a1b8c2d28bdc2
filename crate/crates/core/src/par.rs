//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate maps an index range to independent
//! outputs and collects them in index order, so the parallel and sequential
//! paths produce bitwise identical results. Without the `parallel` feature,
//! [`Execution::Parallel`] silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(0), .., f(n - 1)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` on a dedicated pool with `workers` threads (0 = rayon default).
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(_workers: usize, f: F) -> T {
    f()
}
