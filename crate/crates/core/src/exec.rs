//! Serial or data-parallel execution of independent jobs.
//!
//! Results always come back in input order, so callers can reduce them
//! deterministically regardless of the strategy.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Serial,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs
    /// serially.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Serial
        }
    }
}

impl Exec {
    pub fn map<T, U, F>(self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match self {
            Exec::Serial => items.into_iter().map(f).collect(),
            Exec::Parallel => par_map(items, f),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Runs `f` with at most `threads` workers. `0` means serial; with the
/// `parallel` feature off every value is serial.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce(Exec) -> R + Send) -> R {
    if threads == 0 {
        return f(Exec::Serial);
    }
    run_in_pool(threads, f)
}

#[cfg(feature = "parallel")]
fn run_in_pool<R: Send>(threads: usize, f: impl FnOnce(Exec) -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| f(Exec::Parallel)),
        Err(_) => f(Exec::Parallel),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_in_pool<R: Send>(_threads: usize, f: impl FnOnce(Exec) -> R + Send) -> R {
    f(Exec::Serial)
}
