//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the work fans out over rayon's pool; without it
//! (or with [`Parallelism::Sequential`]) it runs on the calling thread. Results
//! are always gathered in input order, so outputs do not depend on thread count.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Rayon,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        }
    }
}

pub fn map<T, R, F>(mode: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        Parallelism::Sequential => items.iter().map(f).collect(),
        Parallelism::Rayon => par_map(items, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().with_min_len(4).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Runs `f` inside a pool capped at `threads` workers (no-op without `parallel`).
pub fn with_thread_cap<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    f()
}
