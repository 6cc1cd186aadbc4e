//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over the current rayon pool;
//! without it, or with [`Execution::Sequential`], items are processed in order.
//! Results always come back in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether parallel execution is actually available and requested.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Run `f` inside a dedicated pool of `threads` workers when parallel.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

/// Thread cap from `FSNAV_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("FSNAV_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = map(Execution::Parallel, &items, |x| x * x);
        let b = map(Execution::Sequential, &items, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[999], 998001);
        assert_eq!(with_threads(Some(2), || map(Execution::Parallel, &items, |x| x + 1)).len(), 1000);
    }
}
