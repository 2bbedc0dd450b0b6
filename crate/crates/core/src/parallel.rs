//! Data-parallel helpers. With the `parallel` feature disabled every mode
//! runs sequentially on the calling thread.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Use a dedicated pool of this many threads.
    Threads(usize),
    /// Use the global pool.
    Global,
}

impl Parallelism {
    pub fn workers(n: usize) -> Self {
        if n <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(n)
        }
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            Parallelism::Sequential => {}
            Parallelism::Global => return items.par_iter().map(&f).collect(),
            Parallelism::Threads(n) => {
                match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
                    Err(e) => tracing::warn!("falling back to sequential execution: {e}"),
                }
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = mode;
    items.iter().map(f).collect()
}
