//! Bounded fan-out used by the batch paths (offline evaluation, corpus
//! validation). With the `parallel` feature the work runs on a dedicated
//! rayon pool; without it, or with a bound of 1, it runs in order on the
//! calling thread. Output order always matches input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Up to `n` items in flight at once.
    Parallel(usize),
}

impl Execution {
    pub fn bounded(n: usize) -> Self {
        if n <= 1 || !cfg!(feature = "parallel") {
            Execution::Sequential
        } else {
            Execution::Parallel(n)
        }
    }

    pub fn width(self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel(n) => n,
        }
    }
}

impl Default for Execution {
    fn default() -> Self {
        Execution::bounded(
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        )
    }
}

pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel(n) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("thread pool unavailable ({e}), running sequentially");
                    items.iter().map(f).collect()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel(_) => items.iter().map(f).collect(),
    }
}
