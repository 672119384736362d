//! Replication-level data parallelism. With the `parallel` feature the work
//! is spread over a rayon pool; without it, or when [`Execution::Sequential`]
//! is requested, indices are processed in order on the calling thread.
//! Results are returned in index order either way, so output never depends
//! on scheduling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

/// Whether the crate was built with the rayon backend.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Apply `f` to `0..n` and collect in index order.
pub fn map_indices<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible variant of [`map_indices`]; the first error in index order wins.
pub fn try_map_indices<T, F>(n: usize, execution: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indices(n, execution, f).into_iter().collect()
}

/// Size the global pool. Only the first call has an effect; later calls and
/// sequential builds return `Ok` without doing anything.
pub fn init_thread_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::OutOfDomain("thread count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let seq = map_indices(100, Execution::Sequential, |i| i * i);
        let par = map_indices(100, Execution::Parallel, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn first_error_in_index_order_is_reported() {
        let r = try_map_indices(10, Execution::Parallel, |i| {
            if i >= 3 {
                Err(Error::OutOfDomain(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r.unwrap_err(), Error::OutOfDomain("3".into()));
    }

    #[test]
    fn zero_threads_is_rejected() {
        assert!(init_thread_pool(0).is_err());
    }
}
