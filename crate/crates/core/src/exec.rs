//! Execution strategy for the data-parallel loops (trial generation, objective
//! assembly, benchmark cells).
//!
//! Every parallel path produces results in index order, so output is identical
//! to the sequential path regardless of the worker count. Without the
//! `parallel` feature, [`Execution::Parallel`] runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// `workers = None` uses the global rayon pool.
    #[default]
    Parallel,
    ParallelWith { workers: usize },
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(0) | None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(w) => Execution::ParallelWith { workers: w },
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }

    /// `f(0), f(1), …, f(len - 1)` collected in index order.
    pub fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match *self {
                Execution::Sequential => (0..len).map(f).collect(),
                Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
                Execution::ParallelWith { workers } => {
                    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                        Ok(pool) => pool.install(|| (0..len).into_par_iter().map(&f).collect()),
                        Err(_) => (0..len).map(f).collect(),
                    }
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..len).map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_every_strategy() {
        let expected: Vec<usize> = (0..1000).map(|i| i * i).collect();
        for exec in [
            Execution::Sequential,
            Execution::Parallel,
            Execution::ParallelWith { workers: 3 },
        ] {
            assert_eq!(exec.map_indexed(1000, |i| i * i), expected);
        }
    }
}
