use facerep_core::BatchExecutor;

/// Runs batch work on a private rayon pool. Results come back in index
/// order, so outputs match [`facerep_core::Sequential`] exactly.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads == 0` lets rayon pick the number of cores.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl BatchExecutor for RayonExecutor {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        use rayon::prelude::*;
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use facerep_core::Sequential;

    #[test]
    fn matches_sequential_order() {
        let ex = RayonExecutor::new(4).unwrap();
        assert_eq!(ex.threads(), 4);
        let f = |i: usize| (i * 7919) % 101;
        assert_eq!(ex.map(1000, f), Sequential.map(1000, f));
        assert!(ex.map(0, f).is_empty());
    }
}
