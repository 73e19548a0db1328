use rayon::prelude::*;
use rsl_core::exec::Executor;

use crate::error::{CliError, CliResult};

/// Rayon-backed executor; `collect` on an indexed parallel iterator keeps
/// results in index order.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> CliResult<Self> {
        if workers == 0 {
            return Err(CliError::validation("--workers must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::validation(format!("cannot start worker pool: {e}")))?;
        Ok(Pool { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}
