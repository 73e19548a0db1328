pub mod backprop;
pub mod converge;
pub mod dataset;
pub mod diagnose;
pub mod simulate;
pub mod train;

use serde::de::DeserializeOwned;

use crate::cli::Common;
use crate::config;
use crate::error::CliResult;
use crate::io;
use crate::pool::Pool;

/// Loads the configuration, creates the output directory and starts the pool.
pub(crate) fn prepare<T: DeserializeOwned>(c: &Common) -> CliResult<(T, Pool)> {
    let cfg = config::load(c.config.as_deref())?;
    let pool = Pool::new(c.workers)?;
    io::create_dir(&c.out)?;
    Ok((cfg, pool))
}
