use rsl_core::train::gen_synthetic;

use crate::cli::Common;
use crate::config::DatasetRunConfig;
use crate::error::CliResult;
use crate::io::{self, Csv};

/// Writes `dataset.csv` with columns `x_1.., y_1..`.
pub fn run(c: &Common) -> CliResult<()> {
    let (mut cfg, _pool) = super::prepare::<DatasetRunConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let ds = &cfg.dataset;
    let data = gen_synthetic(ds.n, ds.d, ds.k, ds.seed.unwrap_or(cfg.seed))?;
    let mut header = io::numbered("x", data.d);
    header.extend(io::numbered(
        "y",
        data.targets.first().map_or(0, |y| y.len()),
    ));
    let mut csv = Csv::create(&c.out.join("dataset.csv"), &header)?;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let row: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
        csv.nums(&row)?;
    }
    csv.finish()
}
