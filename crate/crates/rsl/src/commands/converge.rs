use rsl_core::limits::{convergence_study, StudyConfig};

use crate::cli::Common;
use crate::config::{self, ConvergeConfig};
use crate::error::CliResult;
use crate::io::{self, Csv};

/// Writes `convergence.json` and `convergence.csv`.
pub fn run(c: &Common) -> CliResult<()> {
    let (mut cfg, pool) = super::prepare::<ConvergeConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let d = cfg.dim()?;
    let mut study = StudyConfig::new(
        cfg.layer_function.build("layer_function")?,
        cfg.ito.build("ito")?,
        config::activation(cfg.activation)?,
        cfg.alpha,
        cfg.beta,
        config::input(&cfg.x, d)?,
    );
    study.refinement = cfg.refinement;
    let res = convergence_study(cfg.case, &study, &cfg.depths, cfg.n_paths, cfg.seed, &pool)?;

    io::write_json(&c.out.join("convergence.json"), &res)?;
    let header: Vec<String> = ["depth", "mean_sup_sq", "stderr", "rms"]
        .map(String::from)
        .to_vec();
    let mut csv = Csv::create(&c.out.join("convergence.csv"), &header)?;
    for (i, l) in res.depths.iter().enumerate() {
        csv.nums(&[*l as f64, res.errors[i], res.stderrs[i], res.rms_errors[i]])?;
    }
    csv.finish()?;
    println!(
        "{:?}: slope {:.4} (rms {:.4}), {} paths, {} exploded",
        res.case, res.slope, res.rms_slope, res.n_paths, res.n_exploded
    );
    Ok(())
}
