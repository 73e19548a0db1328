use std::path::PathBuf;

use rsl_core::diagnostics::{analyze_family, Table1};

use crate::cli::Common;
use crate::config::DiagnoseConfig;
use crate::error::{CliError, CliResult};
use crate::io::{self, Csv};

/// Writes `report.json` plus `norms.csv`, `trend.csv`, `noise.csv` and
/// `delta.csv` for plotting.
pub fn run(c: &Common, inputs: Vec<PathBuf>) -> CliResult<()> {
    let cfg: DiagnoseConfig = crate::config::load(c.config.as_deref())?;
    let inputs = if inputs.is_empty() {
        cfg.inputs.clone()
    } else {
        inputs
    };
    if inputs.len() < 3 {
        return Err(CliError::validation(format!(
            "diagnose needs at least 3 weight directories, got {}",
            inputs.len()
        )));
    }
    let mut tensors = Vec::with_capacity(inputs.len());
    for dir in &inputs {
        tensors.push(io::read_weights(dir)?);
    }
    let d = tensors[0].dim();
    if let Some((dir, w)) = inputs.iter().zip(&tensors).find(|(_, w)| w.dim() != d) {
        return Err(CliError::validation(format!(
            "{}: dimension {} differs from {d} of {}",
            dir.display(),
            w.dim(),
            inputs[0].display()
        )));
    }
    tensors.sort_by_key(|w| w.depth());
    if tensors.windows(2).any(|p| p[0].depth() == p[1].depth()) {
        return Err(CliError::validation(
            "weight directories must have distinct depths",
        ));
    }
    let report = analyze_family(&tensors, cfg.bins, &cfg.thresholds)?;
    io::create_dir(&c.out)?;
    io::write_json(&c.out.join("report.json"), &report)?;

    let mut header = vec!["depth".to_string()];
    for comp in ["a", "b"] {
        for q in ["max", "cumsum", "increment", "rss"] {
            header.push(format!("{q}_{comp}"));
        }
    }
    let mut csv = Csv::create(&c.out.join("norms.csv"), &header)?;
    let cols = |t: &Table1| [t.max_norm, t.cumsum_norm, t.scaled_increment_norm, t.rss];
    for (i, l) in report.depths.iter().enumerate() {
        let mut row = vec![*l as f64];
        row.extend(cols(&report.norms_a[i]));
        row.extend(cols(&report.norms_b[i]));
        csv.nums(&row)?;
    }
    csv.finish()?;

    let deepest = tensors.last().unwrap();
    let l = deepest.depth();
    let mut trend = Csv::create(&c.out.join("trend.csv"), &io::matrix_header(d, d))?;
    let nb = report.trend.len();
    for (j, m) in report.trend.iter().enumerate() {
        let mut row = vec![j as f64 / nb as f64];
        row.extend(m);
        trend.nums(&row)?;
    }
    trend.finish()?;
    let mut noise = Csv::create(&c.out.join("noise.csv"), &io::matrix_header(d, d))?;
    for (k, m) in report.noise.iter().enumerate() {
        let mut row = vec![k as f64 / l as f64];
        row.extend(m);
        noise.nums(&row)?;
    }
    noise.finish()?;
    let mut delta = Csv::create(
        &c.out.join("delta.csv"),
        &["depth", "layer", "delta"].map(String::from),
    )?;
    for w in &tensors {
        for k in 0..w.depth() {
            delta.nums(&[w.depth() as f64, k as f64, w.delta(k)])?;
        }
    }
    delta.finish()?;

    println!(
        "regime {:?}; beta_A {:?}; beta_b {:?}; alpha {:?}",
        report.regime,
        report.beta_a.value(),
        report.beta_b.value(),
        report.alpha_hat
    );
    Ok(())
}
