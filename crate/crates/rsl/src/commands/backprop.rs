use nalgebra::DMatrix;
use rsl_core::backprop::{
    backprop_study, backward_jacobians, l1_distance, solve_backward_ode, BackwardKind,
};
use rsl_core::forward::forward_hidden;
use rsl_core::limits::{ode_oracle_steps, solve_linear_ode, solve_neural_ode, StudyConfig};
use rsl_core::processes::regime1_weights;
use rsl_core::stats::loglog_fit;
use serde::Serialize;

use crate::cli::Common;
use crate::config::{self, BackpropConfig, BackpropMode};
use crate::error::{CliError, CliResult};
use crate::io::{self, Csv};

#[derive(Debug, Serialize)]
pub struct DeterministicReport {
    pub depths: Vec<usize>,
    /// Mean over the grid of `‖g_k − G(t_k)‖_F`.
    pub l1_errors: Vec<f64>,
    /// `‖g_0 − G_0‖_F`.
    pub g0_errors: Vec<f64>,
    /// `‖g_0 − e^{Ā}‖_F`, present for constant profiles in the linear case.
    pub expm_errors: Option<Vec<f64>>,
    pub slope: Option<f64>,
}

/// Writes `backprop.json` and `backprop.csv`.
pub fn run(c: &Common) -> CliResult<()> {
    let (mut cfg, pool) = super::prepare::<BackpropConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let d = cfg.dim()?;
    let f = cfg.layer_function.build("layer_function")?;
    let act = config::activation(cfg.activation)?;
    let x = config::input(&cfg.x, d)?;
    match cfg.mode {
        BackpropMode::Deterministic => deterministic(c, &cfg, f, act, x),
        BackpropMode::Stochastic => {
            let mut study = StudyConfig::new(f, cfg.ito.build("ito")?, act, cfg.alpha, cfg.beta, x);
            study.refinement = cfg.refinement;
            let res = backprop_study(&study, &cfg.depths, cfg.n_paths, cfg.seed, &pool)?;
            io::write_json(&c.out.join("backprop.json"), &res)?;
            let header = ["depth", "median_l1", "mean_l1", "stderr"].map(String::from);
            let mut csv = Csv::create(&c.out.join("backprop.csv"), &header)?;
            for (i, l) in res.depths.iter().enumerate() {
                csv.nums(&[
                    *l as f64,
                    res.median_errors[i],
                    res.mean_errors[i],
                    res.stderrs[i],
                ])?;
            }
            csv.finish()?;
            println!(
                "median L1 {:?}, slope {:.4}, {} failed of {}",
                res.median_errors, res.slope, res.n_failed, res.n_paths
            );
            Ok(())
        }
    }
}

fn deterministic(
    c: &Common,
    cfg: &BackpropConfig,
    f: rsl_core::processes::LayerFunction,
    act: rsl_core::forward::Activation,
    x: rsl_core::Vector,
) -> CliResult<()> {
    let kind = if cfg.alpha == 1.0 && cfg.beta == 0.0 {
        BackwardKind::Neural
    } else if (cfg.alpha + cfg.beta - 1.0).abs() < 1e-12 && cfg.beta > 0.0 {
        BackwardKind::Linear
    } else {
        return Err(CliError::validation(format!(
            "field `alpha`/`beta`: the deterministic limit needs α = 1, β = 0 or α + β = 1 with β > 0, got α = {}, β = {}",
            cfg.alpha, cfg.beta
        )));
    };
    let depths = &cfg.depths;
    if depths.is_empty()
        || depths.windows(2).any(|p| p[0] >= p[1])
        || depths.iter().any(|l| !l.is_power_of_two())
    {
        return Err(CliError::validation(
            "field `depths`: need increasing powers of two",
        ));
    }
    let l_max = *depths.last().unwrap();
    let n = ode_oracle_steps(l_max);
    let h = match kind {
        BackwardKind::Neural => solve_neural_ode(&f, &act, &x, 2 * n)?,
        BackwardKind::Linear => solve_linear_ode(&f, &x, 2 * n)?,
    };
    let limit = solve_backward_ode(kind, &f, &act, &h, n)?;
    let expm = (f.is_const()
        && (kind == BackwardKind::Linear
            || act.kind() == rsl_core::forward::ActivationKind::Identity))
        .then(|| DMatrix::from(f.a(0.0).into_owned()).exp());

    let mut rep = DeterministicReport {
        depths: depths.clone(),
        l1_errors: vec![],
        g0_errors: vec![],
        expm_errors: expm.as_ref().map(|_| vec![]),
        slope: None,
    };
    for &l in depths {
        let w = regime1_weights(&f, cfg.beta, l, cfg.alpha)?;
        let hidden = forward_hidden(&x, &w, &act)?;
        let g = backward_jacobians(&w, &hidden, &act)?;
        rep.l1_errors.push(l1_distance(&g, &limit)?);
        rep.g0_errors.push((g.mat(0) - limit.first()).norm());
        if let (Some(e), Some(errs)) = (&expm, rep.expm_errors.as_mut()) {
            errs.push((g.mat(0) - e).norm());
        }
    }
    rep.slope = loglog_fit(depths, &rep.l1_errors).map(|fit| fit.slope);

    io::write_json(&c.out.join("backprop.json"), &rep)?;
    let mut header = ["depth", "l1", "g0"].map(String::from).to_vec();
    if rep.expm_errors.is_some() {
        header.push("expm".into());
    }
    let mut csv = Csv::create(&c.out.join("backprop.csv"), &header)?;
    for (i, l) in depths.iter().enumerate() {
        let mut row = vec![*l as f64, rep.l1_errors[i], rep.g0_errors[i]];
        if let Some(e) = &rep.expm_errors {
            row.push(e[i]);
        }
        csv.nums(&row)?;
    }
    csv.finish()?;
    println!("L1 {:?}; g0 vs exp {:?}", rep.l1_errors, rep.expm_errors);
    Ok(())
}
