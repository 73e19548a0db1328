use rsl_core::backprop::backward_jacobians;
use rsl_core::forward::forward_hidden;
use rsl_core::processes::{regime1_weights, regime2_weights, sample_ito_path_indexed};

use crate::cli::Common;
use crate::config::{self, RegimeChoice, SimulateConfig};
use crate::error::CliResult;
use crate::io;

/// Writes `weights/`, `hidden.csv` (`h_k` at `t = k/L`) and `jacobian.csv`
/// (backward Jacobians `g_k`, row-major).
pub fn run(c: &Common) -> CliResult<()> {
    let (mut cfg, _pool) = super::prepare::<SimulateConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let d = cfg.dim()?;
    let f = cfg.layer_function.build("layer_function")?;
    let act = config::activation(cfg.activation)?;
    let x = config::input(&cfg.x, d)?;
    let l = cfg.depth;

    let w = match cfg.regime {
        RegimeChoice::Regime1 => regime1_weights(&f, cfg.beta, l, cfg.alpha)?,
        RegimeChoice::Regime2 => {
            let ito = cfg.ito.build("ito")?;
            let path = sample_ito_path_indexed(&ito, l, 1, cfg.seed, 0)?.coarse;
            regime2_weights(&f, cfg.beta, l, &path, cfg.alpha)?
        }
    };
    let hidden = forward_hidden(&x, &w, &act)?;
    let g = backward_jacobians(&w, &hidden, &act)?;

    io::write_weights(&c.out.join("weights"), &w)?;
    io::write_vector_trajectory(&c.out.join("hidden.csv"), hidden.times(), hidden.states())?;
    io::write_matrix_trajectory(
        &c.out.join("jacobian.csv"),
        g.trajectory().times(),
        g.mats(),
    )?;
    log::info!(
        "simulate: L = {l}, d = {d}, |h_L| = {:.6}",
        hidden.last().norm()
    );
    Ok(())
}
