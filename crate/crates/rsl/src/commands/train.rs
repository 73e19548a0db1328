use std::time::Instant;

use rsl_core::diagnostics::{decompose_trend_noise, default_bins, denoise, Component};
use rsl_core::exec::Executor;
use rsl_core::forward::{make_activation, ActivationKind};
use rsl_core::train::{
    alpha_beta_sweep, evaluate_loss, gen_synthetic, sgd_train, Dataset, SweepSummary, TrainConfig,
    TrainOutcome,
};
use serde::Serialize;
use serde_json::json;

use crate::cli::Common;
use crate::config::TrainRunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{self, Csv};

/// Reference tanh averages over 5 initializations, `(η, [B = 8, 32, 128])`,
/// as `(mean, std)`.
pub const REFERENCE_ALPHA: [(f64, [(f64, f64); 3]); 3] = [
    (0.01, [(0.69, 0.02), (0.73, 0.02), (0.67, 0.02)]),
    (0.003, [(0.59, 0.05), (0.60, 0.01), (0.58, 0.01)]),
    (0.001, [(0.58, 0.01), (0.55, 0.01), (0.53, 0.01)]),
];
pub const REFERENCE_BETA: [(f64, [(f64, f64); 3]); 3] = [
    (0.01, [(0.24, 0.02), (0.29, 0.05), (0.22, 0.02)]),
    (0.003, [(0.33, 0.01), (0.41, 0.06), (0.40, 0.02)]),
    (0.001, [(0.39, 0.02), (0.43, 0.02), (0.41, 0.01)]),
];
pub const REFERENCE_BATCHES: [usize; 3] = [8, 32, 128];

#[derive(Debug, Serialize)]
struct RunRecord {
    depth: usize,
    seed: u64,
    initial_loss: f64,
    final_loss: f64,
    updates: usize,
    stopped_early: bool,
    checkpoint: String,
}

#[derive(Debug, Serialize)]
struct DenoisedRecord {
    seed: u64,
    depth: usize,
    beta: f64,
    bins: usize,
    loss: f64,
    denoised_loss: f64,
    ratio: f64,
}

/// Writes `checkpoints/L{depth}_s{seed}/`, `loss.csv`, `run.json`,
/// `timing.json` and, for at least 3 depths and 2 seeds, `sweep.json`.
/// Wall time lives only in `timing.json` so the other files are
/// reproducible byte for byte.
pub fn run(c: &Common) -> CliResult<()> {
    let (mut cfg, pool) = super::prepare::<TrainRunConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let depths = cfg.depths.clone().unwrap_or_else(|| vec![cfg.train.depth]);
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    if depths.is_empty() || seeds.is_empty() {
        return Err(CliError::validation(
            "fields `depths` and `seeds` must not be empty",
        ));
    }
    let ds = &cfg.dataset;
    let data = gen_synthetic(ds.n, ds.d, ds.k, ds.seed.unwrap_or(cfg.seed))?;
    for &depth in &depths {
        TrainConfig {
            depth,
            ..cfg.train.clone()
        }
        .validate(data.len())
        .map_err(|e| CliError::validation(format!("field `train`: {e}")))?;
    }

    let start = Instant::now();
    let sweep = depths.len() >= 3 && seeds.len() >= 2;
    let (summary, outcomes) = if sweep {
        let (s, o) = alpha_beta_sweep(&depths, &cfg.train, &seeds, &data, &pool)?;
        (Some(s), o)
    } else {
        let jobs: Vec<(u64, usize)> = seeds
            .iter()
            .flat_map(|s| depths.iter().map(move |l| (*s, *l)))
            .collect();
        let outs = pool.map(jobs.len(), |j| {
            let (seed, depth) = jobs[j];
            sgd_train(
                &TrainConfig {
                    depth,
                    seed,
                    ..cfg.train.clone()
                },
                &data,
            )
        });
        (None, outs.into_iter().collect::<Result<Vec<_>, _>>()?)
    };
    let elapsed = start.elapsed().as_secs_f64();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut loss_csv = Csv::create(
        &c.out.join("loss.csv"),
        &["depth", "seed", "update", "loss"].map(String::from),
    )?;
    let jobs = seeds
        .iter()
        .flat_map(|s| depths.iter().map(move |l| (*s, *l)));
    for ((seed, depth), out) in jobs.zip(&outcomes) {
        let name = format!("L{depth}_s{seed}");
        io::write_weights(&c.out.join("checkpoints").join(&name), &out.weights)?;
        for (u, loss) in out.loss_history.iter().enumerate() {
            loss_csv.row(&[
                depth.to_string(),
                seed.to_string(),
                u.to_string(),
                loss.to_string(),
            ])?;
        }
        records.push(RunRecord {
            depth,
            seed,
            initial_loss: out.loss_history[0],
            final_loss: out.final_loss(),
            updates: out.updates,
            stopped_early: out.stopped_early,
            checkpoint: format!("checkpoints/{name}"),
        });
        println!(
            "L = {depth:>4}, seed {seed}: loss {:.3e} -> {:.3e} after {} updates",
            out.loss_history[0],
            out.final_loss(),
            out.updates
        );
    }
    loss_csv.finish()?;

    let run = json!({
        "train": cfg.train,
        "dataset": { "n": data.len(), "d": data.d, "k": data.k, "seed": data.seed },
        "depths": depths,
        "seeds": seeds,
        "runs": records,
    });
    io::write_json(&c.out.join("run.json"), &run)?;

    if let Some(summary) = summary {
        let denoised = denoised_losses(&cfg.train, &data, &summary, &outcomes, &depths)?;
        let report = json!({
            "summary": summary,
            "denoised": denoised,
            "reference_tanh": reference_json(),
        });
        io::write_json(&c.out.join("sweep.json"), &report)?;
        print_comparison(&summary, &cfg.train);
    }
    io::write_json(
        &c.out.join("timing.json"),
        &json!({ "wall_time_seconds": elapsed, "workers": pool.workers() }),
    )?;
    Ok(())
}

/// Loss of each seed's deepest network with every layer replaced by its
/// binned trend, next to the trained loss.
fn denoised_losses(
    train: &TrainConfig,
    data: &Dataset,
    summary: &SweepSummary,
    outcomes: &[TrainOutcome],
    depths: &[usize],
) -> CliResult<Vec<DenoisedRecord>> {
    let act = make_activation(train.activation)?;
    let (deepest_idx, &depth) = depths.iter().enumerate().max_by_key(|(_, l)| **l).unwrap();
    let mut out = Vec::new();
    for (s, row) in summary.rows.iter().enumerate() {
        let Some(beta) = row.beta_hat else { continue };
        let beta = beta.clamp(0.0, 1.0);
        let w = &outcomes[s * depths.len() + deepest_idx].weights;
        let bins = default_bins(depth);
        let ta = decompose_trend_noise(w, beta, bins, Component::A)?.trend;
        let tb = decompose_trend_noise(w, beta, bins, Component::B)?.trend;
        let smooth = denoise(w, &ta, &tb, beta)?;
        let loss = evaluate_loss(w, &act, data)?;
        let denoised_loss = evaluate_loss(&smooth, &act, data).unwrap_or(f64::INFINITY);
        out.push(DenoisedRecord {
            seed: row.seed,
            depth,
            beta,
            bins,
            loss,
            denoised_loss,
            ratio: denoised_loss / loss,
        });
    }
    Ok(out)
}

fn reference_json() -> serde_json::Value {
    let table = |t: &[(f64, [(f64, f64); 3]); 3]| {
        t.iter()
            .map(|(eta, cells)| {
                json!({
                    "learning_rate": eta,
                    "batch": REFERENCE_BATCHES.iter().zip(cells).map(|(b, (m, s))| json!({"batch_size": b, "mean": m, "std": s})).collect::<Vec<_>>(),
                })
            })
            .collect::<Vec<_>>()
    };
    json!({ "alpha": table(&REFERENCE_ALPHA), "beta": table(&REFERENCE_BETA) })
}

fn fmt(v: Option<(f64, f64)>) -> String {
    v.map_or("n/a".into(), |(m, s)| format!("{m:.2} ± {s:.2}"))
}

pub fn print_comparison(s: &SweepSummary, train: &TrainConfig) {
    println!("sweep over depths {:?}, {} seeds", s.depths, s.rows.len());
    println!(
        "  measured: alpha {}, beta {}, alpha+beta {}",
        fmt(s.alpha),
        fmt(s.beta),
        fmt(s.sum)
    );
    if train.activation != ActivationKind::Tanh {
        return;
    }
    let col = REFERENCE_BATCHES
        .iter()
        .position(|b| *b == train.batch_size);
    let row = REFERENCE_ALPHA
        .iter()
        .position(|(eta, _)| (eta - train.learning_rate).abs() < 1e-12);
    if let (Some(r), Some(c)) = (row, col) {
        let (a, b) = (REFERENCE_ALPHA[r].1[c], REFERENCE_BETA[r].1[c]);
        println!(
            "  reference (eta = {}, B = {}): alpha {:.2} ± {:.2}, beta {:.2} ± {:.2}",
            train.learning_rate, train.batch_size, a.0, a.1, b.0, b.1
        );
    }
}
