//! Minibatch SGD on the synthetic regression task and the depth sweep that
//! feeds trained weights to the scaling diagnostics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngExt;

use crate::diagnostics::{estimate_alpha, estimate_beta, relu_fold, Component};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::forward::{forward_hidden, make_activation, Activation, ActivationKind};
use crate::linalg::{Mat, Vector};
use crate::processes::{gaussian_init_weights, StepSize, WeightTensor};
use crate::rng::{self, Substream};
use crate::stats::mean_std;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vector>,
    pub targets: Vec<Vector>,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, targets: Vec<Vector>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "need matching non-empty inputs and targets, got {} and {}",
                    inputs.len(),
                    targets.len()
                ),
            ));
        }
        let d = inputs[0].len();
        if inputs.iter().chain(&targets).any(|v| v.len() != d) {
            return Err(Error::invalid(
                "dataset",
                "all vectors must share one dimension",
            ));
        }
        Ok(Dataset {
            inputs,
            targets,
            d,
            k: 0,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// `z_k = z_{k−1} + K^{-1/2} tanh(sin(5kπ/K) z_{k−1} + cos(5kπ/K) 𝟙)`.
pub fn synthetic_step(z: &Vector, k: usize, kk: usize) -> Vector {
    let phase = 5.0 * k as f64 * core::f64::consts::PI / kk as f64;
    let (s, c) = (libm::sin(phase), libm::cos(phase));
    let scale = 1.0 / libm::sqrt(kk as f64);
    z.map(|v| v + scale * libm::tanh(s * v + c))
}

/// `N` samples with `x ~ U[−1, 1]^d` and `y = z_K / ‖z_K‖`. Sample `i` uses
/// its own stream, so a dataset prefix does not depend on `N`.
pub fn gen_synthetic(n: usize, d: usize, kk: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 || kk == 0 {
        return Err(Error::invalid("N/d/K", "all must be at least 1"));
    }
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(seed, Substream::Data, i as u64);
        loop {
            let x = Vector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
            let mut z = x.clone();
            for k in 1..=kk {
                z = synthetic_step(&z, k, kk);
            }
            let norm = z.norm();
            if norm > 0.0 && norm.is_finite() {
                inputs.push(x);
                targets.push(z / norm);
                break;
            }
        }
    }
    Ok(Dataset {
        inputs,
        targets,
        d,
        k: kk,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DeltaMode {
    /// One trainable `δ` shared by every layer.
    SharedScalar,
    /// An independent trainable `δ_k` per layer.
    PerLayerScalar,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop: f64,
    pub max_updates: usize,
    pub depth: usize,
    pub activation: ActivationKind,
    pub delta_mode: DeltaMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 0.01,
            early_stop: 0.01,
            max_updates: 4000,
            depth: 8,
            activation: ActivationKind::Tanh,
            delta_mode: DeltaMode::SharedScalar,
            seed: 0,
        }
    }
}

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e4;

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::invalid(
                "batch_size",
                format!("need 1 ≤ B ≤ N = {n}, got {}", self.batch_size),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(
                "learning_rate",
                "must be positive and finite",
            ));
        }
        if !(self.early_stop >= 0.0) {
            return Err(Error::invalid("early_stop", "must be non-negative"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("depth", "must be at least 1"));
        }
        make_activation(self.activation)?;
        Ok(())
    }
}

/// Gaussian weights with `δ = L^{-1/2}` (shared) or `δ_k = ±L^{-1/2}` with
/// independent fair signs (per layer).
pub fn init_weights(cfg: &TrainConfig, d: usize) -> Result<WeightTensor> {
    let l = cfg.depth;
    let w = gaussian_init_weights(l, d, cfg.seed)?;
    let mag = 1.0 / libm::sqrt(l as f64);
    let deltas = match cfg.delta_mode {
        DeltaMode::SharedScalar => vec![mag; l],
        DeltaMode::PerLayerScalar => {
            let mut r = rng::stream(cfg.seed, Substream::Delta, l as u64);
            (0..l)
                .map(|_| if r.random_bool(0.5) { mag } else { -mag })
                .collect()
        }
    };
    w.with_step(StepSize::PerLayer(deltas))
}

/// Parameter gradients with the same layout as a [`WeightTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub a: Vec<Mat>,
    pub b: Vec<Vector>,
    pub delta: Vec<f64>,
}

impl Gradients {
    fn zeros(l: usize, d: usize) -> Self {
        Gradients {
            a: vec![Mat::zeros(d, d); l],
            b: vec![Vector::zeros(d); l],
            delta: vec![0.0; l],
        }
    }
}

/// Mean-square loss `(1/n) Σ ‖h_L(x_i) − y_i‖²` over the selected samples
/// and its gradient, accumulated in index order. The backward pass carries
/// `v_k = g_{k+1}ᵀ ∂ℓ/∂ŷ` down the layers.
pub fn loss_and_gradients(
    w: &WeightTensor,
    act: &Activation,
    data: &Dataset,
    idx: &[usize],
) -> Result<(f64, Gradients)> {
    let (l, d) = (w.depth(), w.dim());
    let n = idx.len() as f64;
    let mut g = Gradients::zeros(l, d);
    let mut loss = 0.0;
    let mut zs = vec![Vector::zeros(d); l];
    for &i in idx {
        let x = &data.inputs[i];
        let h = forward_hidden(x, w, act)?;
        for (k, z) in zs.iter_mut().enumerate() {
            *z = &w.a()[k] * h.state(k) + &w.b()[k];
        }
        let r = h.last() - &data.targets[i];
        loss += r.norm_squared() / n;
        let mut v = r * (2.0 / n);
        for k in (0..l).rev() {
            let z = &zs[k];
            let delta = w.delta(k);
            g.delta[k] += (0..d).map(|j| act.f(z[j]) * v[j]).sum::<f64>();
            let u = Vector::from_fn(d, |j, _| delta * act.d1(z[j]) * v[j]);
            g.a[k].ger(1.0, &u, h.state(k), 1.0);
            g.b[k] += &u;
            v += w.a()[k].tr_mul(&u);
        }
    }
    Ok((loss, g))
}

/// `(1/N) Σ_i ‖h_L(x_i) − y_i‖²`.
pub fn evaluate_loss(w: &WeightTensor, act: &Activation, data: &Dataset) -> Result<f64> {
    if w.dim() != data.d {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: data.d,
        });
    }
    let n = data.len() as f64;
    let mut loss = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let h = forward_hidden(x, w, act)?;
        loss += (h.last() - y).norm_squared() / n;
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: WeightTensor,
    /// Full-data loss before training and after every update.
    pub loss_history: Vec<f64>,
    pub updates: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap()
    }
}

pub fn sgd_train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate(data.len())?;
    let w = init_weights(cfg, data.d)?;
    sgd_train_from(cfg, data, w)
}

/// SGD from given weights. Each epoch visits the samples in a fresh random
/// order; the full-data loss is checked after every update.
pub fn sgd_train_from(
    cfg: &TrainConfig,
    data: &Dataset,
    init: WeightTensor,
) -> Result<TrainOutcome> {
    cfg.validate(data.len())?;
    if init.dim() != data.d {
        return Err(Error::DimensionMismatch {
            expected: data.d,
            got: init.dim(),
        });
    }
    let act = make_activation(cfg.activation)?;
    let l = init.depth();
    let mut w = match init.deltas() {
        Some(_) => init,
        None => {
            let ds = (0..l).map(|k| init.delta(k)).collect();
            init.with_step(StepSize::PerLayer(ds))?
        }
    };
    let mut history = vec![evaluate_loss(&w, &act, data)?];
    let mut updates = 0;
    let mut epoch = 0u64;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    while history[updates] > cfg.early_stop && updates < cfg.max_updates {
        if cursor >= order.len() {
            order = (0..data.len()).collect();
            order.shuffle(&mut rng::stream(cfg.seed, Substream::Shuffle, epoch));
            epoch += 1;
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let (_, g) = loss_and_gradients(&w, &act, data, &order[cursor..end])?;
        cursor = end;
        apply_update(&mut w, &g, cfg.learning_rate, cfg.delta_mode)?;
        updates += 1;
        let loss = match evaluate_loss(&w, &act, data) {
            Ok(v) => v,
            Err(Error::Explosion { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if !(loss <= DIVERGENCE_LOSS) {
            return Err(Error::Divergence {
                update: updates,
                loss,
            });
        }
        history.push(loss);
    }
    Ok(TrainOutcome {
        weights: w,
        stopped_early: history[updates] <= cfg.early_stop,
        loss_history: history,
        updates,
    })
}

fn apply_update(w: &mut WeightTensor, g: &Gradients, eta: f64, mode: DeltaMode) -> Result<()> {
    for (a, ga) in w.a_mut().iter_mut().zip(&g.a) {
        *a -= ga * eta;
    }
    for (b, gb) in w.b_mut().iter_mut().zip(&g.b) {
        *b -= gb * eta;
    }
    let l = w.depth();
    let mut deltas: Vec<f64> = (0..l).map(|k| w.delta(k)).collect();
    match mode {
        DeltaMode::SharedScalar => {
            let total: f64 = g.delta.iter().sum();
            let shared = deltas[0] - eta * total;
            deltas.iter_mut().for_each(|d| *d = shared);
        }
        DeltaMode::PerLayerScalar => {
            for (d, gd) in deltas.iter_mut().zip(&g.delta) {
                *d -= eta * gd;
            }
        }
    }
    w.set_step(StepSize::PerLayer(deltas))
}

/// One trained network of the sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepCell {
    pub depth: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub updates: usize,
    pub stopped_early: bool,
}

/// Exponents estimated from one seed's family of depths.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub seed: u64,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    pub sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepSummary {
    pub depths: Vec<usize>,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
    /// `(mean, std)` over seeds with a defined estimate.
    pub alpha: Option<(f64, f64)>,
    pub beta: Option<(f64, f64)>,
    pub sum: Option<(f64, f64)>,
}

fn summarize(vals: impl Iterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = vals.flatten().collect();
    (!v.is_empty()).then(|| mean_std(&v))
}

/// Trains one network per `(depth, seed)`; for each seed regresses
/// `max_k |δ_k|` and `‖Σ_k A_k‖_F` on depth. Networks with ReLU are folded
/// (`|δ_k|` moved into the weights) before the `β` regression.
pub fn alpha_beta_sweep<E: Executor>(
    depths: &[usize],
    template: &TrainConfig,
    seeds: &[u64],
    data: &Dataset,
    exec: &E,
) -> Result<(SweepSummary, Vec<TrainOutcome>)> {
    if depths.len() < 3 {
        return Err(Error::invalid(
            "depths",
            "the sweep needs at least 3 depths",
        ));
    }
    if seeds.len() < 2 {
        return Err(Error::invalid("seeds", "the sweep needs at least 2 seeds"));
    }
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|s| depths.iter().map(move |l| (*s, *l)))
        .collect();
    let results = exec.map(jobs.len(), |j| {
        let (seed, depth) = jobs[j];
        sgd_train(
            &TrainConfig {
                depth,
                seed,
                ..template.clone()
            },
            data,
        )
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let cells = jobs
        .iter()
        .zip(&outcomes)
        .map(|(&(seed, depth), o)| SweepCell {
            depth,
            seed,
            final_loss: o.final_loss(),
            updates: o.updates,
            stopped_early: o.stopped_early,
        })
        .collect();
    let mut rows = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let fam: Vec<WeightTensor> = outcomes[i * depths.len()..(i + 1) * depths.len()]
            .iter()
            .map(|o| o.weights.clone())
            .collect();
        let alpha_hat = estimate_alpha(&fam);
        let analyzed = if template.activation == ActivationKind::Relu {
            fam.iter().map(relu_fold).collect::<Result<Vec<_>>>()?
        } else {
            fam
        };
        let beta_hat = estimate_beta(&analyzed, Component::A)?.value();
        rows.push(SweepRow {
            seed,
            alpha_hat,
            beta_hat,
            sum: alpha_hat.zip(beta_hat).map(|(a, b)| a + b),
        });
    }
    let summary = SweepSummary {
        depths: depths.to_vec(),
        alpha: summarize(rows.iter().map(|r| r.alpha_hat)),
        beta: summarize(rows.iter().map(|r| r.beta_hat)),
        sum: summarize(rows.iter().map(|r| r.sum)),
        cells,
        rows,
    };
    Ok((summary, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal;

    #[test]
    fn synthetic_first_step_golden() {
        let kk = 100;
        let z1 = synthetic_step(&Vector::zeros(10), 1, kk);
        let want = libm::tanh(libm::cos(5.0 * core::f64::consts::PI / 100.0)) / 10.0;
        assert!(z1.iter().all(|v| (*v - want).abs() < 1e-15));
    }

    #[test]
    fn dataset_invariants() {
        let a = gen_synthetic(64, 10, 100, 7).unwrap();
        let b = gen_synthetic(64, 10, 100, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(64, 10, 100, 8).unwrap());
        assert!(a.targets.iter().all(|y| (y.norm() - 1.0).abs() < 1e-12));
        assert!(a
            .inputs
            .iter()
            .all(|x| x.iter().all(|v| (-1.0..=1.0).contains(v))));
        let prefix = gen_synthetic(16, 10, 100, 7).unwrap();
        assert_eq!(prefix.inputs[..], a.inputs[..16]);
    }

    fn small_problem() -> (Dataset, WeightTensor) {
        let mut r = rng::stream(5, Substream::Aux, 0);
        let (d, l) = (3, 4);
        let inputs = (0..6)
            .map(|_| Vector::from_fn(d, |_, _| normal(&mut r)))
            .collect();
        let targets = (0..6)
            .map(|_| Vector::from_fn(d, |_, _| normal(&mut r)))
            .collect();
        let data = Dataset::new(inputs, targets).unwrap();
        let a = (0..l)
            .map(|_| Mat::from_fn(d, d, |_, _| 0.5 * normal(&mut r)))
            .collect();
        let b = (0..l)
            .map(|_| Vector::from_fn(d, |_, _| 0.5 * normal(&mut r)))
            .collect();
        let deltas = (0..l).map(|_| normal(&mut r)).collect();
        (
            data,
            WeightTensor::new(a, b, StepSize::PerLayer(deltas)).unwrap(),
        )
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (data, w) = small_problem();
        let idx: Vec<usize> = (0..data.len()).collect();
        for act in [
            Activation::tanh(),
            make_activation(ActivationKind::SmoothRelu { eps: 0.3 }).unwrap(),
        ] {
            let (_, g) = loss_and_gradients(&w, &act, &data, &idx).unwrap();
            let loss = |w: &WeightTensor| loss_and_gradients(w, &act, &data, &idx).unwrap().0;
            let eps = 1e-6;
            let check = |analytic: f64, plus: WeightTensor, minus: WeightTensor| {
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let rel = (analytic - fd).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-4, "analytic {analytic}, fd {fd}");
            };
            for k in 0..w.depth() {
                for i in 0..3 {
                    for j in 0..3 {
                        let (mut p, mut m) = (w.clone(), w.clone());
                        p.a_mut()[k][(i, j)] += eps;
                        m.a_mut()[k][(i, j)] -= eps;
                        check(g.a[k][(i, j)], p, m);
                    }
                    let (mut p, mut m) = (w.clone(), w.clone());
                    p.b_mut()[k][i] += eps;
                    m.b_mut()[k][i] -= eps;
                    check(g.b[k][i], p, m);
                }
                let shift = |s: f64| {
                    let mut ds = w.deltas().unwrap().to_vec();
                    ds[k] += s;
                    w.clone().with_step(StepSize::PerLayer(ds)).unwrap()
                };
                check(g.delta[k], shift(eps), shift(-eps));
            }
        }
    }

    #[test]
    fn adjoint_agrees_with_backward_jacobians() {
        use crate::backprop::backward_jacobians;
        let (data, w) = small_problem();
        let act = Activation::tanh();
        let (_, g) = loss_and_gradients(&w, &act, &data, &[2]).unwrap();
        let h = forward_hidden(&data.inputs[2], &w, &act).unwrap();
        let jac = backward_jacobians(&w, &h, &act).unwrap();
        let dl = (h.last() - &data.targets[2]) * 2.0;
        for k in 0..w.depth() {
            let v = jac.mat(k + 1).tr_mul(&dl);
            let z = &w.a()[k] * h.state(k) + &w.b()[k];
            let gb = Vector::from_fn(3, |j, _| w.delta(k) * act.d1(z[j]) * v[j]);
            assert!((gb - &g.b[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn small_step_does_not_increase_loss() {
        let (data, w) = small_problem();
        let act = Activation::tanh();
        let idx: Vec<usize> = (0..data.len()).collect();
        let (before, g) = loss_and_gradients(&w, &act, &data, &idx).unwrap();
        let mut w2 = w.clone();
        apply_update(&mut w2, &g, 1e-4, DeltaMode::PerLayerScalar).unwrap();
        assert!(evaluate_loss(&w2, &act, &data).unwrap() <= before);
    }

    #[test]
    fn zero_problem_needs_no_updates() {
        let data = Dataset::new(vec![Vector::zeros(2); 4], vec![Vector::zeros(2); 4]).unwrap();
        let w = WeightTensor::new(
            vec![Mat::zeros(2, 2); 3],
            vec![Vector::zeros(2); 3],
            StepSize::Exponent(0.5),
        )
        .unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            depth: 3,
            ..TrainConfig::default()
        };
        let out = sgd_train_from(&cfg, &data, w).unwrap();
        assert_eq!(out.updates, 0);
        assert_eq!(out.loss_history, vec![0.0]);
        assert!(out.stopped_early);
    }

    #[test]
    fn evaluate_loss_cases() {
        let w = WeightTensor::new(
            vec![Mat::zeros(1, 1)],
            vec![Vector::zeros(1)],
            StepSize::Exponent(0.0),
        )
        .unwrap();
        let data = Dataset::new(
            vec![Vector::from_element(1, 2.0)],
            vec![Vector::from_element(1, 1.0)],
        )
        .unwrap();
        assert_eq!(
            evaluate_loss(&w, &Activation::identity(), &data).unwrap(),
            1.0
        );
        let data = Dataset::new(
            vec![Vector::from_element(1, 2.0)],
            vec![Vector::from_element(1, 2.0)],
        )
        .unwrap();
        assert_eq!(
            evaluate_loss(&w, &Activation::identity(), &data).unwrap(),
            0.0
        );
    }

    #[test]
    fn training_is_deterministic_and_guards_divergence() {
        let data = gen_synthetic(64, 4, 20, 1).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            depth: 4,
            max_updates: 30,
            ..TrainConfig::default()
        };
        let a = sgd_train(&cfg, &data).unwrap();
        let b = sgd_train(&cfg, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_history.len(), a.updates + 1);
        let zero = sgd_train(
            &TrainConfig {
                max_updates: 0,
                ..cfg.clone()
            },
            &data,
        )
        .unwrap();
        assert_eq!(zero.updates, 0);
        let bad = sgd_train(
            &TrainConfig {
                learning_rate: 1e3,
                ..cfg.clone()
            },
            &data,
        );
        assert!(matches!(bad, Err(Error::Divergence { .. })), "{bad:?}");
        assert!(sgd_train(
            &TrainConfig {
                batch_size: 65,
                ..cfg
            },
            &data
        )
        .is_err());
    }

    #[test]
    fn per_layer_init_signs() {
        let cfg = TrainConfig {
            depth: 64,
            delta_mode: DeltaMode::PerLayerScalar,
            ..TrainConfig::default()
        };
        let w = init_weights(&cfg, 3).unwrap();
        let ds = w.deltas().unwrap();
        assert!(ds.iter().all(|d| (libm::fabs(*d) - 0.125).abs() < 1e-15));
        assert!(ds.iter().any(|d| *d > 0.0) && ds.iter().any(|d| *d < 0.0));
    }
}
