//! Backpropagation Jacobians `g_k = ∂h_L/∂h_k`, forward Jacobians
//! `J_k = ∂h_k/∂x`, and their continuous-depth limits.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::forward::{
    forward_hidden, Activation, HiddenTrajectory, MatrixTrajectory, Trajectory, EXPLOSION_THRESHOLD,
};
use crate::limits::{em_sde, rk4, SdeSpec, StudyConfig};
use crate::linalg::{condition_number, inverse_checked, Mat, Tensor4, Vector, COND_LIMIT};
use crate::processes::{
    covariance_tensors, regime2_weights, sample_ito_path_indexed, stride, ItoPath, LayerFunction,
    WeightTensor,
};
use crate::stats::{loglog_fit, mean_stderr, median};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    /// `g_k`, terminal value `g_L = I`.
    BackwardG,
    /// `J_k`, initial value `J_0 = I`.
    ForwardJ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianTrajectory {
    direction: Direction,
    traj: MatrixTrajectory,
}

impl JacobianTrajectory {
    pub fn new(direction: Direction, mats: Vec<Mat>) -> Result<Self> {
        Ok(JacobianTrajectory {
            direction,
            traj: Trajectory::new(mats)?,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn steps(&self) -> usize {
        self.traj.steps()
    }

    pub fn mats(&self) -> &[Mat] {
        self.traj.states()
    }

    pub fn mat(&self, k: usize) -> &Mat {
        self.traj.state(k)
    }

    pub fn trajectory(&self) -> &MatrixTrajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> MatrixTrajectory {
        self.traj
    }
}

/// `I + δ_k diag(σ′(A_k h_k + b_k)) A_k`.
pub fn layer_jacobian(w: &WeightTensor, k: usize, h: &Vector, act: &Activation) -> Mat {
    let a = &w.a()[k];
    let z = a * h + &w.b()[k];
    let delta = w.delta(k);
    let d = h.len();
    let mut m = Mat::identity(d, d);
    for i in 0..d {
        let s = delta * act.d1(z[i]);
        for j in 0..d {
            m[(i, j)] += s * a[(i, j)];
        }
    }
    m
}

fn check_hidden(w: &WeightTensor, hidden: &HiddenTrajectory) -> Result<()> {
    if hidden.steps() != w.depth() {
        return Err(Error::DimensionMismatch {
            expected: w.depth() + 1,
            got: hidden.steps() + 1,
        });
    }
    if hidden.first().len() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: hidden.first().len(),
        });
    }
    Ok(())
}

/// `g_L = I`, `g_k = g_{k+1}(I + δ_k diag(σ′(A_k h_k + b_k))A_k)`.
pub fn backward_jacobians(
    w: &WeightTensor,
    hidden: &HiddenTrajectory,
    act: &Activation,
) -> Result<JacobianTrajectory> {
    check_hidden(w, hidden)?;
    let (l, d) = (w.depth(), w.dim());
    let mut mats = alloc::vec![Mat::identity(d, d); l + 1];
    for k in (0..l).rev() {
        mats[k] = &mats[k + 1] * layer_jacobian(w, k, hidden.state(k), act);
    }
    JacobianTrajectory::new(Direction::BackwardG, mats)
}

/// `J_0 = I`, `J_{k+1} = (I + δ_k diag(σ′(A_k h_k + b_k))A_k) J_k`.
pub fn forward_jacobians(
    w: &WeightTensor,
    hidden: &HiddenTrajectory,
    act: &Activation,
) -> Result<JacobianTrajectory> {
    check_hidden(w, hidden)?;
    let (l, d) = (w.depth(), w.dim());
    let mut mats = Vec::with_capacity(l + 1);
    mats.push(Mat::identity(d, d));
    for k in 0..l {
        let next = layer_jacobian(w, k, hidden.state(k), act) * &mats[k];
        mats.push(next);
    }
    JacobianTrajectory::new(Direction::ForwardJ, mats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackwardKind {
    /// `dG/dt = −G diag(σ′(Ā_t H_t + b̄_t)) Ā_t`.
    Neural,
    /// `dG/dt = −G Ā_t`.
    Linear,
}

/// RK4 from `G_1 = I` back to `t = 0` on `steps` steps. `h` supplies the
/// forward limit and must live on a grid of a multiple of `2·steps` steps so
/// the RK4 midpoints are grid points. Returned in increasing time.
pub fn solve_backward_ode(
    kind: BackwardKind,
    f: &LayerFunction,
    act: &Activation,
    h: &HiddenTrajectory,
    steps: usize,
) -> Result<MatrixTrajectory> {
    if steps == 0 || !h.steps().is_multiple_of(2 * steps) {
        return Err(Error::GridMismatch(format!(
            "forward trajectory of {} steps cannot serve a backward grid of {steps} steps",
            h.steps()
        )));
    }
    let d = f.dim();
    if h.first().len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: h.first().len(),
        });
    }
    let n = h.steps() as f64;
    let mut mats = rk4(Mat::identity(d, d), 1.0, 0.0, steps, |t, g| {
        let a = f.a(t);
        match kind {
            BackwardKind::Linear => -(g * a.as_ref()),
            BackwardKind::Neural => {
                let ht = h.state(libm::round(t * n) as usize);
                let z = a.as_ref() * ht + f.b(t).as_ref();
                let mut da = a.into_owned();
                for i in 0..d {
                    let s = act.d1(z[i]);
                    da.row_mut(i).scale_mut(s);
                }
                -(g * da)
            }
        }
    })?;
    mats.reverse();
    Trajectory::new(mats)
}

/// `ν(t, h) = 𝟙_{β=1}Ā_t + ½σ″(0)∇_h Q(t, h)`.
pub fn nu_field(spec: &SdeSpec, t: f64, h: &Vector) -> Mat {
    nu_with(spec, t, h, None)
}

fn nu_with(spec: &SdeSpec, t: f64, h: &Vector, cov: Option<&(Tensor4, Mat)>) -> Mat {
    let d = h.len();
    let mut nu = if spec.beta_is_one {
        spec.f.a(t).into_owned()
    } else {
        Mat::zeros(d, d)
    };
    if spec.d2_at_zero != 0.0 {
        let owned;
        let sa = match cov {
            Some((sa, _)) => sa,
            None => {
                owned = covariance_tensors(&spec.ito, t).0;
                &owned
            }
        };
        let c = 0.5 * spec.d2_at_zero;
        for i in 0..d {
            for m in 0..d {
                let mut g = 0.0;
                for k in 0..d {
                    g += h[k] * (sa.get(i, m, i, k) + sa.get(i, k, i, m));
                }
                nu[(i, m)] += c * g;
            }
        }
    }
    nu
}

fn covariance_if_constant(spec: &SdeSpec) -> Option<(Tensor4, Mat)> {
    spec.ito
        .has_constant_diffusion()
        .then(|| covariance_tensors(&spec.ito, 0.0))
}

fn check_jacobian(m: &Mat, t: f64, k: usize, path: u64) -> Result<()> {
    let norm = m.norm();
    if !(norm <= EXPLOSION_THRESHOLD) {
        return Err(Error::Explosion {
            path,
            layer: k,
            norm,
        });
    }
    let cond = condition_number(m);
    if !(cond <= COND_LIMIT) {
        return Err(Error::Singular { t, cond });
    }
    Ok(())
}

fn check_sde_inputs(
    spec: &SdeSpec,
    h: &HiddenTrajectory,
    path: &ItoPath,
    steps: usize,
) -> Result<(usize, usize)> {
    let d = spec.dim();
    if path.dim() != d || h.first().len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if path.dim() != d {
                path.dim()
            } else {
                h.first().len()
            },
        });
    }
    Ok((stride(h.steps(), steps)?, stride(path.steps(), steps)?))
}

/// Euler–Maruyama for `dJ = (ν(t, H_t)dt + dW^A_t)J`, `J_0 = I`, on `steps`
/// steps; `h` and `path` may live on any grids that `steps` subsamples.
pub fn em_jacobian_sde(
    spec: &SdeSpec,
    h: &HiddenTrajectory,
    path: &ItoPath,
    steps: usize,
) -> Result<JacobianTrajectory> {
    let (sh, sp) = check_sde_inputs(spec, h, path, steps)?;
    let d = spec.dim();
    let dt = 1.0 / steps as f64;
    let cov = covariance_if_constant(spec);
    let mut mats = Vec::with_capacity(steps + 1);
    mats.push(Mat::identity(d, d));
    for k in 0..steps {
        let t = k as f64 * dt;
        let mut step = nu_with(spec, t, h.state(k * sh), cov.as_ref()) * dt;
        step += &path.wa()[(k + 1) * sp] - &path.wa()[k * sp];
        for i in 0..d {
            step[(i, i)] += 1.0;
        }
        let next = step * &mats[k];
        check_jacobian(&next, (k + 1) as f64 * dt, k + 1, path.path_index)?;
        mats.push(next);
    }
    JacobianTrajectory::new(Direction::ForwardJ, mats)
}

/// `G_t = J_1 J_t^{-1}` at every grid point.
pub fn g_limit_from_j(j: &JacobianTrajectory) -> Result<MatrixTrajectory> {
    let n = j.steps();
    let j1 = j.mat(n);
    let mats = (0..=n)
        .map(|k| Ok(j1 * inverse_checked(j.mat(k), k as f64 / n as f64)?))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(mats)
}

/// Euler–Maruyama for `dK = K(−ν dt − dW^A + d[W^A])`, `K_0 = I`, with the
/// quadratic-variation increment `(d[W^A])_{ij} = Σ_m Σ^A_{immj} dt`.
pub fn inverse_jacobian_sde(
    spec: &SdeSpec,
    h: &HiddenTrajectory,
    path: &ItoPath,
    steps: usize,
) -> Result<JacobianTrajectory> {
    let (sh, sp) = check_sde_inputs(spec, h, path, steps)?;
    let d = spec.dim();
    let dt = 1.0 / steps as f64;
    let cov = covariance_if_constant(spec);
    let mut mats = Vec::with_capacity(steps + 1);
    mats.push(Mat::identity(d, d));
    for k in 0..steps {
        let t = k as f64 * dt;
        let owned;
        let sa = match &cov {
            Some((sa, _)) => sa,
            None => {
                owned = covariance_tensors(&spec.ito, t).0;
                &owned
            }
        };
        let qv = Mat::from_fn(d, d, |i, j| {
            (0..d).map(|m| sa.get(i, m, m, j)).sum::<f64>() * dt
        });
        let mut step = qv - nu_with(spec, t, h.state(k * sh), cov.as_ref()) * dt;
        step -= &path.wa()[(k + 1) * sp] - &path.wa()[k * sp];
        for i in 0..d {
            step[(i, i)] += 1.0;
        }
        let next = &mats[k] * step;
        check_jacobian(&next, (k + 1) as f64 * dt, k + 1, path.path_index)?;
        mats.push(next);
    }
    JacobianTrajectory::new(Direction::ForwardJ, mats)
}

/// Mean over the grid of `‖g_k − G(t_k)‖_F`, a discrete `L¹` distance in time.
/// `limit` must live on a grid that the `g` grid subsamples.
pub fn l1_distance(g: &JacobianTrajectory, limit: &MatrixTrajectory) -> Result<f64> {
    let s = stride(limit.steps(), g.steps())?;
    let total: f64 = g
        .mats()
        .iter()
        .enumerate()
        .map(|(k, m)| (m - limit.state(k * s)).norm())
        .sum();
    Ok(total / (g.steps() + 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackpropResult {
    pub depths: Vec<usize>,
    /// Median over paths of the `L¹` distance between `ḡ` and `J_1 J_t^{-1}`.
    pub median_errors: Vec<f64>,
    pub mean_errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Log-log slope of the median errors.
    pub slope: f64,
    pub n_paths: usize,
    pub n_failed: usize,
    pub seed: u64,
}

fn backprop_path(
    cfg: &StudyConfig,
    spec: &SdeSpec,
    depths: &[usize],
    seed: u64,
    i: usize,
) -> Result<Option<Vec<f64>>> {
    let l_max = *depths.last().unwrap();
    let run = || -> Result<Vec<f64>> {
        let fine = sample_ito_path_indexed(&cfg.ito, l_max, cfg.refinement, seed, i as u64)?.fine;
        let h = em_sde(spec, &cfg.x, &fine, fine.steps())?;
        let j = em_jacobian_sde(spec, &h, &fine, fine.steps())?;
        let g_limit = g_limit_from_j(&j)?;
        depths
            .iter()
            .map(|&l| {
                let w = regime2_weights(&cfg.f, cfg.beta, l, &fine.subsample(l)?, 0.0)?;
                let hl = forward_hidden(&cfg.x, &w, &cfg.act)?;
                let g = backward_jacobians(&w, &hl, &cfg.act)?;
                l1_distance(&g, &g_limit)
            })
            .collect()
    };
    match run() {
        Ok(v) => Ok(Some(v)),
        Err(Error::Explosion { .. }) | Err(Error::Singular { .. }) => Ok(None),
        Err(e) => Err(e.on_path(i as u64)),
    }
}

/// Coupled Monte Carlo comparison of the discrete backward Jacobians with
/// `G_t = J_1 J_t^{-1}` in the SDE regime (`α = 0`, `β ≥ 1`).
pub fn backprop_study<E: Executor>(
    cfg: &StudyConfig,
    depths: &[usize],
    n_paths: usize,
    seed: u64,
    exec: &E,
) -> Result<BackpropResult> {
    if cfg.beta < 1.0 {
        return Err(Error::invalid(
            "beta",
            format!("backprop study needs β ≥ 1, got {}", cfg.beta),
        ));
    }
    if depths.len() < 2
        || depths.windows(2).any(|w| w[0] >= w[1])
        || depths.iter().any(|l| !l.is_power_of_two())
    {
        return Err(Error::invalid(
            "depths",
            "need at least 2 increasing powers of two",
        ));
    }
    if n_paths == 0 || cfg.refinement == 0 {
        return Err(Error::invalid(
            "n_paths",
            "need at least one path and refinement ≥ 1",
        ));
    }
    let spec = SdeSpec::new(
        cfg.f.clone(),
        cfg.ito.clone(),
        cfg.act.d2_at_zero,
        cfg.beta == 1.0,
    )?;
    if cfg.x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: cfg.x.len(),
        });
    }
    let per_path = exec.map(n_paths, |i| backprop_path(cfg, &spec, depths, seed, i));
    let mut kept = Vec::with_capacity(n_paths);
    let mut n_failed = 0;
    for r in per_path {
        match r? {
            Some(v) => kept.push(v),
            None => n_failed += 1,
        }
    }
    if n_failed * 100 > n_paths || kept.is_empty() {
        return Err(Error::TooManyExplosions {
            exploded: n_failed,
            total: n_paths,
        });
    }
    let mut median_errors = Vec::new();
    let mut mean_errors = Vec::new();
    let mut stderrs = Vec::new();
    for j in 0..depths.len() {
        let col: Vec<f64> = kept.iter().map(|v| v[j]).collect();
        let (m, se) = mean_stderr(&col);
        median_errors.push(median(&col));
        mean_errors.push(m);
        stderrs.push(se);
    }
    let slope = loglog_fit(depths, &median_errors).map_or(f64::NAN, |f| f.slope);
    Ok(BackpropResult {
        depths: depths.to_vec(),
        median_errors,
        mean_errors,
        stderrs,
        slope,
        n_paths,
        n_failed,
        seed,
    })
}
