//! Continuous-depth limits of the forward recursion and strong-error studies
//! that compare discrete networks against them on coupled paths.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::forward::{
    forward_hidden, q_field, Activation, HiddenTrajectory, Trajectory, EXPLOSION_THRESHOLD,
};
use crate::linalg::{Mat, Tensor4, Vector};
use crate::processes::{
    covariance_tensors, regime1_weights, regime2_weights, sample_ito_path_indexed, stride, ItoPath,
    ItoSpec, LayerFunction,
};
use crate::stats::{loglog_fit, mean_stderr};

/// Coefficients of the SDE `dH = dW^A H + dW^b + ½σ″(0)Q dt + 𝟙_{β=1}(ĀH + b̄)dt`.
#[derive(Clone, Debug)]
pub struct SdeSpec {
    pub f: LayerFunction,
    pub ito: ItoSpec,
    pub d2_at_zero: f64,
    pub beta_is_one: bool,
}

impl SdeSpec {
    pub fn new(f: LayerFunction, ito: ItoSpec, d2_at_zero: f64, beta_is_one: bool) -> Result<Self> {
        if f.dim() != ito.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: ito.dim(),
            });
        }
        if !d2_at_zero.is_finite() {
            return Err(Error::invalid("d2_at_zero", "must be finite"));
        }
        Ok(SdeSpec {
            f,
            ito,
            d2_at_zero,
            beta_is_one,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// `𝟙_{β=1}(Ā_t h + b̄_t) + ½σ″(0)Q(t, h)`. The Itô drifts `U^A h + U^b`
    /// are not included: they are already part of the path increments.
    pub fn drift(&self, t: f64, h: &Vector) -> Vector {
        self.drift_with(t, h, None)
    }

    /// As [`SdeSpec::drift`], reusing precomputed `(Σ^A, Σ^b)` when given.
    pub(crate) fn drift_with(&self, t: f64, h: &Vector, cov: Option<&(Tensor4, Mat)>) -> Vector {
        let mut mu = Vector::zeros(h.len());
        if self.beta_is_one {
            mu += self.f.a(t).as_ref() * h + self.f.b(t).as_ref();
        }
        if self.d2_at_zero != 0.0 {
            let q = match cov {
                Some((sa, sb)) => q_field(sa, sb, h),
                None => {
                    let (sa, sb) = covariance_tensors(&self.ito, t);
                    q_field(&sa, &sb, h)
                }
            };
            mu += q * (0.5 * self.d2_at_zero);
        }
        mu
    }

    /// Covariances to pass to [`SdeSpec::drift_with`] when they do not vary in time.
    pub(crate) fn fixed_covariance(&self) -> Option<(Tensor4, Mat)> {
        (self.d2_at_zero != 0.0 && self.ito.has_constant_diffusion())
            .then(|| covariance_tensors(&self.ito, 0.0))
    }
}

/// States that RK4 can advance.
pub(crate) trait OdeState: Clone {
    fn add_scaled(&self, s: f64, other: &Self) -> Self;
    fn size(&self) -> f64;
}

macro_rules! ode_state {
    ($t:ty) => {
        impl OdeState for $t {
            fn add_scaled(&self, s: f64, other: &Self) -> Self {
                self + other * s
            }
            fn size(&self) -> f64 {
                self.norm()
            }
        }
    };
}
ode_state!(Vector);
ode_state!(Mat);

/// Classical RK4 from `t0` to `t1` in `steps` equal steps (`t1 < t0` runs
/// backwards). Returns the states in integration order.
pub(crate) fn rk4<S: OdeState>(
    x0: S,
    t0: f64,
    t1: f64,
    steps: usize,
    field: impl Fn(f64, &S) -> S,
) -> Result<Vec<S>> {
    if steps == 0 {
        return Err(Error::invalid("steps", "need at least one step"));
    }
    let h = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let y = &out[k];
        let k1 = field(t, y);
        let k2 = field(t + 0.5 * h, &y.add_scaled(0.5 * h, &k1));
        let k3 = field(t + 0.5 * h, &y.add_scaled(0.5 * h, &k2));
        let k4 = field(t + h, &y.add_scaled(h, &k3));
        let next = y
            .add_scaled(h / 6.0, &k1)
            .add_scaled(h / 3.0, &k2)
            .add_scaled(h / 3.0, &k3)
            .add_scaled(h / 6.0, &k4);
        let norm = next.size();
        if !(norm <= EXPLOSION_THRESHOLD) {
            return Err(Error::Explosion {
                path: 0,
                layer: k + 1,
                norm,
            });
        }
        out.push(next);
    }
    Ok(out)
}

fn check_input(f: &LayerFunction, x: &Vector) -> Result<()> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// RK4 solution of `dH/dt = σ(Ā_t H + b̄_t)` on `steps` equal steps.
pub fn solve_neural_ode(
    f: &LayerFunction,
    act: &Activation,
    x: &Vector,
    steps: usize,
) -> Result<HiddenTrajectory> {
    check_input(f, x)?;
    let states = rk4(x.clone(), 0.0, 1.0, steps, |t, h| {
        let mut z = f.a(t).as_ref() * h + f.b(t).as_ref();
        z.apply(|v| *v = act.f(*v));
        z
    })?;
    Trajectory::new(states)
}

/// RK4 solution of `dH/dt = Ā_t H + b̄_t` on `steps` equal steps.
pub fn solve_linear_ode(f: &LayerFunction, x: &Vector, steps: usize) -> Result<HiddenTrajectory> {
    check_input(f, x)?;
    let states = rk4(x.clone(), 0.0, 1.0, steps, |t, h| {
        f.a(t).as_ref() * h + f.b(t).as_ref()
    })?;
    Trajectory::new(states)
}

/// Euler–Maruyama on the `steps`-point subsampling of `path`, driven by the
/// path's own increments: `ĥ_{k+1} = ĥ_k + μ(t_k, ĥ_k)Δ + ΔW^A_k ĥ_k + ΔW^b_k`.
pub fn em_sde(
    spec: &SdeSpec,
    x: &Vector,
    path: &ItoPath,
    steps: usize,
) -> Result<HiddenTrajectory> {
    check_input(&spec.f, x)?;
    if path.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: path.dim(),
        });
    }
    let s = stride(path.steps(), steps)?;
    let dt = 1.0 / steps as f64;
    let cov = spec.fixed_covariance();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = &states[k];
        let mu = spec.drift_with(t, h, cov.as_ref());
        let da = &path.wa()[(k + 1) * s] - &path.wa()[k * s];
        let db = &path.wb()[(k + 1) * s] - &path.wb()[k * s];
        let next = h + mu * dt + da * h + db;
        let norm = next.norm();
        if !(norm <= EXPLOSION_THRESHOLD) {
            return Err(Error::Explosion {
                path: path.path_index,
                layer: k + 1,
                norm,
            });
        }
        states.push(next);
    }
    Trajectory::new(states)
}

/// `max_k ‖reference(t_k) − approx_k‖` over the grid of `approx`, which must
/// be a subsampling of the reference grid.
pub fn strong_error(reference: &HiddenTrajectory, approx: &HiddenTrajectory) -> Result<f64> {
    let s = stride(reference.steps(), approx.steps())?;
    let mut sup: f64 = 0.0;
    for (k, h) in approx.states().iter().enumerate() {
        let r = reference.state(k * s);
        if r.len() != h.len() {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: h.len(),
            });
        }
        sup = sup.max((r - h).norm());
    }
    Ok(sup)
}

/// Which depth limit a convergence study targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Case {
    /// Deterministic weights; neural ODE when `α = 1, β = 0`, linear ODE
    /// when `α + β = 1, β > 0`.
    Regime1Ode,
    /// Noisy weights with `α, β > 0`, `α + β = 1`; linear ODE limit.
    Regime2Ode,
    /// Noisy weights with `α = 0`, `β ≥ 1`; SDE limit.
    Regime2Sde,
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub f: LayerFunction,
    pub ito: ItoSpec,
    pub act: Activation,
    pub alpha: f64,
    pub beta: f64,
    pub x: Vector,
    /// Oracle grid for the SDE case is `refinement · max(depths)`.
    pub refinement: usize,
}

impl StudyConfig {
    pub fn new(
        f: LayerFunction,
        ito: ItoSpec,
        act: Activation,
        alpha: f64,
        beta: f64,
        x: Vector,
    ) -> Self {
        StudyConfig {
            f,
            ito,
            act,
            alpha,
            beta,
            x,
            refinement: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceResult {
    pub case: Case,
    pub depths: Vec<usize>,
    /// Monte Carlo mean of `sup_t ‖·‖²` per depth.
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// `errors^{1/2}`.
    pub rms_errors: Vec<f64>,
    /// OLS slope of `log errors` against `log L`.
    pub slope: f64,
    /// Slope of the root-mean-square error, `slope / 2`.
    pub rms_slope: f64,
    pub n_paths: usize,
    pub n_exploded: usize,
    pub seed: u64,
}

const EXACT: f64 = 1e-12;

#[derive(Clone, Copy)]
enum Oracle {
    Neural,
    Linear,
    Sde,
}

fn oracle_for(case: Case, cfg: &StudyConfig) -> Result<Oracle> {
    let (a, b) = (cfg.alpha, cfg.beta);
    let sums_to_one = (a + b - 1.0).abs() < EXACT;
    match case {
        Case::Regime1Ode if (a - 1.0).abs() < EXACT && b.abs() < EXACT => Ok(Oracle::Neural),
        Case::Regime1Ode if sums_to_one && b > 0.0 && a >= 0.0 => Ok(Oracle::Linear),
        Case::Regime1Ode => Err(Error::invalid(
            "alpha/beta",
            format!("regime-1 ODE study needs α=1, β=0 or α+β=1 with β>0, got α={a}, β={b}"),
        )),
        Case::Regime2Ode if sums_to_one && a > 0.0 && b > 0.0 => Ok(Oracle::Linear),
        Case::Regime2Ode => Err(Error::invalid(
            "alpha/beta",
            format!("regime-2 ODE study needs α, β > 0 with α+β=1, got α={a}, β={b}"),
        )),
        Case::Regime2Sde if a == 0.0 && b >= 1.0 => Ok(Oracle::Sde),
        Case::Regime2Sde => Err(Error::invalid(
            "alpha/beta",
            format!("regime-2 SDE study needs α=0, β≥1, got α={a}, β={b}"),
        )),
    }
}

fn check_depths(depths: &[usize]) -> Result<()> {
    if depths.len() < 2 {
        return Err(Error::invalid("depths", "need at least 2 depths"));
    }
    if depths.iter().any(|l| !l.is_power_of_two()) {
        return Err(Error::invalid("depths", "depths must be powers of two"));
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "depths",
            "depths must be strictly increasing",
        ));
    }
    Ok(())
}

/// Steps of the deterministic RK4 oracle for a ladder ending at `l_max`.
pub fn ode_oracle_steps(l_max: usize) -> usize {
    (1usize << 14).max(16 * l_max)
}

/// Squared sup errors of one Monte Carlo path at every depth; `None` if any
/// simulation on this path exploded.
fn path_errors(
    case: Case,
    oracle: Oracle,
    cfg: &StudyConfig,
    depths: &[usize],
    seed: u64,
    i: usize,
) -> Result<Option<Vec<f64>>> {
    let l_max = *depths.last().unwrap();
    let run = || -> Result<Vec<f64>> {
        let (reference, fine_path) = match oracle {
            Oracle::Neural => (
                solve_neural_ode(&cfg.f, &cfg.act, &cfg.x, ode_oracle_steps(l_max))?,
                None,
            ),
            Oracle::Linear => {
                let r = solve_linear_ode(&cfg.f, &cfg.x, ode_oracle_steps(l_max))?;
                let p = match case {
                    Case::Regime2Ode => {
                        Some(sample_ito_path_indexed(&cfg.ito, l_max, 1, seed, i as u64)?.fine)
                    }
                    _ => None,
                };
                (r, p)
            }
            Oracle::Sde => {
                let fine =
                    sample_ito_path_indexed(&cfg.ito, l_max, cfg.refinement, seed, i as u64)?.fine;
                let spec = SdeSpec::new(
                    cfg.f.clone(),
                    cfg.ito.clone(),
                    cfg.act.d2_at_zero,
                    cfg.beta == 1.0,
                )?;
                (em_sde(&spec, &cfg.x, &fine, fine.steps())?, Some(fine))
            }
        };
        depths
            .iter()
            .map(|&l| {
                let w = match &fine_path {
                    None => regime1_weights(&cfg.f, cfg.beta, l, cfg.alpha)?,
                    Some(p) => regime2_weights(&cfg.f, cfg.beta, l, &p.subsample(l)?, cfg.alpha)?,
                };
                let h = forward_hidden(&cfg.x, &w, &cfg.act)?;
                let e = strong_error(&reference, &h)?;
                Ok(e * e)
            })
            .collect()
    };
    match run() {
        Ok(v) => Ok(Some(v)),
        Err(Error::Explosion { .. }) => Ok(None),
        Err(e) => Err(e.on_path(i as u64)),
    }
}

/// Monte Carlo estimate of `E[sup_t ‖H_t − H̄^{(L)}_t‖²]` on each depth of a
/// dyadic ladder, with the discrete networks and the oracle sharing one
/// fine path per Monte Carlo sample. Exploded paths are dropped and counted;
/// more than 1% of them is an error.
pub fn convergence_study<E: Executor>(
    case: Case,
    cfg: &StudyConfig,
    depths: &[usize],
    n_paths: usize,
    seed: u64,
    exec: &E,
) -> Result<ConvergenceResult> {
    let oracle = oracle_for(case, cfg)?;
    check_depths(depths)?;
    check_input(&cfg.f, &cfg.x)?;
    if cfg.ito.dim() != cfg.f.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.f.dim(),
            got: cfg.ito.dim(),
        });
    }
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "need at least one path"));
    }
    if cfg.refinement == 0 {
        return Err(Error::invalid("refinement", "must be at least 1"));
    }

    // regime-1 weights are deterministic; one evaluation serves every path
    let per_path: Vec<Result<Option<Vec<f64>>>> = if case == Case::Regime1Ode {
        let one = path_errors(case, oracle, cfg, depths, seed, 0);
        vec![one; n_paths]
    } else {
        exec.map(n_paths, |i| path_errors(case, oracle, cfg, depths, seed, i))
    };

    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(n_paths);
    let mut n_exploded = 0;
    for r in per_path {
        match r? {
            Some(v) => kept.push(v),
            None => n_exploded += 1,
        }
    }
    if n_exploded * 100 > n_paths || kept.is_empty() {
        return Err(Error::TooManyExplosions {
            exploded: n_exploded,
            total: n_paths,
        });
    }

    let mut errors = Vec::with_capacity(depths.len());
    let mut stderrs = Vec::with_capacity(depths.len());
    for j in 0..depths.len() {
        let col: Vec<f64> = kept.iter().map(|v| v[j]).collect();
        let (m, se) = mean_stderr(&col);
        errors.push(m);
        stderrs.push(se);
    }
    let fit = loglog_fit(depths, &errors).ok_or_else(|| {
        Error::Insufficient(format!("cannot fit a log-log slope to errors {errors:?}"))
    })?;
    Ok(ConvergenceResult {
        case,
        depths: depths.to_vec(),
        rms_errors: errors.iter().map(|e| libm::sqrt(*e)).collect(),
        errors,
        stderrs,
        slope: fit.slope,
        rms_slope: fit.slope / 2.0,
        n_paths,
        n_exploded,
        seed,
    })
}
