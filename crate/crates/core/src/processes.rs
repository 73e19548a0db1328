//! Layer functions, Itô noise models, sampled paths and weight tensors for
//! the two scaling regimes.

use alloc::borrow::Cow;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Tensor4, Vector};
use crate::rng::{self, Substream};

/// A coefficient that is either constant or an arbitrary function of the
/// layer time `t ∈ [0, 1]`.
#[derive(Clone)]
pub enum TimeFn<T> {
    Const(T),
    Varying(Arc<dyn Fn(f64) -> T + Send + Sync>),
}

impl<T: Clone> TimeFn<T> {
    pub fn varying(f: impl Fn(f64) -> T + Send + Sync + 'static) -> Self {
        TimeFn::Varying(Arc::new(f))
    }

    /// Evaluates at `t` clamped to `[0, 1]`, so the function is total there.
    #[inline]
    pub fn at(&self, t: f64) -> Cow<'_, T> {
        match self {
            TimeFn::Const(v) => Cow::Borrowed(v),
            TimeFn::Varying(f) => Cow::Owned(f(t.clamp(0.0, 1.0))),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, TimeFn::Const(_))
    }
}

impl<T: fmt::Debug> fmt::Debug for TimeFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Const(v) => f.debug_tuple("Const").field(v).finish(),
            TimeFn::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

/// Continuous layer profile `t ↦ (Ā_t, b̄_t)` with declared Hölder metadata
/// `‖Ā_t−Ā_s‖² + ‖b̄_t−b̄_s‖² ≤ M|t−s|^κ`.
#[derive(Clone, Debug)]
pub struct LayerFunction {
    d: usize,
    a_of: TimeFn<Mat>,
    b_of: TimeFn<Vector>,
    pub holder_kappa: f64,
    pub holder_const: f64,
}

impl LayerFunction {
    pub fn new(
        d: usize,
        a_of: TimeFn<Mat>,
        b_of: TimeFn<Vector>,
        holder_kappa: f64,
        holder_const: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if !(holder_kappa > 0.0) || !(holder_const >= 0.0) {
            return Err(Error::invalid("holder", "need kappa > 0 and M >= 0"));
        }
        let f = LayerFunction {
            d,
            a_of,
            b_of,
            holder_kappa,
            holder_const,
        };
        let (a0, b0) = (f.a(0.0), f.b(0.0));
        if a0.nrows() != d || a0.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a0.nrows(),
            });
        }
        if b0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b0.len(),
            });
        }
        Ok(f)
    }

    pub fn zero(d: usize) -> Self {
        LayerFunction::constant(Mat::zeros(d, d), Vector::zeros(d)).expect("consistent dims")
    }

    /// Constant profile; Hölder constant 0 with κ = 1.
    pub fn constant(a: Mat, b: Vector) -> Result<Self> {
        let d = b.len();
        LayerFunction::new(d, TimeFn::Const(a), TimeFn::Const(b), 1.0, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn a(&self, t: f64) -> Cow<'_, Mat> {
        self.a_of.at(t)
    }

    #[inline]
    pub fn b(&self, t: f64) -> Cow<'_, Vector> {
        self.b_of.at(t)
    }

    pub fn is_const(&self) -> bool {
        self.a_of.is_const() && self.b_of.is_const()
    }

    /// Left Riemann sum `L^{-1} Σ_{k<m} Ā_{k/L}`.
    pub fn riemann_a(&self, l: usize, m: usize) -> Mat {
        let mut acc = Mat::zeros(self.d, self.d);
        for k in 0..m {
            acc += &*self.a(k as f64 / l as f64);
        }
        acc / l as f64
    }

    /// Spot-checks the declared Hölder bound on the given pairs and returns
    /// the first violating pair.
    pub fn holder_violation(&self, pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
        pairs.iter().copied().find(|&(s, t)| {
            let da = (&*self.a(t) - &*self.a(s)).norm_squared();
            let db = (&*self.b(t) - &*self.b(s)).norm_squared();
            let bound = self.holder_const * libm::pow(libm::fabs(t - s), self.holder_kappa);
            da + db > bound * (1.0 + 1e-9) + 1e-14
        })
    }
}

/// Drift and diffusion coefficients of the Itô processes
/// `dW^A_ij = U^A_ij dt + Σ_kl q^A_ijkl dB^A_kl`, `dW^b = U^b dt + q^b dB^b`
/// driven by independent standard Brownian motions.
#[derive(Clone, Debug)]
pub struct ItoSpec {
    d: usize,
    u_a: TimeFn<Mat>,
    u_b: TimeFn<Vector>,
    q_a: TimeFn<Tensor4>,
    q_b: TimeFn<Mat>,
    pub bound_c1: f64,
    pub holder_kappa: f64,
    pub holder_const: f64,
}

impl ItoSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        u_a: TimeFn<Mat>,
        u_b: TimeFn<Vector>,
        q_a: TimeFn<Tensor4>,
        q_b: TimeFn<Mat>,
        bound_c1: f64,
        holder_kappa: f64,
        holder_const: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        let spec = ItoSpec {
            d,
            u_a,
            u_b,
            q_a,
            q_b,
            bound_c1,
            holder_kappa,
            holder_const,
        };
        let (ua, ub, qa, qb) = (spec.u_a(0.0), spec.u_b(0.0), spec.q_a(0.0), spec.q_b(0.0));
        if ua.nrows() != d
            || ua.ncols() != d
            || ub.len() != d
            || qa.dim() != d
            || qb.nrows() != d
            || qb.ncols() != d
        {
            return Err(Error::invalid(
                "ito",
                format!("coefficients must all have dimension {d}"),
            ));
        }
        Ok(spec)
    }

    /// Constant coefficients; C₁ is set to the exact supremum and the Hölder
    /// constant to zero.
    pub fn constant(u_a: Mat, u_b: Vector, q_a: Tensor4, q_b: Mat) -> Result<Self> {
        let d = u_b.len();
        let (sa, sb) = covariances(&q_a, &q_b);
        let c1 = u_a.norm() + u_b.norm() + sa.norm() + sb.norm();
        ItoSpec::new(
            d,
            TimeFn::Const(u_a),
            TimeFn::Const(u_b),
            TimeFn::Const(q_a),
            TimeFn::Const(q_b),
            c1,
            1.0,
            0.0,
        )
    }

    pub fn zero(d: usize) -> Self {
        ItoSpec::constant(
            Mat::zeros(d, d),
            Vector::zeros(d),
            Tensor4::zeros(d),
            Mat::zeros(d, d),
        )
        .expect("consistent dims")
    }

    /// Driftless noise with independent entries: `(Σ^A)_{ijij} = sigma_a`
    /// and `Σ^b = sigma_b · I`.
    pub fn isotropic(d: usize, sigma_a: f64, sigma_b: f64) -> Result<Self> {
        if !(sigma_a >= 0.0) || !(sigma_b >= 0.0) {
            return Err(Error::invalid("sigma", "variances must be non-negative"));
        }
        ItoSpec::constant(
            Mat::zeros(d, d),
            Vector::zeros(d),
            Tensor4::isotropic(d, libm::sqrt(sigma_a)),
            Mat::identity(d, d) * libm::sqrt(sigma_b),
        )
    }

    /// Same diffusion, constant drift replaced.
    pub fn with_constant_drift(mut self, u_a: Mat, u_b: Vector) -> Result<Self> {
        if u_a.nrows() != self.d || u_b.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: u_b.len(),
            });
        }
        self.bound_c1 += u_a.norm() + u_b.norm() - self.u_a(0.0).norm() - self.u_b(0.0).norm();
        self.u_a = TimeFn::Const(u_a);
        self.u_b = TimeFn::Const(u_b);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn u_a(&self, t: f64) -> Cow<'_, Mat> {
        self.u_a.at(t)
    }

    #[inline]
    pub fn u_b(&self, t: f64) -> Cow<'_, Vector> {
        self.u_b.at(t)
    }

    #[inline]
    pub fn q_a(&self, t: f64) -> Cow<'_, Tensor4> {
        self.q_a.at(t)
    }

    #[inline]
    pub fn q_b(&self, t: f64) -> Cow<'_, Mat> {
        self.q_b.at(t)
    }

    pub fn has_constant_diffusion(&self) -> bool {
        self.q_a.is_const() && self.q_b.is_const()
    }

    /// Largest value of `‖U^A‖+‖U^b‖+‖Σ^A‖+‖Σ^b‖` on `n+1` equispaced points.
    pub fn sup_coefficient_norm(&self, n: usize) -> f64 {
        (0..=n)
            .map(|k| {
                let t = k as f64 / n.max(1) as f64;
                let (sa, sb) = covariance_tensors(self, t);
                self.u_a(t).norm() + self.u_b(t).norm() + sa.norm() + sb.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Checks the uniform bound C₁ on a sampled grid.
    pub fn check_bound(&self, n: usize) -> Result<()> {
        let sup = self.sup_coefficient_norm(n);
        if sup > self.bound_c1 * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::invalid(
                "bound_c1",
                format!(
                    "sampled supremum {sup} exceeds declared C1 = {}",
                    self.bound_c1
                ),
            ));
        }
        Ok(())
    }
}

fn covariances(q_a: &Tensor4, q_b: &Mat) -> (Tensor4, Mat) {
    let d = q_a.dim();
    let sa = Tensor4::from_fn(d, |i1, j1, i2, j2| {
        let mut s = 0.0;
        for k in 0..d {
            for l in 0..d {
                s += q_a.get(i1, j1, k, l) * q_a.get(i2, j2, k, l);
            }
        }
        s
    });
    (sa, q_b * q_b.transpose())
}

/// `(Σ^A_t, Σ^b_t)` with `(Σ^A)_{i₁j₁i₂j₂} = Σ_kl q^A_{i₁j₁kl} q^A_{i₂j₂kl}`
/// and `Σ^b = q^b (q^b)ᵀ`.
pub fn covariance_tensors(spec: &ItoSpec, t: f64) -> (Tensor4, Mat) {
    covariances(&spec.q_a(t), &spec.q_b(t))
}

/// A realization of `(W^A, W^b)` on the equispaced grid `t_k = k/steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoPath {
    steps: usize,
    wa: Vec<Mat>,
    wb: Vec<Vector>,
    pub seed: u64,
    pub path_index: u64,
}

impl ItoPath {
    pub fn from_parts(wa: Vec<Mat>, wb: Vec<Vector>) -> Result<Self> {
        if wa.len() < 2 || wa.len() != wb.len() {
            return Err(Error::GridMismatch(format!(
                "need matching W^A/W^b samples on at least 2 points, got {} and {}",
                wa.len(),
                wb.len()
            )));
        }
        if wa[0].iter().any(|v| *v != 0.0) || wb[0].iter().any(|v| *v != 0.0) {
            return Err(Error::invalid("path", "paths must start at zero"));
        }
        Ok(ItoPath {
            steps: wa.len() - 1,
            wa,
            wb,
            seed: 0,
            path_index: 0,
        })
    }

    pub fn zero(d: usize, steps: usize) -> Self {
        ItoPath {
            steps,
            wa: (0..=steps).map(|_| Mat::zeros(d, d)).collect(),
            wb: (0..=steps).map(|_| Vector::zeros(d)).collect(),
            seed: 0,
            path_index: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.wb[0].len()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.steps as f64
    }

    pub fn wa(&self) -> &[Mat] {
        &self.wa
    }

    pub fn wb(&self) -> &[Vector] {
        &self.wb
    }

    /// `W^A_{t_{k+1}} − W^A_{t_k}`.
    pub fn da(&self, k: usize) -> Mat {
        &self.wa[k + 1] - &self.wa[k]
    }

    pub fn db(&self, k: usize) -> Vector {
        &self.wb[k + 1] - &self.wb[k]
    }

    /// Every `steps/coarse`-th point; the coarse grid must divide this one.
    pub fn subsample(&self, coarse: usize) -> Result<ItoPath> {
        let stride = stride(self.steps, coarse)?;
        Ok(ItoPath {
            steps: coarse,
            wa: self.wa.iter().step_by(stride).cloned().collect(),
            wb: self.wb.iter().step_by(stride).cloned().collect(),
            seed: self.seed,
            path_index: self.path_index,
        })
    }
}

/// Ratio between a fine grid and a coarse grid that divides it.
pub(crate) fn stride(fine: usize, coarse: usize) -> Result<usize> {
    if coarse == 0 || !fine.is_multiple_of(coarse) {
        return Err(Error::GridMismatch(format!(
            "a grid of {coarse} steps is not a subsampling of {fine} steps"
        )));
    }
    Ok(fine / coarse)
}

/// The fine path and its view on the coarse grid of `L` steps; both come
/// from the same Brownian draws.
#[derive(Debug, Clone)]
pub struct ItoSample {
    pub fine: ItoPath,
    pub coarse: ItoPath,
}

pub fn sample_ito_path(spec: &ItoSpec, l: usize, substeps: usize, seed: u64) -> Result<ItoSample> {
    sample_ito_path_indexed(spec, l, substeps, seed, 0)
}

/// Drift-plus-Gaussian stepping on `L·substeps` fine steps, with the
/// Brownian draws taken from the counter-keyed stream `(seed, Path, path_index)`.
pub fn sample_ito_path_indexed(
    spec: &ItoSpec,
    l: usize,
    substeps: usize,
    seed: u64,
    path_index: u64,
) -> Result<ItoSample> {
    if l == 0 {
        return Err(Error::invalid("L", "depth must be at least 1"));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    let d = spec.dim();
    let n = l * substeps;
    let h = 1.0 / n as f64;
    let sqrt_h = libm::sqrt(h);
    let mut rng = rng::stream(seed, Substream::Path, path_index);

    let mut wa = Vec::with_capacity(n + 1);
    let mut wb = Vec::with_capacity(n + 1);
    wa.push(Mat::zeros(d, d));
    wb.push(Vector::zeros(d));
    let mut za = Mat::zeros(d, d);
    let mut zb = Vector::zeros(d);
    let const_diffusion = spec.has_constant_diffusion();
    if const_diffusion {
        validate_diffusion(spec, 0.0)?;
    }

    for i in 0..n {
        let s = i as f64 * h;
        if !const_diffusion {
            validate_diffusion(spec, s)?;
        }
        for r in 0..d {
            for c in 0..d {
                za[(r, c)] = rng::normal(&mut rng);
            }
        }
        for r in 0..d {
            zb[r] = rng::normal(&mut rng);
        }
        let qa = spec.q_a(s);
        let mut da = spec.u_a(s).as_ref() * h;
        for r in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    for m in 0..d {
                        acc += qa.get(r, c, k, m) * za[(k, m)];
                    }
                }
                da[(r, c)] += sqrt_h * acc;
            }
        }
        let db = spec.u_b(s).as_ref() * h + spec.q_b(s).as_ref() * &zb * sqrt_h;
        let next_a = &wa[i] + da;
        let next_b = &wb[i] + db;
        wa.push(next_a);
        wb.push(next_b);
    }

    let fine = ItoPath {
        steps: n,
        wa,
        wb,
        seed,
        path_index,
    };
    let coarse = fine.subsample(l)?;
    Ok(ItoSample { fine, coarse })
}

fn validate_diffusion(spec: &ItoSpec, t: f64) -> Result<()> {
    // Σ = q qᵀ is PSD whenever q is finite; anything else is a broken spec.
    if !spec.q_a(t).is_finite() || !spec.q_b(t).iter().all(|v| v.is_finite()) {
        return Err(Error::NonPsdCovariance { t });
    }
    if !spec.u_a(t).iter().all(|v| v.is_finite()) || !spec.u_b(t).iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(
            "ito",
            format!("non-finite drift at t = {t}"),
        ));
    }
    Ok(())
}

/// How the residual branch of layer `k` is scaled.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StepSize {
    /// `δ_k = L^{-α}` for every layer.
    Exponent(f64),
    /// Explicit per-layer `δ_k`.
    PerLayer(Vec<f64>),
}

/// Discrete network parameters `A ∈ R^{L×d×d}`, `b ∈ R^{L×d}` and step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    d: usize,
    a: Vec<Mat>,
    b: Vec<Vector>,
    step: StepSize,
}

impl WeightTensor {
    pub fn new(a: Vec<Mat>, b: Vec<Vector>, step: StepSize) -> Result<Self> {
        let l = a.len();
        if l == 0 {
            return Err(Error::invalid("L", "need at least one layer"));
        }
        if b.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: b.len(),
            });
        }
        let d = b[0].len();
        for (ak, bk) in a.iter().zip(&b) {
            if ak.nrows() != d || ak.ncols() != d || bk.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bk.len(),
                });
            }
            if !ak.iter().chain(bk.iter()).all(|v| v.is_finite()) {
                return Err(Error::invalid("weights", "all entries must be finite"));
            }
        }
        check_step(&step, l)?;
        Ok(WeightTensor { d, a, b, step })
    }

    pub fn depth(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn a(&self) -> &[Mat] {
        &self.a
    }

    pub fn b(&self) -> &[Vector] {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut [Mat] {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut [Vector] {
        &mut self.b
    }

    pub fn step(&self) -> &StepSize {
        &self.step
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.step {
            StepSize::Exponent(a) => Some(a),
            StepSize::PerLayer(_) => None,
        }
    }

    pub fn deltas(&self) -> Option<&[f64]> {
        match &self.step {
            StepSize::PerLayer(d) => Some(d),
            StepSize::Exponent(_) => None,
        }
    }

    /// `δ_k`: the stored value, or `L^{-α}`.
    #[inline]
    pub fn delta(&self, k: usize) -> f64 {
        match &self.step {
            StepSize::Exponent(alpha) => libm::pow(self.depth() as f64, -alpha),
            StepSize::PerLayer(d) => d[k],
        }
    }

    pub fn with_step(self, step: StepSize) -> Result<Self> {
        WeightTensor::new(self.a, self.b, step)
    }

    pub fn set_step(&mut self, step: StepSize) -> Result<()> {
        check_step(&step, self.depth())?;
        self.step = step;
        Ok(())
    }
}

fn check_step(step: &StepSize, l: usize) -> Result<()> {
    match step {
        StepSize::Exponent(alpha) if !(alpha.is_finite() && *alpha >= 0.0) => {
            Err(Error::invalid("alpha", "must be finite and non-negative"))
        }
        StepSize::PerLayer(delta) if delta.len() != l => Err(Error::DimensionMismatch {
            expected: l,
            got: delta.len(),
        }),
        StepSize::PerLayer(delta) if !delta.iter().all(|v| v.is_finite()) => {
            Err(Error::invalid("delta", "all entries must be finite"))
        }
        _ => Ok(()),
    }
}

fn check_depth_beta(l: usize, beta: f64, max_beta: Option<f64>) -> Result<()> {
    if l == 0 {
        return Err(Error::invalid("L", "depth must be at least 1"));
    }
    let ok = beta >= 0.0 && beta.is_finite() && max_beta.is_none_or(|m| beta <= m);
    if !ok {
        return Err(Error::invalid(
            "beta",
            format!("beta = {beta} out of range"),
        ));
    }
    Ok(())
}

/// `A_k = L^{-β} Ā_{k/L}`, `b_k = L^{-β} b̄_{k/L}`, `δ = L^{-α}`.
pub fn regime1_weights(f: &LayerFunction, beta: f64, l: usize, alpha: f64) -> Result<WeightTensor> {
    check_depth_beta(l, beta, Some(1.0))?;
    let scale = libm::pow(l as f64, -beta);
    let (a, b) = (0..l)
        .map(|k| {
            let t = k as f64 / l as f64;
            (f.a(t).as_ref() * scale, f.b(t).as_ref() * scale)
        })
        .unzip();
    WeightTensor::new(a, b, StepSize::Exponent(alpha))
}

/// `A_k = L^{-β} Ā_{k/L} + W^A_{(k+1)/L} − W^A_{k/L}`, and likewise for b.
/// `path` must live on exactly the `L`-step grid.
pub fn regime2_weights(
    f: &LayerFunction,
    beta: f64,
    l: usize,
    path: &ItoPath,
    alpha: f64,
) -> Result<WeightTensor> {
    check_depth_beta(l, beta, None)?;
    if path.steps() != l {
        return Err(Error::GridMismatch(format!(
            "path has {} steps, network depth is {l}",
            path.steps()
        )));
    }
    if path.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: path.dim(),
        });
    }
    let scale = libm::pow(l as f64, -beta);
    let (a, b) = (0..l)
        .map(|k| {
            let t = k as f64 / l as f64;
            (
                f.a(t).as_ref() * scale + path.da(k),
                f.b(t).as_ref() * scale + path.db(k),
            )
        })
        .unzip();
    WeightTensor::new(a, b, StepSize::Exponent(alpha))
}

/// I.i.d. Gaussian initialization `A_k,mn ~ N(0, 1/(L d²))`,
/// `b_k,n ~ N(0, 1/(L d))`, with `α = 0` until a step size is attached.
pub fn gaussian_init_weights(l: usize, d: usize, seed: u64) -> Result<WeightTensor> {
    if l == 0 || d == 0 {
        return Err(Error::invalid(
            "L/d",
            "depth and dimension must be at least 1",
        ));
    }
    let mut rng = rng::stream(seed, Substream::Init, l as u64);
    let sd_a = 1.0 / (libm::sqrt(l as f64) * d as f64);
    let sd_b = 1.0 / libm::sqrt((l * d) as f64);
    let mut a = Vec::with_capacity(l);
    let mut b = Vec::with_capacity(l);
    for _ in 0..l {
        let mut ak = Mat::zeros(d, d);
        // row-major draw order
        for r in 0..d {
            for c in 0..d {
                ak[(r, c)] = sd_a * rng::normal(&mut rng);
            }
        }
        a.push(ak);
        b.push(Vector::from_fn(d, |_, _| sd_b * rng::normal(&mut rng)));
    }
    WeightTensor::new(a, b, StepSize::Exponent(0.0))
}
