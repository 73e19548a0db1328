//! Depth-scaling diagnostics for families of weight tensors: Table-1 norms,
//! exponent regressions, trend/noise split, quadratic variation and a regime
//! label.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{flatten_row_major, Mat, Tensor4};
use crate::processes::{StepSize, WeightTensor};
use crate::stats::{loglog_fit, LineFit};

/// Which half of the parameters a diagnostic looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Component {
    A,
    B,
}

/// Layers of one component as matrices (`b_k` becomes a `d×1` column).
pub fn layers(w: &WeightTensor, comp: Component) -> Vec<Mat> {
    match comp {
        Component::A => w.a().to_vec(),
        Component::B => w
            .b()
            .iter()
            .map(|b| Mat::from_column_slice(b.len(), 1, b.as_slice()))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Table1 {
    /// `max_k ‖A_k‖_F`
    pub max_norm: f64,
    /// `‖Σ_k A_k‖_F`
    pub cumsum_norm: f64,
    /// `L^β max_k ‖A_{k+1} − A_k‖_F`, zero when `L = 1`.
    pub scaled_increment_norm: f64,
    /// `(Σ_k ‖A_k‖_F²)^{1/2}`
    pub rss: f64,
}

pub fn table1_norms(w: &WeightTensor, beta: f64, comp: Component) -> Table1 {
    table1_of(&layers(w, comp), beta)
}

/// Frobenius norm summed in storage order, so the table is reproducible by a
/// plain loop.
fn fro(m: &Mat) -> f64 {
    libm::sqrt(m.iter().fold(0.0, |acc, v| acc + v * v))
}

fn table1_of(ls: &[Mat], beta: f64) -> Table1 {
    let l = ls.len();
    let mut max_norm: f64 = 0.0;
    let mut sum = Mat::zeros(ls[0].nrows(), ls[0].ncols());
    let mut sq = 0.0;
    for m in ls {
        let n = fro(m);
        max_norm = max_norm.max(n);
        sq += n * n;
        sum += m;
    }
    let max_inc = ls
        .windows(2)
        .map(|p| fro(&(&p[1] - &p[0])))
        .fold(0.0, f64::max);
    Table1 {
        max_norm,
        cumsum_norm: fro(&sum),
        scaled_increment_norm: libm::pow(l as f64, beta) * max_inc,
        rss: libm::sqrt(sq),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "status", rename_all = "snake_case"))]
pub enum BetaEstimate {
    Estimate {
        beta: f64,
        r2: f64,
    },
    /// The cumulative sums vanish (`∫Ā ≈ 0`), so the regression is undefined.
    Inconclusive,
}

impl BetaEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            BetaEstimate::Estimate { beta, .. } => Some(*beta),
            BetaEstimate::Inconclusive => None,
        }
    }
}

fn check_family(tensors: &[WeightTensor]) -> Result<Vec<usize>> {
    if tensors.len() < 3 {
        return Err(Error::Insufficient(format!(
            "need at least 3 depths, got {}",
            tensors.len()
        )));
    }
    let depths: Vec<usize> = tensors.iter().map(|w| w.depth()).collect();
    let mut sorted = depths.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != depths.len() {
        return Err(Error::Insufficient("depths must be distinct".into()));
    }
    if (sorted[sorted.len() - 1] as f64) < 10.0 * sorted[0] as f64 {
        return Err(Error::Insufficient(format!(
            "depths {}..{} span less than one decade",
            sorted[0],
            sorted[sorted.len() - 1]
        )));
    }
    let d = tensors[0].dim();
    if let Some(w) = tensors.iter().find(|w| w.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: w.dim(),
        });
    }
    Ok(depths)
}

/// `β̂ = 1 − slope` of `log ‖Σ_k A_k‖_F` against `log L`.
pub fn estimate_beta(tensors: &[WeightTensor], comp: Component) -> Result<BetaEstimate> {
    let depths = check_family(tensors)?;
    let norms: Vec<Table1> = tensors.iter().map(|w| table1_norms(w, 0.0, comp)).collect();
    Ok(beta_from(&depths, &norms))
}

fn beta_from(depths: &[usize], norms: &[Table1]) -> BetaEstimate {
    if norms.iter().all(|n| n.cumsum_norm <= 1e-12 * n.max_norm) {
        return BetaEstimate::Inconclusive;
    }
    let cums: Vec<f64> = norms.iter().map(|n| n.cumsum_norm).collect();
    match loglog_fit(depths, &cums) {
        Some(LineFit { slope, r2, .. }) => BetaEstimate::Estimate {
            beta: 1.0 - slope,
            r2,
        },
        None => BetaEstimate::Inconclusive,
    }
}

/// Log-log slope of the `β`-scaled increment norm. Returns `−∞` when the
/// increments vanish at every depth.
pub fn estimate_smoothness(tensors: &[WeightTensor], beta: f64, comp: Component) -> Result<f64> {
    let depths = check_family(tensors)?;
    let vals: Vec<f64> = tensors
        .iter()
        .map(|w| table1_norms(w, beta, comp).scaled_increment_norm)
        .collect();
    Ok(smoothness_from(&depths, &vals))
}

fn smoothness_from(depths: &[usize], vals: &[f64]) -> f64 {
    let (ds, vs): (Vec<usize>, Vec<f64>) = depths
        .iter()
        .zip(vals)
        .filter(|(_, v)| **v > 0.0)
        .map(|(d, v)| (*d, *v))
        .unzip();
    loglog_fit(&ds, &vs).map_or(f64::NEG_INFINITY, |f| f.slope)
}

/// Piecewise-constant trend on `bins` equal sub-intervals of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    values: Vec<Mat>,
}

impl Trend {
    pub fn new(values: Vec<Mat>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("bins", "a trend needs at least one bin"));
        }
        Ok(Trend { values })
    }

    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn at(&self, t: f64) -> &Mat {
        &self.values[bin_of(t, self.bins())]
    }
}

fn bin_of(t: f64, bins: usize) -> usize {
    if !(t > 0.0) {
        return 0;
    }
    ((t * bins as f64) as usize).min(bins - 1)
}

/// Bin of layer `k` out of `l`, computed in integers so it is exact.
fn layer_bin(k: usize, l: usize, bins: usize) -> usize {
    k * bins / l
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Trend,
    /// `Ŵ_{k/L}` for `k = 0..=L`, starting at zero.
    pub noise: Vec<Mat>,
    pub beta: f64,
}

impl Decomposition {
    /// `L^{-β} Ā̂_{k/L} + Ŵ_{(k+1)/L} − Ŵ_{k/L}`.
    pub fn reconstruct(&self, k: usize) -> Mat {
        let l = self.noise.len() - 1;
        let scale = libm::pow(l as f64, -self.beta);
        self.trend.values[layer_bin(k, l, self.trend.bins())].clone() * scale
            + (&self.noise[k + 1] - &self.noise[k])
    }

    /// `L^{-β} Σ_{j<k} Ā̂_{j/L}` for `k = 0..=L`.
    pub fn trend_path(&self) -> Vec<Mat> {
        let l = self.noise.len() - 1;
        let scale = libm::pow(l as f64, -self.beta);
        let mut out = Vec::with_capacity(l + 1);
        let mut acc = Mat::zeros(self.noise[0].nrows(), self.noise[0].ncols());
        out.push(acc.clone());
        for k in 0..l {
            acc += &self.trend.values[layer_bin(k, l, self.trend.bins())] * scale;
            out.push(acc.clone());
        }
        out
    }
}

/// Default number of trend bins, `⌈√L⌉`.
pub fn default_bins(l: usize) -> usize {
    let mut b = libm::sqrt(l as f64) as usize;
    while b * b < l {
        b += 1;
    }
    b.max(1)
}

/// Binned mean of `L^β A_k` as the trend, residual cumulative sum as the
/// noise path.
pub fn decompose_trend_noise(
    w: &WeightTensor,
    beta: f64,
    bins: usize,
    comp: Component,
) -> Result<Decomposition> {
    decompose_layers(&layers(w, comp), beta, bins)
}

fn decompose_layers(ls: &[Mat], beta: f64, bins: usize) -> Result<Decomposition> {
    let l = ls.len();
    if bins == 0 || bins > l {
        return Err(Error::invalid(
            "bins",
            format!("need 1 ≤ bins ≤ L = {l}, got {bins}"),
        ));
    }
    if !beta.is_finite() {
        return Err(Error::invalid("beta", "must be finite"));
    }
    let (r, c) = (ls[0].nrows(), ls[0].ncols());
    let up = libm::pow(l as f64, beta);
    let mut sums = alloc::vec![Mat::zeros(r, c); bins];
    let mut counts = alloc::vec![0usize; bins];
    for (k, m) in ls.iter().enumerate() {
        let j = layer_bin(k, l, bins);
        sums[j] += m * up;
        counts[j] += 1;
    }
    let values = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, n)| s / *n as f64)
        .collect();
    let trend = Trend::new(values)?;
    let down = libm::pow(l as f64, -beta);
    let mut noise = Vec::with_capacity(l + 1);
    noise.push(Mat::zeros(r, c));
    for (k, m) in ls.iter().enumerate() {
        let inc = m - &trend.values[layer_bin(k, l, bins)] * down;
        let next = &noise[k] + inc;
        noise.push(next);
    }
    Ok(Decomposition { trend, noise, beta })
}

/// `Σ_k ΔŴ_k ⊗ ΔŴ_k` with increments flattened row-major, as an `m×m` matrix.
pub fn quadratic_variation_matrix(noise: &[Mat]) -> Result<Mat> {
    if noise.len() < 2 {
        return Err(Error::Insufficient(
            "quadratic variation needs a path of length ≥ 2".into(),
        ));
    }
    let m = noise[0].len();
    let mut qv = Mat::zeros(m, m);
    for p in noise.windows(2) {
        let inc = flatten_row_major(&(&p[1] - &p[0]));
        qv.ger(1.0, &inc, &inc, 1.0);
    }
    Ok(qv)
}

/// Quadratic variation of a matrix-valued path as a rank-4 tensor.
pub fn quadratic_variation(noise: &[Mat]) -> Result<Tensor4> {
    Tensor4::from_pair_matrix(&quadratic_variation_matrix(noise)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Regime {
    Regime1,
    Regime2,
    Sparse,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Thresholds {
    /// Smoothness slopes at or below this support a continuous trend.
    pub smoothness_cut: f64,
    /// Regime 1 needs `qv_norm < qv_ratio · trend_energy`.
    pub qv_ratio: f64,
    /// Log-log slopes with magnitude below this count as flat.
    pub flat_cut: f64,
    /// Regime 2 needs `β̂` at least this.
    pub min_beta_regime2: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            smoothness_cut: -0.25,
            qv_ratio: 0.1,
            flat_cut: 0.1,
            min_beta_regime2: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub depths: Vec<usize>,
    pub norms: Vec<Table1>,
    pub beta_hat: Option<f64>,
    pub smoothness_slope: f64,
    /// Frobenius norm of the noise quadratic variation at the largest depth.
    pub qv_norm: f64,
    /// `sup_k ‖L^{-β} Σ_{j<k} Ā̂_{j/L}‖²` at the largest depth.
    pub trend_energy: f64,
}

fn slope_of(depths: &[usize], vals: &[f64]) -> Option<f64> {
    loglog_fit(depths, vals).map(|f| f.slope)
}

/// Slopes of (cumsum, max, rss) norms against depth.
pub fn norm_slopes(ev: &Evidence) -> (Option<f64>, Option<f64>, Option<f64>) {
    let pick = |f: fn(&Table1) -> f64| ev.norms.iter().map(f).collect::<Vec<_>>();
    (
        slope_of(&ev.depths, &pick(|n| n.cumsum_norm)),
        slope_of(&ev.depths, &pick(|n| n.max_norm)),
        slope_of(&ev.depths, &pick(|n| n.rss)),
    )
}

/// Sparse is checked first, then Regime 1, then Regime 2. A `β̂` outside
/// `(−0.5, 1.5)` or missing gives Inconclusive.
pub fn classify_regime(ev: &Evidence, th: &Thresholds) -> Regime {
    let (cum, max, rss) = norm_slopes(ev);
    let flat = |s: Option<f64>| s.is_some_and(|s| s.abs() < th.flat_cut);
    if flat(cum) && flat(max) {
        return Regime::Sparse;
    }
    let beta = match ev.beta_hat {
        Some(b) if b > -0.5 && b < 1.5 => b,
        _ => return Regime::Inconclusive,
    };
    if ev.smoothness_slope <= th.smoothness_cut && ev.qv_norm < th.qv_ratio * ev.trend_energy {
        return Regime::Regime1;
    }
    let rss_bounded = rss.is_some_and(|s| s <= th.flat_cut);
    if ev.smoothness_slope > th.smoothness_cut && beta >= th.min_beta_regime2 && rss_bounded {
        return Regime::Regime2;
    }
    Regime::Inconclusive
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingReport {
    pub depths: Vec<usize>,
    pub norms_a: Vec<Table1>,
    pub norms_b: Vec<Table1>,
    pub beta_a: BetaEstimate,
    pub beta_b: BetaEstimate,
    /// `α̂ = −slope` of `log max_k |δ_k|`, when the family carries step sizes.
    pub alpha_hat: Option<f64>,
    /// Smoothness slope of `A` at the β used for the decomposition.
    pub smoothness_slope: f64,
    pub smoothness_slope_b: f64,
    /// β used for smoothness and decomposition: `β̂_A` clamped to `[0, 1]`,
    /// or 1 when `β̂_A` is inconclusive.
    pub beta_used: f64,
    pub bins: usize,
    /// Trend `Ā̂` of the deepest network, one row-major flattened matrix per bin.
    pub trend: Vec<Vec<f64>>,
    /// Noise path `Ŵ` of the deepest network, row-major flattened, `L+1` rows.
    pub noise: Vec<Vec<f64>>,
    pub qv_estimate: Tensor4,
    pub qv_norm: f64,
    pub trend_energy: f64,
    pub cumsum_slope: Option<f64>,
    pub max_slope: Option<f64>,
    pub rss_slope: Option<f64>,
    pub rss_bounded: bool,
    pub regime: Regime,
    pub thresholds: Thresholds,
}

/// `α̂ = −slope` of `log max_k |δ_k|` against `log L`.
pub fn estimate_alpha(tensors: &[WeightTensor]) -> Option<f64> {
    let depths: Vec<usize> = tensors.iter().map(|w| w.depth()).collect();
    let maxes: Vec<f64> = tensors
        .iter()
        .map(|w| {
            (0..w.depth())
                .map(|k| libm::fabs(w.delta(k)))
                .fold(0.0, f64::max)
        })
        .collect();
    loglog_fit(&depths, &maxes).map(|f| -f.slope)
}

/// Runs the four-step methodology on a family of tensors at distinct depths.
/// `bins` defaults to `⌈√L⌉` of the deepest tensor.
pub fn analyze_family(
    tensors: &[WeightTensor],
    bins: Option<usize>,
    th: &Thresholds,
) -> Result<ScalingReport> {
    let depths = check_family(tensors)?;
    let norms_a: Vec<Table1> = tensors
        .iter()
        .map(|w| table1_norms(w, 0.0, Component::A))
        .collect();
    let norms_b: Vec<Table1> = tensors
        .iter()
        .map(|w| table1_norms(w, 0.0, Component::B))
        .collect();
    let beta_a = beta_from(&depths, &norms_a);
    let beta_b = beta_from(&depths, &norms_b);
    let beta_used = beta_a.value().map_or(1.0, |b| b.clamp(0.0, 1.0));
    let inc = |c: Component| -> Vec<f64> {
        tensors
            .iter()
            .map(|w| table1_norms(w, beta_used, c).scaled_increment_norm)
            .collect()
    };
    let smoothness_slope = smoothness_from(&depths, &inc(Component::A));
    let smoothness_slope_b = smoothness_from(&depths, &inc(Component::B));

    let deepest = tensors.iter().max_by_key(|w| w.depth()).unwrap();
    let bins = bins.unwrap_or_else(|| default_bins(deepest.depth()));
    let dec = decompose_trend_noise(deepest, beta_used, bins, Component::A)?;
    let qv_estimate = quadratic_variation(&dec.noise)?;
    let qv_norm = qv_estimate.norm();
    let trend_energy = dec
        .trend_path()
        .iter()
        .map(|m| m.norm_squared())
        .fold(0.0, f64::max);

    let alpha_hat = estimate_alpha(tensors);
    let ev = Evidence {
        depths: depths.clone(),
        norms: norms_a.clone(),
        beta_hat: beta_a.value(),
        smoothness_slope,
        qv_norm,
        trend_energy,
    };
    let (cumsum_slope, max_slope, rss_slope) = norm_slopes(&ev);
    let regime = classify_regime(&ev, th);
    Ok(ScalingReport {
        depths,
        norms_a,
        norms_b,
        beta_a,
        beta_b,
        alpha_hat,
        smoothness_slope,
        smoothness_slope_b,
        beta_used,
        bins,
        trend: dec
            .trend
            .values()
            .iter()
            .map(|m| flatten_row_major(m).as_slice().to_vec())
            .collect(),
        noise: dec
            .noise
            .iter()
            .map(|m| flatten_row_major(m).as_slice().to_vec())
            .collect(),
        qv_estimate,
        qv_norm,
        trend_energy,
        cumsum_slope,
        max_slope,
        rss_slope,
        rss_bounded: rss_slope.is_some_and(|s| s <= th.flat_cut),
        regime,
        thresholds: *th,
    })
}

/// Moves `|δ_k|` inside the layer: `A_k ← |δ_k|A_k`, `b_k ← |δ_k|b_k`,
/// `δ_k ← sign(δ_k)`. Under ReLU the forward map is unchanged.
pub fn relu_fold(w: &WeightTensor) -> Result<WeightTensor> {
    let deltas = w.deltas().ok_or(Error::MissingDelta)?;
    let a = w
        .a()
        .iter()
        .zip(deltas)
        .map(|(a, d)| a * libm::fabs(*d))
        .collect();
    let b = w
        .b()
        .iter()
        .zip(deltas)
        .map(|(b, d)| b * libm::fabs(*d))
        .collect();
    let signs = deltas
        .iter()
        .map(|d| {
            if *d > 0.0 {
                1.0
            } else if *d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    WeightTensor::new(a, b, StepSize::PerLayer(signs))
}

/// Replaces every layer by its trend, `A_k ← L^{-β}Ā̂(k/L)` and
/// `b_k ← L^{-β}b̄̂(k/L)`, keeping the step sizes.
pub fn denoise(
    w: &WeightTensor,
    trend_a: &Trend,
    trend_b: &Trend,
    beta: f64,
) -> Result<WeightTensor> {
    let l = w.depth();
    let d = w.dim();
    let ok_a = trend_a.values.iter().all(|m| m.shape() == (d, d));
    let ok_b = trend_b.values.iter().all(|m| m.shape() == (d, 1));
    if !ok_a || !ok_b {
        return Err(Error::invalid(
            "trend",
            "trend shapes do not match the weight tensor",
        ));
    }
    let scale = libm::pow(l as f64, -beta);
    let a = (0..l)
        .map(|k| &trend_a.values[layer_bin(k, l, trend_a.bins())] * scale)
        .collect();
    let b = (0..l)
        .map(|k| {
            trend_b.values[layer_bin(k, l, trend_b.bins())]
                .column(0)
                .into_owned()
                * scale
        })
        .collect();
    WeightTensor::new(a, b, w.step().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{forward_hidden, Activation};
    use crate::linalg::Vector;
    use crate::processes::{regime1_weights, LayerFunction, TimeFn};
    use crate::rng::{normal, stream, Substream};
    use alloc::vec;

    fn constant_tensor(l: usize, m: &Mat) -> WeightTensor {
        WeightTensor::new(
            vec![m.clone(); l],
            vec![Vector::zeros(m.nrows()); l],
            StepSize::Exponent(0.0),
        )
        .unwrap()
    }

    #[test]
    fn table1_constant_and_spike() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.25]);
        let t = table1_norms(&constant_tensor(9, &m), 0.7, Component::A);
        let n = m.norm();
        assert_eq!(t.max_norm, n);
        assert!((t.cumsum_norm - 9.0 * n).abs() < 1e-12);
        assert_eq!(t.scaled_increment_norm, 0.0);
        assert!((t.rss - 3.0 * n).abs() < 1e-12);
        for l in [4usize, 40] {
            let mut a = vec![Mat::zeros(2, 2); l];
            a[0] = m.clone();
            let w =
                WeightTensor::new(a, vec![Vector::zeros(2); l], StepSize::Exponent(0.0)).unwrap();
            assert_eq!(table1_norms(&w, 0.0, Component::A).cumsum_norm, n);
        }
    }

    #[test]
    fn constant_family_has_beta_zero() {
        let m = Mat::from_element(2, 2, 0.3);
        let fam: Vec<_> = [8usize, 32, 128]
            .iter()
            .map(|l| constant_tensor(*l, &m))
            .collect();
        let b = estimate_beta(&fam, Component::A).unwrap().value().unwrap();
        assert!(b.abs() < 1e-10);
        assert_eq!(
            estimate_smoothness(&fam, 0.0, Component::A).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            estimate_beta(&fam, Component::B).unwrap(),
            BetaEstimate::Inconclusive
        );
        assert!(estimate_beta(&fam[..2], Component::A).is_err());
        let narrow: Vec<_> = [8usize, 16, 32]
            .iter()
            .map(|l| constant_tensor(*l, &m))
            .collect();
        assert!(matches!(
            estimate_beta(&narrow, Component::A),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn reconstruction_and_qv_of_zero() {
        let mut rng = stream(1, Substream::Aux, 0);
        let l = 50;
        let a: Vec<Mat> = (0..l)
            .map(|_| Mat::from_fn(3, 3, |_, _| normal(&mut rng)))
            .collect();
        let w = WeightTensor::new(a, vec![Vector::zeros(3); l], StepSize::Exponent(0.0)).unwrap();
        let dec = decompose_trend_noise(&w, 0.4, 7, Component::A).unwrap();
        for k in 0..l {
            let diff = (dec.reconstruct(k) - &w.a()[k]).norm();
            assert!(
                diff <= 8.0 * f64::EPSILON * w.a()[k].norm().max(1.0),
                "k = {k}: {diff}"
            );
        }
        assert!(decompose_trend_noise(&w, 0.4, 51, Component::A).is_err());
        let zero = vec![Mat::zeros(2, 2); 5];
        assert_eq!(quadratic_variation(&zero).unwrap(), Tensor4::zeros(2));
    }

    #[test]
    fn smooth_trend_is_absorbed() {
        let f = LayerFunction::new(
            2,
            TimeFn::varying(|t| {
                Mat::from_row_slice(
                    2,
                    2,
                    &[1.0 + libm::sin(3.0 * t), 0.5, libm::cos(2.0 * t), -0.3],
                )
            }),
            TimeFn::Const(Vector::zeros(2)),
            1.0,
            25.0,
        )
        .unwrap();
        let l = 1024;
        let w = regime1_weights(&f, 0.2, l, 0.8).unwrap();
        let dec = decompose_trend_noise(&w, 0.2, default_bins(l), Component::A).unwrap();
        let sup_noise = dec.noise.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let sup_trend = dec
            .trend_path()
            .iter()
            .map(|m| m.norm())
            .fold(0.0, f64::max);
        assert!(sup_noise <= 1e-2 * sup_trend, "{sup_noise} vs {sup_trend}");
    }

    #[test]
    fn relu_fold_properties() {
        let mut rng = stream(2, Substream::Aux, 0);
        let l = 12;
        let a: Vec<Mat> = (0..l)
            .map(|_| Mat::from_fn(3, 3, |_, _| normal(&mut rng)))
            .collect();
        let b: Vec<Vector> = (0..l)
            .map(|_| Vector::from_fn(3, |_, _| normal(&mut rng)))
            .collect();
        let ones =
            WeightTensor::new(a.clone(), b.clone(), StepSize::PerLayer(vec![1.0; l])).unwrap();
        assert_eq!(relu_fold(&ones).unwrap(), ones);
        let twos =
            WeightTensor::new(a.clone(), b.clone(), StepSize::PerLayer(vec![-2.0; l])).unwrap();
        let folded = relu_fold(&twos).unwrap();
        let relu = Activation::relu();
        let x = Vector::from_vec(vec![0.5, -0.25, 1.0]);
        assert_eq!(
            forward_hidden(&x, &twos, &relu).unwrap(),
            forward_hidden(&x, &folded, &relu).unwrap()
        );
        let mixed: Vec<f64> = (0..l)
            .map(|k| if k % 3 == 0 { -0.3 } else { 0.7 })
            .collect();
        let m = relu_fold(
            &WeightTensor::new(a.clone(), b.clone(), StepSize::PerLayer(mixed.clone())).unwrap(),
        )
        .unwrap();
        for (s, d) in m.deltas().unwrap().iter().zip(&mixed) {
            assert_eq!(libm::fabs(*s), 1.0);
            assert_eq!(s.signum(), d.signum());
        }
        assert_eq!(
            relu_fold(&WeightTensor::new(a, b, StepSize::Exponent(0.5)).unwrap()),
            Err(Error::MissingDelta)
        );
    }

    #[test]
    fn denoise_with_exact_trend() {
        let l = 16;
        let m = Mat::from_row_slice(2, 2, &[0.2, 0.1, 0.0, -0.4]);
        let w = constant_tensor(l, &(m.clone() * libm::pow(l as f64, -0.5)));
        let trend_a = Trend::new(vec![m]).unwrap();
        let trend_b = Trend::new(vec![Mat::zeros(2, 1)]).unwrap();
        let out = denoise(&w, &trend_a, &trend_b, 0.5).unwrap();
        for k in 0..l {
            assert!((&out.a()[k] - &w.a()[k]).norm() < 1e-15);
        }
    }

    #[test]
    fn sparse_and_inconclusive_labels() {
        let m = Mat::from_element(2, 2, 1.0);
        let depths = [16usize, 64, 256];
        let spikes: Vec<WeightTensor> = depths
            .iter()
            .map(|&l| {
                let mut a = vec![Mat::zeros(2, 2); l];
                a[l / 2] = m.clone();
                WeightTensor::new(a, vec![Vector::zeros(2); l], StepSize::Exponent(0.0)).unwrap()
            })
            .collect();
        assert_eq!(
            analyze_family(&spikes, None, &Thresholds::default())
                .unwrap()
                .regime,
            Regime::Sparse
        );
        let ev = Evidence {
            depths: depths.to_vec(),
            norms: vec![
                Table1 {
                    max_norm: 1.0,
                    cumsum_norm: 1.0,
                    scaled_increment_norm: 1.0,
                    rss: 1.0
                };
                3
            ],
            beta_hat: None,
            smoothness_slope: 0.0,
            qv_norm: 0.0,
            trend_energy: 0.0,
        };
        let mut grow = ev.clone();
        for (n, l) in grow.norms.iter_mut().zip(depths) {
            n.cumsum_norm = l as f64;
        }
        assert_eq!(
            classify_regime(&grow, &Thresholds::default()),
            Regime::Inconclusive
        );
    }
}
