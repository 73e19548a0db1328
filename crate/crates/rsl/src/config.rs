//! JSON run configurations. Unknown fields are rejected and every error
//! carries the path of the offending field.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rsl_core::diagnostics::Thresholds;
use rsl_core::forward::{make_activation, Activation, ActivationKind};
use rsl_core::limits::Case;
use rsl_core::linalg::{Mat, Tensor4, Vector};
use rsl_core::processes::{ItoSpec, LayerFunction, TimeFn};
use rsl_core::train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Parses `path` (or `{}` when absent) into `T`.
pub fn load<T: DeserializeOwned>(path: Option<&Path>) -> CliResult<T> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => "{}".to_string(),
    };
    parse(&text).map_err(|e| match path {
        Some(p) => CliError::validation(format!("{}: {e}", p.display())),
        None => CliError::validation(e),
    })
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("field `{path}`: {}", e.inner())
        }
    })
}

fn matrix(rows: &[Vec<f64>], d: usize, field: &str) -> CliResult<Mat> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(CliError::validation(format!(
            "field `{field}`: expected a {d}×{d} matrix"
        )));
    }
    Ok(Mat::from_fn(d, d, |i, j| rows[i][j]))
}

fn vector(v: &[f64], d: usize, field: &str) -> CliResult<Vector> {
    if v.len() != d {
        return Err(CliError::validation(format!(
            "field `{field}`: expected {d} entries, got {}",
            v.len()
        )));
    }
    Ok(Vector::from_column_slice(v))
}

fn finite(vals: impl IntoIterator<Item = f64>, field: &str) -> CliResult<()> {
    if vals.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "field `{field}`: values must be finite"
        )))
    }
}

/// Profile `t ↦ (Ā_t, b̄_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerFunctionConfig {
    Zero {
        d: usize,
    },
    Constant {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// `Ā_t = base + sin(2π f t)·amplitude`, `b̄_t = b_base + sin(2π f t)·b_amplitude`.
    Sinusoid {
        base: Vec<Vec<f64>>,
        amplitude: Vec<Vec<f64>>,
        frequency: f64,
        #[serde(default)]
        b_base: Option<Vec<f64>>,
        #[serde(default)]
        b_amplitude: Option<Vec<f64>>,
    },
}

impl Default for LayerFunctionConfig {
    fn default() -> Self {
        LayerFunctionConfig::Zero { d: 1 }
    }
}

impl LayerFunctionConfig {
    pub fn dim(&self) -> usize {
        match self {
            LayerFunctionConfig::Zero { d } => *d,
            LayerFunctionConfig::Constant { b, .. } => b.len(),
            LayerFunctionConfig::Sinusoid { base, .. } => base.len(),
        }
    }

    pub fn build(&self, field: &str) -> CliResult<LayerFunction> {
        let d = self.dim();
        if d == 0 {
            return Err(CliError::validation(format!(
                "field `{field}`: dimension must be at least 1"
            )));
        }
        match self {
            LayerFunctionConfig::Zero { .. } => Ok(LayerFunction::zero(d)),
            LayerFunctionConfig::Constant { a, b } => {
                let a = matrix(a, d, &format!("{field}.a"))?;
                let b = vector(b, d, &format!("{field}.b"))?;
                finite(a.iter().chain(b.iter()).copied(), field)?;
                Ok(LayerFunction::constant(a, b)?)
            }
            LayerFunctionConfig::Sinusoid {
                base,
                amplitude,
                frequency,
                b_base,
                b_amplitude,
            } => {
                let base = matrix(base, d, &format!("{field}.base"))?;
                let amp = matrix(amplitude, d, &format!("{field}.amplitude"))?;
                let zeros = vec![0.0; d];
                let bb = vector(
                    b_base.as_deref().unwrap_or(&zeros),
                    d,
                    &format!("{field}.b_base"),
                )?;
                let ba = vector(
                    b_amplitude.as_deref().unwrap_or(&zeros),
                    d,
                    &format!("{field}.b_amplitude"),
                )?;
                finite(
                    base.iter()
                        .chain(amp.iter())
                        .chain(bb.iter())
                        .chain(ba.iter())
                        .copied()
                        .chain([*frequency]),
                    field,
                )?;
                let w = TAU * frequency;
                // |sin(wt) − sin(ws)| ≤ w|t − s|
                let m = w * w * (amp.norm_squared() + ba.norm_squared());
                let (amp2, ba2) = (amp.clone(), ba.clone());
                Ok(LayerFunction::new(
                    d,
                    TimeFn::varying(move |t| &base + &amp2 * (w * t).sin()),
                    TimeFn::varying(move |t| &bb + &ba2 * (w * t).sin()),
                    1.0,
                    m,
                )?)
            }
        }
    }
}

/// Coefficients of the weight noise `dW = U dt + q dB`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ItoConfig {
    Zero {
        d: usize,
    },
    /// `Σ^A_{ijij} = sigma_a`, `Σ^b = sigma_b·I`, optional constant drifts.
    Isotropic {
        d: usize,
        sigma_a: f64,
        sigma_b: f64,
        #[serde(default)]
        u_a: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        u_b: Option<Vec<f64>>,
    },
    /// `q_a` flattened row-major as `d⁴` entries `q^A_{ijkl}`.
    Constant {
        u_a: Vec<Vec<f64>>,
        u_b: Vec<f64>,
        q_a: Vec<f64>,
        q_b: Vec<Vec<f64>>,
    },
}

impl Default for ItoConfig {
    fn default() -> Self {
        ItoConfig::Zero { d: 1 }
    }
}

impl ItoConfig {
    pub fn dim(&self) -> usize {
        match self {
            ItoConfig::Zero { d } | ItoConfig::Isotropic { d, .. } => *d,
            ItoConfig::Constant { u_b, .. } => u_b.len(),
        }
    }

    pub fn build(&self, field: &str) -> CliResult<ItoSpec> {
        let d = self.dim();
        if d == 0 {
            return Err(CliError::validation(format!(
                "field `{field}`: dimension must be at least 1"
            )));
        }
        match self {
            ItoConfig::Zero { .. } => Ok(ItoSpec::zero(d)),
            ItoConfig::Isotropic {
                sigma_a,
                sigma_b,
                u_a,
                u_b,
                ..
            } => {
                if !(*sigma_a >= 0.0 && *sigma_b >= 0.0)
                    || !sigma_a.is_finite()
                    || !sigma_b.is_finite()
                {
                    return Err(CliError::validation(format!(
                        "field `{field}.sigma_a`/`{field}.sigma_b`: variances must be finite and non-negative"
                    )));
                }
                let spec = ItoSpec::isotropic(d, *sigma_a, *sigma_b)?;
                if u_a.is_none() && u_b.is_none() {
                    return Ok(spec);
                }
                let ua = match u_a {
                    Some(m) => matrix(m, d, &format!("{field}.u_a"))?,
                    None => Mat::zeros(d, d),
                };
                let ub = match u_b {
                    Some(v) => vector(v, d, &format!("{field}.u_b"))?,
                    None => Vector::zeros(d),
                };
                finite(ua.iter().chain(ub.iter()).copied(), field)?;
                Ok(spec.with_constant_drift(ua, ub)?)
            }
            ItoConfig::Constant { u_a, u_b, q_a, q_b } => {
                let ua = matrix(u_a, d, &format!("{field}.u_a"))?;
                let ub = vector(u_b, d, &format!("{field}.u_b"))?;
                let qb = matrix(q_b, d, &format!("{field}.q_b"))?;
                if q_a.len() != d * d * d * d {
                    return Err(CliError::validation(format!(
                        "field `{field}.q_a`: expected {} entries",
                        d * d * d * d
                    )));
                }
                finite(
                    ua.iter()
                        .chain(ub.iter())
                        .chain(qb.iter())
                        .chain(q_a.iter())
                        .copied(),
                    field,
                )?;
                let qa = Tensor4::from_flat(d, q_a.clone())?;
                Ok(ItoSpec::constant(ua, ub, qa, qb)?)
            }
        }
    }
}

pub fn activation(kind: ActivationKind) -> CliResult<Activation> {
    make_activation(kind).map_err(|e| CliError::validation(format!("field `activation`: {e}")))
}

/// Input vector `x`; defaults to `0.5·𝟙`.
pub fn input(x: &Option<Vec<f64>>, d: usize) -> CliResult<Vector> {
    match x {
        Some(v) => {
            let v = vector(v, d, "x")?;
            finite(v.iter().copied(), "x")?;
            Ok(v)
        }
        None => Ok(Vector::from_element(d, 0.5)),
    }
}

fn same_dim(f: &LayerFunctionConfig, ito: &ItoConfig) -> CliResult<usize> {
    let (df, di) = (f.dim(), ito.dim());
    if df != di {
        return Err(CliError::validation(format!(
            "field `ito`: dimension {di} does not match `layer_function` dimension {df}"
        )));
    }
    Ok(df)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeChoice {
    Regime1,
    Regime2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub regime: RegimeChoice,
    pub depth: usize,
    pub alpha: f64,
    pub beta: f64,
    pub activation: ActivationKind,
    pub layer_function: LayerFunctionConfig,
    pub ito: ItoConfig,
    pub x: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            seed: 0,
            regime: RegimeChoice::Regime1,
            depth: 8,
            alpha: 1.0,
            beta: 0.0,
            activation: ActivationKind::Tanh,
            layer_function: LayerFunctionConfig::default(),
            ito: ItoConfig::default(),
            x: None,
        }
    }
}

impl SimulateConfig {
    pub fn dim(&self) -> CliResult<usize> {
        match self.regime {
            RegimeChoice::Regime1 => Ok(self.layer_function.dim()),
            RegimeChoice::Regime2 => same_dim(&self.layer_function, &self.ito),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub seed: u64,
    pub case: Case,
    pub depths: Vec<usize>,
    pub n_paths: usize,
    pub alpha: f64,
    pub beta: f64,
    pub activation: ActivationKind,
    pub layer_function: LayerFunctionConfig,
    pub ito: ItoConfig,
    pub x: Option<Vec<f64>>,
    pub refinement: usize,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            seed: 0,
            case: Case::Regime2Sde,
            depths: vec![16, 32, 64, 128, 256, 512],
            n_paths: 200,
            alpha: 0.0,
            beta: 1.0,
            activation: ActivationKind::Identity,
            layer_function: LayerFunctionConfig::default(),
            ito: ItoConfig::Isotropic {
                d: 1,
                sigma_a: 1.0,
                sigma_b: 1.0,
                u_a: None,
                u_b: None,
            },
            x: None,
            refinement: 32,
        }
    }
}

impl ConvergeConfig {
    pub fn dim(&self) -> CliResult<usize> {
        same_dim(&self.layer_function, &self.ito)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub inputs: Vec<PathBuf>,
    pub bins: Option<usize>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n: 1024,
            d: 10,
            k: 100,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    /// Depths to train; defaults to `train.depth`.
    pub depths: Option<Vec<usize>>,
    /// Initialization seeds; defaults to the run seed.
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetRunConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackpropMode {
    /// Regime 1, identity activation, `α + β = 1`: `g_0` against the
    /// backward ODE limit.
    Deterministic,
    /// Regime 2 SDE scaling: `g` against `J_1 J_t^{-1}` on coupled paths.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackpropConfig {
    pub seed: u64,
    pub mode: BackpropMode,
    pub depths: Vec<usize>,
    pub n_paths: usize,
    pub alpha: f64,
    pub beta: f64,
    pub activation: ActivationKind,
    pub layer_function: LayerFunctionConfig,
    pub ito: ItoConfig,
    pub x: Option<Vec<f64>>,
    pub refinement: usize,
}

impl Default for BackpropConfig {
    fn default() -> Self {
        BackpropConfig {
            seed: 0,
            mode: BackpropMode::Deterministic,
            depths: vec![32, 128, 512],
            n_paths: 100,
            alpha: 1.0,
            beta: 0.0,
            activation: ActivationKind::Identity,
            layer_function: LayerFunctionConfig::Constant {
                a: vec![vec![0.2, 0.5], vec![-0.5, 0.1]],
                b: vec![0.0, 0.0],
            },
            ito: ItoConfig::Zero { d: 2 },
            x: None,
            refinement: 32,
        }
    }
}

impl BackpropConfig {
    pub fn dim(&self) -> CliResult<usize> {
        same_dim(&self.layer_function, &self.ito)
    }
}
