//! File formats: the `wt-v1` weight directory, CSV series and JSON reports.

use std::fs;
use std::path::{Path, PathBuf};

use rsl_core::linalg::{flatten_row_major, Mat, Vector};
use rsl_core::processes::{StepSize, WeightTensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "wt-v1";
pub const LAYOUT: &str = "layer-major, row-major within layer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub d: usize,
    /// `null` when per-layer deltas are stored.
    pub alpha: Option<f64>,
    pub has_delta: bool,
    pub dtype: String,
    pub layout: String,
    pub endianness: String,
}

fn f64s_to_bytes(vals: impl Iterator<Item = f64>) -> Vec<u8> {
    vals.flat_map(f64::to_le_bytes).collect()
}

fn bytes_to_f64s(bytes: &[u8], expected: usize, file: &Path) -> CliResult<Vec<f64>> {
    if bytes.len() != expected * 8 {
        return Err(CliError::validation(format!(
            "{}: expected {expected} f64 values ({} bytes), found {} bytes",
            file.display(),
            expected * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Writes `dir/manifest.json`, `a.bin`, `b.bin` and, for per-layer step
/// sizes, `delta.bin`.
pub fn write_weights(dir: &Path, w: &WeightTensor) -> CliResult<()> {
    create_dir(dir)?;
    let manifest = Manifest {
        schema: SCHEMA.into(),
        l: w.depth(),
        d: w.dim(),
        alpha: w.alpha(),
        has_delta: w.deltas().is_some(),
        dtype: "f64".into(),
        layout: LAYOUT.into(),
        endianness: "little".into(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let a = f64s_to_bytes(
        w.a()
            .iter()
            .flat_map(|m| flatten_row_major(m).as_slice().to_vec()),
    );
    write_bytes(&dir.join("a.bin"), &a)?;
    let b = f64s_to_bytes(w.b().iter().flat_map(|v| v.as_slice().to_vec()));
    write_bytes(&dir.join("b.bin"), &b)?;
    if let Some(ds) = w.deltas() {
        write_bytes(&dir.join("delta.bin"), &f64s_to_bytes(ds.iter().copied()))?;
    }
    Ok(())
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join("manifest.json");
    let text = read(&path)?;
    let de = &mut serde_json::Deserializer::from_slice(&text);
    let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::validation(format!(
            "{}: malformed manifest at `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })?;
    let bad = |what: &str| CliError::validation(format!("{}: {what}", path.display()));
    if m.schema != SCHEMA {
        return Err(bad(&format!("unsupported schema `{}`", m.schema)));
    }
    if m.dtype != "f64" || m.endianness != "little" || m.layout != LAYOUT {
        return Err(bad(
            "only little-endian f64 in layer-major, row-major layout is supported",
        ));
    }
    if m.l == 0 || m.d == 0 {
        return Err(bad("L and d must be at least 1"));
    }
    if m.has_delta == m.alpha.is_some() {
        return Err(bad(
            "exactly one of `alpha` and `has_delta` must govern the step size",
        ));
    }
    Ok(m)
}

pub fn read_weights(dir: &Path) -> CliResult<WeightTensor> {
    let m = read_manifest(dir)?;
    let (l, d) = (m.l, m.d);
    let a_path = dir.join("a.bin");
    let a = bytes_to_f64s(&read(&a_path)?, l * d * d, &a_path)?;
    let b_path = dir.join("b.bin");
    let b = bytes_to_f64s(&read(&b_path)?, l * d, &b_path)?;
    let step = if m.has_delta {
        let p = dir.join("delta.bin");
        StepSize::PerLayer(bytes_to_f64s(&read(&p)?, l, &p)?)
    } else {
        StepSize::Exponent(m.alpha.unwrap())
    };
    let a = a
        .chunks_exact(d * d)
        .map(|c| Mat::from_row_slice(d, d, c))
        .collect();
    let b = b.chunks_exact(d).map(Vector::from_column_slice).collect();
    Ok(WeightTensor::new(a, b, step)?)
}

pub struct Csv {
    path: PathBuf,
    w: csv::Writer<fs::File>,
}

impl Csv {
    pub fn create(path: &Path, header: &[String]) -> CliResult<Self> {
        let w = csv::Writer::from_path(path)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let mut c = Csv {
            path: path.to_path_buf(),
            w,
        };
        c.row(header)?;
        Ok(c)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> CliResult<()> {
        self.w
            .write_record(fields)
            .map_err(|e| CliError::validation(format!("{}: {e}", self.path.display())))
    }

    pub fn nums(&mut self, vals: &[f64]) -> CliResult<()> {
        let fields: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        self.row(&fields)
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// `prefix_1 .. prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Header `t,m_11,m_12,..` for row-major flattened `r×c` matrices.
pub fn matrix_header(r: usize, c: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=r {
        for j in 1..=c {
            h.push(format!("m_{i}_{j}"));
        }
    }
    h
}

pub fn write_vector_trajectory(path: &Path, times: &[f64], states: &[Vector]) -> CliResult<()> {
    let d = states.first().map_or(0, |v| v.len());
    let mut header = vec!["t".to_string()];
    header.extend(numbered("h", d));
    let mut csv = Csv::create(path, &header)?;
    for (t, s) in times.iter().zip(states) {
        let mut row = vec![*t];
        row.extend(s.iter());
        csv.nums(&row)?;
    }
    csv.finish()
}

pub fn write_matrix_trajectory(path: &Path, times: &[f64], mats: &[Mat]) -> CliResult<()> {
    let (r, c) = mats.first().map_or((0, 0), |m| m.shape());
    let mut csv = Csv::create(path, &matrix_header(r, c))?;
    for (t, m) in times.iter().zip(mats) {
        let mut row = vec![*t];
        row.extend(flatten_row_major(m).iter());
        csv.nums(&row)?;
    }
    csv.finish()
}
