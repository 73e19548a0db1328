use std::path::Path;

use serde_json::{json, Value};

/// Failures of a command, mapped onto the process exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, input files or parameters.
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] rsl_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(context: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 for invalid input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    /// Machine-readable diagnostic printed on stderr.
    pub fn diagnostic(&self) -> Value {
        let kind = if self.exit_code() == 3 {
            "numerical"
        } else {
            "validation"
        };
        let mut v = json!({ "error": kind, "message": self.to_string() });
        if let CliError::Core(e) = self {
            let detail = match e {
                rsl_core::Error::Explosion { path, layer, norm } => {
                    json!({ "type": "explosion", "path": path, "layer": layer, "norm": norm })
                }
                rsl_core::Error::Singular { t, cond } => {
                    json!({ "type": "singular", "t": t, "cond": cond })
                }
                rsl_core::Error::Divergence { update, loss } => {
                    json!({ "type": "divergence", "update": update, "loss": loss })
                }
                rsl_core::Error::TooManyExplosions { exploded, total } => {
                    json!({ "type": "too_many_explosions", "exploded": exploded, "total": total })
                }
                rsl_core::Error::InvalidParameter { field, .. } => {
                    json!({ "type": "invalid_parameter", "field": field })
                }
                _ => Value::Null,
            };
            if !detail.is_null() {
                v["detail"] = detail;
            }
        }
        v
    }
}
