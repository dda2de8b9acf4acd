use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use plmix::criteria::round_sig;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Significant digits of human-facing summaries.
pub const SUMMARY_DIGITS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: plmix::Error },
    #[error(transparent)]
    Model(#[from] plmix::Error),
}

impl CliError {
    /// 2 for bad invocations or inputs, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Model(e) => match e {
                plmix::Error::InvalidConfig(_) | plmix::Error::InvalidPrior(_) => 2,
                _ => 1,
            },
            CliError::Write { .. } => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON, floats at full precision.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Pretty JSON with every float rounded to the summary precision.
pub fn write_summary_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_json(path, &rounded(serde_json::to_value(value).expect("outputs serialize")))
}

pub fn rounded(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"), SUMMARY_DIGITS);
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(rounded).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Absolute form of an input path; a missing file is an input error.
pub fn resolve_input(path: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_touches_only_floats() {
        let v = rounded(json!({"a": 0.123456789, "b": [1, 2.0000004], "c": "x", "d": 12345678}));
        assert_eq!(v, json!({"a": 0.123457, "b": [1, 2.0], "c": "x", "d": 12345678}));
    }

    #[test]
    fn exit_codes() {
        let missing = CliError::Read {
            path: "x".into(),
            source: io::Error::from(io::ErrorKind::NotFound),
        };
        assert_eq!(missing.exit_code(), 2);
        assert_eq!(CliError::Model(plmix::Error::Numerical("x".into())).exit_code(), 1);
    }
}
