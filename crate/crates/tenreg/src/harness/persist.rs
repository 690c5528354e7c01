//! Model persistence: a line-oriented text schema with full-precision
//! decimals, so a loaded model predicts bit-for-bit like the saved one.

use crate::cptensor::CpTensor;
use crate::polybasis::{BasisFamily, BasisKind};
use crate::surrogate::SurrogateModel;
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("model file declares schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("model file is truncated after line {0}")]
    Truncated(usize),
    #[error("model file is internally inconsistent: {0}")]
    Inconsistent(String),
}

/// Serializes a model to the text schema.
pub fn model_to_string(model: &SurrogateModel) -> String {
    let coeffs = model.coeffs();
    let mut out = String::new();
    let _ = writeln!(out, "schema_version {SCHEMA_VERSION}");
    let _ = writeln!(out, "family {}", model.basis().kind.name());
    let _ = writeln!(out, "d {}", coeffs.dims());
    let _ = writeln!(out, "p {}", model.basis().max_degree);
    let _ = writeln!(out, "rank {}", coeffs.rank());
    let _ = writeln!(out, "standardization");
    for &(mean, std) in model.standardization() {
        let _ = writeln!(out, "{mean} {std}");
    }
    for (k, factor) in coeffs.factors().iter().enumerate() {
        let _ = writeln!(out, "factor {k}");
        for i in 0..factor.nrows() {
            let row: Vec<String> = (0..factor.ncols())
                .map(|r| format!("{}", factor[(i, r)]))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn persist_model(model: &SurrogateModel, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, model_to_string(model)).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct LineParser<'a> {
    lines: std::str::Lines<'a>,
    current: usize,
}

impl<'a> LineParser<'a> {
    fn next_line(&mut self) -> Result<&'a str, PersistError> {
        self.current += 1;
        self.lines
            .next()
            .ok_or(PersistError::Truncated(self.current - 1))
    }

    fn expect_field(&mut self, key: &str) -> Result<&'a str, PersistError> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| PersistError::Parse {
                line: self.current,
                reason: format!("expected `{key} <value>`, got `{line}`"),
            })
    }

    fn parse_error(&self, reason: String) -> PersistError {
        PersistError::Parse {
            line: self.current,
            reason,
        }
    }
}

/// Parses a model from the text schema.
pub fn model_from_string(text: &str) -> Result<SurrogateModel, PersistError> {
    let mut parser = LineParser {
        lines: text.lines(),
        current: 0,
    };

    let version_line = parser.next_line()?;
    let version: u32 = version_line
        .strip_prefix("schema_version ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parser.parse_error("missing schema_version header".into()))?;
    if version != SCHEMA_VERSION {
        return Err(PersistError::SchemaVersion {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }

    let family_name = parser.expect_field("family")?;
    let kind = BasisKind::from_name(family_name).ok_or_else(|| PersistError::Parse {
        line: 2,
        reason: format!("unknown basis family `{family_name}`"),
    })?;
    let d: usize = parse_value(&mut parser, "d")?;
    let p: usize = parse_value(&mut parser, "p")?;
    let rank: usize = parse_value(&mut parser, "rank")?;

    let header = parser.next_line()?;
    if header != "standardization" {
        return Err(parser.parse_error(format!("expected `standardization`, got `{header}`")));
    }
    let mut standardization = Vec::with_capacity(d);
    for _ in 0..d {
        let line = parser.next_line()?;
        let mut parts = line.split_whitespace();
        let mean: f64 = parse_f64(parts.next(), &parser)?;
        let std: f64 = parse_f64(parts.next(), &parser)?;
        standardization.push((mean, std));
    }

    let mut factors = Vec::with_capacity(d);
    for k in 0..d {
        let header = parser.next_line()?;
        if header != format!("factor {k}") {
            return Err(parser.parse_error(format!("expected `factor {k}`, got `{header}`")));
        }
        let mut factor = DMatrix::zeros(p + 1, rank);
        for i in 0..=p {
            let line = parser.next_line()?;
            let entries: Vec<&str> = line.split_whitespace().collect();
            if entries.len() != rank {
                return Err(parser.parse_error(format!(
                    "factor row has {} entries, expected {rank}",
                    entries.len()
                )));
            }
            for (r, entry) in entries.iter().enumerate() {
                factor[(i, r)] = parse_f64(Some(entry), &parser)?;
            }
        }
        factors.push(factor);
    }

    let coeffs =
        CpTensor::new(factors).map_err(|e| PersistError::Inconsistent(e.to_string()))?;
    SurrogateModel::new(coeffs, BasisFamily::new(kind, p), standardization)
        .map_err(|e| PersistError::Inconsistent(e.to_string()))
}

fn parse_value<T: std::str::FromStr>(
    parser: &mut LineParser,
    key: &str,
) -> Result<T, PersistError> {
    let raw = parser.expect_field(key)?;
    raw.parse().map_err(|_| PersistError::Parse {
        line: parser.current,
        reason: format!("cannot parse `{raw}` as {key}"),
    })
}

fn parse_f64(raw: Option<&str>, parser: &LineParser) -> Result<f64, PersistError> {
    raw.and_then(|s| s.parse().ok())
        .ok_or_else(|| parser.parse_error("malformed decimal value".into()))
}

pub fn load_model(path: &Path) -> Result<SurrogateModel, PersistError> {
    let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_string(&text)
}
