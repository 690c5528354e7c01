//! Per-round run records and their CSV form.

use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum HistoryError {
    #[error("history is empty")]
    Empty,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("history csv line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One active-learning round: the state after refitting on all samples
/// acquired so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub samples: usize,
    pub train_err: f64,
    pub test_err: f64,
    pub rank: usize,
    pub objective: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub rounds: Vec<RoundRecord>,
}

pub const CSV_HEADER: &str = "round,samples,train_err,test_err,rank,objective,wall_ms";

// 17 significant digits: enough for exact f64 round trips.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

impl RunHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.round,
                r.samples,
                fmt(r.train_err),
                fmt(r.test_err),
                r.rank,
                fmt(r.objective),
                r.wall_ms
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HistoryError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            Some((_, header)) => {
                return Err(HistoryError::Parse {
                    line: 1,
                    reason: format!("unexpected header `{header}`"),
                })
            }
            None => return Err(HistoryError::Empty),
        }
        let mut rounds = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(HistoryError::Parse {
                    line: i + 1,
                    reason: format!("{} fields, expected 7", fields.len()),
                });
            }
            let parse_err = |reason: String| HistoryError::Parse {
                line: i + 1,
                reason,
            };
            rounds.push(RoundRecord {
                round: fields[0]
                    .parse()
                    .map_err(|_| parse_err("bad round".into()))?,
                samples: fields[1]
                    .parse()
                    .map_err(|_| parse_err("bad samples".into()))?,
                train_err: fields[2]
                    .parse()
                    .map_err(|_| parse_err("bad train_err".into()))?,
                test_err: fields[3]
                    .parse()
                    .map_err(|_| parse_err("bad test_err".into()))?,
                rank: fields[4].parse().map_err(|_| parse_err("bad rank".into()))?,
                objective: fields[5]
                    .parse()
                    .map_err(|_| parse_err("bad objective".into()))?,
                wall_ms: fields[6]
                    .parse()
                    .map_err(|_| parse_err("bad wall_ms".into()))?,
            });
        }
        Ok(RunHistory { rounds })
    }
}

/// Writes the history CSV; the history must contain at least one round.
pub fn emit_history(history: &RunHistory, path: &Path) -> Result<(), HistoryError> {
    if history.rounds.is_empty() {
        return Err(HistoryError::Empty);
    }
    std::fs::write(path, history.to_csv()).map_err(|source| HistoryError::Io {
        path: path.display().to_string(),
        source,
    })
}
