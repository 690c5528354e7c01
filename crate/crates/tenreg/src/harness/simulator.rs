//! Subprocess protocol for external simulators.
//!
//! One CSV line per point on the child's stdin (raw parameter space, LF
//! terminated), one decimal response per line on its stdout in the same
//! order. The whole batch runs under a single timeout; on expiry the child
//! is killed.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SimulatorError {
    #[error("failed to spawn simulator command `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("failed writing points to the simulator: {0}")]
    Write(std::io::Error),
    #[error("simulator output line {line}: {reason}")]
    Protocol { line: usize, reason: String },
    #[error("simulator exceeded the {0:?} batch timeout")]
    Timeout(Duration),
}

/// Formats one point as the protocol's CSV line.
pub fn format_point(point: &[f64]) -> String {
    let fields: Vec<String> = point.iter().map(|v| format!("{v}")).collect();
    fields.join(",")
}

/// Runs `command` through the shell, feeding `points` and reading one value
/// per point back.
pub fn external_simulator(
    command: &str,
    points: &[Vec<f64>],
    timeout: Duration,
) -> Result<Vec<f64>, SimulatorError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|source| SimulatorError::Spawn {
            command: command.to_string(),
            source,
        })?;

    let mut stdin = child.stdin.take().expect("stdin was piped");
    let stdout = child.stdout.take().expect("stdout was piped");
    let expected = points.len();

    let mut input = String::new();
    for point in points {
        input.push_str(&format_point(point));
        input.push('\n');
    }

    // Write in a thread so a child that reads nothing cannot deadlock us,
    // and read in a thread so we can enforce the timeout from here.
    let writer = std::thread::spawn(move || -> Result<(), std::io::Error> {
        stdin.write_all(input.as_bytes())?;
        Ok(())
    });

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let reader = BufReader::new(stdout);
        let result: Result<Vec<f64>, SimulatorError> = (|| {
            let mut values = Vec::with_capacity(expected);
            for (i, line) in reader.lines().enumerate() {
                if values.len() == expected {
                    break;
                }
                let line = line.map_err(|e| SimulatorError::Protocol {
                    line: i + 1,
                    reason: format!("read failure: {e}"),
                })?;
                let value: f64 =
                    line.trim()
                        .parse()
                        .map_err(|_| SimulatorError::Protocol {
                            line: i + 1,
                            reason: format!("cannot parse `{}` as a decimal value", line.trim()),
                        })?;
                values.push(value);
            }
            if values.len() < expected {
                return Err(SimulatorError::Protocol {
                    line: values.len() + 1,
                    reason: format!(
                        "simulator produced {} of {expected} expected values",
                        values.len()
                    ),
                });
            }
            Ok(values)
        })();
        let _ = tx.send(result);
    });

    let outcome = match rx.recv_timeout(timeout) {
        Ok(result) => result,
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SimulatorError::Timeout(timeout));
        }
    };
    // Kill unconditionally: a child that already exited ignores the signal,
    // and a long-running one must not outlive the batch.
    let _ = child.kill();
    let _ = child.wait();
    let _ = writer.join();
    outcome
}
