//! Orchestration of the active-learning loop: initial Latin hypercube
//! design, simulate, fit, adapt, repeat; plus built-in benchmarks, the
//! external-simulator protocol, and persistence of models and histories.

pub mod benchmarks;
pub mod history;
pub mod persist;
pub mod simulator;

use crate::cptensor::CpTensor;
use crate::polybasis::BasisFamily;
use crate::regression::{self, Dataset, RegressionError, SolverConfig};
use crate::sampling::{self, Design, SamplingError, SelectionMode};
use crate::surrogate::{SurrogateError, SurrogateModel};
use benchmarks::BenchmarkKind;
use history::{RoundRecord, RunHistory};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use simulator::SimulatorError;
use std::path::PathBuf;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Persist(#[from] persist::PersistError),
    #[error(transparent)]
    History(#[from] history::HistoryError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// CLI exit code: 2 for configuration errors, 3 for simulator/protocol
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Simulator(_) => 3,
            _ => 1,
        }
    }
}

/// How each adaptive batch is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Explore,
    Exploit,
    /// Baseline: i.i.d. draws from the input measure.
    Random,
}

impl RunMode {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "explore" => Some(RunMode::Explore),
            "exploit" => Some(RunMode::Exploit),
            "random" => Some(RunMode::Random),
            _ => None,
        }
    }
}

/// Where the response values come from.
#[derive(Debug, Clone)]
pub enum SimulatorSpec {
    Builtin(BenchmarkKind),
    External { command: String },
}

/// Full description of one active-learning run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: usize,
    pub order: usize,
    pub initial_rank: usize,
    pub q: f64,
    /// Penalty strength; `None` selects the default 1e-3 times the current
    /// number of training samples.
    pub lambda: Option<f64>,
    pub n_init: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    /// Monte-Carlo pool size per batch; `None` selects 100 times the design.
    pub pool_size: Option<usize>,
    pub mode: RunMode,
    pub seed: u64,
    pub simulator: SimulatorSpec,
    pub test_size: usize,
    /// Raw-space test set for external simulators: CSV lines `x1,..,xd,y`.
    pub test_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Per-dimension (mean, std) of the raw parameters.
    pub standardization: Vec<(f64, f64)>,
    /// Disables the rank penalty (lambda = 0, rank fixed at `initial_rank`).
    pub no_rank_penalty: bool,
    pub simulator_timeout: Duration,
}

impl RunConfig {
    /// Sensible defaults for a builtin benchmark run.
    pub fn builtin(dim: usize, kind: BenchmarkKind) -> Self {
        RunConfig {
            dim,
            order: 2,
            initial_rank: 4,
            q: 0.5,
            lambda: None,
            n_init: 60,
            n_batches: 6,
            batch_size: 10,
            pool_size: None,
            mode: RunMode::Explore,
            seed: 0,
            simulator: SimulatorSpec::Builtin(kind),
            test_size: 100_000,
            test_file: None,
            out_dir: None,
            standardization: vec![(0.0, 1.0); dim],
            no_rank_penalty: false,
            simulator_timeout: Duration::from_secs(600),
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let err = |msg: String| Err(HarnessError::Config(msg));
        if self.dim == 0 {
            return err("dimension must be at least 1".into());
        }
        if self.initial_rank == 0 || self.n_init == 0 || self.batch_size == 0 {
            return err("rank, initial samples and batch size must be at least 1".into());
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return err(format!("q must lie in (0, 1], got {}", self.q));
        }
        if self.standardization.len() != self.dim {
            return err(format!(
                "{} standardization pairs for dimension {}",
                self.standardization.len(),
                self.dim
            ));
        }
        if self.standardization.iter().any(|&(_, s)| !(s > 0.0)) {
            return err("standardization stds must be positive".into());
        }
        if let Some(l) = self.lambda {
            if l < 0.0 {
                return err(format!("lambda must be nonnegative, got {l}"));
            }
        }
        Ok(())
    }

    fn basis(&self) -> BasisFamily {
        BasisFamily::hermite(self.order)
    }

    fn effective_lambda(&self, n_samples: usize) -> f64 {
        if self.no_rank_penalty {
            0.0
        } else {
            self.lambda.unwrap_or(1e-3 * n_samples as f64)
        }
    }
}

// Disjoint deterministic seed streams per purpose.
fn derive_seed(base: u64, purpose: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(purpose)
}

fn standard_normal_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn to_raw(standardized: &[Vec<f64>], standardization: &[(f64, f64)]) -> Vec<Vec<f64>> {
    standardized
        .iter()
        .map(|p| {
            p.iter()
                .zip(standardization)
                .map(|(&x, &(mean, std))| mean + std * x)
                .collect()
        })
        .collect()
}

/// Pads a truncated model back to `target_rank` with small random column
/// groups so a warm start can re-grow rank if the data asks for it.
pub fn pad_to_rank(model: &CpTensor, target_rank: usize, seed: u64) -> CpTensor {
    if model.rank() >= target_rank {
        return model.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = target_rank - model.rank();
    let max_z = model
        .group_norms()
        .into_iter()
        .fold(0.0_f64, f64::max)
        .max(1.0);
    // each new group lands at about 1e-3 of the dominant group norm
    let scale = 1e-3 * max_z / (model.dims() as f64).sqrt();
    let factors = model
        .factors()
        .iter()
        .map(|f| {
            let mut padded = DMatrix::zeros(f.nrows(), target_rank);
            padded.view_mut((0, 0), (f.nrows(), f.ncols())).copy_from(f);
            for r in model.rank()..model.rank() + extra {
                let mut col: Vec<f64> =
                    (0..f.nrows()).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                for v in col.iter_mut() {
                    *v = *v / norm * scale;
                }
                for (i, v) in col.into_iter().enumerate() {
                    padded[(i, r)] = v;
                }
            }
            padded
        })
        .collect();
    CpTensor::new(factors).expect("padded factors are finite and well-shaped")
}

struct SimulatorHandle<'a> {
    cfg: &'a RunConfig,
    builtin: Option<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
}

impl<'a> SimulatorHandle<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        let builtin = match &cfg.simulator {
            SimulatorSpec::Builtin(kind) => Some(benchmarks::builtin_benchmark(
                *kind,
                cfg.dim,
                derive_seed(cfg.seed, 7),
            )),
            SimulatorSpec::External { .. } => None,
        };
        SimulatorHandle { cfg, builtin }
    }

    // points are standardized; external simulators receive raw space
    fn run(&self, standardized: &[Vec<f64>]) -> Result<Vec<f64>, HarnessError> {
        match (&self.cfg.simulator, &self.builtin) {
            (SimulatorSpec::Builtin(_), Some(f)) => {
                Ok(standardized.iter().map(|p| f(p)).collect())
            }
            (SimulatorSpec::External { command }, _) => {
                let raw = to_raw(standardized, &self.cfg.standardization);
                Ok(simulator::external_simulator(
                    command,
                    &raw,
                    self.cfg.simulator_timeout,
                )?)
            }
            _ => unreachable!("builtin closure exists whenever the spec is builtin"),
        }
    }
}

fn load_test_file(path: &PathBuf, dim: usize) -> Result<Dataset, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(HarnessError::Config(format!(
                "test file line {}: {} fields, expected {}",
                i + 1,
                fields.len(),
                dim + 1
            )));
        }
        let mut point = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            point.push(f.trim().parse().map_err(|_| {
                HarnessError::Config(format!("test file line {}: bad decimal `{f}`", i + 1))
            })?);
        }
        values.push(fields[dim].trim().parse().map_err(|_| {
            HarnessError::Config(format!("test file line {}: bad response value", i + 1))
        })?);
        points.push(point);
    }
    Ok(Dataset::new(points, values)?)
}

fn flush_outputs(
    cfg: &RunConfig,
    history: &RunHistory,
    model: Option<&SurrogateModel>,
) -> Result<(), HarnessError> {
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        if !history.rounds.is_empty() {
            history::emit_history(history, &dir.join("history.csv"))?;
        }
        if let Some(m) = model {
            persist::persist_model(m, &dir.join("model.txt"))?;
        }
    }
    Ok(())
}

/// Runs the full loop: initial Latin hypercube design, then `n_batches`
/// rounds of adaptive selection, simulation and warm-started refitting.
/// Persists the final model and history when an output directory is set;
/// on a simulator failure the partial history is flushed before erroring.
pub fn run_active_loop(cfg: &RunConfig) -> Result<RunHistory, HarnessError> {
    cfg.validate()?;
    let basis = cfg.basis();
    let sim = SimulatorHandle::new(cfg);
    let mut history = RunHistory::default();

    // test set: fresh Monte Carlo for builtins, user file for external
    let test_data = match &cfg.simulator {
        SimulatorSpec::Builtin(_) => {
            let standardized =
                standard_normal_points(cfg.test_size, cfg.dim, derive_seed(cfg.seed, 2));
            let values = sim.run(&standardized)?;
            let raw = to_raw(&standardized, &cfg.standardization);
            Some(Dataset::new(raw, values)?)
        }
        SimulatorSpec::External { .. } => match &cfg.test_file {
            Some(path) => Some(load_test_file(path, cfg.dim)?),
            None => None,
        },
    };

    let unit = sampling::latin_hypercube(cfg.n_init, cfg.dim, derive_seed(cfg.seed, 1));
    let mut standardized_points = sampling::to_standard_normal(&unit);
    let mut values = match sim.run(&standardized_points) {
        Ok(v) => v,
        Err(e) => {
            flush_outputs(cfg, &history, None)?;
            return Err(e);
        }
    };

    let mut model: Option<CpTensor> = None;
    let mut surrogate_model: Option<SurrogateModel> = None;

    for round in 0..=cfg.n_batches {
        let started = Instant::now();
        if round > 0 {
            let design = Design::new(standardized_points.clone())?;
            let new_points = match cfg.mode {
                RunMode::Random => standard_normal_points(
                    cfg.batch_size,
                    cfg.dim,
                    derive_seed(cfg.seed, 200 + round as u64),
                ),
                RunMode::Explore | RunMode::Exploit => {
                    let pool_size = cfg.pool_size.unwrap_or(100 * design.len());
                    let est = sampling::estimate_voronoi(
                        &design,
                        pool_size,
                        derive_seed(cfg.seed, 100 + round as u64),
                    )?;
                    let mode = match cfg.mode {
                        RunMode::Explore => SelectionMode::Explore,
                        _ => SelectionMode::Exploit,
                    };
                    sampling::select_batch(&est, model.as_ref(), basis, cfg.batch_size, mode)?
                }
            };
            let new_values = match sim.run(&new_points) {
                Ok(v) => v,
                Err(e) => {
                    flush_outputs(cfg, &history, surrogate_model.as_ref())?;
                    return Err(e);
                }
            };
            standardized_points.extend(new_points);
            values.extend(new_values);
        }

        let data = Dataset::new(standardized_points.clone(), values.clone())?;
        let mut solver = SolverConfig::new(
            cfg.initial_rank,
            cfg.q,
            cfg.effective_lambda(data.len()),
        );
        solver.seed = derive_seed(cfg.seed, 3);
        if cfg.no_rank_penalty {
            // fixed-rank baseline: keep every group
            solver.truncation_rel_threshold = f64::MIN_POSITIVE;
        }
        let warm = model
            .as_ref()
            .map(|m| pad_to_rank(m, cfg.initial_rank, derive_seed(cfg.seed, 300 + round as u64)));
        // Best-of fit: the warm start carries information across rounds, but
        // with few samples relative to parameters a sweep can settle in a
        // poor basin; fresh restarts give the objective a vote.
        let mut fit = regression::fit_with_init(&data, basis, &solver, warm.as_ref())?;
        let restarts = if warm.is_some() { 1 } else { 2 };
        for attempt in 0..restarts {
            let mut alt_solver = solver.clone();
            alt_solver.seed = derive_seed(cfg.seed, 400 + 10 * round as u64 + attempt);
            let alt = regression::fit_with_init(&data, basis, &alt_solver, None)?;
            let best = fit.history.last().map(|s| s.objective).unwrap_or(f64::MAX);
            let alt_obj = alt.history.last().map(|s| s.objective).unwrap_or(f64::MAX);
            if alt_obj < best {
                fit = alt;
            }
        }

        let surrogate = SurrogateModel::new(
            fit.model.clone(),
            basis,
            cfg.standardization.clone(),
        )?;
        let raw_train = to_raw(&standardized_points, &cfg.standardization);
        let train_err =
            surrogate.relative_error(&Dataset::new(raw_train, values.clone())?)?;
        let test_err = match &test_data {
            Some(test) => surrogate.relative_error(test)?,
            None => f64::NAN,
        };
        let objective = fit
            .history
            .last()
            .map(|s| s.objective)
            .unwrap_or(f64::NAN);

        history.rounds.push(RoundRecord {
            round,
            samples: data.len(),
            train_err,
            test_err,
            rank: fit.estimated_rank,
            objective,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        model = Some(fit.model);
        surrogate_model = Some(surrogate);
    }

    flush_outputs(cfg, &history, surrogate_model.as_ref())?;
    Ok(history)
}
