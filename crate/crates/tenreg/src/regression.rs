//! Rank-adaptive CP tensor regression.
//!
//! Fits the coefficient tensor of a tensor-product polynomial surrogate by
//! minimizing a least-squares loss plus a group lq/l2 penalty on the rank-1
//! components. The non-smooth penalty is handled through its variational
//! upper bound: auxiliary weights eta are updated in closed form, after which
//! every factor-matrix subproblem is a ridge regression solved exactly. Dead
//! component groups are removed once at the end.

use crate::cptensor::{CpError, CpTensor};
use crate::polybasis::{self, BasisError, BasisFamily};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RegressionError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {points} points but {values} values")]
    LengthMismatch { points: usize, values: usize },
    #[error("dataset point {index} has length {found}, expected {expected}")]
    PointDimMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("dataset contains a non-finite entry at sample {0}")]
    NonFiniteSample(usize),
    #[error("q must lie in (0, 1], got {0}")]
    QOutOfRange(f64),
    #[error("eta entries must be positive, got {0}")]
    NonPositiveEta(f64),
    #[error("eta has length {found}, expected rank {expected}")]
    EtaLengthMismatch { found: usize, expected: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("normal equations are singular (lambda = 0 with rank-deficient design)")]
    SingularSystem,
    #[error(transparent)]
    Tensor(#[from] CpError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Paired samples in standardized parameter space.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self, RegressionError> {
        if points.is_empty() {
            return Err(RegressionError::EmptyDataset);
        }
        if points.len() != values.len() {
            return Err(RegressionError::LengthMismatch {
                points: points.len(),
                values: values.len(),
            });
        }
        let dim = points[0].len();
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(RegressionError::PointDimMismatch {
                    index,
                    found: p.len(),
                    expected: dim,
                });
            }
            if p.iter().any(|v| !v.is_finite()) || !values[index].is_finite() {
                return Err(RegressionError::NonFiniteSample(index));
            }
        }
        Ok(Dataset { points, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Appends new samples, revalidating dimensions and finiteness.
    pub fn extend(
        &mut self,
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
    ) -> Result<(), RegressionError> {
        let mut all_points = self.points.clone();
        let mut all_values = self.values.clone();
        all_points.extend(points);
        all_values.extend(values);
        let merged = Dataset::new(all_points, all_values)?;
        *self = merged;
        Ok(())
    }
}

/// Solver knobs; see the field defaults in [`SolverConfig::new`].
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub initial_rank: usize,
    pub q: f64,
    pub lambda: f64,
    pub max_sweeps: usize,
    pub objective_rel_tol: f64,
    pub eta_floor: f64,
    pub truncation_rel_threshold: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(initial_rank: usize, q: f64, lambda: f64) -> Self {
        SolverConfig {
            initial_rank,
            q,
            lambda,
            max_sweeps: 200,
            objective_rel_tol: 1e-6,
            eta_floor: 1e-8,
            truncation_rel_threshold: 1e-3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RegressionError> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(RegressionError::QOutOfRange(self.q));
        }
        if self.lambda < 0.0 {
            return Err(RegressionError::InvalidConfig(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.initial_rank == 0 {
            return Err(RegressionError::InvalidConfig(
                "initial rank must be at least 1".into(),
            ));
        }
        if self.eta_floor <= 0.0 {
            return Err(RegressionError::InvalidConfig(format!(
                "eta floor must be positive, got {}",
                self.eta_floor
            )));
        }
        if !(self.truncation_rel_threshold > 0.0 && self.truncation_rel_threshold < 1.0) {
            return Err(RegressionError::InvalidConfig(format!(
                "truncation threshold must lie in (0, 1), got {}",
                self.truncation_rel_threshold
            )));
        }
        Ok(())
    }
}

/// Objective value and surviving-group count after one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub objective: f64,
    pub effective_rank: usize,
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    /// The fitted tensor after rank truncation.
    pub model: CpTensor,
    /// Column count of `model`.
    pub estimated_rank: usize,
    /// One record per completed sweep.
    pub history: Vec<SweepRecord>,
    /// Objective after every eta update and every factor solve, in order.
    pub step_objectives: Vec<f64>,
    pub converged: bool,
}

/// Least-squares data loss: half the sum of squared residuals of the
/// surrogate against the sample values.
pub fn loss_h(
    model: &CpTensor,
    data: &Dataset,
    basis: BasisFamily,
) -> Result<f64, RegressionError> {
    let cache = BasisCache::build(data, basis, model.dims(), model.rows())?;
    Ok(loss_from_predictions(&cache.predictions(model), data))
}

fn loss_from_predictions(predictions: &[f64], data: &Dataset) -> f64 {
    0.5 * predictions
        .iter()
        .zip(data.values())
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>()
}

/// Group lq/l2 rank penalty: the lq norm of the per-group column norms.
pub fn penalty_g(model: &CpTensor, q: f64) -> Result<f64, RegressionError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(RegressionError::QOutOfRange(q));
    }
    Ok(lq_norm(&model.group_norms(), q))
}

fn lq_norm(v: &[f64], q: f64) -> f64 {
    let sum: f64 = v.iter().map(|&x| x.abs().powf(q)).sum();
    if sum == 0.0 {
        0.0
    } else {
        sum.powf(1.0 / q)
    }
}

/// Closed-form minimizer of the variational bound for fixed group norms:
/// eta_r = z_r^(2-q) * |z|_q^(q-1), floored so dead groups keep the
/// surrogate finite.
pub fn eta_update(z: &[f64], q: f64, eta_floor: f64) -> Result<Vec<f64>, RegressionError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(RegressionError::QOutOfRange(q));
    }
    let norm = lq_norm(z, q);
    if norm == 0.0 {
        return Ok(vec![eta_floor; z.len()]);
    }
    Ok(z.iter()
        .map(|&zr| (zr.powf(2.0 - q) * norm.powf(q - 1.0)).max(eta_floor))
        .collect())
}

/// The variational surrogate of the rank penalty at the given weights:
/// half the eta-weighted squared group norms plus half the l_{q/(2-q)} norm
/// of eta. Equals [`penalty_g`] when eta comes from [`eta_update`].
pub fn penalty_ghat(model: &CpTensor, eta: &[f64], q: f64) -> Result<f64, RegressionError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(RegressionError::QOutOfRange(q));
    }
    if eta.len() != model.rank() {
        return Err(RegressionError::EtaLengthMismatch {
            found: eta.len(),
            expected: model.rank(),
        });
    }
    if let Some(&bad) = eta.iter().find(|&&e| e <= 0.0) {
        return Err(RegressionError::NonPositiveEta(bad));
    }
    let z = model.group_norms();
    let weighted: f64 = z.iter().zip(eta).map(|(&zr, &er)| zr * zr / er).sum();
    Ok(0.5 * weighted + 0.5 * lq_norm(eta, q / (2.0 - q)))
}

/// Full objective: data loss plus lambda times the variational penalty.
pub fn objective_fhat(
    model: &CpTensor,
    data: &Dataset,
    basis: BasisFamily,
    cfg: &SolverConfig,
    eta: &[f64],
) -> Result<f64, RegressionError> {
    Ok(loss_h(model, data, basis)? + cfg.lambda * penalty_ghat(model, eta, cfg.q)?)
}

// Per-sample basis vectors, shared by the loss and the factor solves.
struct BasisCache {
    // vectors[n][k] is the length-(p+1) basis vector of sample n, dim k
    vectors: Vec<Vec<Vec<f64>>>,
}

impl BasisCache {
    fn build(
        data: &Dataset,
        basis: BasisFamily,
        dims: usize,
        rows: usize,
    ) -> Result<Self, RegressionError> {
        if data.dim() != dims {
            return Err(RegressionError::PointDimMismatch {
                index: 0,
                found: data.dim(),
                expected: dims,
            });
        }
        if basis.len() != rows {
            return Err(RegressionError::InvalidConfig(format!(
                "basis has {} members but the tensor has {} rows",
                basis.len(),
                rows
            )));
        }
        let vectors = data
            .points()
            .iter()
            .map(|point| {
                point
                    .iter()
                    .map(|&x| polybasis::eval_basis_vector(basis, x))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BasisCache { vectors })
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }

    // dots[n][(k, r)] = u_r^(k) . b_n^(k)
    fn factor_dots(&self, model: &CpTensor) -> Vec<DMatrix<f64>> {
        let dims = model.dims();
        let rank = model.rank();
        self.vectors
            .iter()
            .map(|per_dim| {
                DMatrix::from_fn(dims, rank, |k, r| {
                    model
                        .factor(k)
                        .column(r)
                        .iter()
                        .zip(&per_dim[k])
                        .map(|(u, b)| u * b)
                        .sum()
                })
            })
            .collect()
    }

    fn predictions(&self, model: &CpTensor) -> Vec<f64> {
        let dots = self.factor_dots(model);
        dots.iter().map(|d| prediction_from_dots(d)).collect()
    }
}

fn prediction_from_dots(dots: &DMatrix<f64>) -> f64 {
    (0..dots.ncols())
        .map(|r| dots.column(r).iter().product::<f64>())
        .sum()
}

/// Exact minimizer of the objective over factor `k` with all other factors
/// and eta fixed: a ridge regression in the vectorized factor, with per-group
/// ridge weights lambda / eta_r.
pub fn solve_factor(
    k: usize,
    model: &CpTensor,
    data: &Dataset,
    basis: BasisFamily,
    lambda: f64,
    eta: &[f64],
) -> Result<CpTensor, RegressionError> {
    let cache = BasisCache::build(data, basis, model.dims(), model.rows())?;
    let dots = cache.factor_dots(model);
    solve_factor_cached(k, model, data, &cache, &dots, lambda, eta)
}

fn solve_factor_cached(
    k: usize,
    model: &CpTensor,
    data: &Dataset,
    cache: &BasisCache,
    dots: &[DMatrix<f64>],
    lambda: f64,
    eta: &[f64],
) -> Result<CpTensor, RegressionError> {
    let rank = model.rank();
    let rows = model.rows();
    if eta.len() != rank {
        return Err(RegressionError::EtaLengthMismatch {
            found: eta.len(),
            expected: rank,
        });
    }
    if let Some(&bad) = eta.iter().find(|&&e| e <= 0.0) {
        return Err(RegressionError::NonPositiveEta(bad));
    }
    let unknowns = rows * rank;
    let n = cache.len();

    // Design matrix for vec(U^(k)) in group-major order: column (r, i) holds
    // w_{n,r} * b_n^(k)[i], where w_{n,r} is the product of the other dims'
    // dots for group r.
    let mut design = DMatrix::zeros(n, unknowns);
    for sample in 0..n {
        let b = &cache.vectors[sample][k];
        for r in 0..rank {
            let mut w = 1.0;
            for j in 0..model.dims() {
                if j != k {
                    w *= dots[sample][(j, r)];
                }
            }
            for i in 0..rows {
                design[(sample, r * rows + i)] = w * b[i];
            }
        }
    }
    let y = DVector::from_column_slice(data.values());
    let mut normal = design.transpose() * &design;
    for r in 0..rank {
        let ridge = lambda / eta[r];
        for i in 0..rows {
            normal[(r * rows + i, r * rows + i)] += ridge;
        }
    }
    let rhs = design.transpose() * y;
    let solution = normal
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| normal.lu().solve(&rhs))
        .ok_or(RegressionError::SingularSystem)?;
    let factor = DMatrix::from_fn(rows, rank, |i, r| solution[r * rows + i]);
    Ok(model.with_factor(k, factor)?)
}

// Sweeps to run before column rebalancing starts.
const REBALANCE_BURN_IN: usize = 20;

// Rescales each column group so its norm is equal across factors while the
// group's rank-1 term (and hence every prediction) is unchanged. By the
// AM-GM inequality this never increases the group norm z_r, so the penalty
// and the objective can only go down; it also keeps the per-factor ridge
// systems well conditioned across sweeps.
fn rebalance_columns(model: &CpTensor) -> CpTensor {
    let dims = model.dims();
    let mut factors: Vec<DMatrix<f64>> = model.factors().to_vec();
    for r in 0..model.rank() {
        let norms: Vec<f64> = factors.iter().map(|f| f.column(r).norm()).collect();
        if norms.iter().any(|&n| n == 0.0) {
            continue;
        }
        let target = norms
            .iter()
            .map(|n| n.ln())
            .sum::<f64>()
            .exp()
            .powf(1.0 / dims as f64);
        for (f, &norm) in factors.iter_mut().zip(&norms) {
            let mut col = f.column_mut(r);
            col *= target / norm;
        }
    }
    CpTensor::new(factors).expect("rebalanced factors are finite and well-shaped")
}

fn random_init(dims: usize, rows: usize, rank: usize, seed: u64) -> CpTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factors: Vec<DMatrix<f64>> = (0..dims)
        .map(|_| DMatrix::from_fn(rows, rank, |_, _| rng.gen_range(-0.5..0.5)))
        .collect();
    // Normalize every column to unit norm and fold the product of the norms
    // into the first factor, so all groups start at a balanced scale.
    for r in 0..rank {
        let mut scale = 1.0;
        for f in factors.iter_mut() {
            let norm = f.column(r).norm();
            if norm > 0.0 {
                let mut col = f.column_mut(r);
                col /= norm;
                scale *= norm;
            }
        }
        let mut col = factors[0].column_mut(r);
        col *= scale;
    }
    CpTensor::new(factors).expect("random factors are finite and well-shaped")
}

/// Fits a CP tensor to the data from a fresh random initialization.
pub fn fit(
    data: &Dataset,
    basis: BasisFamily,
    cfg: &SolverConfig,
) -> Result<FitResult, RegressionError> {
    fit_with_init(data, basis, cfg, None)
}

/// Fits a CP tensor, warm-starting from `init` when given. The initial model
/// must have `cfg.initial_rank` columns and match the basis row count.
pub fn fit_with_init(
    data: &Dataset,
    basis: BasisFamily,
    cfg: &SolverConfig,
    init: Option<&CpTensor>,
) -> Result<FitResult, RegressionError> {
    cfg.validate()?;
    let dims = data.dim();
    let rows = basis.len();
    let mut model = match init {
        Some(m) => {
            if m.dims() != dims || m.rows() != rows || m.rank() != cfg.initial_rank {
                return Err(RegressionError::InvalidConfig(format!(
                    "warm start has shape {}x{} rank {}, expected {}x{} rank {}",
                    m.rows(),
                    m.dims(),
                    m.rank(),
                    rows,
                    dims,
                    cfg.initial_rank
                )));
            }
            m.clone()
        }
        None => random_init(dims, rows, cfg.initial_rank, cfg.seed),
    };
    let cache = BasisCache::build(data, basis, dims, rows)?;

    let mut history = Vec::new();
    let mut step_objectives = Vec::new();
    let mut converged = false;
    let mut previous_objective = f64::INFINITY;
    let mut previous_eta: Option<Vec<f64>> = None;

    for sweep in 0..cfg.max_sweeps {
        // Rebalancing lowers z_r for lopsided groups, which tightens their
        // ridge weight; during the first sweeps the factors are still far
        // from the data and that can kill groups prematurely, so balancing
        // starts only once the early transient has passed.
        if sweep >= REBALANCE_BURN_IN {
            model = rebalance_columns(&model);
        }
        let mut eta = eta_update(&model.group_norms(), cfg.q, cfg.eta_floor)?;
        // The floor clamp can push the surrogate penalty above its value at
        // the previous weights once a group collapses; keep the previous
        // weights in that case so descent stays monotone.
        if let Some(prev) = previous_eta.take() {
            let g_new = penalty_ghat(&model, &eta, cfg.q)?;
            let g_prev = penalty_ghat(&model, &prev, cfg.q)?;
            if g_prev < g_new {
                eta = prev;
            }
        }
        previous_eta = Some(eta.clone());
        let mut dots = cache.factor_dots(&model);
        let objective = |m: &CpTensor, d: &[DMatrix<f64>], eta: &[f64]| -> f64 {
            let predictions: Vec<f64> = d.iter().map(prediction_from_dots).collect();
            let loss = loss_from_predictions(&predictions, data);
            let ghat = penalty_ghat(m, eta, cfg.q).expect("eta positive by construction");
            loss + cfg.lambda * ghat
        };
        step_objectives.push(objective(&model, &dots, &eta));

        for k in 0..dims {
            model = solve_factor_cached(k, &model, data, &cache, &dots, cfg.lambda, &eta)?;
            for (sample, per_dim) in cache.vectors.iter().enumerate() {
                for r in 0..model.rank() {
                    dots[sample][(k, r)] = model
                        .factor(k)
                        .column(r)
                        .iter()
                        .zip(&per_dim[k])
                        .map(|(u, b)| u * b)
                        .sum();
                }
            }
            step_objectives.push(objective(&model, &dots, &eta));
        }

        let sweep_objective = *step_objectives.last().expect("at least one step recorded");
        let z = model.group_norms();
        let max_z = z.iter().cloned().fold(0.0_f64, f64::max);
        let effective_rank = z
            .iter()
            .filter(|&&zr| zr >= cfg.truncation_rel_threshold * max_z && max_z > 0.0)
            .count()
            .max(1);
        history.push(SweepRecord {
            objective: sweep_objective,
            effective_rank,
        });

        let denom = previous_objective.abs().max(1.0);
        if (previous_objective - sweep_objective).abs() / denom < cfg.objective_rel_tol {
            converged = true;
            break;
        }
        previous_objective = sweep_objective;
    }

    let model = model.truncate_rank(cfg.truncation_rel_threshold);
    let estimated_rank = model.rank();
    Ok(FitResult {
        model,
        estimated_rank,
        history,
        step_objectives,
        converged,
    })
}
