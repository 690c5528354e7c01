//! Experimental design: Latin hypercube initialization and Voronoi-guided
//! adaptive selection.
//!
//! The Voronoi diagram of the current design is never computed exactly; a
//! Monte-Carlo candidate pool is assigned to nearest design points, and the
//! cell collecting the most candidates is read as the least-densely sampled
//! region. Exploration picks the candidate farthest from that cell's center;
//! exploitation picks the candidate where the surrogate's first-order Taylor
//! expansion around the center is worst.

use crate::cptensor::CpTensor;
use crate::polybasis::BasisFamily;
use crate::surrogate::{self, SurrogateError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SamplingError {
    #[error("design must contain at least one point")]
    EmptyDesign,
    #[error("design points must be pairwise distinct (points {0} and {1} coincide)")]
    DuplicatePoint(usize, usize),
    #[error("design point {0} contains a non-finite entry")]
    NonFinitePoint(usize),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("pool point {index} has length {found}, expected {expected}")]
    PoolDimMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// The current sample set, in standardized parameter space.
#[derive(Debug, Clone)]
pub struct Design {
    points: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, SamplingError> {
        if points.is_empty() {
            return Err(SamplingError::EmptyDesign);
        }
        for (i, p) in points.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(SamplingError::NonFinitePoint(i));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(SamplingError::DuplicatePoint(i, j));
                }
            }
        }
        Ok(Design { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
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
}

/// Monte-Carlo approximation of the Voronoi diagram of a design.
#[derive(Debug, Clone)]
pub struct VoronoiEstimate {
    centers: Vec<Vec<f64>>,
    pool: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    cell_counts: Vec<usize>,
}

impl VoronoiEstimate {
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn pool(&self) -> &[Vec<f64>] {
        &self.pool
    }

    /// Nearest-center index per pool candidate, ties to the lowest index.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cell_counts(&self) -> &[usize] {
        &self.cell_counts
    }
}

/// How to pick the candidate inside a winning cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Farthest candidate from the cell center.
    Explore,
    /// Candidate with the largest first-order Taylor residual of the model.
    Exploit,
}

/// Latin hypercube design of `n` points in the `d`-dimensional unit cube:
/// each dimension gets exactly one point per stratum [i/n, (i+1)/n).
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        columns.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.gen_range(0.0..1.0)) / n as f64)
                .collect(),
        );
    }
    (0..n)
        .map(|row| columns.iter().map(|c| c[row]).collect())
        .collect()
}

/// Maps unit-cube points to standard-normal space via the inverse CDF.
/// Entries are clamped to [1e-12, 1 - 1e-12] first.
pub fn to_standard_normal(unit_points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let normal = Normal::standard();
    unit_points
        .iter()
        .map(|p| {
            p.iter()
                .map(|&u| normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12)))
                .collect()
        })
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns an explicit candidate pool to its nearest design points.
pub fn assign_pool(
    design: &Design,
    pool: Vec<Vec<f64>>,
) -> Result<VoronoiEstimate, SamplingError> {
    if pool.is_empty() {
        return Err(SamplingError::EmptyPool);
    }
    for (index, p) in pool.iter().enumerate() {
        if p.len() != design.dim() {
            return Err(SamplingError::PoolDimMismatch {
                index,
                found: p.len(),
                expected: design.dim(),
            });
        }
    }
    let centers = design.points().to_vec();
    let mut cell_counts = vec![0usize; centers.len()];
    let assignment: Vec<usize> = pool
        .iter()
        .map(|candidate| {
            let mut best = 0;
            let mut best_dist = squared_distance(candidate, &centers[0]);
            for (i, center) in centers.iter().enumerate().skip(1) {
                let dist = squared_distance(candidate, center);
                if dist < best_dist {
                    best = i;
                    best_dist = dist;
                }
            }
            best
        })
        .collect();
    for &a in &assignment {
        cell_counts[a] += 1;
    }
    Ok(VoronoiEstimate {
        centers,
        pool,
        assignment,
        cell_counts,
    })
}

/// Draws `m` candidates from the standard-normal input measure and assigns
/// them to the design's Voronoi cells.
pub fn estimate_voronoi(
    design: &Design,
    m: usize,
    seed: u64,
) -> Result<VoronoiEstimate, SamplingError> {
    if m == 0 {
        return Err(SamplingError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = design.dim();
    let pool = (0..m)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    assign_pool(design, pool)
}

// Cells ranked by descending candidate count, ties to the lowest center
// index; empty cells are dropped.
fn ranked_cells(est: &VoronoiEstimate) -> Vec<usize> {
    let mut cells: Vec<usize> = (0..est.centers.len())
        .filter(|&i| est.cell_counts[i] > 0)
        .collect();
    cells.sort_by(|&a, &b| est.cell_counts[b].cmp(&est.cell_counts[a]).then(a.cmp(&b)));
    cells
}

fn candidates_of_cell(est: &VoronoiEstimate, cell: usize) -> Vec<usize> {
    est.assignment
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a == cell)
        .map(|(m, _)| m)
        .collect()
}

// Candidate with the strictly largest score; ties keep the lowest pool index.
fn best_candidate<F: Fn(usize) -> Result<f64, SamplingError>>(
    candidates: &[usize],
    score: F,
) -> Result<usize, SamplingError> {
    let mut best = candidates[0];
    let mut best_score = score(best)?;
    for &m in &candidates[1..] {
        let s = score(m)?;
        if s > best_score {
            best = m;
            best_score = s;
        }
    }
    Ok(best)
}

/// Exploration pick: from the cell with the most pool candidates, the
/// candidate farthest from the cell center.
pub fn select_explore(est: &VoronoiEstimate) -> Result<Vec<f64>, SamplingError> {
    let cell = *ranked_cells(est).first().ok_or(SamplingError::EmptyPool)?;
    let candidates = candidates_of_cell(est, cell);
    let center = &est.centers[cell];
    let winner = best_candidate(&candidates, |m| {
        Ok(squared_distance(&est.pool[m], center))
    })?;
    Ok(est.pool[winner].clone())
}

/// First-order Taylor residual of the surrogate at `xi` around `a`, in
/// standardized space: |yhat(xi) - yhat(a) - grad yhat(a) . (xi - a)|.
pub fn nonlinearity_gamma(
    model: &CpTensor,
    basis: BasisFamily,
    xi: &[f64],
    a: &[f64],
) -> Result<f64, SamplingError> {
    let y_xi = surrogate::predict_standardized(model, basis, xi)?;
    let y_a = surrogate::predict_standardized(model, basis, a)?;
    let grad_a = surrogate::gradient_standardized(model, basis, a)?;
    let linear: f64 = grad_a
        .iter()
        .zip(xi.iter().zip(a))
        .map(|(g, (x, c))| g * (x - c))
        .sum();
    Ok((y_xi - y_a - linear).abs())
}

/// Exploitation pick: from the cell with the most pool candidates, the
/// candidate maximizing the Taylor residual around that cell's center.
pub fn select_exploit(
    est: &VoronoiEstimate,
    model: &CpTensor,
    basis: BasisFamily,
) -> Result<Vec<f64>, SamplingError> {
    let cell = *ranked_cells(est).first().ok_or(SamplingError::EmptyPool)?;
    let candidates = candidates_of_cell(est, cell);
    let center = &est.centers[cell];
    let winner = best_candidate(&candidates, |m| {
        nonlinearity_gamma(model, basis, &est.pool[m], center)
    })?;
    Ok(est.pool[winner].clone())
}

/// Batch selection: one candidate from each of the top-K most-populated
/// cells, by the mode's per-cell rule. Returns fewer than K points when the
/// estimate has fewer non-empty cells.
pub fn select_batch(
    est: &VoronoiEstimate,
    model: Option<&CpTensor>,
    basis: BasisFamily,
    k: usize,
    mode: SelectionMode,
) -> Result<Vec<Vec<f64>>, SamplingError> {
    let cells = ranked_cells(est);
    if cells.is_empty() {
        return Err(SamplingError::EmptyPool);
    }
    let mut picks = Vec::with_capacity(k.min(cells.len()));
    for &cell in cells.iter().take(k) {
        let candidates = candidates_of_cell(est, cell);
        let center = &est.centers[cell];
        let winner = match (mode, model) {
            (SelectionMode::Explore, _) | (SelectionMode::Exploit, None) => {
                best_candidate(&candidates, |m| {
                    Ok(squared_distance(&est.pool[m], center))
                })?
            }
            (SelectionMode::Exploit, Some(model)) => best_candidate(&candidates, |m| {
                nonlinearity_gamma(model, basis, &est.pool[m], center)
            })?,
        };
        picks.push(est.pool[winner].clone());
    }
    Ok(picks)
}
