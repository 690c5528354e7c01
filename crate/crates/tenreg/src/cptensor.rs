//! CP-format (Kruskal) coefficient tensors.
//!
//! A d-dimensional tensor is stored as d factor matrices of shape
//! (p+1) x R; the r-th columns across factors form the r-th rank-1 term.
//! Inner products reduce to Gram products of factor columns, so nothing here
//! ever materializes the (p+1)^d dense array except the test oracle
//! [`CpTensor::to_full`].

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CpError {
    #[error("a CP tensor needs at least one dimension")]
    NoDimensions,
    #[error("factor {index} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    FactorShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("factor {index} contains a non-finite entry")]
    NonFiniteEntry { index: usize },
    #[error("operand shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("dense materialization of {entries} entries exceeds the {limit} guard")]
    CapacityExceeded { entries: u128, limit: u128 },
}

/// Dense-oracle size guard for [`CpTensor::to_full`].
pub const DENSE_GUARD: u128 = 10_000_000;

/// A tensor in CP (Kruskal) form: `dims()` factor matrices sharing a common
/// column count `rank()` and a common row count `rows()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpTensor {
    factors: Vec<DMatrix<f64>>,
}

impl CpTensor {
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self, CpError> {
        if factors.is_empty() {
            return Err(CpError::NoDimensions);
        }
        let rows = factors[0].nrows();
        let rank = factors[0].ncols();
        if rank == 0 || rows == 0 {
            return Err(CpError::FactorShapeMismatch {
                index: 0,
                rows,
                cols: rank,
                expected_rows: rows.max(1),
                expected_cols: rank.max(1),
            });
        }
        for (index, factor) in factors.iter().enumerate() {
            if factor.nrows() != rows || factor.ncols() != rank {
                return Err(CpError::FactorShapeMismatch {
                    index,
                    rows: factor.nrows(),
                    cols: factor.ncols(),
                    expected_rows: rows,
                    expected_cols: rank,
                });
            }
            if factor.iter().any(|v| !v.is_finite()) {
                return Err(CpError::NonFiniteEntry { index });
            }
        }
        Ok(CpTensor { factors })
    }

    /// All-zero tensor of the given shape and rank.
    pub fn zeros(dims: usize, rows: usize, rank: usize) -> Result<Self, CpError> {
        Self::new(vec![DMatrix::zeros(rows, rank); dims])
    }

    pub fn dims(&self) -> usize {
        self.factors.len()
    }

    /// Rows per factor, i.e. the per-dimension basis size p+1.
    pub fn rows(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    /// Free parameters of the representation: dims * rows * rank.
    pub fn parameter_count(&self) -> usize {
        self.dims() * self.rows() * self.rank()
    }

    pub fn factor(&self, k: usize) -> &DMatrix<f64> {
        &self.factors[k]
    }

    /// Replaces factor `k`, revalidating shape and finiteness.
    pub fn with_factor(&self, k: usize, factor: DMatrix<f64>) -> Result<Self, CpError> {
        let mut factors = self.factors.clone();
        factors[k] = factor;
        Self::new(factors)
    }

    /// Dense materialization in row-major order (last index fastest), with
    /// shape `rows()^dims()`. Test oracle only; guarded at [`DENSE_GUARD`].
    pub fn to_full(&self) -> Result<Vec<f64>, CpError> {
        let entries = saturating_pow(self.rows() as u128, self.dims() as u32);
        if entries > DENSE_GUARD {
            return Err(CpError::CapacityExceeded {
                entries,
                limit: DENSE_GUARD,
            });
        }
        let n = entries as usize;
        let mut dense = vec![0.0; n];
        let mut index = vec![0usize; self.dims()];
        for entry in dense.iter_mut() {
            let mut total = 0.0;
            for r in 0..self.rank() {
                let mut prod = 1.0;
                for (k, &i_k) in index.iter().enumerate() {
                    prod *= self.factors[k][(i_k, r)];
                }
                total += prod;
            }
            *entry = total;
            // odometer increment, last dimension fastest
            for k in (0..self.dims()).rev() {
                index[k] += 1;
                if index[k] < self.rows() {
                    break;
                }
                index[k] = 0;
            }
        }
        Ok(dense)
    }

    /// Inner product with the rank-1 tensor given by one vector per
    /// dimension: sum over r of the product of per-dimension dots.
    pub fn inner_rank1(&self, b_vectors: &[Vec<f64>]) -> Result<f64, CpError> {
        if b_vectors.len() != self.dims() {
            return Err(CpError::ShapeMismatch(format!(
                "{} vectors for a {}-dimensional tensor",
                b_vectors.len(),
                self.dims()
            )));
        }
        for (k, b) in b_vectors.iter().enumerate() {
            if b.len() != self.rows() {
                return Err(CpError::ShapeMismatch(format!(
                    "vector {k} has length {}, expected {}",
                    b.len(),
                    self.rows()
                )));
            }
        }
        let mut total = 0.0;
        for r in 0..self.rank() {
            let mut prod = 1.0;
            for (k, b) in b_vectors.iter().enumerate() {
                let col = self.factors[k].column(r);
                prod *= col.dot(&DVector::from_column_slice(b));
            }
            total += prod;
        }
        Ok(total)
    }

    /// Inner product of two CP tensors via per-dimension Gram matrices:
    /// sum over (r, s) of the product over k of (u_r^(k) . w_s^(k)).
    pub fn inner_cp(&self, other: &CpTensor) -> Result<f64, CpError> {
        if other.dims() != self.dims() || other.rows() != self.rows() {
            return Err(CpError::ShapeMismatch(format!(
                "{}^{} vs {}^{}",
                self.rows(),
                self.dims(),
                other.rows(),
                other.dims()
            )));
        }
        // Hadamard product of the d cross-Gram matrices, then a full sum.
        let mut gram = DMatrix::from_element(self.rank(), other.rank(), 1.0);
        for k in 0..self.dims() {
            let cross = self.factors[k].transpose() * &other.factors[k];
            gram.component_mul_assign(&cross);
        }
        Ok(gram.sum())
    }

    /// Per-group column norms z_r = sqrt(sum over k of |u_r^(k)|^2).
    pub fn group_norms(&self) -> Vec<f64> {
        (0..self.rank())
            .map(|r| {
                self.factors
                    .iter()
                    .map(|f| f.column(r).norm_squared())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Frobenius norm, sqrt(<X, X>) with a clamp against round-off.
    pub fn frobenius_norm(&self) -> f64 {
        self.inner_cp(self)
            .expect("self inner product always shape-compatible")
            .max(0.0)
            .sqrt()
    }

    /// Drops every column group whose norm falls below `rel_threshold` times
    /// the largest group norm, simultaneously across all factors. Always
    /// keeps at least the largest group.
    pub fn truncate_rank(&self, rel_threshold: f64) -> CpTensor {
        let z = self.group_norms();
        let max_z = z.iter().cloned().fold(0.0_f64, f64::max);
        // An all-zero tensor has nothing to rank: collapse to a single group.
        let mut keep: Vec<usize> = if max_z == 0.0 {
            vec![0]
        } else {
            (0..self.rank())
                .filter(|&r| z[r] >= rel_threshold * max_z)
                .collect()
        };
        if keep.is_empty() {
            let argmax = z
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(r, _)| r)
                .unwrap_or(0);
            keep.push(argmax);
        }
        let factors = self
            .factors
            .iter()
            .map(|f| f.select_columns(keep.iter()))
            .collect();
        CpTensor { factors }
    }
}

fn saturating_pow(base: u128, mut exp: u32) -> u128 {
    let mut acc: u128 = 1;
    let mut b = base;
    loop {
        if exp & 1 == 1 {
            acc = acc.saturating_mul(b);
        }
        exp >>= 1;
        if exp == 0 {
            return acc;
        }
        b = b.saturating_mul(b);
    }
}

/// Builds the rank-1 CP tensor whose factors are the given vectors, one per
/// dimension. Used by tests to cross-check [`CpTensor::inner_rank1`].
pub fn rank1_from_vectors(vectors: &[Vec<f64>]) -> Result<CpTensor, CpError> {
    CpTensor::new(
        vectors
            .iter()
            .map(|v| DMatrix::from_column_slice(v.len(), 1, v))
            .collect(),
    )
}
