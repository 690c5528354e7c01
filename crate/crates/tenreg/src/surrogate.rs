//! The fitted polynomial-chaos model as a predictor.
//!
//! Wraps a CP coefficient tensor with its basis family and the per-dimension
//! standardization of the raw parameters. Orthonormality of the basis makes
//! the statistical moments available in closed form: the mean is the constant
//! coefficient and the variance is the squared Frobenius norm of the tensor
//! minus the squared mean.

use crate::cptensor::{CpError, CpTensor};
use crate::polybasis::{self, BasisError, BasisFamily};
use crate::regression::Dataset;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SurrogateError {
    #[error("input has length {found}, expected {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error("input contains a non-finite entry")]
    NonFiniteInput,
    #[error("standardization needs {expected} (mean, std) pairs with positive std")]
    BadStandardization { expected: usize },
    #[error("coefficient tensor has {rows} rows but the basis has {basis_len} members")]
    RowCountMismatch { rows: usize, basis_len: usize },
    #[error("relative error is undefined for an all-zero reference")]
    ZeroReference,
    #[error(transparent)]
    Tensor(#[from] CpError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// A fitted surrogate: coefficients in CP form, the basis family, and the
/// raw-to-standardized affine map per dimension.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    coeffs: CpTensor,
    basis: BasisFamily,
    standardization: Vec<(f64, f64)>,
}

impl SurrogateModel {
    pub fn new(
        coeffs: CpTensor,
        basis: BasisFamily,
        standardization: Vec<(f64, f64)>,
    ) -> Result<Self, SurrogateError> {
        if coeffs.rows() != basis.len() {
            return Err(SurrogateError::RowCountMismatch {
                rows: coeffs.rows(),
                basis_len: basis.len(),
            });
        }
        if standardization.len() != coeffs.dims()
            || standardization
                .iter()
                .any(|&(m, s)| !m.is_finite() || !(s > 0.0) || !s.is_finite())
        {
            return Err(SurrogateError::BadStandardization {
                expected: coeffs.dims(),
            });
        }
        Ok(SurrogateModel {
            coeffs,
            basis,
            standardization,
        })
    }

    /// Identity standardization (mean 0, std 1 in every dimension).
    pub fn unstandardized(coeffs: CpTensor, basis: BasisFamily) -> Result<Self, SurrogateError> {
        let dims = coeffs.dims();
        Self::new(coeffs, basis, vec![(0.0, 1.0); dims])
    }

    pub fn coeffs(&self) -> &CpTensor {
        &self.coeffs
    }

    pub fn basis(&self) -> BasisFamily {
        self.basis
    }

    pub fn dims(&self) -> usize {
        self.coeffs.dims()
    }

    pub fn standardization(&self) -> &[(f64, f64)] {
        &self.standardization
    }

    fn standardize(&self, xi_raw: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if xi_raw.len() != self.dims() {
            return Err(SurrogateError::DimMismatch {
                found: xi_raw.len(),
                expected: self.dims(),
            });
        }
        if xi_raw.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteInput);
        }
        Ok(xi_raw
            .iter()
            .zip(&self.standardization)
            .map(|(&x, &(mean, std))| (x - mean) / std)
            .collect())
    }

    /// Evaluates the surrogate at a raw-space parameter vector.
    pub fn predict(&self, xi_raw: &[f64]) -> Result<f64, SurrogateError> {
        let xi = self.standardize(xi_raw)?;
        predict_standardized(&self.coeffs, self.basis, &xi)
    }

    /// Gradient with respect to the raw parameters (chain rule over the
    /// standardization).
    pub fn gradient(&self, xi_raw: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let xi = self.standardize(xi_raw)?;
        let mut grad = gradient_standardized(&self.coeffs, self.basis, &xi)?;
        for (g, &(_, std)) in grad.iter_mut().zip(&self.standardization) {
            *g /= std;
        }
        Ok(grad)
    }

    /// Analytic mean and variance of the surrogate output under the input
    /// measure. The variance is clamped at zero against round-off.
    pub fn moments(&self) -> (f64, f64) {
        let e1: Vec<Vec<f64>> = (0..self.dims())
            .map(|_| {
                let mut e = vec![0.0; self.coeffs.rows()];
                e[0] = 1.0;
                e
            })
            .collect();
        let mean = self
            .coeffs
            .inner_rank1(&e1)
            .expect("unit vectors match tensor shape");
        let second = self
            .coeffs
            .inner_cp(&self.coeffs)
            .expect("self inner product is shape-compatible");
        (mean, (second - mean * mean).max(0.0))
    }

    /// Relative l2 error of the surrogate over a raw-space test set.
    pub fn relative_error(&self, test: &Dataset) -> Result<f64, SurrogateError> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (point, &y) in test.points().iter().zip(test.values()) {
            let pred = self.predict(point)?;
            num += (pred - y) * (pred - y);
            den += y * y;
        }
        if den == 0.0 {
            return Err(SurrogateError::ZeroReference);
        }
        Ok((num / den).sqrt())
    }
}

/// Evaluates `<X, B(xi)>` in standardized space.
pub fn predict_standardized(
    coeffs: &CpTensor,
    basis: BasisFamily,
    xi: &[f64],
) -> Result<f64, SurrogateError> {
    let b: Vec<Vec<f64>> = xi
        .iter()
        .map(|&x| polybasis::eval_basis_vector(basis, x))
        .collect::<Result<_, _>>()?;
    Ok(coeffs.inner_rank1(&b)?)
}

/// Gradient of `<X, B(xi)>` with respect to the standardized inputs.
pub fn gradient_standardized(
    coeffs: &CpTensor,
    basis: BasisFamily,
    xi: &[f64],
) -> Result<Vec<f64>, SurrogateError> {
    if xi.len() != coeffs.dims() {
        return Err(SurrogateError::DimMismatch {
            found: xi.len(),
            expected: coeffs.dims(),
        });
    }
    let b: Vec<Vec<f64>> = xi
        .iter()
        .map(|&x| polybasis::eval_basis_vector(basis, x))
        .collect::<Result<_, _>>()?;
    let db: Vec<Vec<f64>> = xi
        .iter()
        .map(|&x| polybasis::eval_basis_deriv_vector(basis, x))
        .collect::<Result<_, _>>()?;
    // dots[(k, r)] = u_r^(k) . b^(k); replace dimension j's dot with the
    // derivative dot to differentiate the product.
    let dims = coeffs.dims();
    let rank = coeffs.rank();
    let mut dots = vec![vec![0.0; rank]; dims];
    let mut deriv_dots = vec![vec![0.0; rank]; dims];
    for k in 0..dims {
        for r in 0..rank {
            let col = coeffs.factor(k).column(r);
            dots[k][r] = col.iter().zip(&b[k]).map(|(u, v)| u * v).sum();
            deriv_dots[k][r] = col.iter().zip(&db[k]).map(|(u, v)| u * v).sum();
        }
    }
    let mut grad = vec![0.0; dims];
    for (j, g) in grad.iter_mut().enumerate() {
        for r in 0..rank {
            let mut term = deriv_dots[j][r];
            for (k, d) in dots.iter().enumerate() {
                if k != j {
                    term *= d[r];
                }
            }
            *g += term;
        }
    }
    Ok(grad)
}
