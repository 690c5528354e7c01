//! Orthonormal univariate polynomial families.
//!
//! Each input dimension carries a family of polynomials orthonormal under the
//! dimension's probability measure. For Gaussian inputs these are normalized
//! probabilists' Hermite polynomials He_k(x)/sqrt(k!); for uniform inputs on
//! [-1, 1], normalized Legendre polynomials sqrt(2k+1) P_k(x). Evaluation is
//! recurrence-based for stability at moderate degrees.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BasisError {
    #[error("degree {degree} exceeds the family's maximum degree {max_degree}")]
    DegreeOutOfRange { degree: usize, max_degree: usize },
    #[error("basis evaluation requires a finite argument, got {0}")]
    NonFiniteInput(f64),
    #[error("quadrature rule needs at least one node")]
    EmptyRule,
    #[error("eigendecomposition of the Jacobi matrix failed for {0} nodes")]
    EigenFailure(usize),
}

/// Distribution family the basis is orthonormal against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Standard normal weight; normalized probabilists' Hermite polynomials.
    GaussianHermite,
    /// Uniform weight on [-1, 1]; normalized Legendre polynomials.
    UniformLegendre,
}

impl BasisKind {
    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::GaussianHermite => "gaussian-hermite",
            BasisKind::UniformLegendre => "uniform-legendre",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian-hermite" => Some(BasisKind::GaussianHermite),
            "uniform-legendre" => Some(BasisKind::UniformLegendre),
            _ => None,
        }
    }
}

/// An orthonormal univariate family truncated at `max_degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisFamily {
    pub kind: BasisKind,
    pub max_degree: usize,
}

impl BasisFamily {
    pub fn new(kind: BasisKind, max_degree: usize) -> Self {
        BasisFamily { kind, max_degree }
    }

    pub fn hermite(max_degree: usize) -> Self {
        Self::new(BasisKind::GaussianHermite, max_degree)
    }

    pub fn legendre(max_degree: usize) -> Self {
        Self::new(BasisKind::UniformLegendre, max_degree)
    }

    /// Number of members, `max_degree + 1`.
    pub fn len(&self) -> usize {
        self.max_degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A multi-index into the full tensor-product basis: one degree per dimension,
/// each bounded by the per-dimension maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>, max_degree: usize) -> Option<Self> {
        if entries.iter().all(|&a| a <= max_degree) {
            Some(MultiIndex { entries })
        } else {
            None
        }
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// Total degree, the sum of the per-dimension degrees.
    pub fn degree(&self) -> usize {
        self.entries.iter().sum()
    }
}

/// Evaluates the orthonormal member of the given degree at `x`.
pub fn eval_univariate(family: BasisFamily, degree: usize, x: f64) -> Result<f64, BasisError> {
    if degree > family.max_degree {
        return Err(BasisError::DegreeOutOfRange {
            degree,
            max_degree: family.max_degree,
        });
    }
    if !x.is_finite() {
        return Err(BasisError::NonFiniteInput(x));
    }
    Ok(match family.kind {
        BasisKind::GaussianHermite => hermite_values(degree, x)[degree],
        BasisKind::UniformLegendre => legendre_values(degree, x)[degree].0,
    })
}

/// Evaluates the derivative of the orthonormal member of the given degree.
pub fn eval_univariate_deriv(
    family: BasisFamily,
    degree: usize,
    x: f64,
) -> Result<f64, BasisError> {
    if degree > family.max_degree {
        return Err(BasisError::DegreeOutOfRange {
            degree,
            max_degree: family.max_degree,
        });
    }
    if !x.is_finite() {
        return Err(BasisError::NonFiniteInput(x));
    }
    Ok(match family.kind {
        BasisKind::GaussianHermite => {
            // psi_k' = sqrt(k) * psi_{k-1}
            if degree == 0 {
                0.0
            } else {
                (degree as f64).sqrt() * hermite_values(degree - 1, x)[degree - 1]
            }
        }
        BasisKind::UniformLegendre => legendre_values(degree, x)[degree].1,
    })
}

/// All members psi_0..psi_p stacked into one vector; this is the
/// per-dimension factor of the rank-1 basis tensor.
pub fn eval_basis_vector(family: BasisFamily, x: f64) -> Result<Vec<f64>, BasisError> {
    if !x.is_finite() {
        return Err(BasisError::NonFiniteInput(x));
    }
    Ok(match family.kind {
        BasisKind::GaussianHermite => hermite_values(family.max_degree, x),
        BasisKind::UniformLegendre => legendre_values(family.max_degree, x)
            .into_iter()
            .map(|(v, _)| v)
            .collect(),
    })
}

/// Derivatives of all members psi_0'..psi_p' at `x`.
pub fn eval_basis_deriv_vector(family: BasisFamily, x: f64) -> Result<Vec<f64>, BasisError> {
    if !x.is_finite() {
        return Err(BasisError::NonFiniteInput(x));
    }
    Ok(match family.kind {
        BasisKind::GaussianHermite => {
            let vals = hermite_values(family.max_degree, x);
            let mut derivs = vec![0.0; family.len()];
            for k in 1..family.len() {
                derivs[k] = (k as f64).sqrt() * vals[k - 1];
            }
            derivs
        }
        BasisKind::UniformLegendre => legendre_values(family.max_degree, x)
            .into_iter()
            .map(|(_, dv)| dv)
            .collect(),
    })
}

// Normalized probabilists' Hermite: psi_0 = 1, psi_1 = x,
// psi_{k+1} = (x psi_k - sqrt(k) psi_{k-1}) / sqrt(k+1).
fn hermite_values(max_degree: usize, x: f64) -> Vec<f64> {
    let mut vals = Vec::with_capacity(max_degree + 1);
    vals.push(1.0);
    if max_degree >= 1 {
        vals.push(x);
    }
    for k in 1..max_degree {
        let next = (x * vals[k] - (k as f64).sqrt() * vals[k - 1]) / ((k + 1) as f64).sqrt();
        vals.push(next);
    }
    vals
}

// Normalized Legendre on [-1, 1] with the uniform density 1/2:
// psi_k = sqrt(2k+1) P_k. Returns (value, derivative) pairs; derivatives via
// P'_{k+1} = (2k+1) P_k + P'_{k-1}.
fn legendre_values(max_degree: usize, x: f64) -> Vec<(f64, f64)> {
    let mut p = Vec::with_capacity(max_degree + 1);
    p.push((1.0, 0.0));
    if max_degree >= 1 {
        p.push((x, 1.0));
    }
    for k in 1..max_degree {
        let kf = k as f64;
        let val = ((2.0 * kf + 1.0) * x * p[k].0 - kf * p[k - 1].0) / (kf + 1.0);
        let deriv = (2.0 * kf + 1.0) * p[k].0 + p[k - 1].1;
        p.push((val, deriv));
    }
    p.iter()
        .enumerate()
        .map(|(k, &(v, dv))| {
            let norm = (2.0 * k as f64 + 1.0).sqrt();
            (norm * v, norm * dv)
        })
        .collect()
}

/// Basis cardinalities for `d` dimensions at per-dimension order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisCount {
    /// Full tensor-product count `(p+1)^d`, saturating at `u128::MAX`.
    pub full: u128,
    /// Total-degree truncation count `C(d+p, p)`, saturating at `u128::MAX`.
    pub total_degree: u128,
}

/// Counts the full tensor-product basis and its total-degree truncation.
pub fn count_basis(d: usize, p: usize) -> BasisCount {
    let base = (p as u128).saturating_add(1);
    let full = saturating_pow_u128(base, d as u32);
    BasisCount {
        full,
        total_degree: binomial_saturating(d + p, p),
    }
}

fn saturating_pow_u128(base: u128, mut exp: u32) -> u128 {
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

// C(n, k) by the multiplicative formula, dividing as we go to stay exact.
fn binomial_saturating(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Gauss quadrature rule for the family's weight measure, exact for
/// polynomials up to degree `2 * n_nodes - 1`. Weights sum to 1.
pub fn quadrature_rule(
    family: BasisFamily,
    n_nodes: usize,
) -> Result<(Vec<f64>, Vec<f64>), BasisError> {
    if n_nodes == 0 {
        return Err(BasisError::EmptyRule);
    }
    // Golub-Welsch on the symmetric Jacobi matrix of the monic three-term
    // recurrence. Both families have zero diagonal by symmetry of the weight.
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n_nodes, n_nodes);
    for k in 1..n_nodes {
        let kf = k as f64;
        let offdiag = match family.kind {
            BasisKind::GaussianHermite => kf.sqrt(),
            BasisKind::UniformLegendre => kf / (4.0 * kf * kf - 1.0).sqrt(),
        };
        jacobi[(k, k - 1)] = offdiag;
        jacobi[(k - 1, k)] = offdiag;
    }
    let eigen = nalgebra::SymmetricEigen::try_new(jacobi, f64::EPSILON, 0)
        .ok_or(BasisError::EigenFailure(n_nodes))?;
    let mut rule: Vec<(f64, f64)> = (0..n_nodes)
        .map(|i| {
            let first = eigen.eigenvectors[(0, i)];
            (eigen.eigenvalues[i], first * first)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rule.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hermite_oracle(degree: usize, x: f64) -> f64 {
        // He recurrence, normalized by sqrt(k!) only at the end.
        let mut he = vec![1.0, x];
        for k in 1..degree.max(1) {
            he.push(x * he[k] - k as f64 * he[k - 1]);
        }
        let fact: f64 = (1..=degree).map(|k| k as f64).product();
        he[degree] / fact.sqrt()
    }

    #[test]
    fn constant_member_is_one() {
        let fam = BasisFamily::hermite(4);
        assert_eq!(eval_univariate(fam, 0, 3.7).unwrap(), 1.0);
        let leg = BasisFamily::legendre(4);
        assert_eq!(eval_univariate(leg, 0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn hermite_matches_recurrence_oracle() {
        let fam = BasisFamily::hermite(8);
        assert_abs_diff_eq!(eval_univariate(fam, 1, 1.5).unwrap(), 1.5);
        assert_abs_diff_eq!(
            eval_univariate(fam, 2, 2.0).unwrap(),
            3.0 / 2.0_f64.sqrt(),
            epsilon = 1e-14
        );
        for degree in 0..=8 {
            for &x in &[-2.3, -0.7, 0.0, 0.4, 1.9, 3.1] {
                assert_abs_diff_eq!(
                    eval_univariate(fam, degree, x).unwrap(),
                    hermite_oracle(degree, x),
                    epsilon = 1e-11
                );
            }
        }
    }

    #[test]
    fn degree_out_of_range_is_an_error() {
        let fam = BasisFamily::hermite(2);
        assert!(matches!(
            eval_univariate(fam, 3, 0.0),
            Err(BasisError::DegreeOutOfRange { .. })
        ));
        assert!(eval_univariate_deriv(fam, 3, 0.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        let fam = BasisFamily::hermite(4);
        assert_eq!(eval_univariate_deriv(fam, 0, 9.9).unwrap(), 0.0);
        assert_abs_diff_eq!(eval_univariate_deriv(fam, 1, 9.9).unwrap(), 1.0);
        assert_abs_diff_eq!(
            eval_univariate_deriv(fam, 2, 2.0).unwrap(),
            2.0_f64.sqrt() * 2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for (fam, lo, hi) in [
            (BasisFamily::hermite(8), -3.0, 3.0),
            (BasisFamily::legendre(8), -0.95, 0.95),
        ] {
            let mut x = lo;
            while x <= hi {
                for degree in 0..=fam.max_degree {
                    let fd = (eval_univariate(fam, degree, x + h).unwrap()
                        - eval_univariate(fam, degree, x - h).unwrap())
                        / (2.0 * h);
                    let exact = eval_univariate_deriv(fam, degree, x).unwrap();
                    let tol = 1e-6 * exact.abs().max(1.0);
                    assert!(
                        (fd - exact).abs() <= tol,
                        "deriv mismatch at degree {degree}, x={x}: {exact} vs fd {fd}"
                    );
                }
                x += 0.06 * (hi - lo);
            }
        }
    }

    #[test]
    fn basis_vector_examples() {
        let fam = BasisFamily::hermite(2);
        let v = eval_basis_vector(fam, 0.0).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 0.0);
        assert_abs_diff_eq!(v[2], -1.0 / 2.0_f64.sqrt(), epsilon = 1e-14);

        let v1 = eval_basis_vector(fam, 1.0).unwrap();
        assert_abs_diff_eq!(v1[2], 0.0, epsilon = 1e-14);

        let p0 = BasisFamily::hermite(0);
        assert_eq!(eval_basis_vector(p0, 5.0).unwrap(), vec![1.0]);

        assert!(eval_basis_vector(fam, f64::NAN).is_err());
    }

    #[test]
    fn basis_vector_first_entry_always_one() {
        for &x in &[-4.2, -0.1, 0.0, 2.7, 8.8] {
            let v = eval_basis_vector(BasisFamily::hermite(6), x).unwrap();
            assert_eq!(v[0], 1.0);
        }
    }

    #[test]
    fn count_basis_examples() {
        assert_eq!(count_basis(57, 2).total_degree, 1711);
        assert_eq!(count_basis(19, 2).full, 1_162_261_467);
        for p in 0..5 {
            let c = count_basis(1, p);
            assert_eq!(c.full, (p + 1) as u128);
            assert_eq!(c.total_degree, (p + 1) as u128);
        }
        for d in 1..50 {
            assert_eq!(count_basis(d, 1).total_degree, (d + 1) as u128);
        }
        // Huge d saturates instead of overflowing.
        assert_eq!(count_basis(10_000, 9).full, u128::MAX);
    }

    #[test]
    fn quadrature_small_rules() {
        let fam = BasisFamily::hermite(2);
        let (nodes, weights) = quadrature_rule(fam, 1).unwrap();
        assert_abs_diff_eq!(nodes[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(weights[0], 1.0, epsilon = 1e-14);

        let (nodes, weights) = quadrature_rule(fam, 2).unwrap();
        assert_abs_diff_eq!(nodes[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nodes[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weights[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(weights[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for n in 1..25 {
            for fam in [BasisFamily::hermite(0), BasisFamily::legendre(0)] {
                let (_, weights) = quadrature_rule(fam, n).unwrap();
                let sum: f64 = weights.iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn orthonormality_under_quadrature() {
        for fam in [BasisFamily::hermite(8), BasisFamily::legendre(8)] {
            let (nodes, weights) = quadrature_rule(fam, 20).unwrap();
            for j in 0..=8 {
                for k in 0..=8 {
                    let inner: f64 = nodes
                        .iter()
                        .zip(&weights)
                        .map(|(&x, &w)| {
                            w * eval_univariate(fam, j, x).unwrap()
                                * eval_univariate(fam, k, x).unwrap()
                        })
                        .sum();
                    let expected = if j == k { 1.0 } else { 0.0 };
                    assert!(
                        (inner - expected).abs() <= 1e-10,
                        "<psi_{j}, psi_{k}> = {inner} for {:?}",
                        fam.kind
                    );
                }
            }
        }
    }

    #[test]
    fn multi_index_bounds_and_degree() {
        assert!(MultiIndex::new(vec![0, 2, 1], 2).is_some());
        assert!(MultiIndex::new(vec![0, 3], 2).is_none());
        let idx = MultiIndex::new(vec![1, 2, 0, 2], 2).unwrap();
        assert_eq!(idx.degree(), 5);
    }
}
