//! Covariance specifications with validated square-root factors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric positive-definite covariance matrix in one of three shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CovarianceSpec {
    /// Independent coordinates with the given variances.
    Diagonal { variances: Vec<f64> },
    /// sigma2 * [(1-rho) I + rho * 11^T], rho in [0, 1).
    Equicorrelated { rho: f64, sigma2: f64, p: usize },
    /// Arbitrary dense SPD matrix (row-major, p*p entries).
    Dense { p: usize, entries: Vec<f64> },
}

/// Precomputed linear factor A with A A^T = Sigma, applied to standardized
/// iid coordinates when sampling.
#[derive(Debug, Clone)]
pub enum CovFactor {
    /// Per-coordinate standard deviations.
    Diagonal(Vec<f64>),
    /// x -> a*x + b*sum(x)*1 (closed-form equicorrelated square root).
    Equicorrelated { a: f64, b: f64 },
    /// Lower-triangular Cholesky factor.
    Dense(DMatrix<f64>),
}

impl CovarianceSpec {
    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("variances", "dimension must be >= 1"));
        }
        if let Some(j) = variances.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "variances",
                format!("variance at coordinate {j} must be positive and finite"),
            ));
        }
        Ok(CovarianceSpec::Diagonal { variances })
    }

    pub fn equicorrelated(rho: f64, sigma2: f64, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("p", "dimension must be >= 1"));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid("rho", "must lie in [0, 1)"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid("sigma2", "must be positive and finite"));
        }
        Ok(CovarianceSpec::Equicorrelated { rho, sigma2, p })
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if p == 0 || matrix.ncols() != p {
            return Err(Error::invalid("matrix", "must be square with p >= 1"));
        }
        for i in 0..p {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * matrix[(i, i)].abs().max(1.0) {
                    return Err(Error::invalid("matrix", "must be symmetric"));
                }
            }
        }
        // Fail fast on non-SPD input, reporting the offending leading minor.
        cholesky_with_minor(&matrix)?;
        Ok(CovarianceSpec::Dense {
            p,
            entries: matrix.as_slice().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Diagonal { variances } => variances.len(),
            CovarianceSpec::Equicorrelated { p, .. } => *p,
            CovarianceSpec::Dense { p, .. } => *p,
        }
    }

    /// Coordinate variances Var(Y(j)), j = 1..p.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            CovarianceSpec::Diagonal { variances } => variances.clone(),
            CovarianceSpec::Equicorrelated { sigma2, p, .. } => vec![*sigma2; *p],
            CovarianceSpec::Dense { p, entries } => {
                (0..*p).map(|j| entries[j * p + j]).collect()
            }
        }
    }

    /// sigma_min = min_j sd(Y(j)).
    pub fn sigma_min(&self) -> f64 {
        self.variances().iter().cloned().fold(f64::INFINITY, f64::min).sqrt()
    }

    /// sigma_max = max_j sd(Y(j)).
    pub fn sigma_max(&self) -> f64 {
        self.variances().iter().cloned().fold(0.0_f64, f64::max).sqrt()
    }

    /// Diagonal shortcut: per-coordinate standard deviations if the law has
    /// independent coordinates (exact-oracle paths key off this).
    pub fn diagonal_sds(&self) -> Option<Vec<f64>> {
        match self {
            CovarianceSpec::Diagonal { variances } => {
                Some(variances.iter().map(|v| v.sqrt()).collect())
            }
            // rho = 0 equicorrelated is spherical, hence diagonal.
            CovarianceSpec::Equicorrelated { rho, sigma2, p } if *rho == 0.0 => {
                Some(vec![sigma2.sqrt(); *p])
            }
            _ => None,
        }
    }

    /// Full matrix form.
    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        match self {
            CovarianceSpec::Diagonal { variances } => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(variances.clone()))
            }
            CovarianceSpec::Equicorrelated { rho, sigma2, .. } => {
                DMatrix::from_fn(p, p, |i, j| {
                    if i == j {
                        *sigma2
                    } else {
                        sigma2 * rho
                    }
                })
            }
            CovarianceSpec::Dense { entries, .. } => {
                DMatrix::from_column_slice(p, p, entries)
            }
        }
    }

    /// The sampling factor A with A A^T = Sigma.
    pub fn factor(&self) -> Result<CovFactor> {
        match self {
            CovarianceSpec::Diagonal { variances } => Ok(CovFactor::Diagonal(
                variances.iter().map(|v| v.sqrt()).collect(),
            )),
            CovarianceSpec::Equicorrelated { rho, sigma2, p } => {
                // A = a I + b 11^T with A^2 = Sigma:
                //   a = sigma sqrt(1-rho), b = sigma (sqrt(1-rho+p rho) - sqrt(1-rho))/p.
                let sigma = sigma2.sqrt();
                let pf = *p as f64;
                let a = sigma * (1.0 - rho).sqrt();
                let b = sigma * ((1.0 - rho + pf * rho).sqrt() - (1.0 - rho).sqrt()) / pf;
                Ok(CovFactor::Equicorrelated { a, b })
            }
            CovarianceSpec::Dense { .. } => {
                Ok(CovFactor::Dense(cholesky_with_minor(&self.matrix())?))
            }
        }
    }
}

impl CovFactor {
    /// Apply the factor in place: z (standardized iid) -> x with Cov(x) = Sigma.
    pub fn apply(&self, z: &mut [f64]) {
        match self {
            CovFactor::Diagonal(sds) => {
                for (x, s) in z.iter_mut().zip(sds) {
                    *x *= s;
                }
            }
            CovFactor::Equicorrelated { a, b } => {
                let total: f64 = z.iter().sum();
                for x in z.iter_mut() {
                    *x = a * *x + b * total;
                }
            }
            CovFactor::Dense(l) => {
                let p = l.nrows();
                // x_i = sum_{j<=i} L_ij z_j, computed backwards so z can be reused.
                for i in (0..p).rev() {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += l[(i, j)] * z[j];
                    }
                    z[i] = acc;
                }
            }
        }
    }
}

/// Cholesky factorization that reports the order of the first non-positive
/// leading minor on failure.
fn cholesky_with_minor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    let mut l = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return Err(Error::NotSpd { order: i + 1 });
                }
                l[(i, i)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_summaries() {
        let c = CovarianceSpec::diagonal(vec![1.0, 4.0]).unwrap();
        assert_eq!(c.dim(), 2);
        assert_relative_eq!(c.sigma_min(), 1.0);
        assert_relative_eq!(c.sigma_max(), 2.0);
        assert_eq!(c.diagonal_sds().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CovarianceSpec::diagonal(vec![1.0, 0.0]).is_err());
        assert!(CovarianceSpec::equicorrelated(1.0, 1.0, 3).is_err());
        assert!(CovarianceSpec::equicorrelated(-0.1, 1.0, 3).is_err());
    }

    #[test]
    fn non_spd_reports_offending_minor() {
        // Leading 1x1 and 2x2 minors positive; full 3x3 determinant negative.
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.9, 0.0, 0.9, 1.0, 0.9, 0.0, 0.9, 1.0],
        );
        match CovarianceSpec::dense(m) {
            Err(Error::NotSpd { order }) => assert_eq!(order, 3),
            other => panic!("expected NotSpd, got {other:?}"),
        }
    }

    #[test]
    fn equicorrelated_factor_squares_to_sigma() {
        let spec = CovarianceSpec::equicorrelated(0.5, 2.0, 3).unwrap();
        let CovFactor::Equicorrelated { a, b } = spec.factor().unwrap() else {
            panic!("wrong factor kind")
        };
        let p = 3usize;
        let amat = DMatrix::from_fn(p, p, |i, j| if i == j { a + b } else { b });
        let prod = &amat * amat.transpose();
        let sigma = spec.matrix();
        for i in 0..p {
            for j in 0..p {
                assert_relative_eq!(prod[(i, j)], sigma[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dense_factor_reproduces_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let spec = CovarianceSpec::dense(m.clone()).unwrap();
        let CovFactor::Dense(l) = spec.factor().unwrap() else {
            panic!("wrong factor kind")
        };
        let prod = &l * l.transpose();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(prod[(i, j)], m[(i, j)], epsilon = 1e-12);
            }
        }
    }
}
