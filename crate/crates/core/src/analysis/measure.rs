//! Weighted matrix measure (logarithmic norm).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermitian positive-definite weight `P` of the inner product
/// `⟨a, b⟩ = bᴴ P a`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductWeight {
    p: DMatrix<Complex64>,
    // P^{1/2} and P^{-1/2}, computed once.
    sqrt: DMatrix<Complex64>,
    inv_sqrt: DMatrix<Complex64>,
}

impl InnerProductWeight {
    /// Validates `P = Pᴴ` (to 1e-12 relative) and `λ_min(P) > 0`.
    pub fn new(p: DMatrix<Complex64>) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "weight is {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let scale = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let asym = (&p - p.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 1e-12 * scale.max(1.0) {
            return Err(Error::Config("weight is not Hermitian".into()));
        }
        let herm = (&p + p.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(herm.clone());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("weight is not positive definite".into()));
        }
        let u = &eig.eigenvectors;
        let with = |f: fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(f(l), 0.0)));
            u * d * u.adjoint()
        };
        Ok(InnerProductWeight {
            sqrt: with(f64::sqrt),
            inv_sqrt: with(|l| 1.0 / l.sqrt()),
            p: herm,
        })
    }

    /// Real diagonal weight.
    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let v: Vec<Complex64> = d.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v)))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is a valid weight")
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.p
    }

    pub fn sqrt(&self) -> &DMatrix<Complex64> {
        &self.sqrt
    }

    pub fn inv_sqrt(&self) -> &DMatrix<Complex64> {
        &self.inv_sqrt
    }
}

/// `μ_P(A) = λ_max{½ P^{-1/2}(PA + AᴴP)P^{-1/2}}`.
pub fn matrix_measure(a: &DMatrix<Complex64>, w: &InnerProductWeight) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() != w.dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, weight is {}x{}",
            a.nrows(),
            a.ncols(),
            w.dim(),
            w.dim()
        )));
    }
    let pa = w.matrix() * a;
    let sym = (&pa + pa.adjoint()).scale(0.5);
    let m = w.inv_sqrt() * sym * w.inv_sqrt();
    // Symmetrize away rounding before the Hermitian solver.
    let m = (&m + m.adjoint()).scale(0.5);
    Ok(SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn negative_identity() {
        let a = DMatrix::<Complex64>::identity(3, 3).scale(-1.0);
        let mu = matrix_measure(&a, &InnerProductWeight::identity(3)).unwrap();
        assert_abs_diff_eq!(mu, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn skew_hermitian_is_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(2.0, 1.0), c(-2.0, 1.0), c(0.0, -3.0)]);
        let mu = matrix_measure(&a, &InnerProductWeight::identity(2)).unwrap();
        assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn weight_changes_measure() {
        // Upper-triangular A: the identity weight sees the shear, a stretched
        // weight can hide it.
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(4.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let mu_i = matrix_measure(&a, &InnerProductWeight::identity(2)).unwrap();
        let mu_p = matrix_measure(&a, &InnerProductWeight::diagonal(&[1.0, 100.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(mu_i, 1.0, epsilon = 1e-12);
        assert!(mu_p < 0.0);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(InnerProductWeight::diagonal(&[1.0, 0.0]).is_err());
        let p = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(InnerProductWeight::new(p).is_err());
        let a = DMatrix::<Complex64>::identity(3, 3);
        assert!(matches!(
            matrix_measure(&a, &InnerProductWeight::identity(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
