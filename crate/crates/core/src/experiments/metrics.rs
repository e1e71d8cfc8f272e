//! Relative-error metrics.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// `‖X^k − X*‖_F / ‖X⁰ − X*‖_F`.
pub fn relative_error(xk: &DMatrix<f64>, x_star: &DMatrix<f64>, x0: &DMatrix<f64>) -> Result<f64> {
    ErrorReference::new(x_star.clone(), x0)?.rel_error(xk)
}

/// A fixed `X*` with the precomputed denominator `‖X⁰ − X*‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReference {
    x_star: DMatrix<f64>,
    denom: f64,
}

impl ErrorReference {
    pub fn new(x_star: DMatrix<f64>, x0: &DMatrix<f64>) -> Result<Self> {
        if x_star.shape() != x0.shape() {
            return Err(Error::ShapeMismatch(format!(
                "X* is {:?}, X⁰ is {:?}",
                x_star.shape(),
                x0.shape()
            )));
        }
        let denom = (x0 - &x_star).norm();
        if denom < 1e-15 {
            return Err(Error::DegenerateStart(denom));
        }
        Ok(ErrorReference { x_star, denom })
    }

    /// `X* = 1 x*ᵀ` against a zero start.
    pub fn consensus(x_star: &nalgebra::DVector<f64>, n: usize) -> Result<Self> {
        let x_star = DMatrix::from_fn(n, x_star.len(), |_, c| x_star[c]);
        let zero = DMatrix::zeros(n, x_star.ncols());
        Self::new(x_star, &zero)
    }

    pub fn x_star(&self) -> &DMatrix<f64> {
        &self.x_star
    }

    pub fn rel_error(&self, xk: &DMatrix<f64>) -> Result<f64> {
        if xk.shape() != self.x_star.shape() {
            return Err(Error::ShapeMismatch(format!(
                "X^k is {:?}, X* is {:?}",
                xk.shape(),
                self.x_star.shape()
            )));
        }
        Ok((xk - &self.x_star).norm() / self.denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let x0 = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let xs = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        assert_eq!(relative_error(&xs, &xs, &x0).unwrap(), 0.0);
        assert!((relative_error(&x0, &xs, &x0).unwrap() - 1.0).abs() < 1e-15);
        let mid = (&x0 + &xs) * 0.5;
        assert!((relative_error(&mid, &xs, &x0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(relative_error(&x0, &x0, &x0), Err(Error::DegenerateStart(_))));
    }

    #[test]
    fn consensus_reference() {
        let r = ErrorReference::consensus(&nalgebra::DVector::from_vec(vec![3.0, 4.0]), 4).unwrap();
        assert_eq!(r.rel_error(&DMatrix::zeros(4, 2)).unwrap(), 1.0);
        assert!(ErrorReference::consensus(&nalgebra::DVector::zeros(2), 3).is_err());
    }
}
