use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, OodError, Result};
use crate::points::Points;

/// Gaussian hyper-ellipsoid detector: distance to the training mean under
/// the regularised sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisModel {
    pub mean: Vec<f64>,
    /// Regularised covariance `S + lambda * I`.
    pub covariance: DMatrix<f64>,
    /// Lower Cholesky factor of `covariance`.
    pub cholesky: DMatrix<f64>,
    pub lambda: f64,
}

impl MahalanobisModel {
    pub fn fit(points: &Points) -> Result<Self> {
        let (n, d) = (points.len(), points.dim());
        if n <= d {
            return Err(invalid(format!("Mahalanobis fit needs more than {d} points, got {n}")));
        }
        let mean = points.mean();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in points.rows() {
            let c = DVector::from_iterator(d, r.iter().zip(&mean).map(|(x, m)| x - m));
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= (n - 1) as f64;
        Self::from_moments(mean, cov)
    }

    /// Builds the model from a mean and an (unregularised) covariance.
    pub fn from_moments(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        check_dim(d, covariance.nrows())?;
        check_dim(d, covariance.ncols())?;
        let mean_diag = covariance.diagonal().mean();
        let mut lambda = (1e-6 * mean_diag).max(1e-12);
        for _ in 0..8 {
            let reg = &covariance + DMatrix::identity(d, d) * lambda;
            if let Some(ch) = reg.clone().cholesky() {
                return Ok(Self { mean, covariance: reg, cholesky: ch.l(), lambda });
            }
            lambda *= 10.0;
        }
        Err(OodError::NotPositiveDefinite("Mahalanobis covariance".into()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // forward substitution with the lower factor
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.cholesky[(i, j)] * y[j];
            }
            y[i] = s / self.cholesky[(i, i)];
        }
        y.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.dim(), points.dim())?;
        Ok(points.rows().map(|r| self.distance(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_example_matches_hand_computation() {
        let t = Points::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]).unwrap();
        let m = MahalanobisModel::fit(&t).unwrap();
        assert!((m.covariance[(0, 0)] - 4.0 / 3.0).abs() < 1e-5);
        let s = m.score(&Points::from_rows(&[[3.0, 1.0], [1.0, 1.0]]).unwrap()).unwrap();
        assert!((s[0] - 3f64.sqrt()).abs() < 1e-5, "{}", s[0]);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn identity_covariance_is_euclidean() {
        let m = MahalanobisModel::from_moments(vec![0.0; 4], DMatrix::identity(4, 4)).unwrap();
        assert!((m.distance(&[3.0, 4.0, 0.0, 0.0]) - 5.0).abs() < 1e-5);
    }

    #[test]
    fn degenerate_covariance_is_regularised() {
        let t = Points::from_rows(&[[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]]).unwrap();
        let m = MahalanobisModel::fit(&t).unwrap();
        let s = m.score(&Points::from_rows(&[[1.5, 1.1]]).unwrap()).unwrap();
        assert!(s[0].is_finite() && s[0] > 10.0);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let t = Points::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(MahalanobisModel::fit(&t).is_err());
    }
}
