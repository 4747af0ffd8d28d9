use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::points::{Points, Standardizer};

/// Truncated PCA on standardised inputs; the OOD score is the squared
/// residual after projecting onto the retained components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub standardizer: Standardizer,
    /// `D x k`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// `D x (D - k)` orthonormal complement spanned by the discarded axes.
    pub discarded: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn fit(train: &Points, variance_threshold: f64) -> Result<Self> {
        if !(variance_threshold > 0.0 && variance_threshold < 1.0) {
            return Err(invalid("PCA variance threshold must lie in (0, 1)"));
        }
        if train.len() < 2 {
            return Err(invalid("PCA needs at least two training points"));
        }
        let standardizer = Standardizer::fit(train);
        let z = standardizer.transform(train)?.to_dmatrix();
        let d = z.ncols();
        let cov = z.transpose() * &z / (z.nrows() - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        let ratio: Vec<f64> = if total > 0.0 { vals.iter().map(|v| v / total).collect() } else { vec![0.0; d] };
        let mut k = 0;
        let mut cum = 0.0;
        if total > 0.0 {
            while k < d && cum < variance_threshold {
                cum += ratio[k];
                k += 1;
            }
        }
        let mut components = DMatrix::zeros(d, k);
        let mut discarded = DMatrix::zeros(d, d - k);
        for (c, &i) in order.iter().enumerate() {
            if c < k {
                components.set_column(c, &eig.eigenvectors.column(i));
            } else {
                discarded.set_column(c - k, &eig.eigenvectors.column(i));
            }
        }
        Ok(Self { standardizer, components, discarded, explained_variance_ratio: ratio[..k].to_vec() })
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.standardizer.dim(), points.dim())?;
        let d = points.dim();
        let mut z = vec![0.0; d];
        Ok(points
            .rows()
            .map(|r| {
                self.standardizer.transform_row(r, &mut z);
                // residual measured along the discarded axes, so it is
                // exactly zero when every component is kept
                let zv = nalgebra::DVector::from_column_slice(&z);
                (self.discarded.transpose() * zv).norm_squared()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_line_residuals() {
        let t = Points::from_rows(&[[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        let m = PcaModel::fit(&t, 0.95).unwrap();
        assert_eq!(m.n_components(), 1);
        let s = m.score(&Points::from_rows(&[[0.7, 0.7], [1.0, -1.0]]).unwrap()).unwrap();
        assert!(s[0] < 1e-12);
        assert!((s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_features_stay_out_of_the_subspace() {
        let t = Points::from_rows(&[[-1.0, 3.0], [0.0, 3.0], [1.0, 3.0], [2.0, 3.0]]).unwrap();
        let m = PcaModel::fit(&t, 0.5).unwrap();
        assert_eq!(m.n_components(), 1);
        let s = m.score(&Points::from_rows(&[[5.0, 3.0], [0.0, 3.5]]).unwrap()).unwrap();
        assert!(s[0] < 1e-12);
        assert!((s[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn threshold_must_be_a_fraction() {
        let t = Points::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(PcaModel::fit(&t, 1.0).is_err());
        assert!(PcaModel::fit(&t, 0.0).is_err());
    }

    #[test]
    fn keeping_every_component_scores_exactly_zero() {
        let t = Points::from_rows(&[[0.0, 1.0], [1.0, 0.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
        let m = PcaModel::fit(&t, 0.99).unwrap();
        assert_eq!(m.n_components(), 2);
        let s = m.score(&Points::from_rows(&[[3.0, -7.0], [0.1, 0.2]]).unwrap()).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }
}
