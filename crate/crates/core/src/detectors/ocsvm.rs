//! One-class support vector machine with an RBF kernel.
//!
//! The dual is kept in normalised form
//!
//! ```text
//! min 1/2 a^T Q a   s.t.  0 <= a_i <= 1 / (nu * n),  sum a_i = 1
//! ```
//!
//! so gradients `(Q a)_i` are decision values plus `rho`, and the KKT gap is
//! measured in decision-value units.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::points::{sq_dist, Points, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcSvmParams {
    pub nu: f64,
    /// RBF width; `None` picks `1 / (D * var(X))` on the standardised data.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for OcSvmParams {
    fn default() -> Self {
        Self { nu: 0.5, gamma: None, tol: 1e-4, max_iter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub standardizer: Standardizer,
    pub support_vectors: Points,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation.
    pub gap: f64,
}

/// Raw solution of the normalised dual on a precomputed kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// Solves the nu-one-class dual by sequential minimal optimisation with
/// second-order working-set selection. `kernel` is row-major `n x n`.
pub fn solve_dual(kernel: &[f64], n: usize, nu: f64, tol: f64, max_iter: usize) -> DualSolution {
    let c = 1.0 / (nu * n as f64);
    let q = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    let full = ((nu * n as f64).floor() as usize).min(n);
    for a in alpha.iter_mut().take(full) {
        *a = c;
    }
    if full < n {
        alpha[full] = 1.0 - c * full as f64;
    }
    let mut grad = vec![0.0; n];
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += a * q(i, j);
            }
        }
    }

    let eps_bound = 1e-15 * c;
    let can_grow = |a: f64| a < c - eps_bound;
    let can_shrink = |a: f64| a > eps_bound;

    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    while iterations < max_iter {
        // i: smallest gradient among variables that may grow
        let mut i = usize::MAX;
        let mut gmin = f64::INFINITY;
        for k in 0..n {
            if can_grow(alpha[k]) && grad[k] < gmin {
                gmin = grad[k];
                i = k;
            }
        }
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for k in 0..n {
            if !can_shrink(alpha[k]) {
                continue;
            }
            gmax = gmax.max(grad[k]);
            let diff = grad[k] - gmin;
            if diff > 0.0 && i != usize::MAX {
                let eta = (q(i, i) + q(k, k) - 2.0 * q(i, k)).max(1e-12);
                let gain = diff * diff / eta;
                if gain > best {
                    best = gain;
                    j = k;
                }
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < tol {
            break;
        }
        let eta = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(1e-12);
        let step = ((grad[j] - grad[i]) / eta).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += step;
        alpha[j] -= step;
        for k in 0..n {
            grad[k] += step * (q(k, i) - q(k, j));
        }
        iterations += 1;
    }
    let converged = gap < tol;
    if !converged {
        // recompute the final gap in case the loop stopped on max_iter
        let gmin = (0..n).filter(|&k| can_grow(alpha[k])).map(|k| grad[k]).fold(f64::INFINITY, f64::min);
        let gmax = (0..n).filter(|&k| can_shrink(alpha[k])).map(|k| grad[k]).fold(f64::NEG_INFINITY, f64::max);
        gap = gmax - gmin;
    }

    let free: Vec<usize> = (0..n).filter(|&k| can_grow(alpha[k]) && can_shrink(alpha[k])).collect();
    let rho = if free.is_empty() {
        // at_zero needs G >= rho, at_upper needs G <= rho
        let ub = (0..n).filter(|&k| !can_shrink(alpha[k])).map(|k| grad[k]).fold(f64::INFINITY, f64::min);
        let lb = (0..n).filter(|&k| !can_grow(alpha[k])).map(|k| grad[k]).fold(f64::NEG_INFINITY, f64::max);
        match (ub.is_finite(), lb.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => ub,
            (false, true) => lb,
            (false, false) => 0.0,
        }
    } else {
        free.iter().map(|&k| grad[k]).sum::<f64>() / free.len() as f64
    };
    DualSolution { alpha, rho, iterations, converged, gap }
}

/// Variance of all entries of the point matrix.
fn total_variance(points: &Points) -> f64 {
    let v = points.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

impl OcSvmModel {
    pub fn fit(train: &Points, params: &OcSvmParams) -> Result<Self> {
        if !(params.nu > 0.0 && params.nu <= 1.0) {
            return Err(invalid("one-class SVM needs 0 < nu <= 1"));
        }
        let n = train.len();
        if n == 0 {
            return Err(invalid("one-class SVM needs training points"));
        }
        let standardizer = Standardizer::fit(train);
        let z = standardizer.transform(train)?;
        let gamma = match params.gamma {
            Some(g) if g > 0.0 => g,
            Some(_) => return Err(invalid("one-class SVM needs gamma > 0")),
            None => {
                let var = total_variance(&z);
                if var > 0.0 {
                    1.0 / (z.dim() as f64 * var)
                } else {
                    1.0
                }
            }
        };
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            kernel[i * n + i] = 1.0;
            for j in 0..i {
                let k = rbf(gamma, z.row(i), z.row(j));
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        let max_iter = params.max_iter.unwrap_or((1000 * n).max(100_000));
        let sol = solve_dual(&kernel, n, params.nu, params.tol, max_iter);
        let sv: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
        Ok(Self {
            standardizer,
            support_vectors: z.select(&sv),
            alpha: sv.iter().map(|&i| sol.alpha[i]).collect(),
            rho: sol.rho,
            gamma,
            nu: params.nu,
            iterations: sol.iterations,
            converged: sol.converged,
            gap: sol.gap,
        })
    }

    /// Decision function on standardised input (positive inside).
    fn decision_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors.rows().zip(&self.alpha).map(|(s, a)| a * rbf(self.gamma, s, z)).sum::<f64>() - self.rho
    }

    pub fn decision_function(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.standardizer.dim(), points.dim())?;
        let mut z = vec![0.0; points.dim()];
        Ok(points
            .rows()
            .map(|r| {
                self.standardizer.transform_row(r, &mut z);
                self.decision_standardized(&z)
            })
            .collect())
    }

    /// Negated decision function.
    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        Ok(self.decision_function(points)?.into_iter().map(|v| -v).collect())
    }
}
