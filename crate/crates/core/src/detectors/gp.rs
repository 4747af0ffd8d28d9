//! Exact Gaussian-process regression with an RBF kernel and the three GP
//! based detectors: predictive uncertainty, noise-contrastive priors and
//! auto-associative reconstruction.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, OodError, Result};
use crate::points::{sq_dist, Points, Standardizer};
use crate::rng::substream;
use crate::toyspace::Dataset;

/// Default observation noise variance.
pub const DEFAULT_NOISE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub signal_variance: f64,
    pub length_scale: f64,
}

impl RbfKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance * (-0.5 * sq_dist(a, b) / (self.length_scale * self.length_scale)).exp()
    }
}

/// Median of all pairwise distances, or 1 when undefined or zero.
pub fn median_pairwise_distance(points: &Points) -> f64 {
    let n = points.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in 0..i {
            d.push(sq_dist(points.row(i), points.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Signal variance from the targets, falling back to 1 for constant targets.
pub fn signal_variance_of(targets: &[f64]) -> f64 {
    let v = variance(targets);
    if v > 1e-12 {
        v
    } else {
        1.0
    }
}

/// A fitted GP regressor (zero-mean prior on centred targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRegressor {
    pub inputs: Points,
    pub kernel: RbfKernel,
    /// Lower Cholesky factor of `K + diag(noise) + jitter * I`.
    pub cholesky: DMatrix<f64>,
    /// `(K + diag(noise))^-1 (y - mean)`.
    pub weights: Vec<f64>,
    pub target_mean: f64,
    pub jitter: f64,
}

impl GpRegressor {
    /// `noise` holds one observation-noise variance per input.
    pub fn fit(inputs: &Points, targets: &[f64], kernel: RbfKernel, noise: &[f64]) -> Result<Self> {
        let n = inputs.len();
        check_dim(n, targets.len())?;
        check_dim(n, noise.len())?;
        if n == 0 {
            return Err(invalid("GP needs at least one training point"));
        }
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(inputs.row(i), inputs.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += noise[i];
        }
        let mut jitter = 0.0;
        let mut chol = k.clone().cholesky();
        let mut next = 1e-10 * kernel.signal_variance;
        for _ in 0..3 {
            if chol.is_some() {
                break;
            }
            jitter = next;
            chol = (&k + DMatrix::identity(n, n) * jitter).cholesky();
            next *= 10.0;
        }
        let chol = chol.ok_or_else(|| OodError::NotPositiveDefinite("GP kernel matrix".into()))?;
        let target_mean = targets.iter().sum::<f64>() / n as f64;
        let y = DVector::from_iterator(n, targets.iter().map(|t| t - target_mean));
        let weights = chol.solve(&y).as_slice().to_vec();
        Ok(Self { inputs: inputs.clone(), kernel, cholesky: chol.l(), weights, target_mean, jitter })
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.rows().map(|r| self.kernel.eval(r, x)))
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.target_mean + self.cross(x).as_slice().iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Latent predictive variance (observation noise excluded), clamped at 0.
    pub fn predict_variance(&self, x: &[f64]) -> f64 {
        let k = self.cross(x);
        let v = self.cholesky.solve_lower_triangular(&k).expect("Cholesky factor has a non-zero diagonal");
        (self.kernel.eval(x, x) - v.norm_squared()).max(0.0)
    }
}

fn subsample_indices(n: usize, fraction: f64, seed: u64, purpose: &str) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("subsample fraction must lie in (0, 1]"));
    }
    let m = (fraction * n as f64).round() as usize;
    if m < 2 {
        return Err(invalid(format!("subsample of {n} points at fraction {fraction} has fewer than 2 points")));
    }
    let mut rng = substream(seed, &["subsample", purpose]);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// GP uncertainty detector: predictive standard deviation on standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDetector {
    pub standardizer: Standardizer,
    pub gp: GpRegressor,
    pub subsample_fraction: f64,
}

impl GpDetector {
    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.standardizer.dim(), points.dim())?;
        let mut z = vec![0.0; points.dim()];
        Ok(points
            .rows()
            .map(|r| {
                self.standardizer.transform_row(r, &mut z);
                self.gp.predict_variance(&z).sqrt()
            })
            .collect())
    }
}

struct Prepared {
    standardizer: Standardizer,
    inputs: Points,
    targets: Vec<f64>,
    kernel: RbfKernel,
}

fn prepare(train: &Dataset, fraction: f64, seed: u64, purpose: &str) -> Result<Prepared> {
    let standardizer = Standardizer::fit(&train.points);
    let idx = subsample_indices(train.len(), fraction, seed, purpose)?;
    let inputs = standardizer.transform(&train.points.select(&idx))?;
    let all_targets = train.targets_or_first_feature();
    let targets: Vec<f64> = idx.iter().map(|&i| all_targets[i]).collect();
    let kernel =
        RbfKernel { signal_variance: signal_variance_of(&targets), length_scale: median_pairwise_distance(&inputs) };
    Ok(Prepared { standardizer, inputs, targets, kernel })
}

/// GP regression of the toy target on a uniform subsample of the inputs.
pub fn fit_gp(train: &Dataset, subsample_fraction: f64, seed: u64) -> Result<GpDetector> {
    let p = prepare(train, subsample_fraction, seed, "gp")?;
    let noise = vec![DEFAULT_NOISE; p.inputs.len()];
    let gp = GpRegressor::fit(&p.inputs, &p.targets, p.kernel, &noise)?;
    Ok(GpDetector { standardizer: p.standardizer, gp, subsample_fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcGpParams {
    /// Standard deviation of the Gaussian input perturbation (standardised units).
    pub noise_scale: f64,
    /// Observation-noise variance attached to the pseudo-points.
    pub pseudo_noise_variance: f64,
}

impl Default for NcGpParams {
    fn default() -> Self {
        Self { noise_scale: 0.5, pseudo_noise_variance: 1.0 }
    }
}

/// GP with a noise-contrastive prior: every subsampled input gets a perturbed
/// pseudo-point carrying the mean target and a large observation noise.
pub fn fit_ncgp(train: &Dataset, subsample_fraction: f64, params: &NcGpParams, seed: u64) -> Result<GpDetector> {
    // same subsample as the plain GP for a like-for-like comparison
    let p = prepare(train, subsample_fraction, seed, "gp")?;
    let m = p.inputs.len();
    let mut rng = substream(seed, &["ncgp", "pseudo"]);
    let pseudo = p.inputs.map_rows(|s, d| {
        for (o, x) in d.iter_mut().zip(s) {
            let z: f64 = rng.sample(StandardNormal);
            *o = x + params.noise_scale * z;
        }
    });
    let inputs = p.inputs.concat(&pseudo)?;
    let mean = p.targets.iter().sum::<f64>() / m as f64;
    let mut targets = p.targets.clone();
    targets.extend(std::iter::repeat_n(mean, m));
    let mut noise = vec![DEFAULT_NOISE; m];
    noise.extend(std::iter::repeat_n(params.pseudo_noise_variance, m));
    let gp = GpRegressor::fit(&inputs, &targets, p.kernel, &noise)?;
    Ok(GpDetector { standardizer: p.standardizer, gp, subsample_fraction })
}

/// One GP per input dimension reconstructing that coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaGpModel {
    pub standardizer: Standardizer,
    pub gps: Vec<GpRegressor>,
    pub subsample_fraction: f64,
}

pub fn fit_aa_gp(train: &Dataset, subsample_fraction: f64, seed: u64) -> Result<AaGpModel> {
    let standardizer = Standardizer::fit(&train.points);
    let idx = subsample_indices(train.len(), subsample_fraction, seed, "aa-gp")?;
    let inputs = standardizer.transform(&train.points.select(&idx))?;
    let length_scale = median_pairwise_distance(&inputs);
    let noise = vec![DEFAULT_NOISE; inputs.len()];
    let gps = (0..inputs.dim())
        .map(|d| {
            let y = inputs.column(d);
            let kernel = RbfKernel { signal_variance: signal_variance_of(&y), length_scale };
            GpRegressor::fit(&inputs, &y, kernel, &noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AaGpModel { standardizer, gps, subsample_fraction })
}

impl AaGpModel {
    /// Sum of squared differences between the standardised input and its
    /// per-dimension GP reconstruction.
    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.standardizer.dim(), points.dim())?;
        let mut z = vec![0.0; points.dim()];
        Ok(points
            .rows()
            .map(|r| {
                self.standardizer.transform_row(r, &mut z);
                self.gps
                    .iter()
                    .enumerate()
                    .map(|(d, gp)| {
                        let e = z[d] - gp.predict_mean(&z);
                        e * e
                    })
                    .sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> RbfKernel {
        RbfKernel { signal_variance: 1.3, length_scale: 0.7 }
    }

    #[test]
    fn one_point_variance_matches_closed_form() {
        let x0 = Points::from_rows(&[[0.2, -0.1]]).unwrap();
        let k = kernel();
        let noise = 0.05;
        let gp = GpRegressor::fit(&x0, &[0.4], k, &[noise]).unwrap();
        for q in [[0.0, 0.0], [1.0, 0.5], [0.2, -0.1], [-3.0, 2.0]] {
            let kx0 = k.eval(&q, x0.row(0));
            let want = k.eval(&q, &q) - kx0 * kx0 / (k.eval(x0.row(0), x0.row(0)) + noise);
            assert!((gp.predict_variance(&q) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn one_point_mean_matches_closed_form() {
        let x0 = Points::from_rows(&[[1.0]]).unwrap();
        let k = kernel();
        let gp = GpRegressor::fit(&x0, &[2.0], k, &[0.1]).unwrap();
        // single target is its own mean, so the posterior mean is flat
        assert!((gp.predict_mean(&[0.3]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn variance_at_training_input_is_below_noise() {
        let x = Points::from_rows(&[[0.0], [0.5], [1.0], [3.0]]).unwrap();
        let gp = GpRegressor::fit(&x, &[0.0, 1.0, 0.0, 2.0], kernel(), &[DEFAULT_NOISE; 4]).unwrap();
        for r in x.rows() {
            assert!(gp.predict_variance(r) <= DEFAULT_NOISE + 1e-6);
        }
        let far = gp.predict_variance(&[10.0 * 0.7 + 3.0]);
        assert!(far >= gp.predict_variance(&[0.5]));
    }

    #[test]
    fn duplicate_inputs_fit_thanks_to_noise() {
        let x = Points::from_rows(&[[0.0], [0.0], [0.0]]).unwrap();
        assert!(GpRegressor::fit(&x, &[1.0, 1.0, 1.0], kernel(), &[0.0; 3]).is_ok());
    }

    #[test]
    fn median_heuristic_handles_degenerate_sets() {
        assert_eq!(median_pairwise_distance(&Points::from_rows(&[[1.0]]).unwrap()), 1.0);
        assert_eq!(median_pairwise_distance(&Points::from_rows(&[[1.0], [1.0]]).unwrap()), 1.0);
        let p = Points::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        assert_eq!(median_pairwise_distance(&p), 2.0);
    }

    #[test]
    fn subsample_must_have_two_points() {
        assert!(subsample_indices(10, 0.1, 1, "x").is_err());
        assert_eq!(subsample_indices(10, 0.2, 1, "x").unwrap().len(), 2);
        assert!(subsample_indices(10, 0.0, 1, "x").is_err());
    }

    fn toy_dataset() -> Dataset {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64 / 10.0 - 2.0;
                [t, 0.5 * t + 0.05 * (i as f64 * 1.7).sin()]
            })
            .collect();
        let points = Points::from_rows(&rows).unwrap();
        let targets = rows.iter().map(|r| r[0]).collect();
        Dataset { points, targets: Some(targets) }
    }

    #[test]
    fn degenerate_nc_prior_is_a_gp_on_duplicated_data() {
        let data = toy_dataset();
        let params = NcGpParams { noise_scale: 0.0, pseudo_noise_variance: DEFAULT_NOISE };
        let nc = fit_ncgp(&data, 0.5, &params, 3).unwrap();
        let plain = fit_gp(&data, 0.5, 3).unwrap();
        let doubled = plain.gp.inputs.concat(&plain.gp.inputs).unwrap();
        let y = vec![0.0; doubled.len()];
        let dup = GpRegressor::fit(&doubled, &y, plain.gp.kernel, &vec![DEFAULT_NOISE; doubled.len()]).unwrap();
        for q in [[0.1, 0.0], [3.0, -2.0], [-1.0, 1.0]] {
            let a = nc.gp.predict_variance(&q);
            assert!((a - dup.predict_variance(&q)).abs() < 1e-12);
        }
        // far from the data the duplication stops mattering
        let far = [40.0, -40.0];
        assert!((nc.gp.predict_variance(&far).sqrt() - plain.gp.predict_variance(&far).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn pseudo_points_only_add_evidence() {
        let data = toy_dataset();
        let nc = fit_ncgp(&data, 0.5, &NcGpParams::default(), 4).unwrap();
        let plain = fit_gp(&data, 0.5, 4).unwrap();
        let m = nc.gp.inputs.len() / 2;
        for i in m..2 * m {
            let q = nc.gp.inputs.row(i);
            assert!(nc.gp.predict_variance(q) <= plain.gp.predict_variance(q) + 1e-12);
        }
    }
}
