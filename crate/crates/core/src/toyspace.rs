//! The three toy problems: two groups on a line, a sine-displaced circle
//! boundary, and a 10-D Gaussian "haystack" with one feature pinned to a
//! constant.
//!
//! Each toy knows its ground-truth ID rule and an analytic reference
//! detector (distance to the ID manifold) whose squared-error gradient
//! drives the FGSM synthesisers.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, OodError, Result};
use crate::points::Points;
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyKind {
    Line,
    Circle,
    Haystack,
}

impl ToyKind {
    pub const ALL: [ToyKind; 3] = [ToyKind::Line, ToyKind::Circle, ToyKind::Haystack];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Line => "line",
            ToyKind::Circle => "circle",
            ToyKind::Haystack => "haystack",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(ToyKind::Line),
            "circle" => Ok(ToyKind::Circle),
            "haystack" => Ok(ToyKind::Haystack),
            other => Err(invalid(format!("unknown toy '{other}'"))),
        }
    }
}

impl std::fmt::Display for ToyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub anchor: [f64; 2],
    /// Unit direction of the line.
    pub direction: [f64; 2],
    /// Two disjoint parameter ranges along the line holding the training groups.
    pub intervals: [(f64, f64); 2],
    pub window: [(f64, f64); 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleParams {
    pub center: [f64; 2],
    pub base_radius: f64,
    pub amplitude: f64,
    pub frequency: u32,
    pub window: [(f64, f64); 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaystackParams {
    pub mean: Vec<f64>,
    /// Row-major `D x D` covariance before the constant feature is pinned.
    pub covariance: Vec<f64>,
    pub constant_index: usize,
    pub constant_value: f64,
    /// Range the pinned feature is redrawn over for OOD test points and sweeps.
    pub sweep: (f64, f64),
}

impl HaystackParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Feature used as the regression target (first non-constant one).
    pub fn target_index(&self) -> usize {
        usize::from(self.constant_index == 0)
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let cov = DMatrix::from_row_slice(d, d, &self.covariance);
        if (&cov - cov.transpose()).abs().max() > 1e-10 {
            return Err(OodError::NotPositiveDefinite("haystack covariance is not symmetric".into()));
        }
        cov.cholesky().map(|c| c.l()).ok_or_else(|| OodError::NotPositiveDefinite("haystack covariance".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ToyGeometry {
    Line(LineParams),
    Circle(CircleParams),
    Haystack(HaystackParams),
}

/// Parameterisation of one toy example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    /// Standard deviation of the perpendicular / radial scatter.
    pub noise_sigma: f64,
    pub geometry: ToyGeometry,
}

/// Seed of the random rotation used by the default haystack covariance.
pub const HAYSTACK_ROTATION_SEED: u64 = 0x4841_5953_5441_434B;

impl ToySpec {
    pub fn line() -> Self {
        let s = 5f64.sqrt();
        Self {
            noise_sigma: 0.1,
            geometry: ToyGeometry::Line(LineParams {
                anchor: [0.0, 0.0],
                direction: [2.0 / s, 1.0 / s],
                intervals: [(-3.0, -1.0), (1.0, 3.0)],
                window: [(-5.0, 5.0), (-5.0, 5.0)],
            }),
        }
    }

    pub fn circle() -> Self {
        Self {
            noise_sigma: 0.1,
            geometry: ToyGeometry::Circle(CircleParams {
                center: [0.0, 0.0],
                base_radius: 2.0,
                amplitude: 0.3,
                frequency: 6,
                window: [(-3.5, 3.5), (-3.5, 3.5)],
            }),
        }
    }

    pub fn haystack() -> Self {
        let d = 10;
        let q = random_orthogonal(d, &mut substream(HAYSTACK_ROTATION_SEED, &["haystack", "rotation"]));
        let eig =
            DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| 0.25 + 0.75 * i as f64 / (d - 1) as f64));
        let cov = &q * eig * q.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        let c = 0.5;
        Self {
            noise_sigma: 0.1,
            geometry: ToyGeometry::Haystack(HaystackParams {
                mean: vec![0.0; d],
                covariance: cov.transpose().as_slice().to_vec(),
                constant_index: 4,
                constant_value: c,
                sweep: (c - 3.0, c + 3.0),
            }),
        }
    }

    pub fn default_for(kind: ToyKind) -> Self {
        match kind {
            ToyKind::Line => Self::line(),
            ToyKind::Circle => Self::circle(),
            ToyKind::Haystack => Self::haystack(),
        }
    }

    pub fn kind(&self) -> ToyKind {
        match self.geometry {
            ToyGeometry::Line(_) => ToyKind::Line,
            ToyGeometry::Circle(_) => ToyKind::Circle,
            ToyGeometry::Haystack(_) => ToyKind::Haystack,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.geometry {
            ToyGeometry::Haystack(h) => h.dim(),
            _ => 2,
        }
    }

    /// Plotting window of the 2-D toys.
    pub fn window(&self) -> Option<[(f64, f64); 2]> {
        match &self.geometry {
            ToyGeometry::Line(l) => Some(l.window),
            ToyGeometry::Circle(c) => Some(c.window),
            ToyGeometry::Haystack(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0) {
            return Err(invalid("noise_sigma must be positive"));
        }
        match &self.geometry {
            ToyGeometry::Line(l) => {
                let n = (l.direction[0].powi(2) + l.direction[1].powi(2)).sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(invalid("line direction must be a unit vector"));
                }
                let [(a0, a1), (b0, b1)] = l.intervals;
                if !(a0 < a1 && b0 < b1) || !(a1 < b0 || b1 < a0) {
                    return Err(invalid("line cluster intervals must be non-empty and disjoint"));
                }
            }
            ToyGeometry::Circle(c) => {
                if !(c.amplitude >= 0.0 && c.amplitude < c.base_radius) {
                    return Err(invalid("circle amplitude must be below the base radius"));
                }
            }
            ToyGeometry::Haystack(h) => {
                let d = h.dim();
                if h.covariance.len() != d * d {
                    return Err(invalid("haystack covariance must be D x D"));
                }
                if h.constant_index >= d || d < 2 {
                    return Err(invalid("haystack constant index out of range"));
                }
                if !(h.sweep.0 < h.sweep.1) {
                    return Err(invalid("haystack sweep range is empty"));
                }
                h.cholesky()?;
            }
        }
        Ok(())
    }
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the sign convention fixed by the diagonal of R).
pub fn random_orthogonal(d: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Points plus the toy's output variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Points,
    pub targets: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(points: Points) -> Self {
        Self { points, targets: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Targets, or the first feature when the dataset carries none.
    pub fn targets_or_first_feature(&self) -> Vec<f64> {
        self.targets.clone().unwrap_or_else(|| self.points.column(0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// Ground truth of the test split.
    pub test_is_id: Vec<bool>,
}

fn truncated_normal(rng: &mut StreamRng, sigma: f64) -> f64 {
    // scatter is truncated at two standard deviations so every ID point
    // satisfies the ground-truth rule
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * sigma;
        }
    }
}

fn sample_id_point(spec: &ToySpec, chol: Option<&DMatrix<f64>>, rng: &mut StreamRng) -> Vec<f64> {
    match &spec.geometry {
        ToyGeometry::Line(l) => {
            let (lo, hi) = l.intervals[rng.random_range(0..2)];
            let t = rng.random_range(lo..hi);
            let n = truncated_normal(rng, spec.noise_sigma);
            let [ux, uy] = l.direction;
            vec![l.anchor[0] + t * ux - n * uy, l.anchor[1] + t * uy + n * ux]
        }
        ToyGeometry::Circle(c) => {
            let theta = rng.random_range(-PI..PI);
            let n = truncated_normal(rng, spec.noise_sigma);
            let r = c.base_radius + c.amplitude * (f64::from(c.frequency) * theta).sin() + n;
            vec![c.center[0] + r * theta.cos(), c.center[1] + r * theta.sin()]
        }
        ToyGeometry::Haystack(h) => {
            let mut x = sample_haystack_base(h, chol.expect("haystack cholesky"), rng);
            x[h.constant_index] = h.constant_value;
            x
        }
    }
}

/// One draw from the haystack's base Gaussian (constant feature not pinned).
pub fn sample_haystack_base(h: &HaystackParams, chol: &DMatrix<f64>, rng: &mut StreamRng) -> Vec<f64> {
    let d = h.dim();
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    (0..d).map(|i| h.mean[i] + (0..=i).map(|j| chol[(i, j)] * z[j]).sum::<f64>()).collect()
}

/// Draws `n` haystack points with the pinned feature set to `value`.
pub fn sample_haystack_with_constant(spec: &ToySpec, value: f64, n: usize, rng: &mut StreamRng) -> Result<Points> {
    let ToyGeometry::Haystack(h) = &spec.geometry else {
        return Err(invalid("not a haystack toy"));
    };
    let chol = h.cholesky()?;
    let mut out = Points::zeros(n, h.dim());
    for i in 0..n {
        let mut x = sample_haystack_base(h, &chol, rng);
        x[h.constant_index] = value;
        out.row_mut(i).copy_from_slice(&x);
    }
    Ok(out)
}

fn sample_ood_point(spec: &ToySpec, chol: Option<&DMatrix<f64>>, rng: &mut StreamRng) -> Vec<f64> {
    match &spec.geometry {
        ToyGeometry::Haystack(h) => loop {
            let mut x = sample_haystack_base(h, chol.expect("haystack cholesky"), rng);
            x[h.constant_index] = rng.random_range(h.sweep.0..h.sweep.1);
            if x[h.constant_index] != h.constant_value {
                return x;
            }
        },
        _ => {
            let [(x0, x1), (y0, y1)] = spec.window().expect("2-D toy");
            loop {
                let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
                if !point_is_id(spec, &p) {
                    return p.to_vec();
                }
            }
        }
    }
}

fn target_of(spec: &ToySpec, x: &[f64]) -> f64 {
    match &spec.geometry {
        ToyGeometry::Line(l) => (x[0] - l.anchor[0]) * l.direction[0] + (x[1] - l.anchor[1]) * l.direction[1],
        ToyGeometry::Circle(c) => (x[1] - c.center[1]).atan2(x[0] - c.center[0]),
        ToyGeometry::Haystack(h) => x[h.target_index()],
    }
}

fn dataset_from_rows(spec: &ToySpec, rows: Vec<Vec<f64>>) -> Result<Dataset> {
    let targets = rows.iter().map(|r| target_of(spec, r)).collect();
    let points = Points::from_rows(&rows)?;
    Ok(Dataset { points, targets: Some(targets) })
}

/// Generates train / validation / test splits for a toy.
///
/// Train and validation hold ID points only. The test split mixes ID and
/// OOD points with equal probability and records which branch produced each.
pub fn generate_toy(spec: &ToySpec, seed: u64, n_train: usize, n_valid: usize, n_test: usize) -> Result<LabeledSplits> {
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(invalid("split sizes must be at least 1"));
    }
    spec.validate()?;
    let chol = match &spec.geometry {
        ToyGeometry::Haystack(h) => Some(h.cholesky()?),
        _ => None,
    };
    let toy = spec.kind().name();
    let draw_id = |purpose: &str, n: usize| -> Result<Dataset> {
        let mut rng = substream(seed, &[toy, purpose]);
        let rows = (0..n).map(|_| sample_id_point(spec, chol.as_ref(), &mut rng)).collect();
        dataset_from_rows(spec, rows)
    };
    let train = draw_id("train", n_train)?;
    let valid = draw_id("valid", n_valid)?;

    let mut rng = substream(seed, &[toy, "test"]);
    let mut rows = Vec::with_capacity(n_test);
    let mut test_is_id = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let is_id = rng.random_bool(0.5);
        let p = if is_id {
            sample_id_point(spec, chol.as_ref(), &mut rng)
        } else {
            sample_ood_point(spec, chol.as_ref(), &mut rng)
        };
        rows.push(p);
        test_is_id.push(is_id);
    }
    let test = dataset_from_rows(spec, rows)?;
    Ok(LabeledSplits { train, valid, test, test_is_id })
}

fn point_reference_score(spec: &ToySpec, x: &[f64]) -> f64 {
    match &spec.geometry {
        ToyGeometry::Line(l) => {
            let [ux, uy] = l.direction;
            ((x[0] - l.anchor[0]) * -uy + (x[1] - l.anchor[1]) * ux).abs()
        }
        ToyGeometry::Circle(c) => {
            let dx = x[0] - c.center[0];
            let dy = x[1] - c.center[1];
            let r = dx.hypot(dy);
            let theta = dy.atan2(dx);
            (r - c.base_radius - c.amplitude * (f64::from(c.frequency) * theta).sin()).abs()
        }
        ToyGeometry::Haystack(h) => (x[h.constant_index] - h.constant_value).abs(),
    }
}

fn point_is_id(spec: &ToySpec, x: &[f64]) -> bool {
    match &spec.geometry {
        ToyGeometry::Haystack(h) => x[h.constant_index] == h.constant_value,
        _ => {
            let limit = 2.0 * spec.noise_sigma;
            point_reference_score(spec, x) <= limit * (1.0 + 1e-12)
        }
    }
}

/// Ground-truth ID flags: within two noise standard deviations of the line
/// or circle boundary, or sharing the haystack's constant value exactly.
pub fn ground_truth_id(spec: &ToySpec, points: &Points) -> Result<Vec<bool>> {
    check_dim(spec.dim(), points.dim())?;
    Ok(points.rows().map(|x| point_is_id(spec, x)).collect())
}

/// Distance to the ID manifold; zero exactly on it.
pub fn reference_ood_score(spec: &ToySpec, points: &Points) -> Result<Vec<f64>> {
    check_dim(spec.dim(), points.dim())?;
    Ok(points.rows().map(|x| point_reference_score(spec, x)).collect())
}

/// Analytic gradient of the squared reference score.
pub fn reference_error_gradient(spec: &ToySpec, points: &Points) -> Result<Points> {
    check_dim(spec.dim(), points.dim())?;
    Ok(points.map_rows(|x, g| match &spec.geometry {
        ToyGeometry::Line(l) => {
            let [ux, uy] = l.direction;
            let d = (x[0] - l.anchor[0]) * -uy + (x[1] - l.anchor[1]) * ux;
            g[0] = -2.0 * d * uy;
            g[1] = 2.0 * d * ux;
        }
        ToyGeometry::Circle(c) => {
            let dx = x[0] - c.center[0];
            let dy = x[1] - c.center[1];
            let r2 = dx * dx + dy * dy;
            if r2 == 0.0 {
                g[0] = 0.0;
                g[1] = 0.0;
                return;
            }
            let r = r2.sqrt();
            let f = f64::from(c.frequency);
            let theta = dy.atan2(dx);
            let resid = r - c.base_radius - c.amplitude * (f * theta).sin();
            // d(resid) = dr - A f cos(f theta) dtheta
            let k = c.amplitude * f * (f * theta).cos();
            let gx = dx / r + k * dy / r2;
            let gy = dy / r - k * dx / r2;
            g[0] = 2.0 * resid * gx;
            g[1] = 2.0 * resid * gy;
        }
        ToyGeometry::Haystack(h) => {
            g.iter_mut().for_each(|v| *v = 0.0);
            g[h.constant_index] = 2.0 * (x[h.constant_index] - h.constant_value);
        }
    }))
}

/// Writes a dataset as CSV with header `x0,...,xD-1,target,is_id`.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, is_id: Option<&[bool]>, out: W) -> Result<()> {
    let d = dataset.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("target".into());
    header.push("is_id".into());
    w.write_record(&header)?;
    for (i, row) in dataset.points.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(dataset.targets.as_ref().map_or(String::new(), |t| t[i].to_string()));
        let id = is_id.map_or(true, |f| f[i]);
        rec.push(u8::from(id).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Symmetric positive-definite check via the smallest eigenvalue.
pub fn min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(cov.clone()).eigenvalues.min()
}
