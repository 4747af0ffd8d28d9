//! Synthetic OOD inputs for supervised detectors: uniform samples over the
//! training box, and KDE-sampled ID points pushed outwards by the fast
//! gradient sign method.

pub mod supervised;
pub mod tpoke;

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detectors::DetectorModel;
use crate::error::{check_dim, invalid, Result};
use crate::points::Points;
use crate::rng::substream;
use crate::toyspace::{reference_error_gradient, ToySpec};

pub use supervised::{train_supervised, train_supervised_with, SupervisedDetector, SupervisedParams};
pub use tpoke::{tpoke, tpoke_with, TPokeOptions, TPokeState, TPokeStep};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SynthesisMethod {
    UniformBox,
    FgsmConstant {
        eps: f64,
    },
    FgsmUniform {
        lo: f64,
        hi: f64,
    },
    /// Step set by t-poking; `uniform` draws each step from `U(0, t)`.
    FgsmTPoke {
        t: f64,
        uniform: bool,
    },
}

impl SynthesisMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SynthesisMethod::UniformBox => Ok(()),
            SynthesisMethod::FgsmConstant { eps } if eps > 0.0 => Ok(()),
            SynthesisMethod::FgsmUniform { lo, hi } if lo < hi && lo >= 0.0 => Ok(()),
            SynthesisMethod::FgsmTPoke { t, .. } if t > 0.0 => Ok(()),
            other => Err(invalid(format!("invalid synthesis parameters {other:?}"))),
        }
    }

    pub fn is_fgsm(&self) -> bool {
        !matches!(self, SynthesisMethod::UniformBox)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub method: SynthesisMethod,
    pub n_ood: usize,
    /// Isotropic KDE bandwidth; `None` uses the per-feature Scott rule.
    pub kde_bandwidth: Option<f64>,
    pub seed: u64,
}

/// Synthetic OOD points with their FGSM steps and sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisedSet {
    pub points: Points,
    pub step_sizes: Option<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SynthesisedSet {
    pub fn unweighted(points: Points, step_sizes: Option<Vec<f64>>) -> Self {
        let weights = vec![1.0; points.len()];
        Self { points, step_sizes, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `x0,...,xD-1,step,weight`; `step` is empty for
    /// non-FGSM sets.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.points.dim()).map(|j| format!("x{j}")).collect();
        header.push("step".into());
        header.push("weight".into());
        w.write_record(&header)?;
        for (i, r) in self.points.rows().enumerate() {
            let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            rec.push(self.step_sizes.as_ref().map_or(String::new(), |s| s[i].to_string()));
            rec.push(self.weights[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform samples inside the per-feature training bounding box.
pub fn sample_uniform_ood(train: &Points, n: usize, seed: u64) -> Result<SynthesisedSet> {
    if n == 0 || train.is_empty() {
        return Err(invalid("uniform synthesis needs n >= 1 and training points"));
    }
    let d = train.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in train.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    let mut rng = substream(seed, &["synthesis", "uniform"]);
    let mut out = Points::zeros(n, d);
    for i in 0..n {
        let row = out.row_mut(i);
        for j in 0..d {
            row[j] = if hi[j] > lo[j] { rng.random_range(lo[j]..=hi[j]) } else { lo[j] };
        }
    }
    Ok(SynthesisedSet::unweighted(out, None))
}

/// Per-feature Scott bandwidth `n^(-1/(D+4)) * std_j`. Constant features
/// borrow the mean bandwidth of the others so FGSM can move them.
pub fn scott_bandwidth(train: &Points) -> Vec<f64> {
    let factor = (train.len() as f64).powf(-1.0 / (train.dim() as f64 + 4.0));
    let std = train.std();
    let positive: Vec<f64> = std.iter().copied().filter(|s| *s > 1e-12).collect();
    let fallback = if positive.is_empty() { 1.0 } else { positive.iter().sum::<f64>() / positive.len() as f64 };
    std.into_iter().map(|s| factor * if s > 1e-12 { s } else { fallback }).collect()
}

/// Gaussian-kernel KDE samples: a uniformly chosen training point plus
/// per-feature Gaussian noise.
pub fn sample_kde_id(train: &Points, bandwidth: &[f64], n: usize, seed: u64) -> Result<Points> {
    check_dim(train.dim(), bandwidth.len())?;
    if bandwidth.iter().any(|h| !(*h >= 0.0)) {
        return Err(invalid("KDE bandwidth must be non-negative"));
    }
    if train.is_empty() {
        return Err(invalid("KDE sampling needs training points"));
    }
    let mut rng = substream(seed, &["synthesis", "kde"]);
    let mut out = Points::zeros(n, train.dim());
    for i in 0..n {
        let src = train.row(rng.random_range(0..train.len()));
        let row = out.row_mut(i);
        for j in 0..src.len() {
            let z: f64 = rng.sample(StandardNormal);
            row[j] = src[j] + bandwidth[j] * z;
        }
    }
    Ok(out)
}

/// `x + step * sign(grad)` per row, with `sign(0) = 0`.
pub fn fgsm_perturb(points: &Points, steps: &[f64], grads: &Points) -> Result<Points> {
    check_dim(points.len(), steps.len())?;
    check_dim(points.len(), grads.len())?;
    check_dim(points.dim(), grads.dim())?;
    if steps.iter().any(|s| !(*s >= 0.0)) {
        return Err(invalid("FGSM steps must be non-negative"));
    }
    let mut out = points.clone();
    for i in 0..points.len() {
        let g = grads.row(i);
        for (x, gj) in out.row_mut(i).iter_mut().zip(g) {
            let s = if *gj > 0.0 {
                1.0
            } else if *gj < 0.0 {
                -1.0
            } else {
                0.0
            };
            *x += steps[i] * s;
        }
    }
    Ok(out)
}

/// Central finite-difference gradient of a detector's squared OOD score, for
/// detectors without an analytic gradient.
pub fn finite_difference_error_gradient(model: &DetectorModel, points: &Points, h: f64) -> Result<Points> {
    let d = points.dim();
    let mut grad = Points::zeros(points.len(), d);
    for j in 0..d {
        let shift = |delta: f64| {
            points.map_rows(|s, o| {
                o.copy_from_slice(s);
                o[j] += delta;
            })
        };
        let up = model.score(&shift(h))?;
        let down = model.score(&shift(-h))?;
        for i in 0..points.len() {
            grad.row_mut(i)[j] = (up[i] * up[i] - down[i] * down[i]) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// KDE-samples ID points and pushes them along the sign of the reference
/// detector's error gradient.
pub fn synthesise_fgsm(train: &Points, spec: &ToySpec, config: &SynthesisConfig) -> Result<SynthesisedSet> {
    config.method.validate()?;
    if !config.method.is_fgsm() {
        return Err(invalid("synthesise_fgsm needs an FGSM method"));
    }
    if config.n_ood == 0 {
        return Err(invalid("n_ood must be at least 1"));
    }
    let bw = match config.kde_bandwidth {
        Some(h) if h > 0.0 => vec![h; train.dim()],
        Some(_) => return Err(invalid("KDE bandwidth must be positive")),
        None => scott_bandwidth(train),
    };
    let base = sample_kde_id(train, &bw, config.n_ood, config.seed)?;
    let mut rng = substream(config.seed, &["synthesis", "steps"]);
    let steps: Vec<f64> = (0..config.n_ood)
        .map(|_| match config.method {
            SynthesisMethod::FgsmConstant { eps } => eps,
            SynthesisMethod::FgsmUniform { lo, hi } => rng.random_range(lo..hi),
            SynthesisMethod::FgsmTPoke { t, uniform: false } => t,
            SynthesisMethod::FgsmTPoke { t, uniform: true } => rng.random_range(0.0..t),
            SynthesisMethod::UniformBox => unreachable!("checked above"),
        })
        .collect();
    let grads = reference_error_gradient(spec, &base)?;
    let points = fgsm_perturb(&base, &steps, &grads)?;
    Ok(SynthesisedSet::unweighted(points, Some(steps)))
}

/// Dispatches on the configured method.
pub fn synthesise(train: &Points, spec: &ToySpec, config: &SynthesisConfig) -> Result<SynthesisedSet> {
    match config.method {
        SynthesisMethod::UniformBox => sample_uniform_ood(train, config.n_ood, config.seed),
        _ => synthesise_fgsm(train, spec, config),
    }
}
