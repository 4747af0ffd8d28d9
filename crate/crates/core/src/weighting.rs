//! OOD sample weighting from kernel density proxies.
//!
//! Three densities are estimated in a shared space: the input-domain density
//! `f_X`, the ID density `f_ID` and the synthetic OOD density `f_OOD`. The
//! last two are shrunk until `f_X` dominates them on a set of evaluation
//! points, and each synthetic sample is then weighted by the share of the
//! combined density that is not claimed by ID data:
//!
//! ```text
//! w_OOD(x) = 1 - f_ID(x) / max(f_ID(x), f_OOD(x))
//! ```

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, OodError, Result};
use crate::points::Points;
use crate::synthesis::SynthesisedSet;
use crate::toyspace::{reference_ood_score, ToySpec};

/// Densities below this are treated as zero.
pub const DENSITY_FLOOR: f64 = 1e-12;
const GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSpace {
    InputSpace,
    /// One-dimensional space of reference reconstruction errors.
    ReferenceErrorSpace,
}

impl EvalSpace {
    pub fn default_kernel(self) -> KernelKind {
        match self {
            EvalSpace::InputSpace => KernelKind::Gaussian,
            EvalSpace::ReferenceErrorSpace => KernelKind::Linear,
        }
    }

    /// Maps input points into this space.
    pub fn embed(self, spec: &ToySpec, points: &Points) -> Result<Points> {
        match self {
            EvalSpace::InputSpace => Ok(points.clone()),
            EvalSpace::ReferenceErrorSpace => Points::new(reference_ood_score(spec, points)?, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Product of triangular kernels `max(0, 1 - |u|)`.
    Linear,
    Gaussian,
}

impl KernelKind {
    fn eval(self, u: &[f64]) -> f64 {
        match self {
            KernelKind::Linear => u.iter().map(|v| (1.0 - v.abs()).max(0.0)).product(),
            KernelKind::Gaussian => {
                let d = u.len() as f64;
                let r2: f64 = u.iter().map(|v| v * v).sum();
                (-0.5 * r2).exp() / (2.0 * PI).powf(0.5 * d)
            }
        }
    }
}

/// Kernel density estimate over a fixed sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfProxy {
    pub space: EvalSpace,
    pub kernel: KernelKind,
    pub bandwidth: f64,
    pub support: Points,
}

impl PdfProxy {
    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn density_at(&self, x: &[f64]) -> f64 {
        let h = self.bandwidth;
        let d = self.dim();
        let norm = self.support.len() as f64 * h.powi(d as i32);
        let mut u = vec![0.0; d];
        let mut sum = 0.0;
        for s in self.support.rows() {
            if self.kernel == KernelKind::Linear && s.iter().zip(x).any(|(a, b)| (a - b).abs() >= h) {
                continue;
            }
            for j in 0..d {
                u[j] = (x[j] - s[j]) / h;
            }
            sum += self.kernel.eval(&u);
        }
        sum / norm
    }

    /// Densities at points already expressed in this proxy's space.
    pub fn evaluate(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.dim(), points.dim())?;
        Ok(points.rows().map(|x| self.density_at(x)).collect())
    }
}

/// `pdf(x) = 1/(n h^d) * sum_i K((x - x_i) / h)` in input space; use
/// [`estimate_pdf_in`] to tag another space.
pub fn estimate_pdf(samples: &Points, kernel: KernelKind, bandwidth: f64) -> Result<PdfProxy> {
    estimate_pdf_in(EvalSpace::InputSpace, samples, kernel, bandwidth)
}

pub fn estimate_pdf_in(space: EvalSpace, samples: &Points, kernel: KernelKind, bandwidth: f64) -> Result<PdfProxy> {
    if samples.is_empty() {
        return Err(invalid("a density estimate needs at least one sample"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(invalid("bandwidth must be positive"));
    }
    Ok(PdfProxy { space, kernel, bandwidth, support: samples.clone() })
}

/// Scalar Scott bandwidth `n^(-1/(d+4))` times the mean feature standard
/// deviation, falling back to 1 when every feature is constant.
pub fn scott_scalar_bandwidth(samples: &Points) -> f64 {
    let std = samples.std();
    let positive: Vec<f64> = std.into_iter().filter(|s| *s > DENSITY_FLOOR).collect();
    let spread = if positive.is_empty() { 1.0 } else { positive.iter().sum::<f64>() / positive.len() as f64 };
    (samples.len() as f64).powf(-1.0 / (samples.dim() as f64 + 4.0)) * spread
}

/// Largest `s <= 1` with `s * f <= f_x` at every point where `f` is not
/// negligible.
pub fn domination_scale(f_x: &[f64], f: &[f64]) -> Result<f64> {
    check_dim(f_x.len(), f.len())?;
    if f_x.iter().all(|v| *v <= 0.0) {
        return Err(OodError::DegenerateDensity("input-domain density vanishes on every evaluation point".into()));
    }
    Ok(f_x.iter().zip(f).filter(|(_, fv)| **fv >= DENSITY_FLOOR).map(|(x, fv)| x / fv).fold(1.0, f64::min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingContext {
    pub f_x: PdfProxy,
    pub f_id: PdfProxy,
    pub f_ood: PdfProxy,
    pub s_id: f64,
    pub s_ood: f64,
}

impl WeightingContext {
    pub fn new(f_x: PdfProxy, f_id: PdfProxy, f_ood: PdfProxy) -> Result<Self> {
        check_dim(f_x.dim(), f_id.dim())?;
        check_dim(f_x.dim(), f_ood.dim())?;
        Ok(Self { f_x, f_id, f_ood, s_id: 1.0, s_ood: 1.0 })
    }

    /// Scaled ID and OOD densities at points in the proxies' space.
    pub fn scaled_densities(&self, points: &Points) -> Result<(Vec<f64>, Vec<f64>)> {
        let id = self.f_id.evaluate(points)?.into_iter().map(|v| v * self.s_id).collect();
        let ood = self.f_ood.evaluate(points)?.into_iter().map(|v| v * self.s_ood).collect();
        Ok((id, ood))
    }
}

pub fn rescale_dominate(ctx: &WeightingContext, eval_points: &Points) -> Result<WeightingContext> {
    let fx = ctx.f_x.evaluate(eval_points)?;
    let mut out = ctx.clone();
    out.s_id = domination_scale(&fx, &ctx.f_id.evaluate(eval_points)?)?;
    out.s_ood = domination_scale(&fx, &ctx.f_ood.evaluate(eval_points)?)?;
    Ok(out)
}

/// `1 - id / max(id, ood)`, and 1 where both densities vanish.
pub fn ood_weight_from(id: f64, ood: f64) -> f64 {
    if id < DENSITY_FLOOR && ood < DENSITY_FLOOR {
        return 1.0;
    }
    1.0 - id / id.max(ood)
}

pub fn ood_weight(ctx: &WeightingContext, points: &Points) -> Result<Vec<f64>> {
    let (id, ood) = ctx.scaled_densities(points)?;
    Ok(id.iter().zip(&ood).map(|(a, b)| ood_weight_from(*a, *b)).collect())
}

pub fn id_weight(ctx: &WeightingContext, points: &Points) -> Result<Vec<f64>> {
    Ok(ood_weight(ctx, points)?.into_iter().map(|w| 1.0 - w).collect())
}

/// Deterministic grid of about `GRID_POINTS` points over the box: a full
/// lattice up to three dimensions, a Kronecker sequence above.
fn box_grid(lo: &[f64], hi: &[f64]) -> Points {
    let d = lo.len();
    if d <= 3 {
        let m = ((GRID_POINTS as f64).powf(1.0 / d as f64).floor() as usize).max(2);
        let total = m.pow(d as u32);
        let mut out = Points::zeros(total, d);
        for k in 0..total {
            let mut rest = k;
            let row = out.row_mut(k);
            for j in 0..d {
                let i = rest % m;
                rest /= m;
                row[j] = lo[j] + (hi[j] - lo[j]) * i as f64 / (m - 1) as f64;
            }
        }
        out
    } else {
        // generalised golden ratio: phi^(d+1) = phi + 1
        let mut phi = 2.0f64;
        for _ in 0..50 {
            phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
        }
        let alpha: Vec<f64> = (1..=d).map(|j| phi.powi(-(j as i32)).fract()).collect();
        let mut out = Points::zeros(GRID_POINTS, d);
        for k in 0..GRID_POINTS {
            let row = out.row_mut(k);
            for j in 0..d {
                let u = (0.5 + alpha[j] * (k + 1) as f64).fract();
                row[j] = lo[j] + (hi[j] - lo[j]) * u;
            }
        }
        out
    }
}

/// ID and OOD sample locations plus a grid over their joint bounding box.
pub fn evaluation_points(id: &Points, ood: &Points) -> Result<Points> {
    let all = id.concat(ood)?;
    let d = all.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in all.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    all.concat(&box_grid(&lo, &hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingOptions {
    pub space: EvalSpace,
    pub kernel: KernelKind,
    /// `None` picks the Scott bandwidth of the pooled ID and OOD samples.
    pub bandwidth: Option<f64>,
}

impl WeightingOptions {
    pub fn in_space(space: EvalSpace) -> Self {
        Self { space, kernel: space.default_kernel(), bandwidth: None }
    }
}

impl Default for WeightingOptions {
    /// Linear-kernel density of reference reconstruction errors.
    fn default() -> Self {
        Self::in_space(EvalSpace::ReferenceErrorSpace)
    }
}

/// Builds the proxies in the chosen space, taking `f_X = f_OOD`, and returns
/// the context together with the rescaled weights of the synthetic points.
pub fn build_context(
    train: &Points,
    ood: &Points,
    spec: &ToySpec,
    options: &WeightingOptions,
) -> Result<(WeightingContext, Points)> {
    let id_e = options.space.embed(spec, train)?;
    let ood_e = options.space.embed(spec, ood)?;
    let h = match options.bandwidth {
        Some(h) => h,
        None => scott_scalar_bandwidth(&id_e.concat(&ood_e)?),
    };
    let f_id = estimate_pdf_in(options.space, &id_e, options.kernel, h)?;
    let f_ood = estimate_pdf_in(options.space, &ood_e, options.kernel, h)?;
    let ctx = WeightingContext::new(f_ood.clone(), f_id, f_ood)?;
    let ctx = rescale_dominate(&ctx, &evaluation_points(&id_e, &ood_e)?)?;
    Ok((ctx, ood_e))
}

/// Overwrites the set's weights with `w_OOD`.
pub fn weight_synthesised_set(
    train: &Points,
    ood_set: &SynthesisedSet,
    spec: &ToySpec,
    options: &WeightingOptions,
) -> Result<SynthesisedSet> {
    let (ctx, ood_e) = build_context(train, &ood_set.points, spec, options)?;
    let mut out = ood_set.clone();
    out.weights = ood_weight(&ctx, &ood_e)?;
    Ok(out)
}

/// CSV with header `weight`, one row per synthetic point.
pub fn write_weights_csv<W: Write>(weights: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["weight"])?;
    for v in weights {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(v: &[f64]) -> Points {
        Points::new(v.to_vec(), 1).unwrap()
    }

    #[test]
    fn linear_kernel_single_sample() {
        let p = estimate_pdf(&one_d(&[0.0]), KernelKind::Linear, 1.0).unwrap();
        assert_eq!(p.evaluate(&one_d(&[0.0, 0.5, 2.0, -1.0])).unwrap(), vec![1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn wide_gaussian_is_flat() {
        let p = estimate_pdf(&one_d(&[0.0, 1.0]), KernelKind::Gaussian, 1e6).unwrap();
        let v = p.evaluate(&one_d(&[-3.0, 5.0])).unwrap();
        assert!((v[0] / v[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn domination_min_ratio() {
        assert_eq!(domination_scale(&[1.0, 1.0], &[2.0, 0.5]).unwrap(), 0.5);
        assert_eq!(domination_scale(&[1.0, 1.0], &[0.2, 0.5]).unwrap(), 1.0);
        assert_eq!(domination_scale(&[1.0, 1.0], &[0.0, 0.5]).unwrap(), 1.0);
        assert!(domination_scale(&[0.0, 0.0], &[0.2, 0.5]).is_err());
    }

    #[test]
    fn weight_formula_examples() {
        assert_eq!(ood_weight_from(0.5, 0.25), 0.0);
        assert_eq!(ood_weight_from(0.0, 0.5), 1.0);
        assert!((ood_weight_from(0.2, 0.8) - 0.75).abs() < 1e-15);
        assert_eq!(ood_weight_from(0.3, 0.3), 0.0);
        assert_eq!(ood_weight_from(0.0, 0.0), 1.0);
    }

    #[test]
    fn equal_proxies_need_no_rescaling() {
        let s = one_d(&[0.0, 0.3, 1.0]);
        let f = estimate_pdf(&s, KernelKind::Linear, 0.5).unwrap();
        let ctx = WeightingContext::new(f.clone(), f.clone(), f).unwrap();
        let ctx = rescale_dominate(&ctx, &one_d(&[0.0, 0.2, 0.9, 3.0])).unwrap();
        assert_eq!((ctx.s_id, ctx.s_ood), (1.0, 1.0));
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(box_grid(&[0.0], &[1.0]).len(), 512);
        assert_eq!(box_grid(&[0.0, 0.0], &[1.0, 1.0]).len(), 22 * 22);
        let g = box_grid(&[0.0; 10], &[1.0; 10]);
        assert_eq!(g.len(), 512);
        assert!(g.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn default_proxy_is_linear_in_error_space() {
        let o = WeightingOptions::default();
        assert_eq!((o.space, o.kernel), (EvalSpace::ReferenceErrorSpace, KernelKind::Linear));
        let o = WeightingOptions::in_space(EvalSpace::InputSpace);
        assert_eq!((o.space, o.kernel), (EvalSpace::InputSpace, KernelKind::Gaussian));
    }
}
