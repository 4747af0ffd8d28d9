//! Confidence fields for figures: an R x R lattice over the plotting window
//! of the 2-D toys, or the haystack sweep of confidence quantiles against
//! the value of the pinned feature.

use std::io::{Read, Write};

use crate::error::{invalid, OodError, Result};
use crate::points::Points;
use crate::rng::substream;
use crate::toyspace::{sample_haystack_with_constant, ToyGeometry, ToySpec};

pub const SWEEP_VALUES: usize = 101;
pub const SWEEP_SAMPLES: usize = 1000;
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

pub const PLANE_HEADER: [&str; 3] = ["x", "y", "confidence"];
pub const SWEEP_HEADER: [&str; 6] = ["constant_value", "q05", "q25", "q50", "q75", "q95"];

#[derive(Debug, Clone, PartialEq)]
pub enum GridField {
    /// `confidence[iy * xs.len() + ix]`, rows ordered by increasing y.
    Plane {
        xs: Vec<f64>,
        ys: Vec<f64>,
        confidence: Vec<f64>,
    },
    Sweep {
        values: Vec<f64>,
        quantiles: Vec<[f64; 5]>,
        constant: f64,
    },
}

impl GridField {
    pub fn confidences(&self) -> Vec<f64> {
        match self {
            GridField::Plane { confidence, .. } => confidence.clone(),
            GridField::Sweep { quantiles, .. } => quantiles.iter().flatten().copied().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            GridField::Plane { xs, ys, confidence } => {
                w.write_record(PLANE_HEADER)?;
                for (iy, y) in ys.iter().enumerate() {
                    for (ix, x) in xs.iter().enumerate() {
                        let c = confidence[iy * xs.len() + ix];
                        w.write_record([x.to_string(), y.to_string(), c.to_string()])?;
                    }
                }
            }
            GridField::Sweep { values, quantiles, .. } => {
                w.write_record(SWEEP_HEADER)?;
                for (v, q) in values.iter().zip(quantiles) {
                    let mut rec = vec![v.to_string()];
                    rec.extend(q.iter().map(|x| x.to_string()));
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses either CSV layout. A sweep read back takes the midpoint of
    /// its value range as the pinned constant.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| {
                let rec = rec?;
                rec.iter()
                    .map(|s| s.trim().parse::<f64>().map_err(|e| invalid(format!("bad number '{s}': {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(invalid("ragged grid CSV"));
        }
        if header == PLANE_HEADER {
            let mut xs: Vec<f64> = Vec::new();
            let mut ys: Vec<f64> = Vec::new();
            for r in &rows {
                if !xs.contains(&r[0]) {
                    xs.push(r[0]);
                }
                if ys.last() != Some(&r[1]) {
                    ys.push(r[1]);
                }
            }
            if xs.len() * ys.len() != rows.len() || xs.len() < 2 || ys.len() < 2 {
                return Err(invalid("grid CSV is not a full lattice"));
            }
            let confidence = rows.iter().map(|r| r[2]).collect();
            Ok(GridField::Plane { xs, ys, confidence })
        } else if header == SWEEP_HEADER {
            if rows.is_empty() {
                return Err(invalid("empty sweep CSV"));
            }
            let values: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let quantiles = rows.iter().map(|r| [r[1], r[2], r[3], r[4], r[5]]).collect();
            let constant = 0.5 * (values[0] + values[values.len() - 1]);
            Ok(GridField::Sweep { values, quantiles, constant })
        } else {
            Err(invalid(format!("unrecognised grid header {header:?}")))
        }
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Lattice points in row-major order: y outer, x inner.
pub fn lattice(window: [(f64, f64); 2], resolution: usize) -> (Vec<f64>, Vec<f64>, Points) {
    let xs = linspace(window[0].0, window[0].1, resolution);
    let ys = linspace(window[1].0, window[1].1, resolution);
    let mut pts = Points::zeros(resolution * resolution, 2);
    for (iy, y) in ys.iter().enumerate() {
        for (ix, x) in xs.iter().enumerate() {
            pts.row_mut(iy * resolution + ix).copy_from_slice(&[*x, *y]);
        }
    }
    (xs, ys, pts)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Evaluates `confidence` over the toy's figure domain.
pub fn emit_grid(
    spec: &ToySpec,
    resolution: usize,
    seed: u64,
    confidence: impl Fn(&Points) -> Result<Vec<f64>>,
) -> Result<GridField> {
    let field = match &spec.geometry {
        ToyGeometry::Haystack(h) => {
            let values = linspace(h.sweep.0, h.sweep.1, SWEEP_VALUES);
            let mut rng = substream(seed, &["grid", "sweep"]);
            let mut quantiles = Vec::with_capacity(values.len());
            for &v in &values {
                let pts = sample_haystack_with_constant(spec, v, SWEEP_SAMPLES, &mut rng)?;
                let mut c = confidence(&pts)?;
                c.sort_by(f64::total_cmp);
                quantiles.push(QUANTILES.map(|q| quantile_sorted(&c, q)));
            }
            GridField::Sweep { values, quantiles, constant: h.constant_value }
        }
        _ => {
            if resolution < 2 {
                return Err(OodError::Config("grid resolution must be at least 2".into()));
            }
            let window = spec.window().expect("2-D toy");
            let (xs, ys, pts) = lattice(window, resolution);
            GridField::Plane { xs, ys, confidence: confidence(&pts)? }
        }
    };
    if field.confidences().iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(invalid("confidence outside [0, 1]"));
    }
    Ok(field)
}
