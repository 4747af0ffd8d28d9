//! PNG rendering of confidence fields.
//!
//! The colour ramp is a 256-entry approximation of the perceptually linear
//! CET-L20 map (dark grey through blue and green to yellow), interpolated in
//! RGB between hand-picked knots.

use crate::error::{invalid, Result};
use crate::points::Points;

use super::grid::GridField;

/// Border around the plotted area, in pixels.
pub const MARGIN: usize = 8;
/// Pixels per sweep value and chart height of haystack band charts.
pub const SWEEP_COLUMN_WIDTH: usize = 3;
pub const SWEEP_HEIGHT: usize = 200;

const KNOTS: [(f64, [u8; 3]); 6] = [
    (0.0, [48, 48, 48]),
    (0.2, [40, 58, 160]),
    (0.4, [21, 124, 178]),
    (0.6, [72, 170, 92]),
    (0.8, [206, 190, 48]),
    (1.0, [250, 244, 66]),
];

const BACKGROUND: [u8; 3] = [255, 255, 255];
const BLACK: [u8; 3] = [0, 0, 0];
const WHITE: [u8; 3] = [255, 255, 255];

/// The 256-entry colour lookup table.
pub fn colormap() -> [[u8; 3]; 256] {
    let mut lut = [[0u8; 3]; 256];
    for (i, entry) in lut.iter_mut().enumerate() {
        let t = i as f64 / 255.0;
        let k = KNOTS.windows(2).position(|w| t <= w[1].0).unwrap_or(KNOTS.len() - 2);
        let (t0, c0) = KNOTS[k];
        let (t1, c1) = KNOTS[k + 1];
        let f = (t - t0) / (t1 - t0);
        for ch in 0..3 {
            entry[ch] = (f64::from(c0[ch]) + f * (f64::from(c1[ch]) - f64::from(c0[ch]))).round() as u8;
        }
    }
    lut
}

/// Lookup-table index of a confidence in `[0, 1]`.
pub fn color_index(confidence: f64) -> usize {
    (confidence.clamp(0.0, 1.0) * 255.0).round() as usize
}

pub const COLORMAPS: [&str; 1] = ["cet-l20"];

pub fn check_colormap(name: &str) -> Result<()> {
    if COLORMAPS.contains(&name) {
        Ok(())
    } else {
        Err(invalid(format!("unknown colormap '{name}'")))
    }
}

struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            rgb.extend_from_slice(&BACKGROUND);
        }
        Self { width, height, rgb }
    }

    fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        if x < self.width && y < self.height {
            let o = (y * self.width + x) * 3;
            self.rgb[o..o + 3].copy_from_slice(&c);
        }
    }

    fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.rgb[o], self.rgb[o + 1], self.rgb[o + 2]]
    }

    fn marker(&mut self, x: f64, y: f64, c: [u8; 3]) {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (px, py) = (cx + dx, cy + dy);
                if px >= 0 && py >= 0 {
                    self.set(px as usize, py as usize, c);
                }
            }
        }
    }

    fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| invalid(e.to_string()))?;
            w.write_image_data(&self.rgb).map_err(|e| invalid(e.to_string()))?;
        }
        Ok(out)
    }
}

/// Renders a grid as PNG bytes.
///
/// Planes map one lattice cell to one pixel with y increasing upwards;
/// training points are drawn as black and synthetic points as white 3x3
/// markers (first two coordinates). Sweeps render as quantile bands with a
/// white line at the pinned constant; overlays are ignored there.
pub fn render_png(grid: &GridField, training: Option<&Points>, synthetic: Option<&Points>) -> Result<Vec<u8>> {
    let lut = colormap();
    match grid {
        GridField::Plane { xs, ys, confidence } => {
            let (nx, ny) = (xs.len(), ys.len());
            if nx < 2 || ny < 2 || confidence.len() != nx * ny {
                return Err(invalid("malformed plane grid"));
            }
            let mut canvas = Canvas::new(nx + 2 * MARGIN, ny + 2 * MARGIN);
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = lut[color_index(confidence[iy * nx + ix])];
                    canvas.set(MARGIN + ix, MARGIN + ny - 1 - iy, c);
                }
            }
            let (x0, x1) = (xs[0], xs[nx - 1]);
            let (y0, y1) = (ys[0], ys[ny - 1]);
            let to_px = |p: &[f64]| {
                let px = MARGIN as f64 + (p[0] - x0) / (x1 - x0) * (nx - 1) as f64;
                let py = MARGIN as f64 + (ny - 1) as f64 - (p[1] - y0) / (y1 - y0) * (ny - 1) as f64;
                (px, py)
            };
            for (pts, colour) in [(training, BLACK), (synthetic, WHITE)] {
                if let Some(pts) = pts {
                    if pts.dim() < 2 {
                        return Err(invalid("overlay points need two coordinates"));
                    }
                    for r in pts.rows() {
                        let inside = (x0..=x1).contains(&r[0]) && (y0..=y1).contains(&r[1]);
                        if inside {
                            let (px, py) = to_px(r);
                            canvas.marker(px, py, colour);
                        }
                    }
                }
            }
            canvas.encode()
        }
        GridField::Sweep { values, quantiles, constant } => {
            if values.len() < 2 || quantiles.len() != values.len() {
                return Err(invalid("malformed sweep grid"));
            }
            let w = values.len() * SWEEP_COLUMN_WIDTH;
            let h = SWEEP_HEIGHT;
            let mut canvas = Canvas::new(w + 2 * MARGIN, h + 2 * MARGIN);
            let row_of = |c: f64| ((1.0 - c.clamp(0.0, 1.0)) * (h - 1) as f64).round() as usize;
            for (i, q) in quantiles.iter().enumerate() {
                let (outer_top, outer_bot) = (row_of(q[4]), row_of(q[0]));
                let (inner_top, inner_bot) = (row_of(q[3]), row_of(q[1]));
                let median = row_of(q[2]);
                for col in i * SWEEP_COLUMN_WIDTH..(i + 1) * SWEEP_COLUMN_WIDTH {
                    for row in 0..h {
                        let c = if row == median {
                            lut[255]
                        } else if (inner_top..=inner_bot).contains(&row) {
                            lut[170]
                        } else if (outer_top..=outer_bot).contains(&row) {
                            lut[85]
                        } else {
                            lut[0]
                        };
                        canvas.set(MARGIN + col, MARGIN + row, c);
                    }
                }
            }
            let (v0, v1) = (values[0], values[values.len() - 1]);
            if (v0..=v1).contains(constant) {
                let col = ((constant - v0) / (v1 - v0) * (w - 1) as f64).round() as usize;
                // keep the bands visible where they cross the line
                for row in 0..h {
                    if canvas.get(MARGIN + col, MARGIN + row) == lut[0] {
                        canvas.set(MARGIN + col, MARGIN + row, WHITE);
                    }
                }
            }
            canvas.encode()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_is_monotone_in_brightness() {
        let lut = colormap();
        let lum = |c: [u8; 3]| 0.2126 * f64::from(c[0]) + 0.7152 * f64::from(c[1]) + 0.0722 * f64::from(c[2]);
        assert!(lut.windows(2).all(|w| lum(w[1]) >= lum(w[0]) - 1.0));
        assert!(lum(lut[255]) - lum(lut[0]) > 150.0);
        assert_eq!(lut[0], KNOTS[0].1);
        assert_eq!(lut[255], KNOTS[5].1);
    }

    #[test]
    fn color_index_bounds() {
        assert_eq!(color_index(0.0), 0);
        assert_eq!(color_index(1.0), 255);
        assert_eq!(color_index(-3.0), 0);
    }

    #[test]
    fn png_signature() {
        let g = GridField::Plane { xs: vec![0.0, 1.0], ys: vec![0.0, 1.0], confidence: vec![0.5; 4] };
        let bytes = render_png(&g, None, None).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    }
}
