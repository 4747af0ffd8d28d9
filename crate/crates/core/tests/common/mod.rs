//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use oodbench::Points;

/// Pairwise ROC-AUC: P(conf_ID > conf_OOD) + 0.5 P(tie).
pub fn auc_brute_force(conf: &[f64], is_id: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &ci) in conf.iter().enumerate() {
        if !is_id[i] {
            continue;
        }
        for (j, &cj) in conf.iter().enumerate() {
            if is_id[j] {
                continue;
            }
            pairs += 1.0;
            if ci > cj {
                wins += 1.0;
            } else if ci == cj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Central-difference gradient of a scalar function.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise relative error, with `floor` guarding near-zero entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

/// Euclidean projection onto {a : 0 <= a_i <= c, sum a = 1} by bisection on
/// the shift.
pub fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let total = |t: f64| v.iter().map(|x| (x - t).clamp(0.0, c)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    v.iter().map(|x| (x - t).clamp(0.0, c)).collect()
}

/// min 0.5 a'Ka on the capped simplex by accelerated projected gradient.
pub fn one_class_dual_oracle(kernel: &[f64], n: usize, nu: f64, iters: usize) -> Vec<f64> {
    let c = 1.0 / (nu * n as f64);
    // step 1/L with L bounded by the max row sum
    let l = (0..n).map(|i| (0..n).map(|j| kernel[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut a = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| kernel[i * n + j] * y[j]).sum()).collect();
        let step: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / l).collect();
        let next = project_capped_simplex(&step, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next.iter().zip(&a).map(|(n1, a0)| n1 + (t - 1.0) / t_next * (n1 - a0)).collect();
        a = next;
        t = t_next;
    }
    a
}

pub fn dual_objective(kernel: &[f64], n: usize, a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i] * kernel[i * n + j] * a[j];
        }
    }
    0.5 * s
}

/// Composite trapezoid rule on `[lo, hi]` with `n` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * f(lo) + inner + 0.5 * f(hi))
}

pub fn column_mean(p: &Points, j: usize) -> f64 {
    p.column(j).iter().sum::<f64>() / p.len() as f64
}

/// Uniform points in `[-scale, scale]^d`.
pub fn random_points(n: usize, d: usize, scale: f64, seed: u64) -> Points {
    use rand::Rng;
    let mut rng = oodbench::rng::substream(seed, &["points"]);
    let data = (0..n * d).map(|_| rng.random_range(-scale..scale)).collect();
    Points::new(data, d).unwrap()
}

/// Signs of every hidden pre-activation over the given rows.
pub fn hidden_signs(mlp: &oodbench::mlp::Mlp, x: &Points, rows: &[usize]) -> Vec<bool> {
    let hidden = &mlp.layers[..mlp.layers.len() - 1];
    let mut signs = Vec::new();
    for &r in rows {
        let mut cur = x.row(r).to_vec();
        for l in hidden {
            let z: Vec<f64> = (0..l.outputs)
                .map(|o| l.bias[o] + (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * cur[i]).sum::<f64>())
                .collect();
            signs.extend(z.iter().map(|v| *v > 0.0));
            cur = z.iter().map(|v| l.activation.apply(*v)).collect();
        }
    }
    signs
}

/// Relative error of backprop against central differences of the loss,
/// and the number of parameters skipped because a ReLU pre-activation
/// changes sign inside the difference window (the loss has a kink there).
pub fn mlp_gradient_error(
    mlp: &oodbench::mlp::Mlp,
    x: &Points,
    rows: &[usize],
    loss: oodbench::mlp::Loss<'_>,
    l2: f64,
    h: f64,
) -> (f64, usize) {
    let (_, analytic) = mlp.loss_and_gradient(x, rows, loss, l2);
    let relu = mlp.layers.iter().any(|l| l.activation == oodbench::mlp::Activation::Relu);
    let p = mlp.params();
    let mut m = mlp.clone();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] = p[i] + h;
        m.set_params(&q);
        let up = m.loss_and_gradient(x, rows, loss, l2).0;
        let up_signs = if relu { hidden_signs(&m, x, rows) } else { Vec::new() };
        q[i] = p[i] - h;
        m.set_params(&q);
        let down = m.loss_and_gradient(x, rows, loss, l2).0;
        if relu && hidden_signs(&m, x, rows) != up_signs {
            skipped += 1;
            continue;
        }
        worst = worst.max(max_relative_error(&[analytic[i]], &[(up - down) / (2.0 * h)], 1e-6));
    }
    (worst, skipped)
}

/// Relative error of the analytic squared-reference-score gradient at each point.
pub fn reference_gradient_errors(spec: &oodbench::ToySpec, pts: &Points, h: f64) -> Vec<f64> {
    use oodbench::toyspace::{reference_error_gradient, reference_ood_score};
    let d = spec.dim();
    let grads = reference_error_gradient(spec, pts).unwrap();
    pts.rows()
        .enumerate()
        .map(|(i, x)| {
            let numeric = central_difference(
                |p| {
                    let s = reference_ood_score(spec, &Points::new(p.to_vec(), d).unwrap()).unwrap()[0];
                    s * s
                },
                x,
                h,
            );
            max_relative_error(grads.row(i), &numeric, 1e-6)
        })
        .collect()
}
