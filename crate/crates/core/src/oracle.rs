//! Slow reference implementations used to check the fast paths.
//!
//! Each function favors the most literal formulation over speed so it can
//! serve as an independent oracle in tests and in the acceptance suite.

use crate::autoenc::Layer;
use crate::cluster::Point;
use crate::geometry::{orient, Polygon};
use crate::imagecore::Image;
use crate::segment::{between_class_variance, histogram, OTSU_BINS};
use crate::ssim::{mean_ssim, mean_ssim_with_grad, mirror_index, SsimParams};
use crate::Result;

/// Per-pixel SSIM with explicit window loops and a freshly built 2-D
/// Gaussian, row-major.
pub fn naive_ssim_map(a: &Image, b: &Image, p: &SsimParams) -> Vec<f64> {
    let size = p.window_size;
    let r = (size / 2) as isize;
    let mut w2 = vec![0.0; size * size];
    let mut sum = 0.0;
    for dy in 0..size {
        for dx in 0..size {
            let ddx = dx as f64 - r as f64;
            let ddy = dy as f64 - r as f64;
            let v = (-(ddx * ddx + ddy * ddy) / (2.0 * p.gaussian_sigma * p.gaussian_sigma)).exp();
            w2[dy * size + dx] = v;
            sum += v;
        }
    }
    w2.iter_mut().for_each(|v| *v /= sum);
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let (w, h) = a.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let sample = |img: &Image, dx: usize, dy: usize| {
                let sx = mirror_index(x + dx as isize - r, w);
                let sy = mirror_index(y + dy as isize - r, h);
                img.get(sx, sy)
            };
            let (mut ma, mut mb) = (0.0, 0.0);
            for dy in 0..size {
                for dx in 0..size {
                    let wt = w2[dy * size + dx];
                    ma += wt * sample(a, dx, dy);
                    mb += wt * sample(b, dx, dy);
                }
            }
            let (mut va, mut vb, mut cv) = (0.0, 0.0, 0.0);
            for dy in 0..size {
                for dx in 0..size {
                    let wt = w2[dy * size + dx];
                    let da = sample(a, dx, dy) - ma;
                    let db = sample(b, dx, dy) - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cv += wt * da * db;
                }
            }
            out.push(((2.0 * ma * mb + c1) * (2.0 * cv + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
        }
    }
    out
}

/// `|a - b| / max(|a|, |b|)`, with the denominator floored at `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between the analytic gradient of negative mean
/// SSIM with respect to `b` and central differences with step `h`.
pub fn ssim_gradient_error(a: &Image, b: &Image, p: &SsimParams, h: f64) -> Result<f64> {
    let (_, grad) = mean_ssim_with_grad(a, b, p)?;
    let mut worst: f64 = 0.0;
    for i in 0..b.data().len() {
        let mut bp = b.clone();
        bp.data_mut()[i] += h;
        let mut bm = b.clone();
        bm.data_mut()[i] -= h;
        // The loss is the negated mean SSIM, so both sides flip sign.
        let fd = -(mean_ssim(a, &bp, p)? - mean_ssim(a, &bm, p)?) / (2.0 * h);
        worst = worst.max(relative_error(-grad.data()[i], fd, 1e-8));
    }
    Ok(worst)
}

/// Gradient-check report for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerGradError {
    pub weights: f64,
    pub bias: f64,
    pub input: f64,
}

impl LayerGradError {
    pub fn max(&self) -> f64 {
        self.weights.max(self.bias).max(self.input)
    }
}

/// Checks a layer's backward pass against central differences of the
/// scalar `L = Σ out · r` for a fixed direction `r`.
pub fn layer_gradient_error(layer: &Layer, x: &[f64], r: &[f64], h: f64) -> LayerGradError {
    let loss = |l: &Layer, x: &[f64]| -> f64 { l.forward(x).1.iter().zip(r).map(|(o, w)| o * w).sum() };
    let (pre, out) = layer.forward(x);
    let mut dw = vec![0.0; layer.weights.len()];
    let mut db = vec![0.0; layer.bias.len()];
    let dx = layer.backward(x, &pre, &out, r, &mut dw, &mut db);

    let mut worst = LayerGradError {
        weights: 0.0,
        bias: 0.0,
        input: 0.0,
    };
    let mut probe = layer.clone();
    for i in 0..layer.weights.len() {
        probe.weights[i] = layer.weights[i] + h;
        let up = loss(&probe, x);
        probe.weights[i] = layer.weights[i] - h;
        let down = loss(&probe, x);
        probe.weights[i] = layer.weights[i];
        worst.weights = worst.weights.max(relative_error(dw[i], (up - down) / (2.0 * h), 1e-6));
    }
    for i in 0..layer.bias.len() {
        probe.bias[i] = layer.bias[i] + h;
        let up = loss(&probe, x);
        probe.bias[i] = layer.bias[i] - h;
        let down = loss(&probe, x);
        probe.bias[i] = layer.bias[i];
        worst.bias = worst.bias.max(relative_error(db[i], (up - down) / (2.0 * h), 1e-6));
    }
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = loss(layer, &xp);
        xp[i] = x[i] - h;
        let down = loss(layer, &xp);
        xp[i] = x[i];
        worst.input = worst.input.max(relative_error(dx[i], (up - down) / (2.0 * h), 1e-6));
    }
    worst
}

/// Otsu bin by evaluating the between-class variance at every split. The
/// lowest bin within a relative 1e-12 of the maximum wins, since the closed
/// form and the direct sums round differently. `None` when no split
/// separates anything.
pub fn exhaustive_otsu_bin(img: &Image) -> Option<usize> {
    let hist = histogram(img);
    let vars: Vec<f64> = (0..OTSU_BINS - 1).map(|t| between_class_variance(&hist, t)).collect();
    let best = vars.iter().cloned().fold(0.0, f64::max);
    if best == 0.0 {
        return None;
    }
    vars.iter().position(|&v| v >= best * (1.0 - 1e-12))
}

/// Extreme points of a set, sorted by `(x, y)`: the points that lie in no
/// closed triangle and on no segment spanned by other points. Quartic in
/// the number of points.
pub fn brute_force_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let between = |a: Point, p: Point, q: Point| {
        orient(p, q, a) == 0.0 && (a.0 - p.0) * (a.0 - q.0) + (a.1 - p.1) * (a.1 - q.1) <= 0.0
    };
    let in_triangle = |a: Point, p: Point, q: Point, s: Point| {
        let (o1, o2, o3) = (orient(p, q, a), orient(q, s, a), orient(s, p, a));
        orient(p, q, s) != 0.0 && ((o1 >= 0.0 && o2 >= 0.0 && o3 >= 0.0) || (o1 <= 0.0 && o2 <= 0.0 && o3 <= 0.0))
    };
    pts.iter()
        .copied()
        .filter(|&a| {
            let others: Vec<Point> = pts.iter().copied().filter(|&p| p != a).collect();
            let n = others.len();
            for i in 0..n {
                for j in i + 1..n {
                    if between(a, others[i], others[j]) {
                        return false;
                    }
                    for k in j + 1..n {
                        if in_triangle(a, others[i], others[j], others[k]) {
                            return false;
                        }
                    }
                }
            }
            true
        })
        .collect()
}

/// Distance from `p` to the boundary of `poly`.
pub fn distance_to_boundary(p: Point, poly: &Polygon) -> f64 {
    poly.edges()
        .map(|(a, b)| {
            let (vx, vy) = (b.0 - a.0, b.1 - a.1);
            let t = (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
            (p.0 - a.0 - t * vx).hypot(p.1 - a.1 - t * vy)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between a polygon boundary and the circle
/// `(cx, cy, r)`, sampled at `samples` points along each curve and at every
/// polygon vertex.
pub fn circle_hausdorff(poly: &Polygon, cx: f64, cy: f64, r: f64, samples: usize) -> f64 {
    let to_circle = |p: Point| ((p.0 - cx).hypot(p.1 - cy) - r).abs();
    let mut worst: f64 = 0.0;
    for (a, b) in poly.edges() {
        for k in 0..=samples {
            let t = k as f64 / samples as f64;
            worst = worst.max(to_circle((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))));
        }
    }
    for k in 0..samples {
        let th = k as f64 * std::f64::consts::TAU / samples as f64;
        worst = worst.max(distance_to_boundary((cx + r * th.cos(), cy + r * th.sin()), poly));
    }
    worst
}

/// One layer of each kind and activation bound to an 8×8 input, with
/// seeded uniform weights, biases, inputs and output directions. Returns
/// the name and gradient error of each.
pub fn layer_gradient_suite(seed: u64) -> Vec<(String, LayerGradError)> {
    use crate::autoenc::{Activation, LayerSpec, Shape};
    use rand::{Rng, SeedableRng};

    let lr = Activation::LeakyRelu { alpha: 0.025 };
    let cases = [
        ("conv 2x2 stride 2", LayerSpec::conv(3, 2, 2, lr), Shape::new(8, 8, 2)),
        ("conv 4x4 stride 1", LayerSpec::conv(3, 4, 1, lr), Shape::new(8, 8, 2)),
        ("deconv 2x2 stride 2", LayerSpec::deconv(2, 2, 2, lr), Shape::new(8, 8, 2)),
        ("deconv 4x4 sigmoid", LayerSpec::deconv(1, 4, 1, Activation::Sigmoid), Shape::new(8, 8, 2)),
        ("dense", LayerSpec::dense(6, lr), Shape::new(8, 8, 1)),
        ("dense linear", LayerSpec::dense(4, Activation::None), Shape::new(8, 8, 1)),
        ("flatten", LayerSpec::flatten(), Shape::new(8, 8, 2)),
        ("reshape", LayerSpec::reshape(Shape::new(4, 4, 4)), Shape::new(8, 8, 1)),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    cases
        .into_iter()
        .map(|(name, spec, input)| {
            let mut layer = Layer::bind(spec, input).expect("test shapes compose");
            layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
            layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
            let x: Vec<f64> = (0..input.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..layer.output.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (name.to_owned(), layer_gradient_error(&layer, &x, &r, 1e-6))
        })
        .collect()
}

/// Gradient check of the full negative-SSIM loss through a small
/// autoencoder on an 8×8 input: largest relative error over all parameters.
pub fn model_gradient_error(seed: u64) -> Result<f64> {
    use crate::autoenc::{Activation, LayerSpec, Model, Scale, Shape, Tensor};
    use rand::{Rng, SeedableRng};

    let lr = Activation::LeakyRelu { alpha: 0.025 };
    let input = Shape::new(8, 8, 1);
    let specs = vec![
        LayerSpec::conv(2, 2, 2, lr),
        LayerSpec::conv(2, 4, 1, lr),
        LayerSpec::flatten(),
        LayerSpec::dense(3, lr),
        LayerSpec::dense(32, lr),
        LayerSpec::reshape(Shape::new(4, 4, 2)),
        LayerSpec::deconv(1, 2, 2, Activation::Sigmoid),
    ];
    let mut m = Model::from_specs(Scale::Desk, input, 3, specs)?;
    m.initialize(seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = Tensor::new(input, (0..64).map(|_| rng.gen_range(0.0..1.0)).collect())?;
    let p = SsimParams::new(3, 0.01, 0.03, 1.0)?;
    let mut grads = crate::autoenc::Gradients::zeros_like(&m);
    m.loss_and_grad(&x, &p, &mut grads)?;
    let analytic: Vec<f64> = grads
        .weights
        .iter()
        .zip(&grads.bias)
        .flat_map(|(w, b)| w.iter().chain(b).copied())
        .collect();
    let params = m.params_flat();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = m.clone();
    for (i, &g) in analytic.iter().enumerate() {
        let mut p_up = params.clone();
        p_up[i] += h;
        probe.set_params_flat(&p_up)?;
        let up = probe.loss(&x, &p)?;
        p_up[i] -= 2.0 * h;
        probe.set_params_flat(&p_up)?;
        let down = probe.loss(&x, &p)?;
        worst = worst.max(relative_error(g, (up - down) / (2.0 * h), 1e-6));
    }
    Ok(worst)
}
