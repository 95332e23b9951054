//! Gaussian-windowed structural similarity.
//!
//! Local statistics are taken with a normalized `size × size` Gaussian window
//! over a symmetrically padded image (edge samples are repeated:
//! `... c b a | a b c ...`). The per-pixel value is
//!
//! ```text
//!           (2 μx μy + C1) (2 σxy + C2)
//! SSIM = ---------------------------------     C1 = (k1 L)², C2 = (k2 L)²
//!        (μx² + μy² + C1) (σx² + σy² + C2)
//! ```
//!
//! The same code serves as the autoencoder loss (via
//! [`mean_ssim_with_grad`]) and as the disparity map between an image and
//! its reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;

/// Window and stability constants for one SSIM evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`: 255 on the raw scale, 1.0 after unit rescaling.
    pub dynamic_range: f64,
}

impl SsimParams {
    /// Builds parameters with the default sigma of `window_size / 6`.
    pub fn new(window_size: usize, k1: f64, k2: f64, dynamic_range: f64) -> Result<Self> {
        let p = Self {
            window_size,
            gaussian_sigma: window_size as f64 / 6.0,
            k1,
            k2,
            dynamic_range,
        };
        p.validate()?;
        Ok(p)
    }

    /// Training-loss preset: 7×7 window, k1 = 0.001, k2 = 0.03.
    pub fn loss_preset(dynamic_range: f64) -> Self {
        Self::new(7, 0.001, 0.03, dynamic_range).expect("preset is valid")
    }

    /// Disparity-map preset: 11×11 window, k1 = 0.001, k2 = 0.05.
    pub fn disparity_preset(dynamic_range: f64) -> Self {
        Self::new(11, 0.001, 0.05, dynamic_range).expect("preset is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(Error::argument(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::argument("SSIM constants k1 and k2 must be positive"));
        }
        if !(self.dynamic_range > 0.0) {
            return Err(Error::argument("SSIM dynamic range must be positive"));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(Error::argument("SSIM gaussian sigma must be positive"));
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Normalized, separable 2-D Gaussian window.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWindow {
    size: usize,
    profile: Vec<f64>,
}

impl GaussianWindow {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// 1-D profile; the 2-D weight at `(dx, dy)` is `profile[dx] * profile[dy]`.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn weight(&self, dx: usize, dy: usize) -> f64 {
        self.profile[dx] * self.profile[dy]
    }

    /// Row-major `size × size` weights.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.size * self.size);
        for dy in 0..self.size {
            for dx in 0..self.size {
                w.push(self.weight(dx, dy));
            }
        }
        w
    }
}

pub fn gaussian_window(size: usize, sigma: f64) -> Result<GaussianWindow> {
    if size < 3 || size % 2 == 0 {
        return Err(Error::argument(format!("gaussian window size must be odd and >= 3, got {size}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::argument(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as f64;
    let mut profile: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = profile.iter().sum();
    profile.iter_mut().for_each(|v| *v /= total);
    Ok(GaussianWindow { size, profile })
}

/// Maps an out-of-range index into `[0, n)` by symmetric (edge-repeating) reflection.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Per-pixel SSIM values between two images.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::argument("disparity map length does not match dimensions"));
        }
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::argument("disparity values must lie in [-1, 1]"));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Grayscale heatmap: white = identical, black = maximal disparity.
    pub fn save_png(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let img = Image::new(self.width, self.height, self.values.iter().map(|v| (v + 1.0) / 2.0).collect())?;
        img.save_png(path, 1.0)
    }
}

/// Separable Gaussian filter with symmetric padding.
fn filter(src: &[f64], width: usize, height: usize, win: &GaussianWindow) -> Vec<f64> {
    let r = win.radius() as isize;
    let k = win.profile();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (i, w) in k.iter().enumerate() {
                acc += w * row[mirror_index(x as isize + i as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, w) in k.iter().enumerate() {
                acc += w * tmp[mirror_index(y as isize + i as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Transpose of [`filter`]: scatters each input sample back over the window
/// positions that read it.
fn filter_adjoint(src: &[f64], width: usize, height: usize, win: &GaussianWindow) -> Vec<f64> {
    let r = win.radius() as isize;
    let k = win.profile();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let g = src[y * width + x];
            for (i, w) in k.iter().enumerate() {
                tmp[mirror_index(y as isize + i as isize - r, height) * width + x] += w * g;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let g = tmp[y * width + x];
            for (i, w) in k.iter().enumerate() {
                out[y * width + mirror_index(x as isize + i as isize - r, width)] += w * g;
            }
        }
    }
    out
}

struct LocalStats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::argument(format!(
            "SSIM inputs differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn local_stats(a: &Image, b: &Image, win: &GaussianWindow) -> LocalStats {
    let (w, h) = a.dims();
    let (da, db) = (a.data(), b.data());
    let aa: Vec<f64> = da.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = db.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = da.iter().zip(db).map(|(x, y)| x * y).collect();
    let mu_a = filter(da, w, h, win);
    let mu_b = filter(db, w, h, win);
    let e_aa = filter(&aa, w, h, win);
    let e_bb = filter(&bb, w, h, win);
    let e_ab = filter(&ab, w, h, win);
    let n = da.len();
    let mut var_a = Vec::with_capacity(n);
    let mut var_b = Vec::with_capacity(n);
    let mut cov = Vec::with_capacity(n);
    for i in 0..n {
        var_a.push(e_aa[i] - mu_a[i] * mu_a[i]);
        var_b.push(e_bb[i] - mu_b[i] * mu_b[i]);
        cov.push(e_ab[i] - mu_a[i] * mu_b[i]);
    }
    LocalStats {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov,
    }
}

/// Per-pixel SSIM between `a` and `b`.
pub fn ssim_map(a: &Image, b: &Image, p: &SsimParams) -> Result<DisparityMap> {
    check_pair(a, b)?;
    p.validate()?;
    let win = gaussian_window(p.window_size, p.gaussian_sigma)?;
    let s = local_stats(a, b, &win);
    let (c1, c2) = (p.c1(), p.c2());
    let values = (0..a.data().len())
        .map(|i| {
            let num = (2.0 * s.mu_a[i] * s.mu_b[i] + c1) * (2.0 * s.cov[i] + c2);
            let den = (s.mu_a[i] * s.mu_a[i] + s.mu_b[i] * s.mu_b[i] + c1) * (s.var_a[i] + s.var_b[i] + c2);
            (num / den).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(DisparityMap {
        width: a.width(),
        height: a.height(),
        values,
    })
}

/// Arithmetic mean of [`ssim_map`].
pub fn mean_ssim(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    Ok(ssim_map(a, b, p)?.mean())
}

/// Mean SSIM and its gradient with respect to every pixel of `b`.
pub fn mean_ssim_with_grad(a: &Image, b: &Image, p: &SsimParams) -> Result<(f64, Image)> {
    check_pair(a, b)?;
    p.validate()?;
    let win = gaussian_window(p.window_size, p.gaussian_sigma)?;
    let s = local_stats(a, b, &win);
    let (c1, c2) = (p.c1(), p.c2());
    let n = a.data().len();
    let inv_n = 1.0 / n as f64;

    let mut total = 0.0;
    // Gradients of the mean with respect to the filtered moments of b:
    // E[b], E[b²] and E[ab].
    let mut g_mu = vec![0.0; n];
    let mut g_ebb = vec![0.0; n];
    let mut g_eab = vec![0.0; n];
    for i in 0..n {
        let (mx, my) = (s.mu_a[i], s.mu_b[i]);
        let a1 = 2.0 * mx * my + c1;
        let a2 = 2.0 * s.cov[i] + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = s.var_a[i] + s.var_b[i] + c2;
        let den = b1 * b2;
        let ssim = a1 * a2 / den;
        total += ssim;

        let d_my = (2.0 * mx * a2 * b1 - 2.0 * my * a1 * a2) / (b1 * b1 * b2);
        let d_var = -a1 * a2 / (b1 * b2 * b2);
        let d_cov = 2.0 * a1 / den;

        // var_b = E[b²] − μy², cov = E[ab] − μx μy
        g_mu[i] = inv_n * (d_my - 2.0 * my * d_var - mx * d_cov);
        g_ebb[i] = inv_n * d_var;
        g_eab[i] = inv_n * d_cov;
    }
    let (w, h) = a.dims();
    let back_mu = filter_adjoint(&g_mu, w, h, &win);
    let back_bb = filter_adjoint(&g_ebb, w, h, &win);
    let back_ab = filter_adjoint(&g_eab, w, h, &win);
    let grad: Vec<f64> = (0..n)
        .map(|i| back_mu[i] + 2.0 * b.data()[i] * back_bb[i] + a.data()[i] * back_ab[i])
        .collect();
    Ok((total * inv_n, Image::new(w, h, grad)?))
}
