//! Layer kinds used by the autoencoder and their forward/backward passes.

use serde::{Deserialize, Serialize};

/// Tensor shape as `(height, width, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub const fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

/// Row-major HWC tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != shape.len() {
            return Err(crate::Error::argument(format!(
                "tensor data length {} does not match shape {shape}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Single-channel tensor from an image.
    pub fn from_image(img: &crate::Image) -> Self {
        Self {
            shape: Shape::new(img.height(), img.width(), 1),
            data: img.data().to_vec(),
        }
    }

    /// Channel 0 as an image.
    pub fn to_image(&self) -> crate::Image {
        let c = self.shape.c;
        crate::Image::new(
            self.shape.w,
            self.shape.h,
            self.data.iter().step_by(c).copied().collect(),
        )
        .expect("shape matches")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { alpha: f64 },
    Sigmoid,
    None,
}

impl Activation {
    #[inline]
    fn apply(&self, v: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { alpha } => {
                if v > 0.0 {
                    v
                } else {
                    alpha * v
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::None => v,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(&self, z: f64, y: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { alpha } => {
                if z > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Deconv,
    Flatten,
    Dense,
    /// Parameter-free view of a flat vector as an `(h, w, c)` volume.
    Reshape,
}

/// Static description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Output channels for conv/deconv, output units for dense.
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub activation: Activation,
    /// Target shape, only for `Reshape`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Shape>,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv,
            filters,
            kernel: (kernel, kernel),
            stride: (stride, stride),
            activation,
            target: None,
        }
    }

    pub fn deconv(filters: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Deconv,
            ..Self::conv(filters, kernel, stride, activation)
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense,
            filters: units,
            kernel: (1, 1),
            stride: (1, 1),
            activation,
            target: None,
        }
    }

    pub fn flatten() -> Self {
        Self {
            kind: LayerKind::Flatten,
            filters: 0,
            kernel: (1, 1),
            stride: (1, 1),
            activation: Activation::None,
            target: None,
        }
    }

    pub fn reshape(target: Shape) -> Self {
        Self {
            target: Some(target),
            kind: LayerKind::Reshape,
            ..Self::flatten()
        }
    }
}

/// Padding along one axis: stride 1 keeps the size ("same"), larger strides
/// use no padding and must divide the extent exactly.
fn axis_geometry(kind: LayerKind, input: usize, k: usize, s: usize) -> Result<(usize, usize), String> {
    if s == 1 {
        return Ok((input, (k - 1) / 2));
    }
    match kind {
        LayerKind::Conv => {
            if input < k || (input - k) % s != 0 {
                Err(format!("extent {input} is not covered exactly by kernel {k} stride {s}"))
            } else {
                Ok(((input - k) / s + 1, 0))
            }
        }
        _ => Ok(((input - 1) * s + k, 0)),
    }
}

/// A layer bound to concrete shapes, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pad: (usize, usize),
    /// Conv/deconv: `[ky][kx][in_c][out_c]`; dense: `[out][in]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn bind(spec: LayerSpec, input: Shape) -> Result<Self, String> {
        let (kh, kw) = spec.kernel;
        let (sh, sw) = spec.stride;
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err("kernel and stride components must be >= 1".into());
        }
        let (output, pad, n_weights, n_bias) = match spec.kind {
            LayerKind::Conv | LayerKind::Deconv => {
                if spec.filters == 0 {
                    return Err("convolution needs at least one filter".into());
                }
                let (oh, ph) = axis_geometry(spec.kind, input.h, kh, sh)?;
                let (ow, pw) = axis_geometry(spec.kind, input.w, kw, sw)?;
                (
                    Shape::new(oh, ow, spec.filters),
                    (ph, pw),
                    kh * kw * input.c * spec.filters,
                    spec.filters,
                )
            }
            LayerKind::Dense => {
                if spec.filters == 0 {
                    return Err("dense layer needs at least one unit".into());
                }
                (
                    Shape::new(1, 1, spec.filters),
                    (0, 0),
                    input.len() * spec.filters,
                    spec.filters,
                )
            }
            LayerKind::Flatten => (Shape::new(1, 1, input.len()), (0, 0), 0, 0),
            LayerKind::Reshape => {
                let t = spec.target.ok_or("reshape needs a target shape")?;
                if t.len() != input.len() {
                    return Err(format!("cannot reshape {input} into {t}"));
                }
                (t, (0, 0), 0, 0)
            }
        };
        Ok(Self {
            spec,
            input,
            output,
            pad,
            weights: vec![0.0; n_weights],
            bias: vec![0.0; n_bias],
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn fan_in(&self) -> usize {
        match self.spec.kind {
            LayerKind::Conv | LayerKind::Deconv => self.spec.kernel.0 * self.spec.kernel.1 * self.input.c,
            LayerKind::Dense => self.input.len(),
            _ => 0,
        }
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.input.len());
        let pre = match self.spec.kind {
            LayerKind::Conv => self.conv_forward(x),
            LayerKind::Deconv => self.deconv_forward(x),
            LayerKind::Dense => self.dense_forward(x),
            LayerKind::Flatten | LayerKind::Reshape => x.to_vec(),
        };
        let act = self.spec.activation;
        let out = match act {
            Activation::None => pre.clone(),
            _ => pre.iter().map(|&z| act.apply(z)).collect(),
        };
        (pre, out)
    }

    /// Backpropagates `d_out` and accumulates parameter gradients into
    /// `d_weights` / `d_bias`. Returns the gradient with respect to the input.
    pub fn backward(
        &self,
        x: &[f64],
        pre: &[f64],
        out: &[f64],
        d_out: &[f64],
        d_weights: &mut [f64],
        d_bias: &mut [f64],
    ) -> Vec<f64> {
        let act = self.spec.activation;
        let d_pre: Vec<f64> = d_out
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&z, &y))| g * act.derivative(z, y))
            .collect();
        match self.spec.kind {
            LayerKind::Conv => self.conv_backward(x, &d_pre, d_weights, d_bias),
            LayerKind::Deconv => self.deconv_backward(x, &d_pre, d_weights, d_bias),
            LayerKind::Dense => self.dense_backward(x, &d_pre, d_weights, d_bias),
            LayerKind::Flatten | LayerKind::Reshape => d_pre,
        }
    }

    // Convolution: out[oy, ox] reads in[oy * s + ky - pad, ox * s + kx - pad].

    fn conv_forward(&self, x: &[f64]) -> Vec<f64> {
        let (i, o) = (self.input, self.output);
        let (kh, kw) = self.spec.kernel;
        let (sh, sw) = self.spec.stride;
        let (ph, pw) = self.pad;
        let mut out = vec![0.0; o.len()];
        for oy in 0..o.h {
            for ox in 0..o.w {
                let dst = &mut out[(oy * o.w + ox) * o.c..][..o.c];
                dst.copy_from_slice(&self.bias);
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - ph as isize;
                    if iy < 0 || iy >= i.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pw as isize;
                        if ix < 0 || ix >= i.w as isize {
                            continue;
                        }
                        let src = &x[(iy as usize * i.w + ix as usize) * i.c..][..i.c];
                        let wbase = (ky * kw + kx) * i.c * o.c;
                        for (ci, &v) in src.iter().enumerate() {
                            let wrow = &self.weights[wbase + ci * o.c..][..o.c];
                            for (d, &w) in dst.iter_mut().zip(wrow) {
                                *d += v * w;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn conv_backward(&self, x: &[f64], d_pre: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
        let (i, o) = (self.input, self.output);
        let (kh, kw) = self.spec.kernel;
        let (sh, sw) = self.spec.stride;
        let (ph, pw) = self.pad;
        let mut dx = vec![0.0; i.len()];
        for oy in 0..o.h {
            for ox in 0..o.w {
                let g = &d_pre[(oy * o.w + ox) * o.c..][..o.c];
                for (b, &gv) in db.iter_mut().zip(g) {
                    *b += gv;
                }
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - ph as isize;
                    if iy < 0 || iy >= i.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pw as isize;
                        if ix < 0 || ix >= i.w as isize {
                            continue;
                        }
                        let base = (iy as usize * i.w + ix as usize) * i.c;
                        let wbase = (ky * kw + kx) * i.c * o.c;
                        for ci in 0..i.c {
                            let v = x[base + ci];
                            let wrow = &self.weights[wbase + ci * o.c..][..o.c];
                            let dwrow = &mut dw[wbase + ci * o.c..][..o.c];
                            let mut acc = 0.0;
                            for co in 0..o.c {
                                dwrow[co] += v * g[co];
                                acc += wrow[co] * g[co];
                            }
                            dx[base + ci] += acc;
                        }
                    }
                }
            }
        }
        dx
    }

    // Transposed convolution: in[iy, ix] scatters into out[iy * s + ky - pad, ix * s + kx - pad].

    fn deconv_forward(&self, x: &[f64]) -> Vec<f64> {
        let (i, o) = (self.input, self.output);
        let (kh, kw) = self.spec.kernel;
        let (sh, sw) = self.spec.stride;
        let (ph, pw) = self.pad;
        let mut out = vec![0.0; o.len()];
        for px in out.chunks_exact_mut(o.c) {
            px.copy_from_slice(&self.bias);
        }
        for iy in 0..i.h {
            for ix in 0..i.w {
                let src = &x[(iy * i.w + ix) * i.c..][..i.c];
                for ky in 0..kh {
                    let oy = (iy * sh + ky) as isize - ph as isize;
                    if oy < 0 || oy >= o.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ox = (ix * sw + kx) as isize - pw as isize;
                        if ox < 0 || ox >= o.w as isize {
                            continue;
                        }
                        let dst = &mut out[(oy as usize * o.w + ox as usize) * o.c..][..o.c];
                        let wbase = (ky * kw + kx) * i.c * o.c;
                        for (ci, &v) in src.iter().enumerate() {
                            let wrow = &self.weights[wbase + ci * o.c..][..o.c];
                            for (d, &w) in dst.iter_mut().zip(wrow) {
                                *d += v * w;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn deconv_backward(&self, x: &[f64], d_pre: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
        let (i, o) = (self.input, self.output);
        let (kh, kw) = self.spec.kernel;
        let (sh, sw) = self.spec.stride;
        let (ph, pw) = self.pad;
        for g in d_pre.chunks_exact(o.c) {
            for (b, &gv) in db.iter_mut().zip(g) {
                *b += gv;
            }
        }
        let mut dx = vec![0.0; i.len()];
        for iy in 0..i.h {
            for ix in 0..i.w {
                let base = (iy * i.w + ix) * i.c;
                for ky in 0..kh {
                    let oy = (iy * sh + ky) as isize - ph as isize;
                    if oy < 0 || oy >= o.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ox = (ix * sw + kx) as isize - pw as isize;
                        if ox < 0 || ox >= o.w as isize {
                            continue;
                        }
                        let g = &d_pre[(oy as usize * o.w + ox as usize) * o.c..][..o.c];
                        let wbase = (ky * kw + kx) * i.c * o.c;
                        for ci in 0..i.c {
                            let v = x[base + ci];
                            let wrow = &self.weights[wbase + ci * o.c..][..o.c];
                            let dwrow = &mut dw[wbase + ci * o.c..][..o.c];
                            let mut acc = 0.0;
                            for co in 0..o.c {
                                dwrow[co] += v * g[co];
                                acc += wrow[co] * g[co];
                            }
                            dx[base + ci] += acc;
                        }
                    }
                }
            }
        }
        dx
    }

    fn dense_forward(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.input.len();
        self.weights
            .chunks_exact(n_in)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn dense_backward(&self, x: &[f64], d_pre: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
        let n_in = self.input.len();
        let mut dx = vec![0.0; n_in];
        for (o, &g) in d_pre.iter().enumerate() {
            db[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[o * n_in..][..n_in];
            let drow = &mut dw[o * n_in..][..n_in];
            for k in 0..n_in {
                drow[k] += g * x[k];
                dx[k] += g * row[k];
            }
        }
        dx
    }
}
