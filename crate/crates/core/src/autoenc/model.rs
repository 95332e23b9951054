use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Layer, LayerKind, LayerSpec, Shape, Tensor};
use crate::error::{Error, Result};
use crate::ssim::{mean_ssim, mean_ssim_with_grad, SsimParams};

pub const DEFAULT_LEAKY_ALPHA: f64 = 0.025;

/// Model size preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 480×640 input, latent 200, ~15.4M parameters.
    Full,
    /// 64×64 input, latent 32, half the filters.
    Desk,
}

impl Scale {
    pub fn tag(&self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::format(format!("unknown model scale tag {other:?}"))),
        }
    }

    pub fn input_shape(&self) -> Shape {
        match self {
            Scale::Full => Shape::new(480, 640, 1),
            Scale::Desk => Shape::new(64, 64, 1),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Scale::Full => 200,
            Scale::Desk => 32,
        }
    }

    /// Ordered layer list. Every hidden layer uses leaky ReLU; the last
    /// transposed convolution uses a sigmoid.
    pub fn layer_specs(&self, leaky_alpha: f64) -> Vec<LayerSpec> {
        let lr = Activation::LeakyRelu { alpha: leaky_alpha };
        let div = match self {
            Scale::Full => 1,
            Scale::Desk => 2,
        };
        let f = |n: usize| n / div;
        let input = self.input_shape();
        // Three stride-2 stages shrink each side by 8 before the bottleneck.
        let bottleneck = Shape::new(input.h / 8, input.w / 8, f(8));
        vec![
            LayerSpec::conv(f(32), 2, 2, lr),
            LayerSpec::conv(f(16), 2, 2, lr),
            LayerSpec::conv(f(8), 4, 1, lr),
            LayerSpec::conv(f(16), 2, 2, lr),
            LayerSpec::conv(f(8), 4, 1, lr),
            LayerSpec::conv(f(16), 4, 1, lr),
            LayerSpec::conv(f(8), 4, 1, lr),
            LayerSpec::flatten(),
            LayerSpec::dense(self.latent_dim(), lr),
            LayerSpec::dense(bottleneck.len(), lr),
            LayerSpec::reshape(bottleneck),
            LayerSpec::deconv(f(8), 4, 1, lr),
            LayerSpec::deconv(f(16), 4, 1, lr),
            LayerSpec::deconv(f(8), 4, 1, lr),
            LayerSpec::deconv(f(16), 2, 2, lr),
            LayerSpec::deconv(f(8), 4, 1, lr),
            LayerSpec::deconv(f(16), 2, 2, lr),
            LayerSpec::deconv(1, 2, 2, Activation::Sigmoid),
        ]
    }
}

/// Where a model's weights came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub init_seed: u64,
    /// Hex SHA-256 of the training configuration, once trained.
    #[serde(default)]
    pub config_digest: Option<String>,
    #[serde(default)]
    pub train_seed: Option<u64>,
}

/// Convolutional autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub scale: Scale,
    pub input_shape: Shape,
    pub latent_dim: usize,
    pub layers: Vec<Layer>,
    pub provenance: Provenance,
}

/// Per-layer parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(m: &Model) -> Self {
        Self {
            weights: m.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: m.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().flatten().for_each(|v| *v *= s);
        self.bias.iter_mut().flatten().for_each(|v| *v *= s);
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Trace {
    /// `inputs[i]` is the input of layer `i`; the last entry is the model output.
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("trace has an output")
    }
}

/// Rounds to the nearest `f32` so that stored parameters survive a
/// 32-bit round trip unchanged.
#[inline]
pub(crate) fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

impl Model {
    /// Binds `specs` to concrete shapes starting from `input`.
    pub fn from_specs(scale: Scale, input: Shape, latent_dim: usize, specs: Vec<LayerSpec>) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for (i, spec) in specs.into_iter().enumerate() {
            let layer = Layer::bind(spec, shape).map_err(|e| Error::argument(format!("layer {i}: {e}")))?;
            shape = layer.output;
            layers.push(layer);
        }
        if shape != input {
            return Err(Error::argument(format!(
                "decoder output {shape} does not match input {input}"
            )));
        }
        Ok(Self {
            scale,
            input_shape: input,
            latent_dim,
            layers,
            provenance: Provenance::default(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Uniform He-style initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// zero biases.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = layer.fan_in();
            if fan_in == 0 {
                continue;
            }
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = to_f32_grid(rng.gen_range(-bound..bound));
            }
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        self.provenance.init_seed = seed;
    }

    pub fn set_leaky_alpha(&mut self, alpha: f64) {
        for layer in &mut self.layers {
            if let Activation::LeakyRelu { .. } = layer.spec.activation {
                layer.spec.activation = Activation::LeakyRelu { alpha };
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape != self.input_shape {
            return Err(Error::argument(format!(
                "input shape {} does not match model input {}",
                x.shape, self.input_shape
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.data.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur).1;
        }
        Tensor::new(self.input_shape, cur)
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.data.clone());
        for layer in &self.layers {
            let (z, y) = layer.forward(inputs.last().expect("non-empty"));
            pre.push(z);
            inputs.push(y);
        }
        Ok(Trace { inputs, pre })
    }

    /// Backpropagates `d_output` through a recorded pass, accumulating into
    /// `grads`. Returns the gradient with respect to the model input.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let mut d = d_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(
                &trace.inputs[i],
                &trace.pre[i],
                &trace.inputs[i + 1],
                &d,
                &mut grads.weights[i],
                &mut grads.bias[i],
            );
        }
        d
    }

    /// Negative mean SSIM between `x` and its reconstruction.
    pub fn loss(&self, x: &Tensor, params: &SsimParams) -> Result<f64> {
        let y = self.forward(x)?;
        Ok(-mean_ssim(&x.to_image(), &y.to_image(), params)?)
    }

    /// Loss plus its parameter gradients accumulated into `grads`.
    pub fn loss_and_grad(&self, x: &Tensor, params: &SsimParams, grads: &mut Gradients) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let recon = Tensor::new(self.input_shape, trace.output().to_vec())?;
        let (s, d_recon) = mean_ssim_with_grad(&x.to_image(), &recon.to_image(), params)?;
        let d_out: Vec<f64> = d_recon.data().iter().map(|g| -g).collect();
        self.backward(&trace, &d_out, grads);
        Ok(-s)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::argument(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Human-readable topology table: kind, output shape, filters, kernel, stride, params.
    pub fn summary(&self) -> String {
        let mut s = format!("{:<10} {:>14} {:>8} {:>7} {:>7} {:>10}\n", "layer", "output", "filters", "kernel", "stride", "params");
        s.push_str(&format!("{:<10} {:>14}\n", "input", self.input_shape.to_string()));
        for l in &self.layers {
            let name = match l.spec.kind {
                LayerKind::Conv => "conv2d",
                LayerKind::Deconv => "deconv2d",
                LayerKind::Flatten => "flatten",
                LayerKind::Dense => "dense",
                LayerKind::Reshape => "reshape",
            };
            let conv = matches!(l.spec.kind, LayerKind::Conv | LayerKind::Deconv);
            s.push_str(&format!(
                "{:<10} {:>14} {:>8} {:>7} {:>7} {:>10}\n",
                name,
                l.output.to_string(),
                if conv { l.spec.filters.to_string() } else { String::new() },
                if conv { format!("{}x{}", l.spec.kernel.0, l.spec.kernel.1) } else { String::new() },
                if conv { format!("{}x{}", l.spec.stride.0, l.spec.stride.1) } else { String::new() },
                l.param_count()
            ));
        }
        s.push_str(&format!("total trainable parameters: {}\n", self.param_count()));
        s
    }
}

/// Builds and initializes a model at the given scale.
pub fn build_model(scale: Scale, seed: u64) -> Model {
    let mut m = Model::from_specs(
        scale,
        scale.input_shape(),
        scale.latent_dim(),
        scale.layer_specs(DEFAULT_LEAKY_ALPHA),
    )
    .expect("preset topologies compose");
    m.initialize(seed);
    m
}
