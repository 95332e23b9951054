use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::Tensor;
use super::model::{to_f32_grid, Gradients, Model, DEFAULT_LEAKY_ALPHA};
use crate::error::{Error, Result};
use crate::imagecore::{DatasetSplit, Image};
use crate::ssim::SsimParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Validation runs after every `validate_every`-th epoch.
    pub validate_every: usize,
    /// Consecutive non-improving validations tolerated before stopping.
    pub patience: usize,
    pub leaky_alpha: f64,
    pub seed: u64,
    /// Computes per-sample gradients of a batch on the rayon pool. The batch
    /// sum is still reduced in sample order.
    pub parallel: bool,
    /// SSIM settings of the training loss.
    pub loss_ssim: SsimParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            batch_size: 16,
            max_epochs: 200,
            validate_every: 5,
            patience: 10,
            leaky_alpha: DEFAULT_LEAKY_ALPHA,
            seed: 0,
            parallel: false,
            loss_ssim: SsimParams::loss_preset(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.validate_every == 0 || self.batch_size == 0 {
            return Err(Error::argument("patience, validate_every and batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::argument("learning rate must be a finite non-negative number"));
        }
        if !(self.leaky_alpha >= 0.0 && self.leaky_alpha < 1.0) {
            return Err(Error::argument("leaky alpha must lie in [0, 1)"));
        }
        self.loss_ssim.validate()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub epoch: usize,
    pub loss: f64,
    /// Lowest validation loss seen up to and including this point.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each completed epoch (index 0 = epoch 1).
    pub train_losses: Vec<f64>,
    pub validations: Vec<ValidationPoint>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub early_stopped: bool,
    pub duration_secs: f64,
}

impl TrainReport {
    /// Best validation mean SSIM (the negated loss).
    pub fn best_validation_ssim(&self) -> f64 {
        -self.best_validation_loss
    }
}

/// Adam with moment coefficients (0.9, 0.999) and eps 1e-8.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = to_f32_grid(params[i] - self.lr * m_hat / (v_hat.sqrt() + Self::EPS));
        }
    }
}

fn flatten_grads(g: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in g.weights.iter().zip(&g.bias) {
        out.extend_from_slice(w);
        out.extend_from_slice(b);
    }
    out
}

fn to_tensors(m: &Model, images: &[Image], what: &str) -> Result<Vec<Tensor>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let t = Tensor::from_image(img);
            if t.shape != m.input_shape {
                return Err(Error::argument(format!(
                    "{what} image {i} has shape {} but the model expects {}",
                    t.shape, m.input_shape
                )));
            }
            Ok(t)
        })
        .collect()
}

/// Mean loss over a set of inputs.
pub fn evaluate(m: &Model, inputs: &[Tensor], params: &SsimParams) -> Result<f64> {
    let losses: Result<Vec<f64>> = inputs.par_iter().map(|x| m.loss(x, params)).collect();
    let losses = losses?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains `m` in place with Adam on mini-batches and early stopping; leaves
/// the best-validation weights in `m`.
///
/// If the validation set is empty the training set is used for validation.
pub fn train(m: &mut Model, data: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_observer(m, data, cfg, |_, _| {})
}

/// As [`train`], calling `observe(epoch, train_loss)` after each epoch.
pub fn train_with_observer(
    m: &mut Model,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    let started = Instant::now();
    let train_set = to_tensors(m, &data.train, "training")?;
    let val_set = if data.validation.is_empty() {
        train_set.clone()
    } else {
        to_tensors(m, &data.validation, "validation")?
    };
    m.set_leaky_alpha(cfg.leaky_alpha);
    let params = cfg.loss_ssim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate, m.param_count());
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut report = TrainReport {
        train_losses: Vec::new(),
        validations: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_validation_loss: f64::INFINITY,
        early_stopped: false,
        duration_secs: 0.0,
    };
    let mut best_params = m.params_flat();
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Vec<Result<(f64, Gradients)>> = if cfg.parallel {
                batch
                    .par_iter()
                    .map(|&i| {
                        let mut g = Gradients::zeros_like(m);
                        m.loss_and_grad(&train_set[i], &params, &mut g).map(|l| (l, g))
                    })
                    .collect()
            } else {
                batch
                    .iter()
                    .map(|&i| {
                        let mut g = Gradients::zeros_like(m);
                        m.loss_and_grad(&train_set[i], &params, &mut g).map(|l| (l, g))
                    })
                    .collect()
            };
            let mut grads = Gradients::zeros_like(m);
            for r in per_sample {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                epoch_loss += loss;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            let mut flat = m.params_flat();
            adam.step(&mut flat, &flatten_grads(&grads));
            m.set_params_flat(&flat)?;
        }
        let mean_loss = epoch_loss / train_set.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.train_losses.push(mean_loss);
        report.stopped_epoch = epoch;
        observe(epoch, mean_loss);

        if epoch % cfg.validate_every == 0 {
            let val = evaluate(m, &val_set, &params)?;
            if !val.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if val < report.best_validation_loss {
                report.best_validation_loss = val;
                report.best_epoch = epoch;
                best_params = m.params_flat();
                stale = 0;
            } else {
                stale += 1;
            }
            report.validations.push(ValidationPoint {
                epoch,
                loss: val,
                best_so_far: report.best_validation_loss,
            });
            log::info!("epoch {epoch}: train {mean_loss:.5} validation {val:.5}");
            if stale >= cfg.patience {
                report.early_stopped = true;
                break;
            }
        }
    }

    if report.validations.is_empty() {
        // Fewer epochs than one validation interval: validate the final weights.
        let val = evaluate(m, &val_set, &params)?;
        report.best_validation_loss = val;
        report.best_epoch = report.stopped_epoch;
        report.validations.push(ValidationPoint {
            epoch: report.stopped_epoch,
            loss: val,
            best_so_far: val,
        });
        best_params = m.params_flat();
    }
    m.set_params_flat(&best_params)?;
    m.provenance.config_digest = Some(cfg.digest());
    m.provenance.train_seed = Some(cfg.seed);
    report.duration_secs = started.elapsed().as_secs_f64();
    Ok(report)
}
