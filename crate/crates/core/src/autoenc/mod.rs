//! Convolutional autoencoder trained on defect-free cells with a negative
//! SSIM loss. At inference it maps a (possibly defective) cell to a
//! defect-free reconstruction.
//!
//! Two sizes exist: [`Scale::Full`] (480×640 input, latent 200) and
//! [`Scale::Desk`] (64×64, latent 32, half the filters) for CPU training.
//! Parameters are held on the `f32` grid (rounded after every optimizer
//! step) so model files store them exactly; arithmetic runs in `f64`.

mod io;
mod layers;
mod model;
mod train;

pub use io::{decode_model, encode_model, load_model, save_model, FORMAT_MAJOR, FORMAT_MINOR, MAGIC};
pub use layers::{Activation, Layer, LayerKind, LayerSpec, Shape, Tensor};
pub use model::{build_model, Gradients, Model, Provenance, Scale, Trace, DEFAULT_LEAKY_ALPHA};
pub use train::{evaluate, train, train_with_observer, TrainConfig, TrainReport, ValidationPoint};
