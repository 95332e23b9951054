pub mod annotate;
pub mod autoenc;
pub mod cluster;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod imagecore;
pub mod oracle;
pub mod pipeline;
pub mod segment;
pub mod ssim;
pub mod synthcell;

pub use error::{Error, Result};
pub use imagecore::{BinaryMask, Image};
