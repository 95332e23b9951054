//! Trains the desk-scale autoencoder on synthetic defect-free cells and
//! saves it.
//!
//! ```text
//! cargo run --release -p elseg-core --example train_desk -- [out.model] [epochs] [seed]
//! ```

use elseg_core::autoenc::save_model;
use elseg_core::config::PipelineConfig;
use elseg_core::pipeline::train_model;
use elseg_core::synthcell::{generate_dataset, CellSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "desk.model".into());
    let mut cfg = PipelineConfig::desk();
    if let Some(epochs) = args.next() {
        cfg.train.max_epochs = epochs.parse()?;
    }
    if let Some(seed) = args.next() {
        cfg.seed = seed.parse()?;
        cfg.train.seed = cfg.seed;
    }

    let cells = generate_dataset(200, 0.0, &CellSpec::desk(0), cfg.seed)?;
    let images: Vec<_> = cells.into_iter().map(|c| c.image).collect();
    let (model, report) = train_model(&cfg, &images, |epoch, loss| {
        if epoch % 5 == 0 {
            println!("epoch {epoch:>3}  train loss {loss:.4}");
        }
    })?;
    println!(
        "stopped at epoch {} (best epoch {}), best validation SSIM {:.4}, {:.1}s",
        report.stopped_epoch,
        report.best_epoch,
        report.best_validation_ssim(),
        report.duration_secs
    );
    save_model(&model, &out)?;
    println!("saved {out}");
    Ok(())
}
