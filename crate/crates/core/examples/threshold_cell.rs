//! Thresholding and cleaning without a model: Otsu and adaptive mean
//! thresholds of a disparity image, then busbar and border removal on the
//! original cell.
//!
//! ```text
//! cargo run --release -p elseg-core --example threshold_cell -- [block] [c]
//! ```

use elseg_core::config::PipelineConfig;
use elseg_core::segment::{
    adaptive_mean_threshold, clean_noise, combine_masks, detect_busbars, disparity_intensity, otsu_threshold,
    CombineMode, ThresholdConfig,
};
use elseg_core::ssim::ssim_map;
use elseg_core::synthcell::{apply_defects, generate_cell, CellSpec, DefectKind, DefectSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let block: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let c: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let cfg = PipelineConfig::desk();

    let clean = generate_cell(&CellSpec::desk(5))?;
    let patch = DefectSpec { kind: DefectKind::DeadPatch, severity: 0.8, geometry_seed: 9 };
    let cell = apply_defects(&clean, &[patch])?;
    // The clean cell stands in for a perfect reconstruction.
    let intensity = disparity_intensity(&ssim_map(&cell.image, &clean.image, &cfg.disparity_ssim)?);

    let otsu = otsu_threshold(&intensity);
    println!("Otsu: bin {} (threshold {:.4}), {} px", otsu.bin, otsu.threshold, otsu.mask.count());
    for mode in [CombineMode::Union, CombineMode::Intersection] {
        let tc = ThresholdConfig { adaptive_block: block, adaptive_c: c, combine_mode: mode };
        let adaptive = adaptive_mean_threshold(&intensity, &tc)?;
        let combined = combine_masks(&otsu.mask, &adaptive, mode)?;
        println!("adaptive block {block} C {c}: {} px; {mode:?}: {} px", adaptive.count(), combined.count());
    }

    let layout = detect_busbars(&cell.image, &cfg.busbars)?;
    for b in &layout.vertical_bands {
        println!("vertical busbar at column {} (half width {})", b.center, b.half_width);
    }
    println!("border margin {} px", layout.border_margin);
    let combined = combine_masks(&otsu.mask, &adaptive_mean_threshold(&intensity, &cfg.threshold)?, cfg.threshold.combine_mode)?;
    let cleaned = clean_noise(&combined, &layout)?;
    println!("cleaned mask: {} px, truth: {} px", cleaned.count(), cell.mask.count());
    Ok(())
}
