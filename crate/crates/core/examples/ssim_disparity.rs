//! SSIM disparity between a clean cell and the same cell with a crack: the
//! low-SSIM region is where the defect sits. Writes both cells and the
//! disparity intensity as PNGs.
//!
//! ```text
//! cargo run --release -p elseg-core --example ssim_disparity -- [out_dir] [window]
//! ```

use elseg_core::segment::disparity_intensity;
use elseg_core::ssim::{mean_ssim, ssim_map, SsimParams};
use elseg_core::synthcell::{apply_defects, generate_cell, CellSpec, DefectKind, DefectSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "ssim_out".into()));
    let window: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    std::fs::create_dir_all(&out)?;

    let clean = generate_cell(&CellSpec::desk(3))?;
    let crack = DefectSpec { kind: DefectKind::Crack, severity: 0.9, geometry_seed: 4 };
    let cracked = apply_defects(&clean, &[crack])?;

    let p = SsimParams::new(window, 0.01, 0.03, 1.0)?;
    let map = ssim_map(&clean.image, &cracked.image, &p)?;
    let intensity = disparity_intensity(&map);

    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for y in 0..64 {
        for x in 0..64 {
            let acc = if cracked.mask.get(x, y) { &mut inside } else { &mut outside };
            acc.0 += intensity.get(x, y);
            acc.1 += 1;
        }
    }
    println!("window {window}: mean SSIM {:.4}", mean_ssim(&clean.image, &cracked.image, &p)?);
    println!("mean disparity on crack pixels   {:.4} ({} px)", inside.0 / inside.1 as f64, inside.1);
    println!("mean disparity elsewhere         {:.4}", outside.0 / outside.1 as f64);

    clean.image.save_png(out.join("clean.png"), 1.0)?;
    cracked.image.save_png(out.join("cracked.png"), 1.0)?;
    let (_, max) = intensity.min_max();
    intensity.map(|v| v / max.max(1e-12)).save_png(out.join("disparity.png"), 1.0)?;
    println!("wrote {}", out.display());
    Ok(())
}
