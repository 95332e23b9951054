//! Segments synthetic defective cells and writes a strip of every stage per
//! cell: input, reconstruction, disparity, combined threshold mask, cleaned
//! mask, rasterized polygons and ground truth.
//!
//! ```text
//! cargo run --release -p elseg-core --example segment_cell -- desk.model [out_dir] [count] [seed]
//! ```

use elseg_core::annotate::{mask_iou, rasterize};
use elseg_core::autoenc::load_model;
use elseg_core::config::PipelineConfig;
use elseg_core::imagecore::{BinaryMask, Image};
use elseg_core::pipeline::segment_image;
use elseg_core::synthcell::{generate_dataset_with, CellSpec, DefectKind};

fn mask_image(m: &BinaryMask) -> Image {
    Image::from_fn(m.width(), m.height(), |x, y| if m.get(x, y) { 1.0 } else { 0.0 })
}

/// Places unit-scale panels side by side with a 2 px gap.
fn strip(panels: &[Image]) -> Image {
    let (w, h) = panels[0].dims();
    Image::from_fn(panels.len() * (w + 2) - 2, h, |x, y| {
        let (k, px) = (x / (w + 2), x % (w + 2));
        if px >= w {
            0.5
        } else {
            panels[k].get(px, y)
        }
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let model = load_model(args.next().unwrap_or_else(|| "desk.model".into()))?;
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "segment_cell_out".into()));
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8101);
    std::fs::create_dir_all(&out)?;

    let cfg = PipelineConfig::desk().with_process_env()?;
    let cells = generate_dataset_with(count, 1.0, &CellSpec::desk(0), seed, &[DefectKind::Crack, DefectKind::DeadPatch])?;
    for (i, cell) in cells.iter().enumerate() {
        let s = segment_image(&model, &cfg, &cell.image, &format!("cell{i}"), "")?;
        let predicted = rasterize(&s.record.polygons, 64, 64);
        let panels = [
            s.trace.prepared.clone(),
            s.trace.reconstruction.clone(),
            s.trace.intensity.clone(),
            mask_image(&s.trace.combined),
            mask_image(&s.trace.cleaned),
            mask_image(&predicted),
            mask_image(&cell.mask),
        ];
        let path = out.join(format!("cell{i}.png"));
        strip(&panels).save_png(&path, 1.0)?;
        println!(
            "{}: {:?}, {} polygons, IoU {:.3}, max disparity {:.3}",
            path.display(),
            cell.defects.iter().map(|d| d.kind).collect::<Vec<_>>(),
            s.record.polygons.len(),
            mask_iou(&predicted, &cell.mask)?,
            s.trace.intensity.min_max().1
        );
    }
    Ok(())
}
