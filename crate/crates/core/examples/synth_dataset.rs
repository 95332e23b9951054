//! Writes a synthetic cell dataset (images, masks and a manifest) and
//! prints what went into it.
//!
//! ```text
//! cargo run --release -p elseg-core --example synth_dataset -- [out_dir] [count] [defect_rate] [seed]
//! ```

use std::collections::BTreeMap;

use elseg_core::synthcell::{generate_dataset, write_dataset, CellSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synth_out".into());
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let rate: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let cells = generate_dataset(count, rate, &CellSpec::desk(0), seed)?;
    let manifest = write_dataset(&out, &cells, seed)?;

    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for e in &manifest.entries {
        for d in &e.defects {
            *kinds.entry(format!("{:?}", d.kind)).or_default() += 1;
        }
    }
    let defect_pixels: usize = cells.iter().map(|c| c.mask.count()).sum();
    println!("{} cells in {out}", manifest.entries.len());
    println!("defective: {}", cells.iter().filter(|c| c.is_defective()).count());
    println!("defects by kind: {kinds:?}");
    println!("mean defect pixels per defective cell: {:.1}", defect_pixels as f64 / cells.iter().filter(|c| c.is_defective()).count().max(1) as f64);
    Ok(())
}
