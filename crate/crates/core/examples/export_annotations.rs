//! Builds annotation records by hand and writes them as COCO and PascalVOC,
//! then reads the COCO back and validates every VOC file.
//!
//! ```text
//! cargo run --release -p elseg-core --example export_annotations -- [out_dir]
//! ```

use elseg_core::annotate::{
    parse_coco, schema::validate_xml, to_coco, to_voc, voc_file_name, AnnotationRecord, Category, COCO_FILE, VOC_SCHEMA,
};
use elseg_core::geometry::Polygon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "export_out".into()));
    std::fs::create_dir_all(out.join("voc"))?;

    let crack = Polygon::new(vec![(10.5, 12.5), (40.5, 14.5), (40.5, 16.5), (10.5, 14.5)])?;
    let patch = Polygon::new(vec![(50.0, 50.0), (58.0, 50.0), (58.0, 57.0), (50.0, 57.0)])?;
    let now = chrono::Utc::now();
    let records = vec![
        AnnotationRecord::silver("cell_a", "cells/cell_a.png", 64, 64, vec![crack, patch], vec![], now),
        AnnotationRecord::silver("cell_b", "cells/cell_b.png", 64, 64, vec![], vec![], now),
    ];

    let cats = [Category::defect()];
    let coco = to_coco(&records, &cats)?;
    std::fs::write(out.join(COCO_FILE), &coco)?;
    let (back, _) = parse_coco(&coco)?;
    println!("COCO: {} bytes, {} images, round trip equal: {}", coco.len(), back.len(), to_coco(&back, &cats)? == coco);

    for r in &records {
        let xml = to_voc(r, "cells", "defect")?;
        validate_xml(&xml, VOC_SCHEMA)?;
        std::fs::write(out.join("voc").join(voc_file_name(r)), xml)?;
    }
    println!("VOC: {} files valid; written under {}", records.len(), out.display());
    Ok(())
}
