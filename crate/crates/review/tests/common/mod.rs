#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::DateTime;
use elseg_core::annotate::AnnotationRecord;
use elseg_core::geometry::Polygon;
use elseg_core::imagecore::Image;

pub fn square(x: f64, y: f64, side: f64) -> Polygon {
    Polygon::new(vec![(x, y), (x + side, y), (x + side, y + side), (x, y + side)]).unwrap()
}

/// `n` silver records over 32×32 PNGs written to `images`.
pub fn items(images: &Path, n: usize) -> Vec<(AnnotationRecord, PathBuf)> {
    std::fs::create_dir_all(images).unwrap();
    (0..n)
        .map(|i| {
            let id = format!("cell{i:02}");
            let path = images.join(format!("{id}.png"));
            Image::from_fn(32, 32, |x, y| ((x + y + i) % 7) as f64 / 6.0).save_png(&path, 1.0).unwrap();
            let polys = (0..i % 3).map(|k| square(2.0 + 8.0 * k as f64, 4.0, 3.0)).collect();
            let rec = AnnotationRecord::silver(&id, path.to_string_lossy(), 32, 32, polys, vec![], DateTime::UNIX_EPOCH);
            (rec, path)
        })
        .collect()
}
