//! Stands up a review store over a few synthetic cells, serves it and walks
//! one reviewer session over HTTP: list, fetch, edit and accept, a stale
//! write, then the gold export and stats.
//!
//! ```text
//! cargo run -p elseg-review --example review_session -- [store_dir] [--keep]
//! ```
//!
//! With `--keep` the server stays up until Ctrl-C.

use std::path::PathBuf;
use std::sync::Arc;

use elseg_core::annotate::AnnotationRecord;
use elseg_core::geometry::Polygon;
use elseg_core::synthcell::{generate_dataset, CellSpec};
use elseg_review::{serve, CostOptions, ImageSummary, ReviewStore, StatsResponse};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let keep = args.iter().any(|a| a == "--keep");
    let root = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("elseg-review-{}", std::process::id())));

    let store = if root.join(elseg_review::store::INDEX_FILE).is_file() {
        ReviewStore::open(&root)?
    } else {
        let src = root.with_extension("src");
        std::fs::create_dir_all(&src)?;
        let mut items = Vec::new();
        for (i, cell) in generate_dataset(3, 1.0, &CellSpec::desk(0), 5)?.iter().enumerate() {
            let path = src.join(format!("cell{i}.png"));
            cell.image.save_png(&path, 1.0)?;
            let guess = Polygon::new(vec![(8.0, 8.0), (30.0, 8.0), (30.0, 30.0), (8.0, 30.0)])?;
            let id = format!("cell{i}");
            let record = AnnotationRecord::silver(&id, path.to_string_lossy(), 64, 64, vec![guess], vec![], chrono::Utc::now());
            items.push((record, path));
        }
        ReviewStore::create(&root, items)?
    };
    let cost = CostOptions { t_inference: Some(2.237), t_revision: 5.3, t_tuning: 1950.0 };
    let server = serve(Arc::new(store), "127.0.0.1:0", cost)?;
    let base = server.url();
    println!("store {} served at {base}", root.display());

    let http = reqwest::blocking::Client::new();
    let list: Vec<ImageSummary> = http.get(format!("{base}/api/images")).send()?.json()?;
    for s in &list {
        println!("  {} {:?} v{} ({} polygons)", s.id, s.status, s.version, s.polygons);
    }
    if let Some(first) = list.iter().find(|s| s.version == 1) {
        let url = format!("{base}/api/annotations/{}", first.id);
        let r: AnnotationRecord = http.get(&url).send()?.json()?;
        let edit = json!({
            "expected_version": r.version,
            "status": "gold",
            "polygons": [[[10, 10], [28, 10], [28, 26], [10, 26]]],
            "note": "tightened box"
        });
        let saved: AnnotationRecord = http.put(&url).json(&edit).send()?.json()?;
        println!("accepted {} as {:?} v{}", saved.image_id, saved.status, saved.version);
        let stale = http.put(&url).json(&edit).send()?;
        println!("repeating the same write: HTTP {}", stale.status());
    }
    let coco = http.get(format!("{base}/api/export/coco")).send()?.text()?;
    println!("gold COCO export: {} bytes", coco.len());
    let stats: StatsResponse = http.get(format!("{base}/api/stats")).send()?.json()?;
    println!("{}", serde_json::to_string_pretty(&stats)?);

    if keep {
        println!("serving until Ctrl-C");
        server.run_until_ctrl_c()?;
    } else {
        server.shutdown()?;
    }
    Ok(())
}
