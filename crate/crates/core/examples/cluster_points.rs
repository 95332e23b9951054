//! DBSCAN on noisy blobs, checked against the quadratic reference.
//!
//! ```text
//! cargo run --release -p elseg-core --example cluster_points -- [epsilon] [min_pts] [n]
//! ```

use elseg_core::cluster::{dbscan, dbscan_reference, DbscanParams, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epsilon: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10.0);
    let min_pts: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let centers = [(100.0, 100.0), (300.0, 120.0), (200.0, 320.0)];
    let points: Vec<Point> = (0..n)
        .map(|i| {
            if i % 10 == 0 {
                (rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0))
            } else {
                let (cx, cy) = centers[i % centers.len()];
                (cx + rng.gen_range(-30.0..30.0), cy + rng.gen_range(-30.0..30.0))
            }
        })
        .collect();

    let params = DbscanParams::new(epsilon, min_pts)?;
    let t = std::time::Instant::now();
    let set = dbscan(&points, &params)?;
    let fast = t.elapsed();
    for (i, c) in set.clusters.iter().enumerate() {
        let pts = c.points();
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        println!(
            "cluster {i}: {} points ({} core), centroid ({:.1}, {:.1})",
            c.len(),
            c.core_count(),
            sx / pts.len() as f64,
            sy / pts.len() as f64
        );
    }
    println!("{} outliers; grid DBSCAN took {fast:.2?}", set.outliers.len());

    if n <= 5000 {
        let t = std::time::Instant::now();
        let reference = dbscan_reference(&points, &params)?;
        println!("reference took {:.2?}; same partition: {}", t.elapsed(), set.same_partition(&reference, n));
    }
    Ok(())
}
