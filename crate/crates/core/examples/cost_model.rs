//! Annotation cost per image as the dataset grows: the tuning time is
//! amortized, so the per-image cost falls toward inference plus review.
//!
//! ```text
//! cargo run --release -p elseg-core --example cost_model -- [t_inference] [t_revision] [t_tuning]
//! ```

use elseg_core::annotate::{cost_per_image, CostModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>());
    let t_inference = args.next().transpose()?.unwrap_or(2.237);
    let t_revision = args.next().transpose()?.unwrap_or(5.3);
    let t_tuning = args.next().transpose()?.unwrap_or(1950.0);
    let manual = 19.9;

    println!("{:>8}  {:>10}  {:>8}", "images", "s/image", "speedup");
    for n in [1, 10, 100, 468, 1000, 10_000, 100_000] {
        let c = cost_per_image(&CostModel { t_inference, t_revision, t_tuning, n_images: n })?;
        println!("{n:>8}  {c:>10.3}  {:>7.2}x", manual / c);
    }
    let floor = t_inference + t_revision;
    let break_even = t_tuning / (manual - floor);
    println!("floor {floor:.3} s/image; cheaper than {manual} s manual labelling beyond {break_even:.0} images");
    Ok(())
}
