//! Alpha shapes of a pixel set shaped like an L with a hole. Small alpha
//! gives the convex hull; alpha = sqrt(2) follows the pixel outline. Only
//! outer rings are traced, so the hole does not appear in any ring.
//!
//! ```text
//! cargo run --release -p elseg-core --example alpha_shape
//! ```

use elseg_core::cluster::pixel_points;
use elseg_core::geometry::{alpha_shape, convex_hull};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pixels: Vec<(usize, usize)> = (0..30)
        .flat_map(|y| (0..30).map(move |x| (x, y)))
        .filter(|&(x, y)| x < 8 || y >= 22)
        .filter(|&(x, y)| !((2..5).contains(&x) && (5..12).contains(&y)))
        .collect();
    let points = pixel_points(&pixels);
    let hull = convex_hull(&points)?;
    println!("{} pixels; convex hull area {:.1} with {} vertices", pixels.len(), hull.area, hull.vertices.len());

    for alpha in [0.0, 0.05, 0.2, 0.5, 1.0, std::f64::consts::SQRT_2] {
        let rings = alpha_shape(&points, alpha)?;
        let area: f64 = rings.iter().map(|r| r.area).sum();
        let vertices: usize = rings.iter().map(|r| r.vertices.len()).sum();
        println!("alpha {alpha:<6.3} {} ring(s), area {area:>6.1}, {vertices} vertices", rings.len());
    }
    // Pixel centers at spacing 1 span (n - 1) per side, so the outline
    // encloses less than the pixel count.
    let tight = alpha_shape(&points, std::f64::consts::SQRT_2)?;
    println!("outline starts at {:?}", &tight[0].vertices[..4]);
    Ok(())
}
