//! Sphere-trace the analytic box and write a shaded image and a map of the
//! iteration counts.
//!
//!     cargo run --release --example sphere_trace [-- out_dir]

use std::path::PathBuf;

use medial_sdf::geometry::AnalyticShape;
use medial_sdf::render::{render_image, Camera, TraceOptions};

fn main() -> medial_sdf::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/trace".into()));
    std::fs::create_dir_all(&dir)?;
    let shape = AnalyticShape::by_name("box")?;
    let image = render_image(&shape, &Camera::default_view(320, 240), &TraceOptions::exact())?;
    println!(
        "{} of {} rays hit, {:.2} iterations on average",
        image.hit_count(),
        image.width * image.height,
        image.mean_iterations
    );
    image.write_shaded(&dir.join("box.ppm"))?;
    image.write_iterations(&dir.join("box_iterations.ppm"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
