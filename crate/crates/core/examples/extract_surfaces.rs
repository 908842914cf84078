//! Zero level sets of analytic fields: polylines of the square in 2D and a
//! triangle mesh of the box in 3D.
//!
//!     cargo run --release --example extract_surfaces [-- out_dir]

use std::path::PathBuf;

use medial_sdf::geometry::io::{write_obj, write_svg};
use medial_sdf::geometry::{marching_cubes, marching_squares, polyline_length, AnalyticShape, DOMAIN_HALF};

fn main() -> medial_sdf::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/extract".into()));
    std::fs::create_dir_all(&dir)?;

    let square = AnalyticShape::by_name("square")?;
    let segs = marching_squares(|x| square.sgndist(x), 256, [-DOMAIN_HALF; 2], [DOMAIN_HALF; 2])?;
    println!("square: {} segments, length {:.4} (exact 4)", segs.len(), polyline_length(&segs));
    write_svg(&dir.join("square.svg"), &segs, DOMAIN_HALF)?;

    let cube = AnalyticShape::by_name("box")?;
    let mesh = marching_cubes(|x| cube.sgndist(x), 96, [-DOMAIN_HALF; 3], [DOMAIN_HALF; 3])?;
    println!("box: {} triangles, area {:.4}, closed {}", mesh.triangles.len(), mesh.total_area(), mesh.is_closed());
    write_obj(&dir.join("box.obj"), &mesh)?;
    println!("wrote {}", dir.display());
    Ok(())
}
