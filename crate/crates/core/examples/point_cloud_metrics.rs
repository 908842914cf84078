//! Chamfer and Hausdorff distances between samples of two shapes, and the
//! signed distance to a closed triangle mesh.
//!
//!     cargo run --release --example point_cloud_metrics

use medial_sdf::geometry::{AnalyticShape, MeshDistance};
use medial_sdf::metrics::{chamfer, hausdorff};
use rand::SeedableRng;

fn main() -> medial_sdf::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let circle = AnalyticShape::by_name("circle")?;
    let square = AnalyticShape::by_name("square")?;
    let a = circle.sample_surface(5000, &mut rng);
    let b = square.sample_surface(5000, &mut rng);
    println!("circle vs square: chamfer {:.5}, hausdorff {:.5}", chamfer(&a, &b, false)?, hausdorff(&a, &b, false)?);
    let a2 = circle.sample_surface(5000, &mut rng);
    println!("circle vs circle: chamfer {:.5}", chamfer(&a, &a2, false)?);

    let sphere = AnalyticShape::by_name("sphere")?;
    let mesh = sphere.mesh(4)?;
    let dist = MeshDistance::new(&mesh);
    println!("icosphere: {} triangles, closed {}", mesh.triangles.len(), dist.is_closed());
    for p in [[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [0.0, 0.0, 0.9], [1.0, 1.0, 1.0]] {
        println!("  {p:?}: mesh {:+.5}  exact {:+.5}", dist.signed(p), sphere.sgndist(&p));
    }
    Ok(())
}
