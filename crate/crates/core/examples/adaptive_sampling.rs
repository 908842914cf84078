//! Refine the sampling grid around a circle and its centre, draw a weighted
//! batch and check that the weights integrate the domain.
//!
//!     cargo run --release --example adaptive_sampling [-- cells.csv]

use medial_sdf::geometry::{domain_volume, AnalyticShape};
use medial_sdf::sampler::{AdaptiveGrid, SamplerConfig};
use rand::SeedableRng;

fn main() -> medial_sdf::Result<()> {
    let circle = AnalyticShape::by_name("circle")?;
    let config = SamplerConfig {
        batch: 4096,
        test_points: 65_536,
        ..SamplerConfig::reference(2)
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    // a phase field that dips at the centre, where the circle's medial axis is
    let v = |x: &[f64]| 1.0 - (-(x[0] * x[0] + x[1] * x[1]) / 0.01).exp();
    let grid = AdaptiveGrid::build_with(&config, 2, |x| circle.sgndist(x), Some(&v), &mut rng)?;
    println!("cells per level: {:?}", grid.level_counts());

    let batch = grid.draw_batch(config.batch, &mut rng);
    println!(
        "{} samples, weights sum to {:.12} (|Ω| = {})",
        batch.len(),
        batch.total_weight(),
        domain_volume(2)
    );
    if let Some(path) = std::env::args().nth(1) {
        grid.write_csv(std::path::Path::new(&path))?;
        println!("wrote {path}");
    }
    Ok(())
}
