//! Minimize the same energy on a finite-difference grid for the square and
//! compare the result with the exact distance.
//!
//!     cargo run --release --example grid_reference [-- out_dir]

use std::path::PathBuf;

use medial_sdf::field::{ScalarField, Signed};
use medial_sdf::geometry::{uniform_in_domain, AnalyticShape};
use medial_sdf::gridref::{minimize_grid, GridConfig};
use medial_sdf::metrics::sign_align;
use rand::SeedableRng;

fn main() -> medial_sdf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/gridref".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let square = AnalyticShape::by_name("square")?;
    let cloud = square.sample_surface(1000, &mut rng);

    let config = GridConfig {
        resolution: 96,
        iterations: 8000,
        ..GridConfig::reference()
    };
    let run = minimize_grid(&cloud, &config)?;
    let phi = Signed {
        inner: &run.fields,
        sign: sign_align(&run.fields),
    };
    let pts = uniform_in_domain(2, 10_000, &mut rng);
    let err: f64 = pts.chunks_exact(2).map(|x| (phi.value(x) - square.sgndist(x)).powi(2)).sum::<f64>() / 10_000.0;
    println!("final energy {:.4}, RMSE to the exact distance {:.4}", run.energy.last().unwrap(), err.sqrt());
    let diag = run.fields.v_at(&[0.2, 0.2]);
    let side = run.fields.v_at(&[0.2, -0.05]);
    println!("phase field on the diagonal {diag:.3}, off it {side:.3}");
    run.fields.write_outputs(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
