//! Train on the square and look at the phase field: its 0.25-sublevel set
//! should trace the two diagonals. Pass `ablate` to train with `v ≡ 1` and
//! compare the eikonal error near the surface.
//!
//!     cargo run --release --example square_medial_axis [-- ablate] [key=value ...]

use std::path::Path;

use medial_sdf::config::RunConfig;
use medial_sdf::field::ScalarField;
use medial_sdf::geometry::{uniform_in_domain, AnalyticShape};
use medial_sdf::metrics::{evaluate, raster, GroundTruth};
use medial_sdf::render::write_pgm;
use medial_sdf::trainer::{stream, Trainer};

fn main() -> medial_sdf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/square_desk.cfg");
    let mut cfg = RunConfig::load(&path)?;
    for arg in std::env::args().skip(1) {
        match arg.split_once('=') {
            Some((k, v)) => cfg.set(k.trim(), v.trim()).map_err(medial_sdf::Error::InvalidArgument)?,
            None if arg == "ablate" => cfg.train.optim.ablate_phase_field = true,
            None => panic!("unknown argument {arg}"),
        }
    }
    let square = AnalyticShape::by_name("square")?;
    let cloud = square.sample_surface(cfg.points, &mut stream(cfg.seed(), 4));
    let mut trainer = Trainer::new(cfg.train.clone(), cloud)?;
    trainer.train()?;

    let pts = uniform_in_domain(2, 50_000, &mut stream(cfg.seed(), 99));
    let (mut sub, mut near) = (0, 0);
    for x in pts.chunks_exact(2) {
        if trainer.pf.value(x) < 0.25 {
            sub += 1;
            near += (square.medial_distance(x) < 0.05) as usize;
        }
    }
    println!("{sub} of 50000 samples have v < 0.25, {near} of them within 0.05 of a diagonal");
    let r = evaluate(&trainer.sdf, &GroundTruth::Analytic(square), &cfg.eval)?;
    println!("eikonal error near the surface {:.4}, over the domain {:.4}", r.eik_band, r.eik_omega);

    std::fs::create_dir_all(&cfg.out)?;
    let n = 257;
    let v = raster(&trainer.pf, n - 1);
    // top row first
    let gray: Vec<u8> = v.chunks_exact(n).rev().flatten().map(|v| (v.clamp(0.0, 1.0) * 255.0) as u8).collect();
    write_pgm(&cfg.out.join("phase_field.pgm"), n, n, &gray)?;
    println!("wrote {}", cfg.out.join("phase_field.pgm").display());
    Ok(())
}
