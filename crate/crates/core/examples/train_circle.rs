//! Train both networks on 1000 samples of a circle with the desk
//! configuration, then measure the result against the exact distance.
//! Takes a few minutes on one core.
//!
//!     cargo run --release --example train_circle [-- key=value ...]

use std::path::Path;

use medial_sdf::config::RunConfig;
use medial_sdf::metrics::{evaluate, GroundTruth};
use medial_sdf::nets::{load_checkpoint, save_checkpoint};
use medial_sdf::trainer::{stream, Trainer};

fn main() -> medial_sdf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/circle_desk.cfg");
    let mut cfg = RunConfig::load(&path)?;
    for kv in std::env::args().skip(1) {
        let (k, v) = kv.split_once('=').expect("arguments are key=value");
        cfg.set(k.trim(), v.trim()).map_err(medial_sdf::Error::InvalidArgument)?;
    }
    let shape = cfg.analytic_shape().expect("an analytic shape");
    let cloud = shape.sample_surface(cfg.points, &mut stream(cfg.seed(), 4));

    let mut trainer = Trainer::new(cfg.train.clone(), cloud)?;
    trainer.train()?;
    for s in &trainer.history {
        println!("epoch {:2}  loss {:10.4}  cells {}", s.epoch, s.mean.total(), s.cells);
    }

    let r = evaluate(&trainer.sdf, &GroundTruth::Analytic(shape), &cfg.eval)?;
    println!("{}", medial_sdf::metrics::MetricReport::HEADER);
    println!("{}", r.csv_row("circle"));

    std::fs::create_dir_all(&cfg.out)?;
    let ckpt = cfg.out.join("circle.ckpt");
    save_checkpoint(&ckpt, &trainer.checkpoint())?;
    let back = load_checkpoint(&ckpt)?;
    assert_eq!(back.sdf.params(), trainer.sdf.params());
    println!("checkpoint at {}", ckpt.display());
    Ok(())
}
