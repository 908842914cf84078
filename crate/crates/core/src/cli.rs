//! Command implementations behind the `msdf` binary. Every command reads a
//! [`RunConfig`] and writes its artifacts into `config.out`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::config::RunConfig;
use crate::field::{ScalarField, Signed};
use crate::geometry::{
    io, marching_cubes_values, marching_squares_values, normalize_mesh, sample_grid, AnalyticShape, PointCloud,
    TriangleMesh, DOMAIN_HALF,
};
use crate::gridref::{minimize_grid, GridRun};
use crate::metrics::{evaluate, sign_align, GroundTruth, MetricReport};
use crate::nets::{load_checkpoint, Checkpoint};
use crate::render::{render_image, Rendering};
use crate::trainer::{stream, Trainer};
use crate::{Error, Result};

/// Random stream for sampling the input cloud.
const STREAM_INPUT: u64 = 4;

/// Size the global rayon pool from `--threads`, falling back to
/// `MSDF_THREADS`. Returns the pool size.
pub fn init_threads(threads: Option<usize>) -> Result<usize> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("MSDF_THREADS") {
            Ok(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("MSDF_THREADS=`{s}` is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n.filter(|&n| n > 0) {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// The input cloud, plus the normalized mesh when the shape is an OBJ file.
pub fn load_input(cfg: &RunConfig) -> Result<(PointCloud, Option<TriangleMesh>)> {
    let mut rng = stream(cfg.seed(), STREAM_INPUT);
    if let Some(shape) = cfg.analytic_shape() {
        if shape.dim() != cfg.dim() {
            return Err(Error::Dimension(format!("{} is {}D but the run is {}D", cfg.shape, shape.dim(), cfg.dim())));
        }
        return Ok((shape.sample_surface(cfg.points, &mut rng), None));
    }
    let path = Path::new(&cfg.shape);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
        let (mesh, _) = normalize_mesh(&io::read_obj(path)?)?;
        return Ok((mesh.sample_surface(cfg.points, &mut rng), Some(mesh)));
    }
    let cloud = io::read_cloud(path)?;
    if cloud.dim != cfg.dim() {
        return Err(Error::Dimension(format!("{} holds {}D points, the run is {}D", cfg.shape, cloud.dim, cfg.dim())));
    }
    if cloud.points.iter().any(|v| v.abs() > 1.0) {
        warn!("input cloud leaves [-1, 1]^d; results near the domain boundary are unreliable");
    }
    Ok((cloud, None))
}

pub fn cmd_sample_shape(name: &str, n: usize, seed: u64, out: &Path) -> Result<PointCloud> {
    let shape = AnalyticShape::by_name(name)?;
    let cloud = shape.sample_surface(n, &mut stream(seed, STREAM_INPUT));
    io::write_cloud(out, &cloud)?;
    info!("wrote {n} samples of {name} to {}", out.display());
    Ok(cloud)
}

/// Train from scratch, or continue from `resume`. Writes the config echo,
/// the input cloud, per-epoch checkpoints, `final.ckpt` and `train_log.csv`.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<Trainer> {
    std::fs::create_dir_all(&cfg.out)?;
    cfg.echo(&cfg.out)?;
    let (cloud, _) = load_input(cfg)?;
    io::write_cloud(&cfg.out.join("input.xyz"), &cloud)?;
    let trainer = match resume {
        Some(p) => Trainer::resume(cfg.train.clone(), cloud, load_checkpoint(p)?)?,
        None => Trainer::new(cfg.train.clone(), cloud)?,
    };
    let mut trainer = trainer.with_output(&cfg.out)?;
    trainer.train()?;
    Ok(trainer)
}

pub fn default_checkpoint(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("final.ckpt")
}

pub fn load_trained(cfg: &RunConfig, ckpt: &Path) -> Result<Checkpoint> {
    let c = load_checkpoint(ckpt)?;
    c.check_arch(&cfg.train.sdf, &cfg.train.pf)?;
    Ok(c)
}

/// Metrics against the analytic shape or mesh named by the config;
/// writes `metrics.csv` and `bands.csv`.
pub fn cmd_eval(cfg: &RunConfig, ckpt: &Path) -> Result<MetricReport> {
    let c = load_trained(cfg, ckpt)?;
    let gt_name = cfg.ground_truth_name();
    let mesh;
    let gt = match AnalyticShape::by_name(gt_name) {
        Ok(s) => GroundTruth::Analytic(s),
        Err(_) => {
            mesh = normalize_mesh(&io::read_obj(Path::new(gt_name))?)?.0;
            GroundTruth::Mesh { mesh: &mesh, band: None }
        }
    };
    let report = evaluate(&c.sdf, &gt, &cfg.eval)?;
    report.write_csv(&cfg.out.join("metrics.csv"), gt_name)?;
    report.write_bands_csv(&cfg.out.join("bands.csv"))?;
    info!(
        "d_C {:.4e}  d_H {:.4e}  E_n {:.4e}  E_SDF {:.4e}/{:.4e}  E_eik {:.4e}/{:.4e}",
        report.chamfer, report.hausdorff, report.normal, report.sdf_omega, report.sdf_band, report.eik_omega, report.eik_band
    );
    Ok(report)
}

/// Zero level set of the sign-aligned SDF: `zero.csv` and `zero.svg` in 2D,
/// `zero.obj` in 3D. The phase-field raster goes to `v.raw` in 2D.
pub fn cmd_extract(cfg: &RunConfig, ckpt: &Path) -> Result<PathBuf> {
    let c = load_trained(cfg, ckpt)?;
    let sdf = Signed {
        inner: &c.sdf,
        sign: sign_align(&c.sdf),
    };
    let d = cfg.dim();
    let res = cfg.extract_resolution;
    let lo = vec![-DOMAIN_HALF; d];
    let hi = vec![DOMAIN_HALF; d];
    let pts = crate::geometry::grid_points(d, res, &lo, &hi);
    let values = sdf.values(&pts);
    if d == 2 {
        let segs = marching_squares_values(&values, res, [lo[0], lo[1]], [hi[0], hi[1]])?;
        io::write_svg(&cfg.out.join("zero.svg"), &segs, DOMAIN_HALF)?;
        let path = cfg.out.join("zero.csv");
        io::write_polylines_csv(&path, &segs)?;
        let v = sample_grid(2, res, &lo, &hi, |x| c.pf.value(x));
        crate::gridref::NodalFields::write_raster(&cfg.out.join("v.raw"), res + 1, &v)?;
        Ok(path)
    } else {
        let mesh = marching_cubes_values(&values, res, [lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]])?;
        let path = cfg.out.join("zero.obj");
        io::write_obj(&path, &mesh)?;
        Ok(path)
    }
}

/// `render.ppm` and `iterations.ppm`.
pub fn cmd_render(cfg: &RunConfig, ckpt: &Path) -> Result<Rendering> {
    let c = load_trained(cfg, ckpt)?;
    let sdf = Signed {
        inner: &c.sdf,
        sign: sign_align(&c.sdf),
    };
    let img = render_image(&sdf, &cfg.render.camera, &cfg.render.trace)?;
    img.write_shaded(&cfg.out.join("render.ppm"))?;
    img.write_iterations(&cfg.out.join("iterations.ppm"))?;
    info!("{} of {} rays hit, mean iterations {:.2}", img.hit_count(), img.hit.len(), img.mean_iterations);
    Ok(img)
}

/// Grid reference run: rasters, images and `grid_energy.csv`.
pub fn cmd_gridref(cfg: &RunConfig) -> Result<GridRun> {
    std::fs::create_dir_all(&cfg.out)?;
    cfg.echo(&cfg.out)?;
    let (cloud, _) = load_input(cfg)?;
    let mut grid = cfg.grid.clone();
    grid.schedule = cfg.train.schedule.clone();
    let run = minimize_grid(&cloud, &grid)?;
    run.fields.write_outputs(&cfg.out)?;
    let mut log = BufWriter::new(File::create(cfg.out.join("grid_energy.csv"))?);
    writeln!(log, "iteration,energy")?;
    for (i, e) in run.energy.iter().enumerate() {
        writeln!(log, "{i},{}", io::fmt_f64(*e))?;
    }
    log.flush()?;
    Ok(run)
}
