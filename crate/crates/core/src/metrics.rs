//! Reconstruction and distance-field error metrics.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::field::{ScalarField, Signed};
use crate::geometry::{
    domain_corners, io, marching_cubes_values, marching_squares_values, narrowband_sample_fn, sample_grid,
    sample_polylines, uniform_in_domain, AnalyticShape, MeshDistance, PointCloud, PointIndex, Segment,
    TriangleMesh, DOMAIN_HALF,
};
use crate::{Error, Result};

fn non_empty(c: &PointCloud, what: &str) -> Result<()> {
    if c.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} point cloud is empty")));
    }
    Ok(())
}

/// Distance from every point of `from` to its nearest neighbour in `to`.
pub fn nearest_distances(from: &PointCloud, to: &PointCloud, brute_force: bool) -> Vec<f64> {
    let index = PointIndex::new(to);
    (0..from.len())
        .into_par_iter()
        .map(|i| {
            let p = from.point(i);
            let hit = if brute_force {
                index.brute_force_nearest(p)
            } else {
                index.nearest(p)
            };
            hit.map_or(f64::INFINITY, |h| h.1)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

pub fn chamfer(p: &PointCloud, q: &PointCloud, brute_force: bool) -> Result<f64> {
    non_empty(p, "first")?;
    non_empty(q, "second")?;
    Ok(mean(&nearest_distances(p, q, brute_force)) + mean(&nearest_distances(q, p, brute_force)))
}

pub fn hausdorff(p: &PointCloud, q: &PointCloud, brute_force: bool) -> Result<f64> {
    non_empty(p, "first")?;
    non_empty(q, "second")?;
    Ok(max(&nearest_distances(p, q, brute_force)).max(max(&nearest_distances(q, p, brute_force))))
}

/// Surface points with unit outward normals.
#[derive(Clone, Debug, Default)]
pub struct OrientedSamples {
    pub dim: usize,
    pub points: Vec<f64>,
    pub normals: Vec<f64>,
}

impl OrientedSamples {
    /// Triangle centroids and face normals.
    pub fn from_mesh(mesh: &TriangleMesh) -> Self {
        let mut s = OrientedSamples {
            dim: 3,
            ..Default::default()
        };
        for t in 0..mesh.triangles.len() {
            s.points.extend(mesh.centroid(t));
            s.normals.extend(mesh.normal(t));
        }
        s
    }

    /// Segment midpoints and right-hand normals.
    pub fn from_segments(segs: &[Segment]) -> Self {
        let mut s = OrientedSamples {
            dim: 2,
            ..Default::default()
        };
        for g in segs {
            let l = g.length();
            s.points.extend([(g.a[0] + g.b[0]) / 2.0, (g.a[1] + g.b[1]) / 2.0]);
            s.normals.extend([(g.b[1] - g.a[1]) / l, -(g.b[0] - g.a[0]) / l]);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `1 − mean n·∇φ/‖∇φ‖` over the samples; samples with a vanishing
/// gradient are skipped and counted.
pub fn normal_error(samples: &OrientedSamples, field: &dyn ScalarField) -> (f64, usize) {
    let d = samples.dim;
    let (_, g) = field.values_gradients(&samples.points);
    let mut sum = 0.0;
    let mut used = 0usize;
    for (n, g) in samples.normals.chunks_exact(d).zip(g.chunks_exact(d)) {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn >= 1e-12) {
            continue;
        }
        sum += n.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / gn;
        used += 1;
    }
    let skipped = samples.len() - used;
    if skipped > 0 {
        warn!("normal error: {skipped} samples with vanishing gradient skipped");
    }
    if used == 0 {
        return (f64::NAN, skipped);
    }
    (1.0 - sum / used as f64, skipped)
}

/// `+1` when φ is positive on average over the corners of Ω, else `−1`.
pub fn sign_align(field: &dyn ScalarField) -> f64 {
    let corners = domain_corners(field.dim());
    let m = mean(&field.values(&corners));
    if m == 0.0 {
        warn!("corner mean of φ is exactly zero; keeping the sign");
        1.0
    } else if m > 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub const BAND_WIDTH: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct BandStat {
    pub center: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldErrors {
    pub sdf_omega: f64,
    pub sdf_band: f64,
    pub eik_omega: f64,
    pub eik_band: f64,
    /// Absolute SDF error over ground-truth distance bands of the domain samples.
    pub bands: Vec<BandStat>,
}

fn rmse_and_eik(field: &dyn ScalarField, pts: &PointCloud, gt: &[f64]) -> (f64, f64, Vec<f64>) {
    let d = pts.dim;
    let (v, g) = field.values_gradients(&pts.points);
    let err: Vec<f64> = v.iter().zip(gt).map(|(a, b)| (a - b).abs()).collect();
    let rmse = (err.iter().map(|e| e * e).sum::<f64>() / err.len().max(1) as f64).sqrt();
    let eik = g
        .chunks_exact(d)
        .map(|g| (1.0 - g.iter().map(|v| v * v).sum::<f64>().sqrt()).abs())
        .sum::<f64>()
        / err.len().max(1) as f64;
    (rmse, eik, err)
}

/// RMSE of φ against the ground truth and mean eikonal defect, on the domain
/// and narrow-band samples. `gt_*` are the ground-truth distances.
pub fn field_errors(
    field: &dyn ScalarField,
    omega: &PointCloud,
    gt_omega: &[f64],
    band: &PointCloud,
    gt_band: &[f64],
) -> FieldErrors {
    let (sdf_omega, eik_omega, err) = rmse_and_eik(field, omega, gt_omega);
    let (sdf_band, eik_band, _) = if band.is_empty() {
        (f64::NAN, f64::NAN, Vec::new())
    } else {
        rmse_and_eik(field, band, gt_band)
    };
    let mut buckets: std::collections::BTreeMap<i64, (f64, f64, usize)> = Default::default();
    for (e, t) in err.iter().zip(gt_omega) {
        let b = buckets.entry((t / BAND_WIDTH).floor() as i64).or_insert((0.0, 0.0, 0));
        b.0 += e;
        b.1 = b.1.max(*e);
        b.2 += 1;
    }
    let bands = buckets
        .into_iter()
        .map(|(k, (s, m, c))| BandStat {
            center: (k as f64 + 0.5) * BAND_WIDTH,
            mean: s / c as f64,
            max: m,
            count: c,
        })
        .collect();
    FieldErrors {
        sdf_omega,
        sdf_band,
        eik_omega,
        eik_band,
        bands,
    }
}

/// What the reconstruction is compared against.
pub enum GroundTruth<'a> {
    Analytic(AnalyticShape),
    /// Closed mesh with an optional cached narrow-band cloud.
    Mesh {
        mesh: &'a TriangleMesh,
        band: Option<PointCloud>,
    },
}

impl GroundTruth<'_> {
    pub fn dim(&self) -> usize {
        match self {
            GroundTruth::Analytic(s) => s.dim(),
            GroundTruth::Mesh { .. } => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub surface_samples: usize,
    pub omega_samples: usize,
    pub band_samples: usize,
    pub band: [f64; 2],
    /// Marching resolution (cells per axis).
    pub resolution: usize,
    pub brute_force: bool,
    pub seed: u64,
}

impl EvalOptions {
    pub fn reference(dim: usize) -> Self {
        EvalOptions {
            surface_samples: 20_000,
            omega_samples: 50_000,
            band_samples: 10_000,
            band: [-0.1, 0.1],
            resolution: if dim == 2 { 256 } else { 128 },
            brute_force: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub chamfer: f64,
    pub hausdorff: f64,
    pub normal: f64,
    pub sdf_omega: f64,
    pub sdf_band: f64,
    pub eik_omega: f64,
    pub eik_band: f64,
    pub bands: Vec<BandStat>,
    pub surface_samples: usize,
    pub omega_samples: usize,
    pub band_samples: usize,
    pub normals_skipped: usize,
    pub sign_flipped: bool,
}

impl MetricReport {
    pub const HEADER: &'static str = "model,d_C,d_H,E_n,E_SDF_omega,E_SDF_band,E_eik_omega,E_eik_band,n_surface,n_omega,n_band,normals_skipped,sign_flipped";

    pub fn csv_row(&self, model: &str) -> String {
        let f = io::fmt_f64;
        format!(
            "{model},{},{},{},{},{},{},{},{},{},{},{},{}",
            f(self.chamfer),
            f(self.hausdorff),
            f(self.normal),
            f(self.sdf_omega),
            f(self.sdf_band),
            f(self.eik_omega),
            f(self.eik_band),
            self.surface_samples,
            self.omega_samples,
            self.band_samples,
            self.normals_skipped,
            self.sign_flipped
        )
    }

    pub fn write_csv(&self, path: &Path, model: &str) -> Result<()> {
        let s = format!("{}\n{}\n", Self::HEADER, self.csv_row(model));
        io::write_atomic(path, s.as_bytes())
    }

    pub fn write_bands_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("band_center,mean_error,max_error,count\n");
        for b in &self.bands {
            let _ = writeln!(s, "{},{},{},{}", io::fmt_f64(b.center), io::fmt_f64(b.mean), io::fmt_f64(b.max), b.count);
        }
        io::write_atomic(path, s.as_bytes())
    }
}

/// Zero level set of `field` sampled with `n` points, plus the oriented
/// pieces it was sampled from.
pub fn zero_level_samples(
    field: &dyn ScalarField,
    resolution: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(PointCloud, OrientedSamples)> {
    let d = field.dim();
    let lo = vec![-DOMAIN_HALF; d];
    let hi = vec![DOMAIN_HALF; d];
    let pts = crate::geometry::grid_points(d, resolution, &lo, &hi);
    let values = field.values(&pts);
    if d == 2 {
        let segs = marching_squares_values(&values, resolution, [lo[0], lo[1]], [hi[0], hi[1]])?;
        Ok((sample_polylines(&segs, n, rng), OrientedSamples::from_segments(&segs)))
    } else {
        let mesh = marching_cubes_values(&values, resolution, [lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]])?;
        let cloud = if mesh.triangles.is_empty() {
            PointCloud { dim: 3, points: Vec::new() }
        } else {
            mesh.sample_surface(n, rng)
        };
        Ok((cloud, OrientedSamples::from_mesh(&mesh)))
    }
}

/// Oriented samples of an analytic surface: surface points with the
/// normalized finite-difference gradient of its exact SDF.
fn analytic_oriented(shape: &AnalyticShape, n: usize, rng: &mut ChaCha8Rng) -> OrientedSamples {
    let c = shape.sample_surface(n, rng);
    let mut s = OrientedSamples {
        dim: c.dim,
        points: c.points.clone(),
        normals: Vec::with_capacity(c.points.len()),
    };
    for p in c.iter() {
        let g = ScalarField::gradient(shape, p);
        let l = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.normals.extend(g.iter().map(|v| v / l));
    }
    s
}

/// All metrics of `field` against `gt` after sign alignment.
pub fn evaluate(field: &dyn ScalarField, gt: &GroundTruth<'_>, opts: &EvalOptions) -> Result<MetricReport> {
    let d = field.dim();
    if gt.dim() != d {
        return Err(Error::Dimension(format!("{d}D field against {}D ground truth", gt.dim())));
    }
    let sign = sign_align(field);
    let aligned = Signed { inner: field, sign };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let (surface, oriented, gt_dist): (PointCloud, OrientedSamples, Box<dyn Fn(&[f64]) -> f64 + Sync + '_>) = match gt {
        GroundTruth::Analytic(shape) => (
            shape.sample_surface(opts.surface_samples, &mut rng),
            analytic_oriented(shape, opts.surface_samples, &mut rng),
            Box::new(move |x: &[f64]| shape.sgndist(x)),
        ),
        GroundTruth::Mesh { mesh, .. } => {
            let md = MeshDistance::new(mesh);
            (
                mesh.sample_surface(opts.surface_samples, &mut rng),
                OrientedSamples::from_mesh(mesh),
                Box::new(move |x: &[f64]| md.signed([x[0], x[1], x[2]])),
            )
        }
    };

    let (extracted, _) = zero_level_samples(&aligned, opts.resolution, opts.surface_samples, &mut rng)?;
    let (chamfer_d, hausdorff_d) = if extracted.is_empty() {
        warn!("zero level set is empty; surface distances are infinite");
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            chamfer(&surface, &extracted, opts.brute_force)?,
            hausdorff(&surface, &extracted, opts.brute_force)?,
        )
    };
    let (normal, skipped) = normal_error(&oriented, &aligned);

    let omega = PointCloud::new(d, uniform_in_domain(d, opts.omega_samples, &mut rng))?;
    let band = match gt {
        GroundTruth::Mesh { band: Some(b), .. } => b.clone(),
        _ => narrowband_sample_fn(d, opts.band, opts.band_samples, &gt_dist, &mut rng)?,
    };
    let gt_omega: Vec<f64> = omega.points.par_chunks(d).map(&gt_dist).collect();
    let gt_band: Vec<f64> = band.points.par_chunks(d).map(&gt_dist).collect();
    let fe = field_errors(&aligned, &omega, &gt_omega, &band, &gt_band);
    Ok(MetricReport {
        chamfer: chamfer_d,
        hausdorff: hausdorff_d,
        normal,
        sdf_omega: fe.sdf_omega,
        sdf_band: fe.sdf_band,
        eik_omega: fe.eik_omega,
        eik_band: fe.eik_band,
        bands: fe.bands,
        surface_samples: surface.len(),
        omega_samples: omega.len(),
        band_samples: band.len(),
        normals_skipped: skipped,
        sign_flipped: sign < 0.0,
    })
}

/// Values of `field` on the marching grid, exposed for callers that need
/// both the raster and the extraction.
pub fn raster(field: &dyn ScalarField, resolution: usize) -> Vec<f64> {
    let d = field.dim();
    let lo = vec![-DOMAIN_HALF; d];
    let hi = vec![DOMAIN_HALF; d];
    sample_grid(d, resolution, &lo, &hi, |x| field.value(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use proptest::prelude::*;

    fn cloud(dim: usize, v: Vec<f64>) -> PointCloud {
        PointCloud::new(dim, v).unwrap()
    }

    #[test]
    fn hand_examples() {
        let p = cloud(2, vec![0.0, 0.0]);
        let q = cloud(2, vec![1.0, 0.0]);
        assert_eq!(chamfer(&p, &q, false).unwrap(), 2.0);
        assert_eq!(hausdorff(&p, &q, false).unwrap(), 1.0);
        assert_eq!(chamfer(&p, &p, false).unwrap(), 0.0);
        assert!(chamfer(&p, &cloud(2, vec![]), false).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn index_equals_brute_force(
            a in prop::collection::vec(-1.0f64..1.0, 3..900),
            b in prop::collection::vec(-1.0f64..1.0, 3..900),
        ) {
            let p = cloud(3, a[..a.len() / 3 * 3].to_vec());
            let q = cloud(3, b[..b.len() / 3 * 3].to_vec());
            prop_assert_eq!(chamfer(&p, &q, false).unwrap(), chamfer(&p, &q, true).unwrap());
            prop_assert_eq!(hausdorff(&p, &q, false).unwrap(), hausdorff(&p, &q, true).unwrap());
            prop_assert_eq!(hausdorff(&p, &q, false).unwrap(), hausdorff(&q, &p, false).unwrap());
        }
    }

    #[test]
    fn normal_error_extremes() {
        let s = AnalyticShape::Sphere { radius: 0.5 };
        let mesh = s.mesh(4).unwrap();
        let o = OrientedSamples::from_mesh(&mesh);
        let (e, skipped) = normal_error(&o, &s);
        assert!(e < 1e-3 && skipped == 0, "{e}");
        let flipped = Signed { inner: &s, sign: -1.0 };
        assert!((normal_error(&o, &flipped).0 - 2.0).abs() < 1e-3);
        let flat = FnField { dim: 3, f: |_: &[f64]| 1.0 };
        assert_eq!(normal_error(&o, &flat).1, o.len());
    }

    #[test]
    fn sign_alignment() {
        let c = AnalyticShape::Circle { radius: 0.5 };
        assert_eq!(sign_align(&c), 1.0);
        let n = Signed { inner: &c, sign: -1.0 };
        assert_eq!(sign_align(&n), -1.0);
        let twice = Signed { inner: &n, sign: sign_align(&n) };
        assert_eq!(sign_align(&twice), 1.0);
    }

    #[test]
    fn field_errors_of_exact_and_offset_fields() {
        let c = AnalyticShape::Circle { radius: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let omega = cloud(2, uniform_in_domain(2, 2000, &mut rng));
        let band = narrowband_sample_fn(2, [-0.1, 0.1], 500, |x| c.sgndist(x), &mut rng).unwrap();
        let gt_o: Vec<f64> = omega.iter().map(|x| c.sgndist(x)).collect();
        let gt_b: Vec<f64> = band.iter().map(|x| c.sgndist(x)).collect();
        let e = field_errors(&c, &omega, &gt_o, &band, &gt_b);
        assert_eq!(e.sdf_omega, 0.0);
        assert_eq!(e.sdf_band, 0.0);
        assert!(e.eik_omega < 1e-6);
        let shifted = FnField { dim: 2, f: |x: &[f64]| c.sgndist(x) + 0.1 };
        let e = field_errors(&shifted, &omega, &gt_o, &band, &gt_b);
        assert!((e.sdf_omega - 0.1).abs() < 1e-12);
        assert!(e.eik_omega < 1e-6);
        assert!(e.bands.iter().all(|b| (b.mean - 0.1).abs() < 1e-12 && b.count > 0));
    }

    #[test]
    fn evaluate_analytic_against_itself() {
        let c = AnalyticShape::Circle { radius: 0.5 };
        let opts = EvalOptions {
            surface_samples: 2000,
            omega_samples: 2000,
            band_samples: 500,
            ..EvalOptions::reference(2)
        };
        let r = evaluate(&c, &GroundTruth::Analytic(c.clone()), &opts).unwrap();
        assert_eq!(r.sdf_omega, 0.0);
        assert!(r.chamfer < 0.01, "{}", r.chamfer);
        assert!(r.normal < 1e-6);
        assert!(!r.sign_flipped);
        let neg = Signed { inner: &c, sign: -1.0 };
        let r2 = evaluate(&neg, &GroundTruth::Analytic(c.clone()), &opts).unwrap();
        assert!(r2.sign_flipped);
        assert_eq!(r2.sdf_omega, 0.0);

        let dir = tempfile::tempdir().unwrap();
        r.write_csv(&dir.path().join("m.csv"), "circle").unwrap();
        r.write_bands_csv(&dir.path().join("b.csv")).unwrap();
    }

    #[test]
    fn evaluate_against_mesh() {
        let s = AnalyticShape::Sphere { radius: 0.5 };
        let mesh = s.mesh(3).unwrap();
        let opts = EvalOptions {
            surface_samples: 2000,
            omega_samples: 500,
            band_samples: 200,
            resolution: 48,
            ..EvalOptions::reference(3)
        };
        let r = evaluate(&s, &GroundTruth::Mesh { mesh: &mesh, band: None }, &opts).unwrap();
        assert!(r.chamfer < 0.06 && r.sdf_omega < 0.01 && r.normal < 1e-2, "{r:?}");
    }
}
