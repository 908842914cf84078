//! Sphere tracing of 3D signed distance fields.

use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::field::ScalarField;
use crate::geometry::{io, DOMAIN_HALF};
use crate::{Error, Result};

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn unit(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}
fn axpy(o: V3, t: f64, d: V3) -> V3 {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub eye: V3,
    pub look_at: V3,
    pub up: V3,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(eye: V3, look_at: V3, up: V3, fov_y: f64, width: usize, height: usize) -> Result<Self> {
        let c = Camera {
            eye,
            look_at,
            up,
            fov_y,
            width,
            height,
        };
        let f = sub(look_at, eye);
        if dot(f, f) == 0.0 {
            return Err(Error::InvalidArgument("camera eye equals look-at".into()));
        }
        let s = cross(unit(f), up);
        if dot(s, s).sqrt() < 1e-9 * dot(up, up).sqrt().max(1e-300) || dot(up, up) == 0.0 {
            return Err(Error::InvalidArgument("camera up is parallel to the view direction".into()));
        }
        if !(fov_y > 0.0 && fov_y < 180.0) || width == 0 || height == 0 {
            return Err(Error::InvalidArgument("bad field of view or image size".into()));
        }
        Ok(c)
    }

    /// Three-quarter view of Ω.
    pub fn default_view(width: usize, height: usize) -> Self {
        Camera::new([2.2, 1.6, 2.8], [0.0; 3], [0.0, 1.0, 0.0], 40.0, width, height).unwrap()
    }

    fn frame(&self) -> (V3, V3, V3) {
        let f = unit(sub(self.look_at, self.eye));
        let r = unit(cross(f, self.up));
        (f, r, cross(r, f))
    }

    /// Unit ray direction through the centre of pixel `(col, row)`, row 0 on top.
    pub fn ray(&self, col: usize, row: usize) -> V3 {
        let (f, r, u) = self.frame();
        let th = (self.fov_y.to_radians() / 2.0).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = ((col as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * th * aspect;
        let sy = (1.0 - (row as f64 + 0.5) / self.height as f64 * 2.0) * th;
        unit([
            f[0] + sx * r[0] + sy * u[0],
            f[1] + sx * r[1] + sy * u[1],
            f[2] + sx * r[2] + sy * u[2],
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub step_scale: f64,
}

impl TraceOptions {
    /// For trained, slightly non-exact fields.
    pub fn network() -> Self {
        TraceOptions {
            tolerance: 1e-4,
            max_iter: 200,
            step_scale: 0.9,
        }
    }

    pub fn exact() -> Self {
        TraceOptions {
            step_scale: 1.0,
            ..Self::network()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MissReason {
    LeftDomain,
    IterationCap,
    /// The march started with φ < 0, i.e. inside the shape or a flipped sign.
    StartedInside,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceResult {
    pub hit: bool,
    pub point: V3,
    pub iterations: usize,
    pub travel: f64,
    pub miss: Option<MissReason>,
}

/// Parameter interval of the ray inside Ω, if any.
pub fn domain_interval(o: V3, d: V3) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k].abs() > DOMAIN_HALF {
                return None;
            }
            continue;
        }
        let a = (-DOMAIN_HALF - o[k]) / d[k];
        let b = (DOMAIN_HALF - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t1 >= t0.max(0.0)).then_some((t0.max(0.0), t1))
}

/// March from the first point of the ray inside Ω.
pub fn sphere_trace(field: &dyn ScalarField, origin: V3, dir: V3, opts: &TraceOptions) -> TraceResult {
    let miss = |t: f64, iterations, why| TraceResult {
        hit: false,
        point: axpy(origin, t, dir),
        iterations,
        travel: t,
        miss: Some(why),
    };
    let Some((mut t, t_exit)) = domain_interval(origin, dir) else {
        return miss(f64::INFINITY, 0, MissReason::LeftDomain);
    };
    for i in 0..opts.max_iter {
        let p = axpy(origin, t, dir);
        let f = field.value(&p);
        if f.abs() < opts.tolerance {
            return TraceResult {
                hit: true,
                point: p,
                iterations: i,
                travel: t,
                miss: None,
            };
        }
        if f < 0.0 && i == 0 {
            return miss(t, i, MissReason::StartedInside);
        }
        t += opts.step_scale * f;
        if t > t_exit {
            return miss(t, i + 1, MissReason::LeftDomain);
        }
    }
    miss(t, opts.max_iter, MissReason::IterationCap)
}

#[derive(Clone, Debug)]
pub struct Rendering {
    pub width: usize,
    pub height: usize,
    /// Row-major gray levels.
    pub shade: Vec<u8>,
    pub hit: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Mean iteration count over hitting rays (NaN when nothing is hit).
    pub mean_iterations: f64,
}

impl Rendering {
    pub fn hit_count(&self) -> usize {
        self.hit.iter().filter(|h| **h).count()
    }

    pub fn write_shaded(&self, path: &Path) -> Result<()> {
        let rgb: Vec<u8> = self.shade.iter().flat_map(|&g| [g, g, g]).collect();
        write_ppm(path, self.width, self.height, &rgb)
    }

    /// Iteration counts of hitting rays mapped through a fixed colour ramp,
    /// normalized by the largest count; misses are black.
    pub fn write_iterations(&self, path: &Path) -> Result<()> {
        let top = self
            .iterations
            .iter()
            .zip(&self.hit)
            .filter(|(_, h)| **h)
            .map(|(i, _)| *i)
            .max()
            .unwrap_or(1)
            .max(1);
        let rgb: Vec<u8> = self
            .iterations
            .iter()
            .zip(&self.hit)
            .flat_map(|(&i, &h)| if h { ramp(i as f64 / top as f64) } else { [0, 0, 0] })
            .collect();
        write_ppm(path, self.width, self.height, &rgb)
    }
}

/// Dark blue through teal and green to yellow.
pub fn ramp(s: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let x = s.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let w = x - k as f64;
    let mut c = [0u8; 3];
    for j in 0..3 {
        c[j] = (STOPS[k][j] * (1.0 - w) + STOPS[k + 1][j] * w).round() as u8;
    }
    c
}

/// Shaded image and per-pixel iteration counts. Light comes from the camera.
pub fn render_image(field: &dyn ScalarField, camera: &Camera, opts: &TraceOptions) -> Result<Rendering> {
    if field.dim() != 3 {
        return Err(Error::Dimension(format!("cannot render a {}D field", field.dim())));
    }
    let (w, h) = (camera.width, camera.height);
    let light = unit(sub(camera.eye, camera.look_at));
    let pixels: Vec<(u8, bool, usize, Option<MissReason>)> = (0..w * h)
        .into_par_iter()
        .map(|k| {
            let d = camera.ray(k % w, k / w);
            let r = sphere_trace(field, camera.eye, d, opts);
            if !r.hit {
                return (0, false, r.iterations, r.miss);
            }
            let g = field.gradient(&r.point);
            let n = unit([g[0], g[1], g[2]]);
            let lambert = dot(n, light).max(0.0);
            let gray = (255.0 * (0.1 + 0.9 * lambert)).round().min(255.0) as u8;
            (gray, true, r.iterations, None)
        })
        .collect();
    let inside = pixels.iter().filter(|p| p.3 == Some(MissReason::StartedInside)).count();
    if inside > 0 {
        warn!("{inside} rays started with negative φ; is the field sign-aligned?");
    }
    let hits: Vec<usize> = pixels.iter().filter(|p| p.1).map(|p| p.2).collect();
    let mean = if hits.is_empty() {
        f64::NAN
    } else {
        hits.iter().sum::<usize>() as f64 / hits.len() as f64
    };
    Ok(Rendering {
        width: w,
        height: h,
        shade: pixels.iter().map(|p| p.0).collect(),
        hit: pixels.iter().map(|p| p.1).collect(),
        iterations: pixels.iter().map(|p| p.2).collect(),
        mean_iterations: mean,
    })
}

/// Binary PPM (P6).
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != 3 * width * height {
        return Err(Error::Dimension(format!("{} bytes for a {width}x{height} image", rgb.len())));
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    io::write_atomic(path, &bytes)
}

/// Binary PGM (P5).
pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    if gray.len() != width * height {
        return Err(Error::Dimension(format!("{} bytes for a {width}x{height} image", gray.len())));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(gray);
    io::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, Signed};
    use crate::geometry::AnalyticShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SPHERE: AnalyticShape = AnalyticShape::Sphere { radius: 0.5 };

    #[test]
    fn central_ray_hits_in_one_step() {
        let eye = [0.0, 0.0, 3.0];
        let r = sphere_trace(&SPHERE, eye, [0.0, 0.0, -1.0], &TraceOptions::exact());
        assert!(r.hit);
        assert!((r.travel - 2.5).abs() < 1e-4);
        assert!(r.iterations <= 3);
    }

    #[test]
    fn misses() {
        let r = sphere_trace(&SPHERE, [0.0, 0.8, 3.0], [0.0, 0.0, -1.0], &TraceOptions::exact());
        assert!(!r.hit);
        assert_eq!(r.miss, Some(MissReason::LeftDomain));
        assert!(r.travel >= 3.0 + DOMAIN_HALF);
        let neg = Signed { inner: &SPHERE, sign: -1.0 };
        let r = sphere_trace(&neg, [0.0, 0.0, 3.0], [0.0, 0.0, -1.0], &TraceOptions::exact());
        assert_eq!(r.miss, Some(MissReason::StartedInside));
        let r = sphere_trace(&SPHERE, [0.0, 0.0, 3.0], [0.0, 0.0, 1.0], &TraceOptions::exact());
        assert!(!r.hit && r.iterations == 0);
    }

    #[test]
    fn no_overshoot_and_monotone_in_step_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eye = [0.0, 0.0, 3.0];
        for _ in 0..100 {
            let d = unit([rng.gen_range(-0.11..0.11), rng.gen_range(-0.11..0.11), -1.0]);
            let mut last = 0;
            for s in [1.0, 0.9, 0.7, 0.5] {
                let opts = TraceOptions { step_scale: s, ..TraceOptions::exact() };
                let r = sphere_trace(&SPHERE, eye, d, &opts);
                assert!(r.hit);
                assert!(SPHERE.sgndist(&r.point) > -opts.tolerance);
                assert!(r.iterations >= last, "{s} {} {last}", r.iterations);
                last = r.iterations;
            }
        }
    }

    #[test]
    fn silhouette_matches_projection() {
        let n = 256;
        let cam = Camera::new([0.0, 0.0, 3.0], [0.0; 3], [0.0, 1.0, 0.0], 30.0, n, n).unwrap();
        let img = render_image(&SPHERE, &cam, &TraceOptions::exact()).unwrap();
        // Angular radius asin(r/D) projected onto the image plane.
        let rad = (0.5f64 / 3.0).asin().tan() / (15f64.to_radians().tan()) * n as f64 / 2.0;
        for row in 0..n {
            for col in 0..n {
                let dx = col as f64 + 0.5 - n as f64 / 2.0;
                let dy = row as f64 + 0.5 - n as f64 / 2.0;
                let r = (dx * dx + dy * dy).sqrt();
                if r < rad - 1.0 {
                    assert!(img.hit[row * n + col], "{row} {col}");
                } else if r > rad + 1.0 {
                    assert!(!img.hit[row * n + col], "{row} {col}");
                }
            }
        }
        assert!(img.mean_iterations.is_finite());
        let dir = tempfile::tempdir().unwrap();
        img.write_shaded(&dir.path().join("a.ppm")).unwrap();
        img.write_iterations(&dir.path().join("b.ppm")).unwrap();
        let bytes = std::fs::read(dir.path().join("a.ppm")).unwrap();
        assert!(bytes.starts_with(b"P6\n256 256\n255\n"));
        assert_eq!(bytes.len(), 15 + 3 * n * n);
    }

    #[test]
    fn empty_field_renders_nothing() {
        let far = FnField { dim: 3, f: |_: &[f64]| 1.0 };
        let img = render_image(&far, &Camera::default_view(32, 24), &TraceOptions::exact()).unwrap();
        assert_eq!(img.hit_count(), 0);
        assert!(img.mean_iterations.is_nan());
    }

    #[test]
    fn degenerate_cameras() {
        assert!(Camera::new([1.0; 3], [1.0; 3], [0.0, 1.0, 0.0], 40.0, 8, 8).is_err());
        assert!(Camera::new([0.0, 2.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0], 40.0, 8, 8).is_err());
    }
}
