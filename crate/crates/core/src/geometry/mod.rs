//! Shapes, point clouds, meshes and level-set extraction.

mod index;
pub mod io;
mod marching;
mod meshdist;
mod recovery;
mod shapes;

pub use marching::{
    grid_points, marching_cubes, marching_cubes_values, marching_squares, marching_squares_values,
    polyline_length, sample_grid, sample_polylines, Segment,
};
pub use meshdist::{
    closest_point_on_triangle, mesh_signed_distance, narrowband_cached, narrowband_sample,
    narrowband_sample_fn, point_triangle_distance, winding_number, MeshDistance,
};
pub use recovery::{mollifier_constant, profile, profile_slope, Recovery, RecoveryParams};
pub use index::PointIndex;
pub use shapes::AnalyticShape;

use rand::Rng;

use crate::{Error, Result};

/// Half side length of the computational domain Ω = [−1.2, 1.2]^d.
pub const DOMAIN_HALF: f64 = 1.2;

/// Lebesgue measure of Ω.
pub fn domain_volume(dim: usize) -> f64 {
    (2.0 * DOMAIN_HALF).powi(dim as i32)
}

/// `n` uniform points in Ω, row-major.
pub fn uniform_in_domain(dim: usize, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n * dim)
        .map(|_| rng.gen_range(-DOMAIN_HALF..DOMAIN_HALF))
        .collect()
}

/// The 2^d corners of Ω, row-major.
pub fn domain_corners(dim: usize) -> Vec<f64> {
    (0..1usize << dim)
        .flat_map(|mask| {
            (0..dim).map(move |i| if mask >> i & 1 == 1 { DOMAIN_HALF } else { -DOMAIN_HALF })
        })
        .collect()
}

/// Points in `dim` dimensions, stored row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) || points.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} coordinates do not form {dim}-dimensional points",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(PointCloud { dim, points })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.points.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim.max(1))
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }
}

/// Triangle mesh with outward-oriented faces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl TriangleMesh {
    /// Build a mesh, dropping triangles with zero area and checking indices.
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::BadFormat(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let mut mesh = TriangleMesh {
            vertices,
            triangles,
        };
        mesh.triangles.retain(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i]);
            norm(cross(sub(b, a), sub(c, a))) > 0.0
        });
        Ok(mesh)
    }

    pub fn corners(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        std::array::from_fn(|i| (a[i] + b[i] + c[i]) / 3.0)
    }

    pub fn normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let n = cross(sub(b, a), sub(c, a));
        let l = norm(n);
        n.map(|v| v / l)
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut edges = std::collections::HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    /// Area-weighted uniform samples on the surface.
    pub fn sample_surface(&self, n: usize, rng: &mut impl Rng) -> PointCloud {
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for t in 0..self.triangles.len() {
            acc += self.area(t);
            cdf.push(acc);
        }
        let mut pts = Vec::with_capacity(3 * n);
        for _ in 0..n {
            let u = rng.gen_range(0.0..acc);
            let t = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let [a, b, c] = self.corners(t);
            let (mut r1, mut r2): (f64, f64) = (rng.gen(), rng.gen());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            for i in 0..3 {
                pts.push(a[i] + r1 * (b[i] - a[i]) + r2 * (c[i] - a[i]));
            }
        }
        PointCloud { dim: 3, points: pts }
    }
}

/// Uniform scaling plus translation, `y = scale · (x − center)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Similarity {
    pub fn identity(dim: usize) -> Self {
        Similarity {
            center: vec![0.0; dim],
            scale: 1.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(v, c)| self.scale * (v - c))
            .collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.center)
            .map(|(v, c)| v / self.scale + c)
            .collect()
    }
}

fn fit_transform(lo: &[f64], hi: &[f64]) -> Result<Similarity> {
    let extent = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| b - a)
        .fold(0.0f64, f64::max);
    if !(extent > 0.0) {
        return Err(Error::Degenerate("geometry has zero extent".into()));
    }
    let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let half = 0.5 * extent;
    // keep already-normalized inputs untouched
    let centered = center.iter().all(|c| c.abs() <= 1e-12 * half.max(1.0));
    if centered && (half - 1.0).abs() <= 1e-12 {
        return Ok(Similarity::identity(lo.len()));
    }
    Ok(Similarity {
        center,
        scale: 1.0 / half,
    })
}

/// Center a cloud at the origin and scale it so its bounding box fits [−1, 1]^d.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<(PointCloud, Similarity)> {
    if cloud.is_empty() {
        return Err(Error::Degenerate("empty point cloud".into()));
    }
    let (lo, hi) = cloud.bounds();
    let tf = fit_transform(&lo, &hi)?;
    let points = cloud.iter().flat_map(|p| tf.apply(p)).collect();
    Ok((
        PointCloud {
            dim: cloud.dim,
            points,
        },
        tf,
    ))
}

pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, Similarity)> {
    if mesh.vertices.is_empty() {
        return Err(Error::Degenerate("empty mesh".into()));
    }
    let flat: Vec<f64> = mesh.vertices.iter().flatten().copied().collect();
    let (lo, hi) = PointCloud { dim: 3, points: flat }.bounds();
    let tf = fit_transform(&lo, &hi)?;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            let w = tf.apply(v);
            [w[0], w[1], w[2]]
        })
        .collect();
    Ok((
        TriangleMesh {
            vertices,
            triangles: mesh.triangles.clone(),
        },
        tf,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_circle(n: usize) -> PointCloud {
        let pts = (0..n)
            .flat_map(|k| {
                let t = k as f64 * std::f64::consts::TAU / n as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        PointCloud::new(2, pts).unwrap()
    }

    #[test]
    fn normalized_circle_is_identity() {
        let (out, tf) = normalize_cloud(&unit_circle(64)).unwrap();
        assert_eq!(tf, Similarity::identity(2));
        assert_eq!(out, unit_circle(64));
    }

    #[test]
    fn scale_and_translation_recovered() {
        let c = unit_circle(64);
        let scaled = PointCloud::new(2, c.points.iter().map(|v| 10.0 * v).collect()).unwrap();
        let (_, tf) = normalize_cloud(&scaled).unwrap();
        assert!((tf.scale - 0.1).abs() < 1e-12);
        let moved = PointCloud::new(
            2,
            c.iter().flat_map(|p| [p[0] + 3.0, p[1] + 3.0]).collect(),
        )
        .unwrap();
        let (out, tf) = normalize_cloud(&moved).unwrap();
        assert!((tf.center[0] - 3.0).abs() < 1e-12 && (tf.center[1] - 3.0).abs() < 1e-12);
        assert!((tf.scale - 1.0).abs() < 1e-12);
        for (a, b) in out.points.iter().zip(&c.points) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = tf.invert(out.point(5));
        assert!((back[0] - moved.point(5)[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_extent_is_error() {
        let c = PointCloud::new(2, vec![0.3, 0.3, 0.3, 0.3]).unwrap();
        assert!(matches!(normalize_cloud(&c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mesh_drops_degenerate_triangles() {
        let m = TriangleMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert!(TriangleMesh::new(vec![[0.0; 3]], vec![[0, 0, 1]]).is_err());
    }

    #[test]
    fn corners_and_uniform_points() {
        assert_eq!(domain_corners(2).len(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = uniform_in_domain(3, 100, &mut rng);
        assert!(p.iter().all(|v| v.abs() <= DOMAIN_HALF));
        assert!((domain_volume(2) - 5.76).abs() < 1e-12);
    }
}
