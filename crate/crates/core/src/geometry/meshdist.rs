//! Exact point–mesh distance, generalized winding number and narrow-band
//! sampling.

use std::f64::consts::PI;
use std::path::Path;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cross, dot, io, norm, sub, uniform_in_domain, PointCloud, TriangleMesh};
use crate::{Error, Result};

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let lerp = |o: [f64; 3], d: [f64; 3], t: f64| -> [f64; 3] { std::array::from_fn(|k| o[k] + t * d[k]) };
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return lerp(a, ab, d1 / (d1 - d3));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return lerp(a, ac, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return lerp(b, sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    std::array::from_fn(|k| a[k] + ab[k] * v + ac[k] * w)
}

pub fn point_triangle_distance(p: [f64; 3], t: [[f64; 3]; 3]) -> f64 {
    norm(sub(p, closest_point_on_triangle(p, t[0], t[1], t[2])))
}

/// Generalized winding number: signed solid angle of all triangles over 4π.
pub fn winding_number(mesh: &TriangleMesh, p: [f64; 3]) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t).map(|v| sub(v, p));
        let (la, lb, lc) = (norm(a), norm(b), norm(c));
        let num = dot(a, cross(b, c));
        let den = la * lb * lc + dot(a, b) * lc + dot(b, c) * la + dot(c, a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * PI)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: [f64::INFINITY; 3],
            hi: [f64::NEG_INFINITY; 3],
        }
    }
    fn grow(&mut self, p: [f64; 3]) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(p[k]);
            self.hi[k] = self.hi[k].max(p[k]);
        }
    }
    fn dist2(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|k| {
                let d = (self.lo[k] - p[k]).max(p[k] - self.hi[k]).max(0.0);
                d * d
            })
            .sum()
    }
}

enum Node {
    Leaf { bounds: Aabb, tris: Vec<usize> },
    Inner { bounds: Aabb, children: Box<[Node; 2]> },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 8;

/// Signed distance to a closed mesh. The bounding-volume hierarchy only
/// prunes triangles that cannot be nearest, so results are bit-identical to
/// the brute-force scan.
pub struct MeshDistance<'m> {
    mesh: &'m TriangleMesh,
    root: Option<Node>,
    closed: bool,
}

impl<'m> MeshDistance<'m> {
    pub fn new(mesh: &'m TriangleMesh) -> Self {
        let closed = mesh.is_closed();
        if !closed {
            warn!("mesh is not closed; inside/outside signs are best effort");
        }
        let tris: Vec<usize> = (0..mesh.triangles.len()).collect();
        let root = (!tris.is_empty()).then(|| build(mesh, tris));
        MeshDistance { mesh, root, closed }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn unsigned(&self, p: [f64; 3]) -> f64 {
        let Some(root) = &self.root else {
            return f64::INFINITY;
        };
        let mut best = f64::INFINITY;
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if node.bounds().dist2(p) > best * best {
                continue;
            }
            match node {
                Node::Leaf { tris, .. } => {
                    for &t in tris {
                        best = best.min(point_triangle_distance(p, self.mesh.corners(t)));
                    }
                }
                Node::Inner { children, .. } => {
                    let [l, r] = &**children;
                    // visit the nearer child first
                    if l.bounds().dist2(p) < r.bounds().dist2(p) {
                        stack.extend([r, l]);
                    } else {
                        stack.extend([l, r]);
                    }
                }
            }
        }
        best
    }

    pub fn brute_force_unsigned(&self, p: [f64; 3]) -> f64 {
        (0..self.mesh.triangles.len())
            .map(|t| point_triangle_distance(p, self.mesh.corners(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Negative iff the winding number exceeds one half.
    pub fn signed(&self, p: [f64; 3]) -> f64 {
        let d = self.unsigned(p);
        if winding_number(self.mesh, p) > 0.5 {
            -d
        } else {
            d
        }
    }
}

fn build(mesh: &TriangleMesh, tris: Vec<usize>) -> Node {
    let mut bounds = Aabb::empty();
    let mut cbox = Aabb::empty();
    for &t in &tris {
        for v in mesh.corners(t) {
            bounds.grow(v);
        }
        cbox.grow(mesh.centroid(t));
    }
    if tris.len() <= LEAF_SIZE {
        return Node::Leaf { bounds, tris };
    }
    let axis = (0..3)
        .max_by(|&a, &b| (cbox.hi[a] - cbox.lo[a]).total_cmp(&(cbox.hi[b] - cbox.lo[b])))
        .unwrap();
    let mut tris = tris;
    tris.sort_by(|&a, &b| mesh.centroid(a)[axis].total_cmp(&mesh.centroid(b)[axis]));
    let right = tris.split_off(tris.len() / 2);
    Node::Inner {
        bounds,
        children: Box::new([build(mesh, tris), build(mesh, right)]),
    }
}

/// One-off signed distance query (builds the index each call).
pub fn mesh_signed_distance(mesh: &TriangleMesh, x: [f64; 3]) -> f64 {
    MeshDistance::new(mesh).signed(x)
}

const MIN_ACCEPTANCE: f64 = 1e-5;

/// Rejection-sample `n` points uniform in Ω with `dist(x) ∈ band`.
pub fn narrowband_sample_fn(
    dim: usize,
    band: [f64; 2],
    n: usize,
    dist: impl Fn(&[f64]) -> f64,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    if band[0] >= band[1] {
        return Err(Error::InvalidArgument(format!("empty band {band:?}")));
    }
    let mut points = Vec::with_capacity(n * dim);
    let mut tried = 0usize;
    let chunk = 4096;
    while points.len() < n * dim {
        let cand = uniform_in_domain(dim, chunk, rng);
        for x in cand.chunks_exact(dim) {
            tried += 1;
            let d = dist(x);
            if d >= band[0] && d <= band[1] && points.len() < n * dim {
                points.extend_from_slice(x);
            }
        }
        let accepted = points.len() / dim;
        if tried >= 1_000_000 && (accepted as f64) < MIN_ACCEPTANCE * tried as f64 {
            return Err(Error::Degenerate(format!(
                "narrow-band acceptance {accepted}/{tried} is below {MIN_ACCEPTANCE}"
            )));
        }
    }
    info!(
        "narrow band: {n} points accepted out of {tried} ({:.3e})",
        n as f64 / tried.max(1) as f64
    );
    PointCloud::new(dim, points)
}

pub fn narrowband_sample(
    mesh: &TriangleMesh,
    band: [f64; 2],
    n: usize,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    let md = MeshDistance::new(mesh);
    narrowband_sample_fn(3, band, n, |x| md.signed([x[0], x[1], x[2]]), rng)
}

/// Narrow-band points loaded from `path` when present, otherwise sampled
/// once with `seed` and written there.
pub fn narrowband_cached(
    path: &Path,
    mesh: &TriangleMesh,
    band: [f64; 2],
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    if path.exists() {
        let cloud = io::read_cloud(path)?;
        if cloud.len() == n && cloud.dim == 3 {
            return Ok(cloud);
        }
        warn!("{} holds {} points, expected {n}; resampling", path.display(), cloud.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = narrowband_sample(mesh, band, n, &mut rng)?;
    io::write_cloud(path, &cloud)?;
    Ok(cloud)
}
