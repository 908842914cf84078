//! Shapes with closed-form signed distance and medial axis.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{closest_point_on_triangle, norm, sub, PointCloud, TriangleMesh};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticShape {
    Circle { radius: f64 },
    Sphere { radius: f64 },
    /// Axis-aligned square with the given half side.
    Square { half: f64 },
    /// Axis-aligned box with half extents.
    Box { half: [f64; 3] },
    /// Torus around the z axis whose cross section is a rectangle of half
    /// width `half_width` (radial) and half height `half_height`.
    RectTorus {
        major: f64,
        half_width: f64,
        half_height: f64,
    },
}

impl AnalyticShape {
    pub const NAMES: [&'static str; 5] = ["circle", "sphere", "square", "box", "rect-torus"];

    /// Default instance of a named shape; all fit inside [−1, 1]^d.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "circle" => AnalyticShape::Circle { radius: 0.5 },
            "sphere" => AnalyticShape::Sphere { radius: 0.5 },
            "square" => AnalyticShape::Square { half: 0.5 },
            "box" => AnalyticShape::Box {
                half: [0.6, 0.45, 0.3],
            },
            "rect-torus" => AnalyticShape::RectTorus {
                major: 0.6,
                half_width: 0.25,
                half_height: 0.2,
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown shape `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnalyticShape::Circle { .. } => "circle",
            AnalyticShape::Sphere { .. } => "sphere",
            AnalyticShape::Square { .. } => "square",
            AnalyticShape::Box { .. } => "box",
            AnalyticShape::RectTorus { .. } => "rect-torus",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnalyticShape::Circle { .. } | AnalyticShape::Square { .. } => 2,
            _ => 3,
        }
    }

    /// Exact signed distance, negative inside.
    pub fn sgndist(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticShape::Circle { radius } | AnalyticShape::Sphere { radius } => {
                x.iter().map(|v| v * v).sum::<f64>().sqrt() - radius
            }
            AnalyticShape::Square { half } => box_sdf(&[x[0], x[1]], &[*half, *half]),
            AnalyticShape::Box { half } => box_sdf(x, half),
            AnalyticShape::RectTorus {
                major,
                half_width,
                half_height,
            } => {
                let rho = x[0].hypot(x[1]);
                box_sdf(&[rho - major, x[2]], &[*half_width, *half_height])
            }
        }
    }

    /// Distance to the medial axis (the jump set of ∇sgndist).
    pub fn medial_distance(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticShape::Circle { .. } | AnalyticShape::Sphere { .. } => {
                x.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            AnalyticShape::Square { half } => rect_medial_distance(x[0], x[1], *half, *half),
            AnalyticShape::Box { half } => box_medial_distance(x, half),
            AnalyticShape::RectTorus {
                major,
                half_width,
                half_height,
            } => {
                let rho = x[0].hypot(x[1]);
                rect_medial_distance(rho - major, x[2], *half_width, *half_height).min(rho)
            }
        }
    }

    /// Total surface measure (perimeter in 2D).
    pub fn surface_measure(&self) -> f64 {
        match *self {
            AnalyticShape::Circle { radius } => TAU * radius,
            AnalyticShape::Sphere { radius } => 4.0 * PI * radius * radius,
            AnalyticShape::Square { half } => 8.0 * half,
            AnalyticShape::Box { half: [a, b, c] } => 8.0 * (a * b + b * c + a * c),
            AnalyticShape::RectTorus {
                major,
                half_width: a,
                half_height: b,
            } => {
                let (ri, ro) = (major - a, major + a);
                TAU * 2.0 * b * (ri + ro) + 2.0 * PI * (ro * ro - ri * ri)
            }
        }
    }

    /// `n` points uniformly distributed on the surface.
    pub fn sample_surface(&self, n: usize, rng: &mut impl Rng) -> PointCloud {
        let dim = self.dim();
        let mut pts = Vec::with_capacity(n * dim);
        for _ in 0..n {
            match *self {
                AnalyticShape::Circle { radius } => {
                    let t = rng.gen_range(0.0..TAU);
                    pts.extend([radius * t.cos(), radius * t.sin()]);
                }
                AnalyticShape::Sphere { radius } => loop {
                    let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
                    let l = norm(g);
                    if l > 1e-12 {
                        pts.extend(g.map(|v| radius * v / l));
                        break;
                    }
                },
                AnalyticShape::Square { half } => {
                    let s = rng.gen_range(-half..half);
                    let side = if rng.gen_bool(0.5) { half } else { -half };
                    if rng.gen_bool(0.5) {
                        pts.extend([side, s]);
                    } else {
                        pts.extend([s, side]);
                    }
                }
                AnalyticShape::Box { half } => {
                    let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                    let u = rng.gen_range(0.0..areas.iter().sum::<f64>());
                    let axis = if u < areas[0] {
                        0
                    } else if u < areas[0] + areas[1] {
                        1
                    } else {
                        2
                    };
                    let mut p: [f64; 3] = std::array::from_fn(|i| rng.gen_range(-half[i]..half[i]));
                    p[axis] = if rng.gen_bool(0.5) { half[axis] } else { -half[axis] };
                    pts.extend(p);
                }
                AnalyticShape::RectTorus {
                    major,
                    half_width: a,
                    half_height: b,
                } => {
                    let (ri, ro) = (major - a, major + a);
                    let outer = TAU * ro * 2.0 * b;
                    let inner = TAU * ri * 2.0 * b;
                    let cap = PI * (ro * ro - ri * ri);
                    let u = rng.gen_range(0.0..outer + inner + 2.0 * cap);
                    let t = rng.gen_range(0.0..TAU);
                    let (rho, z) = if u < outer {
                        (ro, rng.gen_range(-b..b))
                    } else if u < outer + inner {
                        (ri, rng.gen_range(-b..b))
                    } else {
                        let r = rng.gen_range(ri * ri..ro * ro).sqrt();
                        (r, if u < outer + inner + cap { b } else { -b })
                    };
                    pts.extend([rho * t.cos(), rho * t.sin(), z]);
                }
            }
        }
        PointCloud { dim, points: pts }
    }

    /// Closed, outward-oriented triangle mesh of a 3D shape. `detail`
    /// controls the subdivision level (sphere) or angular resolution (torus).
    pub fn mesh(&self, detail: usize) -> Result<TriangleMesh> {
        match *self {
            AnalyticShape::Sphere { radius } => Ok(icosphere(radius, detail)),
            AnalyticShape::Box { half } => Ok(box_mesh(half)),
            AnalyticShape::RectTorus {
                major,
                half_width,
                half_height,
            } => Ok(rect_torus_mesh(major, half_width, half_height, detail.max(8))),
            _ => Err(Error::InvalidArgument(format!("{} has no triangle mesh", self.name()))),
        }
    }
}

/// Exact signed distance to an origin-centred box with half extents `half`.
fn box_sdf(x: &[f64], half: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for (v, h) in x.iter().zip(half) {
        let q = v.abs() - h;
        outside += q.max(0.0).powi(2);
        inside = inside.max(q);
    }
    outside.sqrt() + inside.min(0.0)
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// Distance to the medial axis of the rectangle `[−hx, hx] × [−hy, hy]`:
/// a central segment plus four segments to the corners.
fn rect_medial_distance(x: f64, y: f64, hx: f64, hy: f64) -> f64 {
    let p = [x.abs(), y.abs()];
    let (e, a, b) = if hx >= hy {
        let e = hx - hy;
        ([e, 0.0], [0.0, 0.0], [hx, hy])
    } else {
        let e = hy - hx;
        ([0.0, e], [0.0, 0.0], [hx, hy])
    };
    segment_distance(p, a, e).min(segment_distance(p, e, b))
}

/// Distance to the medial axis of an origin-centred box, assembled from the
/// convex polygons `{d_f = d_g ≤ d_k ∀k}` for every pair of faces `f, g`.
fn box_medial_distance(x: &[f64], half: &[f64; 3]) -> f64 {
    let tris = box_medial_triangles(*half);
    let p = [x[0], x[1], x[2]];
    tris.iter()
        .map(|t| norm(sub(p, closest_point_on_triangle(p, t[0], t[1], t[2]))))
        .fold(f64::INFINITY, f64::min)
}

/// Face distance `d_f(x) = h_axis − s·x_axis` as `(normal, offset)` with
/// `d_f(x) = offset − normal·x`.
fn face_planes(half: [f64; 3]) -> Vec<([f64; 3], f64)> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for s in [1.0, -1.0] {
            let mut n = [0.0; 3];
            n[axis] = s;
            out.push((n, half[axis]));
        }
    }
    out
}

/// Clip a convex polygon to `{x : n·x ≤ c}`.
fn clip(poly: &[[f64; 3]], n: [f64; 3], c: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let dot = |a: [f64; 3]| n[0] * a[0] + n[1] * a[1] + n[2] * a[2] - c;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (da, db) = (dot(a), dot(b));
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            out.push(std::array::from_fn(|k| a[k] + t * (b[k] - a[k])));
        }
    }
    out
}

fn box_medial_triangles(half: [f64; 3]) -> Vec<[[f64; 3]; 3]> {
    let faces = face_planes(half);
    let mut tris = Vec::new();
    for f in 0..faces.len() {
        for g in f + 1..faces.len() {
            // plane d_f = d_g  ⇔  (n_g − n_f)·x = c_g − c_f
            let (nf, cf) = faces[f];
            let (ng, cg) = faces[g];
            let n = [ng[0] - nf[0], ng[1] - nf[1], ng[2] - nf[2]];
            let c = cg - cf;
            let ln = norm(n);
            if ln == 0.0 {
                continue;
            }
            let unit = n.map(|v| v / ln);
            let origin = unit.map(|v| v * c / ln);
            let helper = if unit[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let u = {
                let t = super::cross(unit, helper);
                let l = norm(t);
                t.map(|v| v / l)
            };
            let v = super::cross(unit, u);
            let big = 10.0;
            let mut poly: Vec<[f64; 3]> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .iter()
                .map(|&(s, t)| std::array::from_fn(|k| origin[k] + big * (s * u[k] + t * v[k])))
                .collect();
            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = 1.0;
                poly = clip(&poly, e, half[axis]);
                poly = clip(&poly, e.map(|x| -x), half[axis]);
            }
            // d_f ≤ d_k  ⇔  (n_k − n_f)·x ≤ c_k − c_f
            for (k, &(nk, ck)) in faces.iter().enumerate() {
                if k == f || k == g {
                    continue;
                }
                poly = clip(&poly, [nk[0] - nf[0], nk[1] - nf[1], nk[2] - nf[2]], ck - cf);
            }
            for i in 1..poly.len().saturating_sub(1) {
                tris.push([poly[0], poly[i], poly[i + 1]]);
            }
        }
    }
    tris
}

fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let project = |v: [f64; 3]| {
        let l = norm(v);
        v.map(|x| x / l)
    };
    verts.iter_mut().for_each(|v| *v = project(*v));
    for _ in 0..subdivisions {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = std::array::from_fn(|k| 0.5 * (verts[a][k] + verts[b][k]));
                verts.push(project(m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh {
        vertices: verts.into_iter().map(|v| v.map(|x| x * radius)).collect(),
        triangles: faces,
    }
}

fn box_mesh(h: [f64; 3]) -> TriangleMesh {
    let v: Vec<[f64; 3]> = (0..8)
        .map(|m| {
            std::array::from_fn(|k| if m >> k & 1 == 1 { h[k] } else { -h[k] })
        })
        .collect();
    // vertex index bits: x = 1, y = 2, z = 4
    let quads = [
        [0, 2, 3, 1], // z−
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y−
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x−
        [1, 3, 7, 5], // x+
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh {
        vertices: v,
        triangles,
    }
}

fn rect_torus_mesh(major: f64, a: f64, b: f64, segments: usize) -> TriangleMesh {
    // cross-section corners in (ρ, z), counter-clockwise
    let profile = [(major - a, -b), (major + a, -b), (major + a, b), (major - a, b)];
    let mut vertices = Vec::with_capacity(segments * 4);
    for s in 0..segments {
        let t = TAU * s as f64 / segments as f64;
        for &(rho, z) in &profile {
            vertices.push([rho * t.cos(), rho * t.sin(), z]);
        }
    }
    let mut triangles = Vec::new();
    for s in 0..segments {
        let n = (s + 1) % segments;
        for k in 0..4 {
            let k2 = (k + 1) % 4;
            let (a0, a1, b0, b1) = (4 * s + k, 4 * s + k2, 4 * n + k, 4 * n + k2);
            triangles.push([a0, b0, b1]);
            triangles.push([a0, b1, a1]);
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dot, winding_number};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_shapes() -> Vec<AnalyticShape> {
        AnalyticShape::NAMES
            .iter()
            .map(|n| AnalyticShape::by_name(n).unwrap())
            .collect()
    }

    #[test]
    fn surface_samples_have_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in all_shapes() {
            let c = s.sample_surface(500, &mut rng);
            for p in c.iter() {
                assert!(s.sgndist(p).abs() < 1e-12, "{} {p:?}", s.name());
                assert!(p.iter().all(|v| v.abs() <= 1.0));
            }
        }
    }

    #[test]
    fn unit_gradient_away_from_singular_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in all_shapes() {
            let d = s.dim();
            let mut checked = 0;
            while checked < 1000 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.2..1.2)).collect();
                if s.sgndist(&x).abs() < 0.05 || s.medial_distance(&x) < 0.05 {
                    continue;
                }
                let h = 1e-6;
                let g2: f64 = (0..d)
                    .map(|i| {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[i] += h;
                        xm[i] -= h;
                        ((s.sgndist(&xp) - s.sgndist(&xm)) / (2.0 * h)).powi(2)
                    })
                    .sum();
                assert!((g2.sqrt() - 1.0).abs() < 1e-6, "{} at {x:?}", s.name());
                checked += 1;
            }
        }
    }

    #[test]
    fn square_medial_axis_is_diagonals() {
        let s = AnalyticShape::by_name("square").unwrap();
        assert!(s.medial_distance(&[0.2, 0.2]).abs() < 1e-15);
        assert!(s.medial_distance(&[-0.4, 0.4]).abs() < 1e-15);
        let d = s.medial_distance(&[0.3, 0.0]);
        assert!((d - 0.3 / 2f64.sqrt()).abs() < 1e-12);
    }

    /// Points of the box medial axis are equidistant from two nearest faces.
    #[test]
    fn box_medial_axis_points_have_two_nearest_faces() {
        let half = [0.6, 0.45, 0.3];
        let tris = box_medial_triangles(half);
        assert!(!tris.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in tris.iter() {
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let (r1, r2) = if r1 + r2 > 1.0 { (1.0 - r1, 1.0 - r2) } else { (r1, r2) };
            let p: [f64; 3] = std::array::from_fn(|k| t[0][k] + r1 * (t[1][k] - t[0][k]) + r2 * (t[2][k] - t[0][k]));
            let mut d: Vec<f64> = (0..3).flat_map(|k| [half[k] - p[k], half[k] + p[k]]).collect();
            d.sort_by(f64::total_cmp);
            assert!((d[0] - d[1]).abs() < 1e-9, "{p:?}: {d:?}");
        }
    }

    #[test]
    fn torus_medial_axis_contains_rotation_axis() {
        let s = AnalyticShape::by_name("rect-torus").unwrap();
        assert_eq!(s.medial_distance(&[0.0, 0.0, 0.7]), 0.0);
        // centre of the cross-section lies on the central segment
        assert!(s.medial_distance(&[0.6, 0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn meshes_are_closed_and_outward() {
        for name in ["sphere", "box", "rect-torus"] {
            let s = AnalyticShape::by_name(name).unwrap();
            let m = s.mesh(3).unwrap();
            assert!(m.is_closed(), "{name}");
            let w = winding_number(&m, [0.0, 0.0, 0.0]);
            let inside = s.sgndist(&[0.0, 0.0, 0.0]) < 0.0;
            assert!((w - if inside { 1.0 } else { 0.0 }).abs() < 1e-9, "{name}: {w}");
            for t in 0..m.triangles.len() {
                let c = m.centroid(t);
                let n = m.normal(t);
                let out: [f64; 3] = std::array::from_fn(|k| c[k] + 1e-3 * n[k]);
                assert!(s.sgndist(&out) > s.sgndist(&c) - 1e-9 || dot(n, n) == 0.0);
            }
        }
    }

    #[test]
    fn box_face_counts_follow_area() {
        let s = AnalyticShape::by_name("box").unwrap();
        let AnalyticShape::Box { half } = s else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = s.sample_surface(10000, &mut rng);
        let mut counts = [0usize; 3];
        for p in c.iter() {
            let axis = (0..3).find(|&k| (p[k].abs() - half[k]).abs() < 1e-12).unwrap();
            counts[axis] += 1;
        }
        let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
        let total: f64 = areas.iter().sum();
        for k in 0..3 {
            let expect = 10000.0 * areas[k] / total;
            assert!((counts[k] as f64 - expect).abs() < 0.1 * expect);
        }
    }

    #[test]
    fn unknown_shape_name() {
        assert!(AnalyticShape::by_name("dodecahedron").is_err());
    }
}
