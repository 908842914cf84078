//! Zero-level-set extraction on a regular grid: marching squares in 2D and
//! marching tetrahedra (six Kuhn tetrahedra per cube) in 3D.
//!
//! Grid values are indexed x-fastest. A grid of resolution `res` has `res`
//! cells and `res + 1` nodes per axis. Cells where the field is ≥ 0 count as
//! outside. Every piece is oriented so that its normal points towards
//! increasing field values.

use std::collections::HashMap;

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use super::{cross, dot, sub, PointCloud, TriangleMesh};
use crate::{Error, Result};

/// Directed segment; the positive side of the field lies to its right.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }
}

/// Node coordinates of a `(res + 1)^dim` grid over `[lo, hi]`, x fastest.
pub fn grid_points(dim: usize, res: usize, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = res + 1;
    let total = n.pow(dim as u32);
    let mut out = Vec::with_capacity(total * dim);
    for idx in 0..total {
        let mut r = idx;
        for k in 0..dim {
            let i = r % n;
            r /= n;
            out.push(lo[k] + (hi[k] - lo[k]) * i as f64 / res as f64);
        }
    }
    out
}

fn check_res(res: usize) -> Result<()> {
    if res < 2 {
        return Err(Error::InvalidArgument(format!("marching resolution {res} < 2")));
    }
    Ok(())
}

/// Evaluate `field` on the grid in parallel.
pub fn sample_grid(
    dim: usize,
    res: usize,
    lo: &[f64],
    hi: &[f64],
    field: impl Fn(&[f64]) -> f64 + Sync,
) -> Vec<f64> {
    grid_points(dim, res, lo, hi)
        .par_chunks(dim)
        .map(|x| field(x))
        .collect()
}

pub fn marching_squares(
    field: impl Fn(&[f64]) -> f64 + Sync,
    res: usize,
    lo: [f64; 2],
    hi: [f64; 2],
) -> Result<Vec<Segment>> {
    check_res(res)?;
    let values = sample_grid(2, res, &lo, &hi, field);
    marching_squares_values(&values, res, lo, hi)
}

fn interp(pa: &[f64], pb: &[f64], fa: f64, fb: f64) -> Vec<f64> {
    let t = fa / (fa - fb);
    pa.iter().zip(pb).map(|(a, b)| a + t * (b - a)).collect()
}

pub fn marching_squares_values(
    values: &[f64],
    res: usize,
    lo: [f64; 2],
    hi: [f64; 2],
) -> Result<Vec<Segment>> {
    check_res(res)?;
    let n = res + 1;
    if values.len() != n * n {
        return Err(Error::Dimension(format!("{} grid values for resolution {res}", values.len())));
    }
    let node = |i: usize, j: usize| -> [f64; 2] {
        [
            lo[0] + (hi[0] - lo[0]) * i as f64 / res as f64,
            lo[1] + (hi[1] - lo[1]) * j as f64 / res as f64,
        ]
    };
    // corners counter-clockwise: (0,0) (1,0) (1,1) (0,1)
    const CORNER: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];
    let mut segs = Vec::new();
    for j in 0..res {
        for i in 0..res {
            let p: [[f64; 2]; 4] = CORNER.map(|(di, dj)| node(i + di, j + dj));
            let f: [f64; 4] = CORNER.map(|(di, dj)| values[(j + dj) * n + i + di]);
            let neg: [bool; 4] = f.map(|v| v < 0.0);
            // crossing point and negative-to-positive direction on edge k
            let cross_edge = |k: usize| -> ([f64; 2], [f64; 2]) {
                let (a, b) = (k, (k + 1) % 4);
                let x = interp(&p[a], &p[b], f[a], f[b]);
                let (from, to) = if neg[a] { (p[a], p[b]) } else { (p[b], p[a]) };
                ([x[0], x[1]], [to[0] - from[0], to[1] - from[1]])
            };
            let edges: Vec<usize> = (0..4).filter(|&k| neg[k] != neg[(k + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = match edges.len() {
                0 => continue,
                2 => vec![(edges[0], edges[1])],
                _ => {
                    // saddle: decide by the cell-centre average
                    let centre_neg = f.iter().sum::<f64>() / 4.0 < 0.0;
                    if neg[0] == centre_neg {
                        // corners 0 and 2 connect through the centre
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                }
            };
            for (e0, e1) in pairs {
                let (x0, g0) = cross_edge(e0);
                let (x1, g1) = cross_edge(e1);
                let g = [g0[0] + g1[0], g0[1] + g1[1]];
                let d = [x1[0] - x0[0], x1[1] - x0[1]];
                // right-hand normal of d is (d.y, −d.x)
                let s = if d[1] * g[0] - d[0] * g[1] >= 0.0 {
                    Segment { a: x0, b: x1 }
                } else {
                    Segment { a: x1, b: x0 }
                };
                if s.length() > 0.0 {
                    segs.push(s);
                }
            }
        }
    }
    if segs.is_empty() {
        warn!("marching squares: field has no sign change");
    }
    Ok(segs)
}

pub fn polyline_length(segs: &[Segment]) -> f64 {
    segs.iter().map(Segment::length).sum()
}

/// `n` points uniformly distributed along the segments by arc length.
pub fn sample_polylines(segs: &[Segment], n: usize, rng: &mut impl Rng) -> PointCloud {
    let mut cdf = Vec::with_capacity(segs.len());
    let mut acc = 0.0;
    for s in segs {
        acc += s.length();
        cdf.push(acc);
    }
    let mut pts = Vec::with_capacity(2 * n);
    if acc > 0.0 {
        for _ in 0..n {
            let u = rng.gen_range(0.0..acc);
            let s = &segs[cdf.partition_point(|&c| c <= u).min(segs.len() - 1)];
            let t: f64 = rng.gen();
            pts.push(s.a[0] + t * (s.b[0] - s.a[0]));
            pts.push(s.a[1] + t * (s.b[1] - s.a[1]));
        }
    }
    PointCloud { dim: 2, points: pts }
}

pub fn marching_cubes(
    field: impl Fn(&[f64]) -> f64 + Sync,
    res: usize,
    lo: [f64; 3],
    hi: [f64; 3],
) -> Result<TriangleMesh> {
    check_res(res)?;
    let values = sample_grid(3, res, &lo, &hi, field);
    marching_cubes_values(&values, res, lo, hi)
}

/// Kuhn triangulation of the unit cube: all six tetrahedra share the main
/// diagonal 0–7 (corner bits x = 1, y = 2, z = 4), which keeps neighbouring
/// cubes conforming.
const KUHN: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

pub fn marching_cubes_values(
    values: &[f64],
    res: usize,
    lo: [f64; 3],
    hi: [f64; 3],
) -> Result<TriangleMesh> {
    check_res(res)?;
    let n = res + 1;
    if values.len() != n * n * n {
        return Err(Error::Dimension(format!("{} grid values for resolution {res}", values.len())));
    }
    let coord = |id: usize| -> [f64; 3] {
        let (i, j, k) = (id % n, id / n % n, id / (n * n));
        [
            lo[0] + (hi[0] - lo[0]) * i as f64 / res as f64,
            lo[1] + (hi[1] - lo[1]) * j as f64 / res as f64,
            lo[2] + (hi[2] - lo[2]) * k as f64 / res as f64,
        ]
    };
    // vertices keyed by grid edge; an exact zero snaps to its node
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut vertex_on = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = if values[a] == 0.0 {
            (a, a)
        } else if values[b] == 0.0 {
            (b, b)
        } else {
            (a.min(b), a.max(b))
        };
        *index.entry(key).or_insert_with(|| {
            let x = interp(&coord(a), &coord(b), values[a], values[b]);
            vertices.push([x[0], x[1], x[2]]);
            vertices.len() - 1
        })
    };
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let base = (k * n + j) * n + i;
                let corner = |c: usize| base + (c & 1) + (c >> 1 & 1) * n + (c >> 2 & 1) * n * n;
                for tet in KUHN {
                    let ids = tet.map(corner);
                    let neg = ids.map(|id| values[id] < 0.0);
                    let count = neg.iter().filter(|&&b| b).count();
                    if count == 0 || count == 4 {
                        continue;
                    }
                    let (inside, outside): (Vec<usize>, Vec<usize>) =
                        ids.iter().partition(|&&id| values[id] < 0.0);
                    let mut emit = |tri: [(usize, usize); 3], vertices: &mut Vec<[f64; 3]>| {
                        let v = tri.map(|(a, b)| vertex_on(a, b, vertices));
                        if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
                            return;
                        }
                        // outward direction: from negative ends to positive ends
                        let mut g = [0.0; 3];
                        for (a, b) in tri {
                            let d = sub(coord(b), coord(a));
                            for q in 0..3 {
                                g[q] += d[q];
                            }
                        }
                        let [p0, p1, p2] = v.map(|x| vertices[x]);
                        let nrm = cross(sub(p1, p0), sub(p2, p0));
                        triangles.push(if dot(nrm, g) >= 0.0 {
                            v
                        } else {
                            [v[0], v[2], v[1]]
                        });
                    };
                    match (inside.len(), outside.len()) {
                        (1, 3) => {
                            let a = inside[0];
                            emit([(a, outside[0]), (a, outside[1]), (a, outside[2])], &mut vertices);
                        }
                        (3, 1) => {
                            let b = outside[0];
                            emit([(inside[0], b), (inside[1], b), (inside[2], b)], &mut vertices);
                        }
                        _ => {
                            let (a0, a1, b0, b1) = (inside[0], inside[1], outside[0], outside[1]);
                            // quad a0b0 – a0b1 – a1b1 – a1b0
                            emit([(a0, b0), (a0, b1), (a1, b1)], &mut vertices);
                            emit([(a0, b0), (a1, b1), (a1, b0)], &mut vertices);
                        }
                    }
                }
            }
        }
    }
    if triangles.is_empty() {
        warn!("marching cubes: field has no sign change");
    }
    Ok(TriangleMesh {
        vertices,
        triangles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{winding_number, AnalyticShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LO2: [f64; 2] = [-1.2, -1.2];
    const HI2: [f64; 2] = [1.2, 1.2];
    const LO3: [f64; 3] = [-1.2; 3];
    const HI3: [f64; 3] = [1.2; 3];

    #[test]
    fn circle_length() {
        let s = AnalyticShape::Circle { radius: 0.5 };
        let segs = marching_squares(|x| s.sgndist(x), 256, LO2, HI2).unwrap();
        let l = polyline_length(&segs);
        let exact = std::f64::consts::TAU * 0.5;
        assert!((l - exact).abs() < 0.02 * exact, "{l}");
    }

    #[test]
    fn circle_orientation_is_counter_clockwise() {
        let s = AnalyticShape::Circle { radius: 0.5 };
        let segs = marching_squares(|x| s.sgndist(x), 64, LO2, HI2).unwrap();
        // signed area by the shoelace formula
        let area: f64 = segs.iter().map(|s| s.a[0] * s.b[1] - s.b[0] * s.a[1]).sum::<f64>() / 2.0;
        assert!((area - std::f64::consts::PI * 0.25).abs() < 0.01, "{area}");
    }

    #[test]
    fn square_segments_are_closed_loops() {
        let s = AnalyticShape::by_name("square").unwrap();
        let segs = marching_squares(|x| s.sgndist(x), 37, LO2, HI2).unwrap();
        let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let mut balance: HashMap<(i64, i64), i32> = HashMap::new();
        for s in &segs {
            *balance.entry(key(s.a)).or_default() += 1;
            *balance.entry(key(s.b)).or_default() -= 1;
        }
        assert!(balance.values().all(|&b| b == 0));
    }

    #[test]
    fn constant_field_is_empty() {
        assert!(marching_squares(|_| 1.0, 8, LO2, HI2).unwrap().is_empty());
        assert!(marching_cubes(|_| 1.0, 8, LO3, HI3).unwrap().triangles.is_empty());
        assert!(marching_squares(|_| 1.0, 1, LO2, HI2).is_err());
    }

    #[test]
    fn sphere_vertices_and_watertightness() {
        let s = AnalyticShape::Sphere { radius: 0.5 };
        let res = 128;
        let m = marching_cubes(|x| s.sgndist(x), res, LO3, HI3).unwrap();
        let h = 2.4 / res as f64;
        for v in &m.vertices {
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((r - 0.5).abs() < 2.0 * h);
        }
        assert!(m.is_closed());
        assert!((winding_number(&m, [0.0; 3]) - 1.0).abs() < 1e-9);
        for t in 0..m.triangles.len().min(5000) {
            let c = m.centroid(t);
            assert!(dot(m.normal(t), c) > 0.0);
        }
    }

    #[test]
    fn torus_mesh_is_closed() {
        let s = AnalyticShape::by_name("rect-torus").unwrap();
        let m = marching_cubes(|x| s.sgndist(x), 40, LO3, HI3).unwrap();
        assert!(m.is_closed());
        assert!(winding_number(&m, [0.0; 3]).abs() < 1e-9);
        assert!((winding_number(&m, [0.6, 0.0, 0.0]) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn polyline_sampling_lies_on_segments() {
        let s = AnalyticShape::Circle { radius: 0.5 };
        let segs = marching_squares(|x| s.sgndist(x), 128, LO2, HI2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_polylines(&segs, 100, &mut rng);
        assert_eq!(c.len(), 100);
        for p in c.iter() {
            assert!(s.sgndist(p).abs() < 1e-3);
        }
    }
}
