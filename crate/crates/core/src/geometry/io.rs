//! Plain-text geometry formats: point clouds (`x y [z]` per line), a
//! triangle-only OBJ subset, polyline CSV (`x0 y0 x1 y1`) and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PointCloud, Segment, TriangleMesh};
use crate::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

/// Write through a temporary file so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_floats(line: &str, lineno: usize, path: &Path) -> Result<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| {
                Error::BadFormat(format!("{}:{}: `{t}` is not a number", path.display(), lineno + 1))
            })
        })
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    let mut dim = 0;
    let mut points = Vec::new();
    for (i, line) in content_lines(&text) {
        let v = parse_floats(line, i, path)?;
        if dim == 0 {
            dim = v.len();
            if !(2..=3).contains(&dim) {
                return Err(Error::BadFormat(format!(
                    "{}:{}: expected 2 or 3 coordinates, found {dim}",
                    path.display(),
                    i + 1
                )));
            }
        } else if v.len() != dim {
            return Err(Error::BadFormat(format!(
                "{}:{}: expected {dim} coordinates, found {}",
                path.display(),
                i + 1,
                v.len()
            )));
        }
        points.extend(v);
    }
    if dim == 0 {
        return Err(Error::BadFormat(format!("{} holds no points", path.display())));
    }
    PointCloud::new(dim, points)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut s = String::with_capacity(cloud.points.len() * 25);
    for p in cloud.iter() {
        let row: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Reads `v` and `f` records; polygonal faces are fanned into triangles and
/// `a/b/c` index forms keep only the vertex index.
pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = read_text(path)?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, line) in content_lines(&text) {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let v = parse_floats(&tok.collect::<Vec<_>>().join(" "), i, path)?;
                if v.len() < 3 {
                    return Err(Error::BadFormat(format!("{}:{}: short vertex", path.display(), i + 1)));
                }
                vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let k: i64 = head.parse().map_err(|_| {
                            Error::BadFormat(format!("{}:{}: bad face index `{t}`", path.display(), i + 1))
                        })?;
                        let resolved = if k < 0 { vertices.len() as i64 + k } else { k - 1 };
                        usize::try_from(resolved).map_err(|_| {
                            Error::BadFormat(format!("{}:{}: face index {k} out of range", path.display(), i + 1))
                        })
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::BadFormat(format!("{}:{}: face with {} corners", path.display(), i + 1, idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2]));
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    write_atomic(path, s.as_bytes())
}

pub fn write_polylines_csv(path: &Path, segs: &[Segment]) -> Result<()> {
    let mut s = String::from("x0,y0,x1,y1\n");
    for g in segs {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(g.a[0]),
            fmt_f64(g.a[1]),
            fmt_f64(g.b[0]),
            fmt_f64(g.b[1])
        );
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_polylines_csv(path: &Path) -> Result<Vec<Segment>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in content_lines(&text) {
        if i == 0 && line.starts_with('x') {
            continue;
        }
        let v = parse_floats(line, i, path)?;
        if v.len() != 4 {
            return Err(Error::BadFormat(format!("{}:{}: expected 4 values", path.display(), i + 1)));
        }
        out.push(Segment {
            a: [v[0], v[1]],
            b: [v[2], v[3]],
        });
    }
    Ok(out)
}

/// SVG of the segments over `[−half, half]²`, y pointing up.
pub fn write_svg(path: &Path, segs: &[Segment], half: f64) -> Result<()> {
    let size = 512.0;
    let map = |p: [f64; 2]| ((p[0] + half) / (2.0 * half) * size, (half - p[1]) / (2.0 * half) * size);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g stroke=\"black\" stroke-width=\"1\">\n"
    );
    for g in segs {
        let (x0, y0) = map(g.a);
        let (x1, y1) = map(g.b);
        let _ = writeln!(s, "<line x1=\"{x0:.4}\" y1=\"{y0:.4}\" x2=\"{x1:.4}\" y2=\"{y1:.4}\"/>");
    }
    s.push_str("</g>\n</svg>\n");
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.xyz");
        let cloud = PointCloud::new(3, vec![0.1, 1.0 / 3.0, -2e-300, 1e10, -0.0, 5.5]).unwrap();
        write_cloud(&p, &cloud).unwrap();
        assert_eq!(read_cloud(&p).unwrap(), cloud);
    }

    #[test]
    fn obj_round_trip_and_quads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        fs::write(&p, "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n").unwrap();
        let m = read_obj(&p).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        write_obj(&p, &m).unwrap();
        assert_eq!(read_obj(&p).unwrap(), m);
    }

    #[test]
    fn errors_name_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.xyz");
        fs::write(&p, "1 2\n3 x\n").unwrap();
        let e = read_cloud(&p).unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
        fs::write(&p, "1 2\n3 4 5\n").unwrap();
        assert!(matches!(read_cloud(&p), Err(Error::BadFormat(_))));
        assert!(matches!(read_cloud(&dir.path().join("none")), Err(Error::MissingFile(_))));
        fs::write(&p, "v 0 0 0\nf 1 2 3\n").unwrap();
        assert!(matches!(read_obj(&p), Err(Error::BadFormat(_))));
    }

    #[test]
    fn polylines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        let segs = vec![
            Segment { a: [0.1, 0.2], b: [0.3, 0.4] },
            Segment { a: [-1.0, 1.0 / 7.0], b: [0.0, 0.0] },
        ];
        write_polylines_csv(&p, &segs).unwrap();
        assert_eq!(read_polylines_csv(&p).unwrap(), segs);
        write_svg(&dir.path().join("l.svg"), &segs, 1.2).unwrap();
    }
}
