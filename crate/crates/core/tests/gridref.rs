//! The grid reference minimizer on small problems with known answers.

use medial_sdf::geometry::{AnalyticShape, PointCloud};
use medial_sdf::gridref::{minimize_grid, GridConfig, NodalFields};
use medial_sdf::metrics::sign_align;
use medial_sdf::trainer::stream;

fn config(resolution: usize, iterations: usize) -> GridConfig {
    GridConfig {
        resolution,
        iterations,
        ..GridConfig::reference()
    }
}

fn rmse_to(fields: &NodalFields, shape: &AnalyticShape) -> f64 {
    let s = sign_align(fields);
    let n = fields.resolution;
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = fields.node(j * n + i);
            sum += (s * fields.phi[j * n + i] - shape.sgndist(&x)).powi(2);
        }
    }
    (sum / (n * n) as f64).sqrt()
}

#[test]
fn circle_converges_to_the_distance() {
    let shape = AnalyticShape::by_name("circle").unwrap();
    let cloud = shape.sample_surface(400, &mut stream(1, 4));
    let run = minimize_grid(&cloud, &config(64, 3000)).unwrap();
    let e = rmse_to(&run.fields, &shape);
    assert!(e < 0.05, "rmse {e}");
    assert!(run.energy.iter().all(|e| e.is_finite()));
}

#[test]
fn energy_decreases_within_each_phase() {
    let shape = AnalyticShape::by_name("square").unwrap();
    let cloud = shape.sample_surface(400, &mut stream(2, 4));
    let cfg = config(48, 3000);
    let run = minimize_grid(&cloud, &cfg).unwrap();
    // compare window means at the start and end of every constant-weight stretch
    let s = &cfg.schedule;
    let bounds = [(0, s.phase2_start), (s.phase3_start, s.epochs)];
    for (a, b) in bounds {
        let it = |e: usize| e * cfg.iterations / s.epochs;
        let (lo, hi) = (it(a), it(b));
        let w = (hi - lo) / 10;
        let mean = |r: std::ops::Range<usize>| run.energy[r.clone()].iter().sum::<f64>() / r.len() as f64;
        let first = mean(lo..lo + w);
        let last = mean(hi - w..hi);
        assert!(last < first, "epochs {a}..{b}: {first} -> {last}");
    }
}

#[test]
fn two_parallel_lines_carve_a_midline_trench() {
    // two horizontal lines at y = ±0.3 spanning Ω; the medial axis is y = 0
    let mut pts = Vec::new();
    for k in 0..600 {
        let x = -1.2 + 2.4 * (k as f64 + 0.5) / 600.0;
        pts.extend([x, 0.3, x, -0.3]);
    }
    let cloud = PointCloud::new(2, pts).unwrap();
    let cfg = config(64, 4000);
    let run = minimize_grid(&cloud, &cfg).unwrap();
    let f = &run.fields;
    let n = f.resolution;
    // column-wise minimum of v between the lines sits near the midline
    let mut near = 0;
    let mut cols = 0;
    for i in n / 8..n - n / 8 {
        let (jmin, vmin) = (0..n)
            .filter(|&j| f.node(j * n + i)[1].abs() < 0.25)
            .map(|j| (j, f.v[j * n + i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        cols += 1;
        if vmin < 0.5 && f.node(jmin * n + i)[1].abs() <= 2.0 * f.h {
            near += 1;
        }
    }
    assert!(near * 10 >= cols * 7, "{near} of {cols} columns");
    // the phase field stays near one far from both lines and the midline
    let far: Vec<f64> = (0..n * n)
        .filter(|&k| {
            let y = f.node(k)[1].abs();
            y > 0.6 && y < 1.1
        })
        .map(|k| f.v[k])
        .collect();
    let frac = far.iter().filter(|&&v| v > 0.9).count() as f64 / far.len() as f64;
    assert!(frac > 0.9, "{frac}");
}
