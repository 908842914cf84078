//! Adaptive Monte-Carlo quadrature over Ω and surface weights for the
//! input cloud.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::geometry::{io, uniform_in_domain, PointCloud, PointIndex, DOMAIN_HALF};
use crate::loss::QuadratureBatch;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Target batch size `N`.
    pub batch: usize,
    /// Test-set size `M`.
    pub test_points: usize,
    /// Cells per side of the initial grid.
    pub cells: usize,
    /// Number of refinement passes `k`.
    pub depth: usize,
    pub tau_sdf: f64,
    pub tau_pf: f64,
}

impl SamplerConfig {
    pub fn reference(dim: usize) -> Self {
        let (batch, test_points, depth) = if dim == 2 {
            (8192, 131_072, 3)
        } else {
            (16_384, 262_144, 2)
        };
        SamplerConfig {
            batch,
            test_points,
            cells: 16,
            depth,
            tau_sdf: 0.1,
            tau_pf: 0.75,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.test_points < self.batch || self.cells == 0 {
            return Err(Error::InvalidArgument(format!(
                "sampler needs N ≥ 1, M ≥ N and m ≥ 1 (N = {}, M = {}, m = {})",
                self.batch, self.test_points, self.cells
            )));
        }
        if !(self.tau_sdf > 0.0 && self.tau_pf > 0.0) {
            return Err(Error::InvalidArgument("sampler thresholds must be positive".into()));
        }
        if self.depth > 8 {
            return Err(Error::InvalidArgument(format!("grid depth {} is too deep", self.depth)));
        }
        Ok(())
    }
}

/// Grid cell at refinement `level`, addressed by integer coordinates in
/// units of `h / 2^level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub level: u32,
    pub index: [u64; 3],
}

#[derive(Clone, Debug)]
pub struct AdaptiveGrid {
    pub dim: usize,
    /// Initial cell size `h`.
    pub h: f64,
    pub cells: Vec<Cell>,
}

impl AdaptiveGrid {
    pub fn uniform(dim: usize, m: usize) -> Self {
        let total = m.pow(dim as u32);
        let cells = (0..total)
            .map(|f| {
                let mut index = [0u64; 3];
                let mut r = f;
                for slot in index.iter_mut().take(dim) {
                    *slot = (r % m) as u64;
                    r /= m;
                }
                Cell { level: 0, index }
            })
            .collect();
        AdaptiveGrid {
            dim,
            h: 2.0 * DOMAIN_HALF / m as f64,
            cells,
        }
    }

    pub fn cell_size(&self, c: &Cell) -> f64 {
        self.h / (1u64 << c.level) as f64
    }

    pub fn cell_min(&self, c: &Cell) -> Vec<f64> {
        let s = self.cell_size(c);
        (0..self.dim).map(|k| -DOMAIN_HALF + s * c.index[k] as f64).collect()
    }

    pub fn cell_volume(&self, c: &Cell) -> f64 {
        self.cell_size(c).powi(self.dim as i32)
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| self.cell_volume(c)).sum()
    }

    /// Child of `c` (at level + 1) containing `x`.
    fn child_of(&self, c: &Cell, x: &[f64]) -> Cell {
        let s = self.cell_size(c) / 2.0;
        let lo = self.cell_min(c);
        let mut index = [0u64; 3];
        for k in 0..self.dim {
            let bit = u64::from(x[k] - lo[k] >= s);
            index[k] = 2 * c.index[k] + bit;
        }
        Cell {
            level: c.level + 1,
            index,
        }
    }

    fn children(&self, c: &Cell) -> impl Iterator<Item = Cell> + '_ {
        let c = *c;
        (0..1usize << self.dim).map(move |bits| {
            let mut index = [0u64; 3];
            for k in 0..self.dim {
                index[k] = 2 * c.index[k] + ((bits >> k) & 1) as u64;
            }
            Cell {
                level: c.level + 1,
                index,
            }
        })
    }

    /// Refine from test points and their field values. `v = None` means the
    /// phase field is identically one.
    pub fn build(config: &SamplerConfig, dim: usize, test: &[f64], phi: &[f64], v: Option<&[f64]>) -> Result<Self> {
        config.validate()?;
        let n = test.len() / dim;
        if phi.len() != n || v.is_some_and(|v| v.len() != n) {
            return Err(Error::Dimension(format!(
                "{n} test points but {} sdf values and {:?} phase values",
                phi.len(),
                v.map(<[f64]>::len)
            )));
        }
        let mut grid = AdaptiveGrid::uniform(dim, config.cells);
        let m = config.cells as f64;
        // owning cell of every test point
        let mut owner: Vec<usize> = test
            .chunks_exact(dim)
            .map(|x| {
                let mut f = 0usize;
                for k in (0..dim).rev() {
                    let i = (((x[k] + DOMAIN_HALF) / grid.h).floor()).clamp(0.0, m - 1.0) as usize;
                    f = f * config.cells + i;
                }
                f
            })
            .collect();
        for pass in 0..config.depth {
            let threshold = config.tau_sdf / (1u64 << pass) as f64;
            let marked_point: Vec<bool> = (0..n)
                .into_par_iter()
                .map(|j| phi[j].abs() < threshold || v.is_some_and(|v| v[j] < config.tau_pf))
                .collect();
            let mut marked = vec![false; grid.cells.len()];
            for j in 0..n {
                if marked_point[j] {
                    marked[owner[j]] = true;
                }
            }
            if !marked.contains(&true) {
                break;
            }
            // new cell list; refined cells are replaced by their children in place
            let mut next = Vec::with_capacity(grid.cells.len());
            let mut first_child = vec![usize::MAX; grid.cells.len()];
            for (ci, c) in grid.cells.iter().enumerate() {
                if marked[ci] {
                    first_child[ci] = next.len();
                    next.extend(grid.children(c));
                } else {
                    next.push(*c);
                }
            }
            let mut remap = vec![0usize; grid.cells.len()];
            {
                let mut pos = 0;
                for ci in 0..grid.cells.len() {
                    remap[ci] = pos;
                    pos += if marked[ci] { 1 << dim } else { 1 };
                }
            }
            for j in 0..n {
                let ci = owner[j];
                owner[j] = if marked[ci] {
                    let child = grid.child_of(&grid.cells[ci], &test[j * dim..(j + 1) * dim]);
                    let mut bits = 0;
                    for k in 0..dim {
                        bits |= ((child.index[k] & 1) as usize) << k;
                    }
                    first_child[ci] + bits
                } else {
                    remap[ci]
                };
            }
            grid.cells = next;
        }
        Ok(grid)
    }

    /// Refine with closures instead of precomputed values, drawing `M` test
    /// points from `rng`.
    pub fn build_with(
        config: &SamplerConfig,
        dim: usize,
        phi: impl Fn(&[f64]) -> f64 + Sync,
        v: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let test = uniform_in_domain(dim, config.test_points, rng);
        let pv: Vec<f64> = test.par_chunks(dim).map(&phi).collect();
        let vv: Option<Vec<f64>> = v.map(|v| test.par_chunks(dim).map(v).collect());
        Self::build(config, dim, &test, &pv, vv.as_deref())
    }

    /// `⌈N / M_k⌉` uniform points per cell, weighted `(2^{id} n)^{-1} h^d`.
    pub fn draw_batch(&self, n_target: usize, rng: &mut impl Rng) -> QuadratureBatch {
        let per = n_target.div_ceil(self.cells.len()).max(1);
        let d = self.dim;
        let mut points = Vec::with_capacity(per * self.cells.len() * d);
        let mut weights = Vec::with_capacity(per * self.cells.len());
        for c in &self.cells {
            let s = self.cell_size(c);
            let lo = self.cell_min(c);
            let w = self.h.powi(d as i32) / ((1u64 << (c.level as usize * d)) as f64 * per as f64);
            for _ in 0..per {
                for k in 0..d {
                    let u: f64 = rng.gen();
                    points.push(lo[k] + s * u);
                }
                weights.push(w);
            }
        }
        QuadratureBatch {
            dim: d,
            points,
            weights,
        }
    }

    pub fn level_counts(&self) -> Vec<usize> {
        let max = self.cells.iter().map(|c| c.level).max().unwrap_or(0) as usize;
        let mut out = vec![0; max + 1];
        for c in &self.cells {
            out[c.level as usize] += 1;
        }
        out
    }

    /// CSV with the min and max corner and level of every cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let axes = ["x", "y", "z"];
        let mut s = String::new();
        let hdr: Vec<String> = (0..self.dim)
            .map(|k| format!("min_{}", axes[k]))
            .chain((0..self.dim).map(|k| format!("max_{}", axes[k])))
            .chain(["level".to_string()])
            .collect();
        s.push_str(&hdr.join(","));
        s.push('\n');
        for c in &self.cells {
            let lo = self.cell_min(c);
            let size = self.cell_size(c);
            let row: Vec<String> = lo
                .iter()
                .map(|&v| io::fmt_f64(v))
                .chain(lo.iter().map(|&v| io::fmt_f64(v + size)))
                .chain([c.level.to_string()])
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        io::write_atomic(path, s.as_bytes())
    }
}

/// Neighbour count used for the local area estimate.
pub const SURFACE_NEIGHBOURS: usize = 8;

/// Local surface measure per point: `π R²/k̂` in 3D and `2R/k̂` in 2D, with
/// `R` the distance to the `k̂`-th nearest other point.
pub fn surface_weights(cloud: &PointCloud) -> Result<Vec<f64>> {
    let d = cloud.dim;
    if cloud.len() < d + 1 {
        return Err(Error::Degenerate(format!(
            "surface weights need at least {} points, got {}",
            d + 1,
            cloud.len()
        )));
    }
    let (lo, hi) = cloud.bounds();
    if lo.iter().zip(&hi).all(|(l, h)| l == h) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let k = SURFACE_NEIGHBOURS.min(cloud.len() - 1);
    let index = PointIndex::new(cloud);
    let w: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|j| {
            let nn = index.k_nearest(cloud.point(j), k, Some(j));
            let r = nn.last().map_or(0.0, |x| x.1);
            if d == 3 {
                std::f64::consts::PI * r * r / k as f64
            } else {
                2.0 * r / k as f64
            }
        })
        .collect();
    Ok(w)
}
