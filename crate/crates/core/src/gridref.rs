//! Finite-difference reference minimizer of the training loss on a uniform
//! 2D nodal grid. Serves as a network-free oracle.

use std::collections::VecDeque;
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;

use crate::field::ScalarField;
use crate::geometry::{io, PointCloud, PointIndex, DOMAIN_HALF};
use crate::loss::{Gammas, LossBreakdown, LossSchedule};
use crate::render::write_pgm;
use crate::sampler::surface_weights;
use crate::trainer::AdamState;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    /// Nodes per axis.
    pub resolution: usize,
    pub iterations: usize,
    pub schedule: LossSchedule,
    pub lr_phi: f64,
    pub lr_v: f64,
    pub betas: (f64, f64),
    /// Schedule epochs at which both learning rates are multiplied by `lr_decay`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay: f64,
}

impl GridConfig {
    pub fn reference() -> Self {
        GridConfig {
            resolution: 128,
            iterations: 20_000,
            schedule: LossSchedule::reference(2),
            lr_phi: 1e-3,
            lr_v: 1e-2,
            betas: (0.9, 0.999),
            lr_decay_epochs: vec![10, 20],
            lr_decay: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 32 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least 32, got {}",
                self.resolution
            )));
        }
        if !(self.lr_phi > 0.0 && self.lr_v > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        self.schedule.validate()
    }

    /// Fractional schedule epoch of an iteration.
    pub fn epoch_of(&self, iteration: usize) -> f64 {
        iteration as f64 * self.schedule.epochs as f64 / self.iterations.max(1) as f64
    }
}

/// Nodal φ and v on `[−1.2, 1.2]²`, x index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalFields {
    pub resolution: usize,
    pub h: f64,
    pub phi: Vec<f64>,
    pub v: Vec<f64>,
}

impl NodalFields {
    /// `φ = ‖x‖ − 1`, `v = 1`.
    pub fn initial(resolution: usize) -> Self {
        let h = 2.0 * DOMAIN_HALF / (resolution - 1) as f64;
        let mut f = NodalFields {
            resolution,
            h,
            phi: vec![0.0; resolution * resolution],
            v: vec![1.0; resolution * resolution],
        };
        for k in 0..f.phi.len() {
            let [x, y] = f.node(k);
            f.phi[k] = (x * x + y * y).sqrt() - 1.0;
        }
        f
    }

    /// Distance to the cloud, negated on nodes that cannot be reached from
    /// the corners of Ω without passing within the cloud's sampling gap.
    pub fn from_cloud(resolution: usize, cloud: &PointCloud) -> Result<Self> {
        let mut f = Self::initial(resolution);
        let index = PointIndex::new(cloud);
        let gap = (0..cloud.len())
            .into_par_iter()
            .map(|i| index.k_nearest(cloud.point(i), 1, Some(i)).first().map_or(0.0, |x| x.1))
            .reduce(|| 0.0, f64::max);
        let seal = gap.max(f.h);
        let dist: Vec<f64> = (0..f.phi.len())
            .into_par_iter()
            .map(|k| index.nearest(&f.node(k)).map_or(f64::INFINITY, |x| x.1))
            .collect();
        let n = resolution;
        let mut outside = vec![false; n * n];
        let mut queue: VecDeque<usize> = [0, n - 1, n * (n - 1), n * n - 1]
            .into_iter()
            .filter(|&k| dist[k] > seal)
            .collect();
        for &k in &queue {
            outside[k] = true;
        }
        if queue.is_empty() {
            return Err(Error::Degenerate("every corner of Ω lies on the point cloud".into()));
        }
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % n, k / n);
            let nb = [
                (i > 0).then(|| k - 1),
                (i + 1 < n).then(|| k + 1),
                (j > 0).then(|| k - n),
                (j + 1 < n).then(|| k + n),
            ];
            for m in nb.into_iter().flatten() {
                if !outside[m] && dist[m] > seal {
                    outside[m] = true;
                    queue.push_back(m);
                }
            }
        }
        // Band nodes take the label of the closest labelled node (grid BFS).
        let mut label: Vec<Option<bool>> = (0..n * n).map(|k| (dist[k] > seal).then_some(outside[k])).collect();
        let mut queue: VecDeque<usize> = (0..n * n).filter(|&k| label[k].is_some()).collect();
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % n, k / n);
            let nb = [
                (i > 0).then(|| k - 1),
                (i + 1 < n).then(|| k + 1),
                (j > 0).then(|| k - n),
                (j + 1 < n).then(|| k + n),
            ];
            for m in nb.into_iter().flatten() {
                if label[m].is_none() {
                    label[m] = label[k];
                    queue.push_back(m);
                }
            }
        }
        for k in 0..n * n {
            f.phi[k] = if label[k].unwrap_or(true) { dist[k] } else { -dist[k] };
        }
        Ok(f)
    }

    pub fn node(&self, k: usize) -> [f64; 2] {
        let n = self.resolution;
        [-DOMAIN_HALF + (k % n) as f64 * self.h, -DOMAIN_HALF + (k / n) as f64 * self.h]
    }

    /// Cell and local coordinates of `x`, clamped to the grid.
    fn locate(&self, x: &[f64]) -> ([usize; 2], [f64; 2]) {
        let n = self.resolution;
        let mut c = [0usize; 2];
        let mut t = [0.0; 2];
        for a in 0..2 {
            let s = ((x[a] + DOMAIN_HALF) / self.h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            c[a] = i;
            t[a] = s - i as f64;
        }
        (c, t)
    }

    /// Bilinear stencil: four node indices with weights.
    fn bilinear(&self, x: &[f64]) -> [(usize, f64); 4] {
        let n = self.resolution;
        let ([i, j], [s, t]) = self.locate(x);
        let k = j * n + i;
        [
            (k, (1.0 - s) * (1.0 - t)),
            (k + 1, s * (1.0 - t)),
            (k + n, (1.0 - s) * t),
            (k + n + 1, s * t),
        ]
    }

    pub fn sample(data: &[f64], stencil: &[(usize, f64); 4]) -> f64 {
        stencil.iter().map(|&(k, w)| w * data[k]).sum()
    }

    pub fn phi_at(&self, x: &[f64]) -> f64 {
        Self::sample(&self.phi, &self.bilinear(x))
    }

    pub fn v_at(&self, x: &[f64]) -> f64 {
        Self::sample(&self.v, &self.bilinear(x))
    }

    pub fn negate_phi(&mut self) {
        self.phi.iter_mut().for_each(|p| *p = -*p);
    }

    /// One text header line (`resolution lo hi`) followed by little-endian f64s.
    pub fn write_raster(path: &Path, resolution: usize, data: &[f64]) -> Result<()> {
        let mut bytes = format!(
            "{resolution} {} {}\n",
            io::fmt_f64(-DOMAIN_HALF),
            io::fmt_f64(DOMAIN_HALF)
        )
        .into_bytes();
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        io::write_atomic(path, &bytes)
    }

    pub fn read_raster(path: &Path) -> Result<(usize, Vec<f64>)> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::BadFormat(format!("{}: missing header", path.display())))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::BadFormat("raster header".into()))?;
        let res: usize = header
            .split_whitespace()
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::BadFormat(format!("{}: bad header `{header}`", path.display())))?;
        let body = &bytes[nl + 1..];
        if body.len() != res * res * 8 {
            return Err(Error::Truncated(format!(
                "{}: {} bytes for a {res}² raster",
                path.display(),
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((res, data))
    }

    /// `phi.raw`, `v.raw`, `phi.pgm` (banded level sets, zero level black)
    /// and `v.pgm` in `dir`. Images have y pointing up.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        let n = self.resolution;
        Self::write_raster(&dir.join("phi.raw"), n, &self.phi)?;
        Self::write_raster(&dir.join("v.raw"), n, &self.v)?;
        let flip = |k: usize| (n - 1 - k / n) * n + k % n;
        let levels: Vec<u8> = (0..n * n)
            .map(|k| {
                let p = self.phi[flip(k)];
                if p.abs() < self.h {
                    0
                } else {
                    let band = (p / 0.1).rem_euclid(1.0);
                    let base = if p < 0.0 { 90.0 } else { 170.0 };
                    (base + 60.0 * band).round() as u8
                }
            })
            .collect();
        write_pgm(&dir.join("phi.pgm"), n, n, &levels)?;
        let v: Vec<u8> = (0..n * n)
            .map(|k| (self.v[flip(k)].clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        write_pgm(&dir.join("v.pgm"), n, n, &v)
    }
}

impl ScalarField for NodalFields {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.phi_at(x)
    }
}

/// Sparse 1D operator, one row of `(column, coefficient)` per node.
type Op1 = Vec<Vec<(usize, f64)>>;

fn identity(n: usize) -> Op1 {
    (0..n).map(|i| vec![(i, 1.0)]).collect()
}

/// Central first difference, second-order one-sided at the ends.
fn first_difference(n: usize, h: f64) -> Op1 {
    (0..n)
        .map(|i| {
            let c = 1.0 / (2.0 * h);
            if i == 0 {
                vec![(0, -3.0 * c), (1, 4.0 * c), (2, -c)]
            } else if i == n - 1 {
                vec![(n - 3, c), (n - 2, -4.0 * c), (n - 1, 3.0 * c)]
            } else {
                vec![(i - 1, -c), (i + 1, c)]
            }
        })
        .collect()
}

/// Three-point second difference, shifted inwards at the ends.
fn second_difference(n: usize, h: f64) -> Op1 {
    let c = 1.0 / (h * h);
    (0..n)
        .map(|i| {
            let m = i.clamp(1, n - 2);
            vec![(m - 1, c), (m, -2.0 * c), (m + 1, c)]
        })
        .collect()
}

fn transpose(op: &Op1) -> Op1 {
    let mut t: Op1 = vec![Vec::new(); op.len()];
    for (i, row) in op.iter().enumerate() {
        for &(j, c) in row {
            t[j].push((i, c));
        }
    }
    t
}

/// Tensor product `ax ⊗ ay` of two 1D operators.
struct Op2 {
    ax: Op1,
    ay: Op1,
}

impl Op2 {
    fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = self.ax.len();
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for &(jj, cy) in &self.ay[j] {
                    let base = jj * n;
                    for &(ii, cx) in &self.ax[i] {
                        s += cy * cx * f[base + ii];
                    }
                }
                *o = s;
            }
        });
    }

    fn transposed(&self) -> Op2 {
        Op2 {
            ax: transpose(&self.ax),
            ay: transpose(&self.ay),
        }
    }
}

/// Derivative operators of one grid: ∂x, ∂y, ∂xx, ∂xy, ∂yy.
struct Stencils {
    ops: [Op2; 5],
    adj: [Op2; 5],
    weights: Vec<f64>,
}

impl Stencils {
    fn new(n: usize, h: f64) -> Self {
        let (i, d1, d2) = (identity(n), first_difference(n, h), second_difference(n, h));
        let ops = [
            Op2 { ax: d1.clone(), ay: i.clone() },
            Op2 { ax: i.clone(), ay: d1.clone() },
            Op2 { ax: d2.clone(), ay: i.clone() },
            Op2 { ax: d1.clone(), ay: d1 },
            Op2 { ax: i, ay: d2 },
        ];
        let adj = [0, 1, 2, 3, 4].map(|k| ops[k].transposed());
        let trap = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let weights = (0..n * n).map(|k| h * h * trap(k % n) * trap(k / n)).collect();
        Stencils { ops, adj, weights }
    }

    fn derivatives(&self, f: &[f64]) -> [Vec<f64>; 5] {
        let mut out: [Vec<f64>; 5] = Default::default();
        for (o, op) in out.iter_mut().zip(&self.ops) {
            *o = vec![0.0; f.len()];
            op.apply(f, o);
        }
        out
    }

    /// `Σ_k op_kᵀ a_k` added into `acc`.
    fn pull_back(&self, a: &[Vec<f64>; 5], acc: &mut [f64]) {
        let mut tmp = vec![0.0; acc.len()];
        for (op, ak) in self.adj.iter().zip(a) {
            op.apply(ak, &mut tmp);
            acc.iter_mut().zip(&tmp).for_each(|(x, t)| *x += t);
        }
    }
}

/// Loss terms at one node or sample. `d = [gx, gy, hxx, hxy, hyy]`.
/// Returns the HO value and its partials w.r.t. `d` and `v`.
fn ho_local(d: &[f64; 5], v: f64, eps: f64, iso: f64) -> (f64, [f64; 5], f64) {
    let [gx, gy, xx, xy, yy] = *d;
    let u = [xx * gx + xy * gy, xy * gx + yy * gy];
    let uu = u[0] * u[0] + u[1] * u[1];
    let e2 = iso * eps * eps;
    let val = v * v * uu + e2 * (xx * xx + 2.0 * xy * xy + yy * yy);
    let c = 2.0 * v * v;
    let da = [
        c * (xx * u[0] + xy * u[1]),
        c * (xy * u[0] + yy * u[1]),
        c * u[0] * gx + 2.0 * e2 * xx,
        c * (u[0] * gy + u[1] * gx) + 4.0 * e2 * xy,
        c * u[1] * gy + 2.0 * e2 * yy,
    ];
    (val, da, 2.0 * v * uu)
}

fn exp_local(p: f64, alpha: [f64; 3]) -> (f64, f64) {
    let a = p.abs();
    let (mut val, mut dval) = (0.0, 0.0);
    for (k, &al) in alpha.iter().enumerate() {
        let pw = (k + 1) as f64;
        let e = (-al * a.powf(pw)).exp();
        val += e;
        dval += -al * pw * a.powf(pw - 1.0) * e * p.signum();
    }
    (val, dval)
}

/// Which parts of the energy are active.
#[derive(Clone, Copy, Debug)]
struct Phase {
    gammas: Gammas,
    /// `v ≡ 1` (phase 1).
    identity: bool,
    pc_ho: bool,
}

struct Problem<'a> {
    stencils: Stencils,
    cloud: &'a PointCloud,
    surf_w: Vec<f64>,
    eps: f64,
    alpha: [f64; 3],
}

impl Problem<'_> {
    /// γ-weighted terms and gradients w.r.t. nodal φ and v.
    fn energy(&self, f: &NodalFields, ph: Phase) -> (LossBreakdown, Vec<f64>, Vec<f64>) {
        let nn = f.phi.len();
        let g = ph.gammas;
        let eps = self.eps;
        let st = &self.stencils;
        let d = st.derivatives(&f.phi);
        let dv = [st.ops[0].clone_apply(&f.v), st.ops[1].clone_apply(&f.v)];
        let ones = vec![1.0; nn];
        let v = if ph.identity { &ones } else { &f.v };

        // Per node: [ho, at, eik, exp], adjoints of the five derivatives, of φ, of v, of ∇v.
        struct Node {
            e: [f64; 4],
            ad: [f64; 5],
            aphi: f64,
            av: f64,
            agv: [f64; 2],
        }
        let nodes: Vec<Node> = (0..nn)
            .into_par_iter()
            .map(|k| {
                let w = st.weights[k];
                let dk = [d[0][k], d[1][k], d[2][k], d[3][k], d[4][k]];
                let (ho, dho, dv_ho) = ho_local(&dk, v[k], eps, 1.0);
                let q = dk[0] * dk[0] + dk[1] * dk[1] - 1.0;
                let eik = q * q / eps;
                let (ex, dex) = exp_local(f.phi[k], self.alpha);
                let mut ad = [0.0; 5];
                for i in 0..5 {
                    ad[i] = g.ho * w * dho[i];
                }
                ad[0] += g.eik * w * 4.0 * q * dk[0] / eps;
                ad[1] += g.eik * w * 4.0 * q * dk[1] / eps;
                let (mut at, mut av, mut agv) = (0.0, 0.0, [0.0; 2]);
                if !ph.identity {
                    let (vx, vy) = (dv[0][k], dv[1][k]);
                    at = eps * (vx * vx + vy * vy) + (v[k] - 1.0).powi(2) / (4.0 * eps);
                    av = g.ho * w * dv_ho + g.at * w * (v[k] - 1.0) / (2.0 * eps);
                    agv = [g.at * w * 2.0 * eps * vx, g.at * w * 2.0 * eps * vy];
                }
                Node {
                    e: [w * ho, w * at, w * eik, w * ex],
                    ad,
                    aphi: g.exp * w * dex,
                    av,
                    agv,
                }
            })
            .collect();

        let mut out = LossBreakdown::default();
        let mut sums = [0.0; 4];
        for nd in &nodes {
            for i in 0..4 {
                sums[i] += nd.e[i];
            }
        }
        out.ho = g.ho * sums[0];
        out.at = if ph.identity { 0.0 } else { g.at * sums[1] };
        out.eik = g.eik * sums[2];
        out.exp = g.exp * sums[3];

        let mut ad: [Vec<f64>; 5] = [0, 1, 2, 3, 4].map(|i| nodes.iter().map(|nd| nd.ad[i]).collect());
        let mut gphi: Vec<f64> = nodes.iter().map(|nd| nd.aphi).collect();
        let mut gv: Vec<f64> = nodes.iter().map(|nd| nd.av).collect();

        // Surface terms through bilinear interpolation.
        let mut recon = 0.0;
        let mut pc = 0.0;
        for (p, &ws) in self.cloud.iter().zip(&self.surf_w) {
            let b = f.bilinear(p);
            let phi = NodalFields::sample(&f.phi, &b);
            recon += ws * phi * phi;
            for &(k, c) in &b {
                gphi[k] += g.recon * 2.0 * ws * phi * c / (eps * eps);
            }
            if ph.pc_ho {
                let dk = [0, 1, 2, 3, 4].map(|i| NodalFields::sample(&d[i], &b));
                let vs = if ph.identity { 1.0 } else { NodalFields::sample(&f.v, &b) };
                let (val, dho, _) = ho_local(&dk, vs, eps, 0.0);
                pc += ws * val;
                for &(k, c) in &b {
                    for i in 0..5 {
                        ad[i][k] += g.ho * ws * dho[i] * c;
                    }
                }
            }
        }
        out.recon = g.recon * recon / (eps * eps);
        out.pc_ho = if ph.pc_ho { g.ho * pc } else { 0.0 };

        st.pull_back(&ad, &mut gphi);
        if !ph.identity {
            let agv = [
                nodes.iter().map(|nd| nd.agv[0]).collect::<Vec<_>>(),
                nodes.iter().map(|nd| nd.agv[1]).collect::<Vec<_>>(),
            ];
            let mut tmp = vec![0.0; nn];
            for (op, a) in st.adj[..2].iter().zip(&agv) {
                op.apply(a, &mut tmp);
                gv.iter_mut().zip(&tmp).for_each(|(x, t)| *x += t);
            }
        } else {
            gv.iter_mut().for_each(|x| *x = 0.0);
        }
        (out, gphi, gv)
    }
}

impl Op2 {
    fn clone_apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply(f, &mut out);
        out
    }
}

#[derive(Clone, Debug)]
pub struct GridRun {
    pub fields: NodalFields,
    /// Total γ-weighted energy before each update.
    pub energy: Vec<f64>,
    pub last: LossBreakdown,
}

fn phase_at(config: &GridConfig, it: usize) -> (Phase, f64) {
    let s = &config.schedule;
    let epoch = config.epoch_of(it);
    let decays = config.lr_decay_epochs.iter().filter(|&&e| e as f64 <= epoch).count() as i32;
    (
        Phase {
            gammas: s.gammas(epoch.floor()),
            identity: epoch < s.phase2_start as f64,
            pc_ho: epoch >= s.phase3_start as f64,
        },
        config.lr_decay.powi(decays),
    )
}

/// Adam on nodal φ and v under the three-phase schedule, the iteration
/// budget spread evenly over the schedule's epochs.
pub fn minimize_grid(cloud: &PointCloud, config: &GridConfig) -> Result<GridRun> {
    config.validate()?;
    if cloud.dim != 2 {
        return Err(Error::Dimension(format!("grid reference is 2D only, got a {}D cloud", cloud.dim)));
    }
    let n = config.resolution;
    let mut fields = NodalFields::from_cloud(n, cloud)?;
    let problem = Problem {
        stencils: Stencils::new(n, fields.h),
        cloud,
        surf_w: surface_weights(cloud)?,
        eps: config.schedule.eps,
        alpha: config.schedule.alpha,
    };
    let mut adam_phi = AdamState::new(n * n, config.betas.0, config.betas.1);
    let mut adam_v = AdamState::new(n * n, config.betas.0, config.betas.1);
    let mut energy = Vec::with_capacity(config.iterations);
    let mut last = LossBreakdown::default();
    for it in 0..config.iterations {
        let (ph, f) = phase_at(config, it);
        let (b, gphi, gv) = problem.energy(&fields, ph);
        b.check_finite()?;
        energy.push(b.total());
        adam_phi.step(&mut fields.phi, &gphi, config.lr_phi * f)?;
        if !ph.identity && !ph.pc_ho {
            adam_v.step(&mut fields.v, &gv, config.lr_v * f)?;
            fields.v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
        }
        if it % 1000 == 0 {
            debug!("grid iteration {it}: energy {:.6e}", b.total());
        }
        last = b;
    }
    info!("grid reference finished: energy {:.6e}", last.total());
    Ok(GridRun { fields, energy, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnalyticShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stencils_are_exact_on_quadratics() {
        let n = 33;
        let f = NodalFields::initial(n);
        let st = Stencils::new(n, f.h);
        let q: Vec<f64> = (0..n * n)
            .map(|k| {
                let [x, y] = f.node(k);
                x * x + 3.0 * x * y - 2.0 * y * y + x
            })
            .collect();
        let d = st.derivatives(&q);
        for k in 0..n * n {
            let [x, y] = f.node(k);
            let want = [2.0 * x + 3.0 * y + 1.0, 3.0 * x - 4.0 * y, 2.0, 3.0, -4.0];
            for i in 0..5 {
                assert!((d[i][k] - want[i]).abs() < 1e-9, "op {i} node {k}");
            }
        }
        let total: f64 = st.weights.iter().sum();
        assert!((total - 2.4 * 2.4).abs() < 1e-12);
    }

    #[test]
    fn transposed_operators_are_adjoint() {
        let n = 32;
        let st = Stencils::new(n, 0.1);
        let a: Vec<f64> = (0..n * n).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..n * n).map(|k| ((k * 13) % 7) as f64 - 3.0).collect();
        for (op, adj) in st.ops.iter().zip(&st.adj) {
            let lhs: f64 = op.clone_apply(&a).iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = adj.clone_apply(&b).iter().zip(&a).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn energy_gradient_matches_differences() {
        let n = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = AnalyticShape::Circle { radius: 0.5 }.sample_surface(200, &mut rng);
        let mut f = NodalFields::initial(n);
        for k in 0..n * n {
            f.v[k] = 0.5 + 0.4 * ((k as f64) * 0.7).sin();
            f.phi[k] += 0.05 * ((k as f64) * 1.3).cos();
        }
        let mut schedule = LossSchedule::reference(2);
        schedule.eps = 0.05;
        let problem = Problem {
            stencils: Stencils::new(n, f.h),
            cloud: &cloud,
            surf_w: surface_weights(&cloud).unwrap(),
            eps: schedule.eps,
            alpha: [1.0, 2.0, 3.0],
        };
        let ph = Phase {
            gammas: Gammas::new([1.0, 0.7, 0.3, 0.2, 0.9]),
            identity: false,
            pc_ho: true,
        };
        let (_, gphi, gv) = problem.energy(&f, ph);
        let h = 1e-6;
        for k in [0, 5, 40, 33 * 7, 500, n * n - 1] {
            for which in 0..2 {
                let mut p = f.clone();
                let mut m = f.clone();
                if which == 0 {
                    p.phi[k] += h;
                    m.phi[k] -= h;
                } else {
                    p.v[k] += h;
                    m.v[k] -= h;
                }
                let fd = (problem.energy(&p, ph).0.total() - problem.energy(&m, ph).0.total()) / (2.0 * h);
                let an = if which == 0 { gphi[k] } else { gv[k] };
                assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1.0), "node {k} field {which}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn raster_round_trip_and_images() {
        let f = NodalFields::initial(40);
        let dir = tempfile::tempdir().unwrap();
        f.write_outputs(dir.path()).unwrap();
        let (res, phi) = NodalFields::read_raster(&dir.path().join("phi.raw")).unwrap();
        assert_eq!(res, 40);
        assert_eq!(phi, f.phi);
        assert!(dir.path().join("v.pgm").exists());
        assert!(matches!(
            NodalFields::read_raster(&dir.path().join("none.raw")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn bilinear_reproduces_linear_functions() {
        let mut f = NodalFields::initial(40);
        for k in 0..f.phi.len() {
            let [x, y] = f.node(k);
            f.phi[k] = 2.0 * x - y + 0.5;
        }
        for x in [[0.13, -0.71], [1.2, 1.2], [-1.2, 0.0]] {
            assert!((f.phi_at(&x) - (2.0 * x[0] - x[1] + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_grids_and_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c2 = AnalyticShape::Circle { radius: 0.5 }.sample_surface(50, &mut rng);
        let c3 = AnalyticShape::Sphere { radius: 0.5 }.sample_surface(50, &mut rng);
        let mut cfg = GridConfig::reference();
        cfg.resolution = 16;
        assert!(minimize_grid(&c2, &cfg).is_err());
        assert!(minimize_grid(&c3, &GridConfig::reference()).is_err());
    }
}
