//! Three-phase Adam training of the distance and phase-field networks.

mod adam;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{clip_global_norm, AdamState};

use crate::diffjet::{Jet2, JetBatch, Order};
use crate::geometry::{uniform_in_domain, PointCloud};
use crate::loss::{total_loss, Gammas, LossBreakdown, LossInputs, LossSchedule, QuadratureBatch};
use crate::nets::{save_checkpoint, Checkpoint, PfArch, PhaseFieldNetwork, SdfArch, SdfNetwork};
use crate::sampler::{surface_weights, AdaptiveGrid, SamplerConfig};
use crate::{Error, Result};

/// Independent random stream `k` derived from the run seed.
pub fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

const STREAM_SDF_INIT: u64 = 1;
const STREAM_PF_INIT: u64 = 2;
const STREAM_PRETRAIN: u64 = 3;
const STREAM_EPOCH: u64 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOptions {
    pub max_steps: usize,
    /// Held-out RMSE of the values.
    pub tol: f64,
    /// Held-out RMSE of the gradients.
    pub grad_tol: f64,
    pub lr: f64,
    pub batch: usize,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            max_steps: 50_000,
            tol: 1e-2,
            grad_tol: 5e-2,
            lr: 1e-3,
            batch: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimOptions {
    pub steps_per_epoch: usize,
    pub lr_sdf: f64,
    pub lr_pf: f64,
    pub beta_sdf: (f64, f64),
    pub beta_pf: (f64, f64),
    /// Epochs at whose start both learning rates are multiplied by `lr_decay`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay: f64,
    pub clip_norm: f64,
    /// Surface points per step; 0 uses the whole cloud.
    pub surface_batch: usize,
    /// Keep `v ≡ 1` for the whole run.
    pub ablate_phase_field: bool,
    pub pretrain: PretrainOptions,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            steps_per_epoch: 200,
            lr_sdf: 5e-5,
            lr_pf: 5e-4,
            beta_sdf: (0.9, 0.98),
            beta_pf: (0.9, 0.999),
            lr_decay_epochs: vec![10, 20],
            lr_decay: 0.5,
            clip_norm: 10.0,
            surface_batch: 0,
            ablate_phase_field: false,
            pretrain: PretrainOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub sdf: SdfArch,
    pub pf: PfArch,
    pub schedule: LossSchedule,
    pub sampler: SamplerConfig,
    pub optim: OptimOptions,
    pub seed: u64,
}

impl TrainConfig {
    pub fn reference(dim: usize) -> Self {
        TrainConfig {
            sdf: SdfArch::reference(dim),
            pf: PfArch::reference(dim),
            schedule: LossSchedule::reference(dim),
            sampler: SamplerConfig::reference(dim),
            optim: OptimOptions::default(),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sdf.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.sdf.validate()?;
        self.pf.validate()?;
        self.schedule.validate()?;
        self.sampler.validate()?;
        if self.sdf.dim != self.pf.dim {
            return Err(Error::Dimension(format!(
                "sdf is {}D, phase field is {}D",
                self.sdf.dim, self.pf.dim
            )));
        }
        let o = &self.optim;
        if o.steps_per_epoch == 0 || !(o.lr_sdf > 0.0 && o.lr_pf > 0.0 && o.clip_norm > 0.0) {
            return Err(Error::InvalidArgument(
                "steps per epoch, learning rates and clip norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the schedule decides for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochPlan {
    pub gammas: Gammas,
    pub lr_sdf: f64,
    pub lr_pf: f64,
    /// Phase-field parameters are not updated.
    pub pf_frozen: bool,
    /// `v ≡ 1` replaces the phase-field network.
    pub pf_identity: bool,
    /// Evaluate the second-order term on the point cloud.
    pub pc_ho: bool,
}

pub fn schedule(config: &TrainConfig, epoch: usize) -> Result<EpochPlan> {
    let s = &config.schedule;
    if epoch >= s.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside [0, {})",
            s.epochs
        )));
    }
    let o = &config.optim;
    let decays = o.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count() as i32;
    let f = o.lr_decay.powi(decays);
    let phase3 = epoch >= s.phase3_start;
    let identity = epoch < s.phase2_start || o.ablate_phase_field;
    Ok(EpochPlan {
        gammas: s.gammas(epoch as f64),
        lr_sdf: o.lr_sdf * f,
        lr_pf: o.lr_pf * f,
        pf_frozen: identity || phase3,
        pf_identity: identity,
        pc_ho: phase3,
    })
}

fn jets_to_seed(adj: &[Jet2], dim: usize, order: Order) -> JetBatch {
    let mut seed = JetBatch::zeros(dim, order, 1, adj.len());
    for (s, j) in adj.iter().enumerate() {
        seed.set_jet(0, s, j);
    }
    seed
}

fn sphere_target(points: &[f64], dim: usize) -> Vec<f64> {
    points
        .chunks_exact(dim)
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0)
        .collect()
}

/// Fit `φ(x) ≈ ‖x‖ − 1` (values and gradients) on uniform samples of Ω.
/// Returns the held-out RMSE of the values.
pub fn pretrain_sphere(net: &mut SdfNetwork, opts: &PretrainOptions, rng: &mut impl Rng) -> Result<f64> {
    let dim = net.dim();
    let held_out = uniform_in_domain(dim, 10_000, rng);
    let held_target = sphere_target(&held_out, dim);
    let mut adam = AdamState::new(net.n_params(), 0.9, 0.999);
    let held_errors = |net: &SdfNetwork| -> Result<(f64, f64)> {
        let mut v = 0.0;
        let mut g = 0.0;
        for (c, t) in held_out.chunks(2048 * dim).zip(held_target.chunks(2048)) {
            for (j, (p, t)) in net.forward_batch(c, Order::First)?.iter().zip(c.chunks_exact(dim).zip(t)) {
                let r = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                v += (j.value - t).powi(2);
                g += (0..dim).map(|k| (j.grad[k] - p[k] / r).powi(2)).sum::<f64>();
            }
        }
        let n = held_target.len() as f64;
        Ok(((v / n).sqrt(), (g / n).sqrt()))
    };
    let (mut err, mut grad_err) = held_errors(net)?;
    let mut step = 0;
    while (err >= opts.tol || grad_err >= opts.grad_tol) && step < opts.max_steps {
        for _ in 0..100.min(opts.max_steps - step) {
            let x = uniform_in_domain(dim, opts.batch, rng);
            let target = sphere_target(&x, dim);
            let (tape, out) = net.tape(&x, Order::First)?;
            let y = tape.value(out);
            let scale = 2.0 / opts.batch as f64;
            // value and gradient residuals against ‖x‖ − 1 and x/‖x‖
            let adj: Vec<Jet2> = x
                .chunks_exact(dim)
                .enumerate()
                .map(|(i, p)| {
                    let j = y.jet(0, i);
                    let r = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                    let mut a = Jet2::constant(dim, scale * (j.value - target[i]));
                    for k in 0..dim {
                        a.grad[k] = scale * (j.grad[k] - p[k] / r);
                    }
                    a
                })
                .collect();
            let grads = tape.backward(out, &jets_to_seed(&adj, dim, Order::First))?;
            drop(tape);
            adam.step(net.params_mut(), &grads, opts.lr)?;
            step += 1;
        }
        (err, grad_err) = held_errors(net)?;
    }
    if err >= opts.tol || grad_err >= opts.grad_tol {
        warn!("sphere pretraining stopped at {step} steps with RMSE {err:.3e} (gradient {grad_err:.3e})");
    } else {
        info!("sphere pretraining converged in {step} steps (RMSE {err:.3e}, gradient {grad_err:.3e})");
    }
    Ok(err)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean: LossBreakdown,
    pub cells: usize,
    pub batch: usize,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub sdf: SdfNetwork,
    pub pf: PhaseFieldNetwork,
    pub adam_sdf: AdamState,
    pub adam_pf: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    cloud: PointCloud,
    surf_weights: Vec<f64>,
    out_dir: Option<PathBuf>,
    log: Option<BufWriter<File>>,
    global_step: usize,
}

impl Trainer {
    /// Fresh networks; the distance network is pretrained to the unit sphere.
    pub fn new(config: TrainConfig, cloud: PointCloud) -> Result<Self> {
        let (sdf, pf) = Self::initial_networks(&config)?;
        Self::from_networks(config, cloud, sdf, pf)
    }

    /// The networks `new` starts from. They depend only on the
    /// architectures, the pretraining options and the seed, so runs that
    /// differ elsewhere can share them.
    pub fn initial_networks(config: &TrainConfig) -> Result<(SdfNetwork, PhaseFieldNetwork)> {
        config.validate()?;
        let seed = config.seed;
        let mut sdf = SdfNetwork::init(config.sdf, stream(seed, STREAM_SDF_INIT).gen())?;
        let pf = PhaseFieldNetwork::init(config.pf, stream(seed, STREAM_PF_INIT).gen())?;
        pretrain_sphere(&mut sdf, &config.optim.pretrain, &mut stream(seed, STREAM_PRETRAIN))?;
        Ok((sdf, pf))
    }

    /// Start epoch 0 from the given networks with fresh optimizer state.
    pub fn from_networks(config: TrainConfig, cloud: PointCloud, sdf: SdfNetwork, pf: PhaseFieldNetwork) -> Result<Self> {
        config.validate()?;
        if sdf.arch() != &config.sdf || pf.arch() != &config.pf {
            return Err(Error::ArchitectureMismatch("networks do not match the configuration".into()));
        }
        Self::assemble(config, cloud, sdf, pf, None, 0)
    }

    /// Continue from a checkpoint written by an earlier run.
    pub fn resume(config: TrainConfig, cloud: PointCloud, ckpt: Checkpoint) -> Result<Self> {
        config.validate()?;
        ckpt.check_arch(&config.sdf, &config.pf)?;
        let adam = Some((ckpt.adam_sdf, ckpt.adam_pf));
        Self::assemble(config, cloud, ckpt.sdf, ckpt.pf, adam, ckpt.epoch)
    }

    fn assemble(
        config: TrainConfig,
        cloud: PointCloud,
        sdf: SdfNetwork,
        pf: PhaseFieldNetwork,
        adam: Option<(AdamState, AdamState)>,
        epoch: usize,
    ) -> Result<Self> {
        if cloud.dim != config.dim() {
            return Err(Error::Dimension(format!(
                "{}D cloud for a {}D run",
                cloud.dim,
                config.dim()
            )));
        }
        let surf_weights = surface_weights(&cloud)?;
        let o = &config.optim;
        let (adam_sdf, adam_pf) = adam.unwrap_or_else(|| {
            (
                AdamState::new(sdf.n_params(), o.beta_sdf.0, o.beta_sdf.1),
                AdamState::new(pf.n_params(), o.beta_pf.0, o.beta_pf.1),
            )
        });
        Ok(Trainer {
            config,
            sdf,
            pf,
            adam_sdf,
            adam_pf,
            epoch,
            history: Vec::new(),
            cloud,
            surf_weights,
            out_dir: None,
            log: None,
            global_step: 0,
        })
    }

    /// Write the step log and per-epoch checkpoints into `dir`.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut log = BufWriter::new(File::create(dir.join("train_log.csv"))?);
        writeln!(
            log,
            "epoch,step,total,ho,at,recon,eik,exp,pc_ho,lr_sdf,lr_pf,g_ho,g_at,g_recon,g_eik,g_exp"
        )?;
        self.log = Some(log);
        self.out_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            sdf: self.sdf.clone(),
            pf: self.pf.clone(),
            adam_sdf: self.adam_sdf.clone(),
            adam_pf: self.adam_pf.clone(),
            epoch: self.epoch,
            seed: self.config.seed,
        }
    }

    /// Refined grid for the current fields (Alg. 1 lines 1–13).
    pub fn build_grid(&self, plan: &EpochPlan, rng: &mut impl Rng) -> Result<AdaptiveGrid> {
        let dim = self.config.dim();
        let test = uniform_in_domain(dim, self.config.sampler.test_points, rng);
        let phi = self.sdf.values(&test);
        let v = (!plan.pf_identity).then(|| self.pf.values(&test));
        AdaptiveGrid::build(&self.config.sampler, dim, &test, &phi, v.as_deref())
    }

    /// Loss terms and parameter gradients for one volume batch and surface
    /// subset. The phase-field gradient is empty when the plan does not
    /// train it.
    pub fn loss_and_gradients(
        &self,
        plan: &EpochPlan,
        batch: &QuadratureBatch,
        surf: &[usize],
    ) -> Result<(LossBreakdown, Vec<f64>, Vec<f64>)> {
        let (loss, grads) = self.evaluate(plan, batch, surf, true)?;
        let (g_sdf, g_pf) = grads.expect("gradients requested");
        Ok((loss, g_sdf, g_pf))
    }

    fn evaluate(
        &self,
        plan: &EpochPlan,
        batch: &QuadratureBatch,
        surf: &[usize],
        with_grads: bool,
    ) -> Result<(LossBreakdown, Option<(Vec<f64>, Vec<f64>)>)> {
        let dim = self.config.dim();
        let surf_pts: Vec<f64> = surf.iter().flat_map(|&i| self.cloud.point(i).to_vec()).collect();
        let scale = self.cloud.len() as f64 / surf.len() as f64;
        let surf_w: Vec<f64> = surf.iter().map(|&i| self.surf_weights[i] * scale).collect();
        let surf_order = if plan.pc_ho { Order::Second } else { Order::Value };
        let use_pf = !plan.pf_identity;
        let s = &self.config.schedule;

        let (vt, vo) = self.sdf.tape(&batch.points, Order::Second)?;
        let (st, so) = self.sdf.tape(&surf_pts, surf_order)?;
        let pf_vol = if use_pf { Some(self.pf.tape(&batch.points, Order::First)?) } else { None };
        let pf_surf = if use_pf && plan.pc_ho {
            Some(self.pf.tape(&surf_pts, Order::First)?)
        } else {
            None
        };
        let jets = |t: &crate::diffjet::Tape<'_>, o| {
            let y = t.value(o);
            (0..y.batch()).map(|i| y.jet(0, i)).collect::<Vec<Jet2>>()
        };
        let vol_sdf = jets(&vt, vo);
        let surf_sdf = jets(&st, so);
        let vol_pf = pf_vol.as_ref().map(|(t, o)| jets(t, *o));
        let surf_pf = pf_surf.as_ref().map(|(t, o)| jets(t, *o));
        let inputs = LossInputs {
            vol_sdf: &vol_sdf,
            vol_pf: vol_pf.as_deref(),
            vol_weights: &batch.weights,
            surf_sdf: &surf_sdf,
            surf_pf: surf_pf.as_deref(),
            surf_weights: &surf_w,
            pc_ho: plan.pc_ho,
        };
        let (loss, adj) = total_loss(&inputs, plan.gammas, s.eps, s.alpha, with_grads)?;
        let Some(adj) = adj else {
            return Ok((loss, None));
        };

        let mut g_sdf = vec![0.0; self.sdf.n_params()];
        vt.backward_into(vo, &jets_to_seed(&adj.vol_sdf, dim, Order::Second), &mut g_sdf)?;
        st.backward_into(so, &jets_to_seed(&adj.surf_sdf, dim, surf_order), &mut g_sdf)?;
        let mut g_pf = Vec::new();
        if use_pf && !plan.pf_frozen {
            g_pf = vec![0.0; self.pf.n_params()];
            if let (Some((t, o)), Some(a)) = (&pf_vol, &adj.vol_pf) {
                t.backward_into(*o, &jets_to_seed(a, dim, Order::First), &mut g_pf)?;
            }
            if let (Some((t, o)), Some(a)) = (&pf_surf, &adj.surf_pf) {
                t.backward_into(*o, &jets_to_seed(a, dim, Order::First), &mut g_pf)?;
            }
        }
        Ok((loss, Some((g_sdf, g_pf))))
    }

    /// Loss for one volume batch and surface subset; optionally applies the
    /// gradient step.
    pub fn step(&mut self, plan: &EpochPlan, batch: &QuadratureBatch, surf: &[usize], update: bool) -> Result<LossBreakdown> {
        let (loss, grads) = self.evaluate(plan, batch, surf, update)?;
        let Some((mut g_sdf, mut g_pf)) = grads else {
            return Ok(loss);
        };
        let clip = self.config.optim.clip_norm;
        clip_global_norm(&mut g_sdf, clip);
        self.adam_sdf.step(self.sdf.params_mut(), &g_sdf, plan.lr_sdf)?;
        if !g_pf.is_empty() {
            clip_global_norm(&mut g_pf, clip);
            self.adam_pf.step(self.pf.params_mut(), &g_pf, plan.lr_pf)?;
        }
        Ok(loss)
    }

    fn surface_subset(&self, rng: &mut impl Rng) -> Vec<usize> {
        let n = self.cloud.len();
        let b = self.config.optim.surface_batch;
        if b == 0 || b >= n {
            (0..n).collect()
        } else {
            let mut idx = sample(rng, n, b).into_vec();
            idx.sort_unstable();
            idx
        }
    }

    /// One epoch: rebuild the grid, then `steps_per_epoch` updates on fresh
    /// batches. Writes a checkpoint afterwards when an output is set.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.epoch;
        let plan = schedule(&self.config, epoch)?;
        let mut rng = stream(self.config.seed, STREAM_EPOCH + epoch as u64);
        let grid = self.build_grid(&plan, &mut rng)?;
        let steps = self.config.optim.steps_per_epoch;
        let mut mean = LossBreakdown::default();
        let mut batch_len = 0;
        for k in 0..steps {
            let batch = grid.draw_batch(self.config.sampler.batch, &mut rng);
            batch_len = batch.len();
            let surf = self.surface_subset(&mut rng);
            let loss = match self.step(&plan, &batch, &surf, true) {
                Ok(l) => l,
                Err(e) => {
                    warn!("epoch {epoch} step {k}: {e}; last good checkpoint is kept");
                    return Err(e);
                }
            };
            self.log_step(epoch, &plan, &loss)?;
            for ((_, m), (_, l)) in mean.terms_mut().into_iter().zip(loss.terms()) {
                *m += l / steps as f64;
            }
            self.global_step += 1;
        }
        self.epoch += 1;
        let stats = EpochStats {
            epoch,
            mean,
            cells: grid.cells.len(),
            batch: batch_len,
        };
        info!(
            "epoch {epoch}: loss {:.4e} ({} cells, {} samples)",
            stats.mean.total(),
            stats.cells,
            stats.batch
        );
        if let Some(dir) = &self.out_dir {
            save_checkpoint(dir.join(format!("epoch_{epoch:03}.ckpt")), &self.checkpoint())?;
        }
        self.history.push(stats.clone());
        Ok(stats)
    }

    /// Run the remaining epochs and write `final.ckpt` when an output is set.
    pub fn train(&mut self) -> Result<()> {
        while self.epoch < self.config.schedule.epochs {
            self.run_epoch()?;
        }
        if let Some(dir) = &self.out_dir {
            save_checkpoint(dir.join("final.ckpt"), &self.checkpoint())?;
        }
        if let Some(log) = self.log.as_mut() {
            log.flush()?;
        }
        Ok(())
    }

    fn log_step(&mut self, epoch: usize, plan: &EpochPlan, loss: &LossBreakdown) -> Result<()> {
        let step = self.global_step;
        if let Some(log) = self.log.as_mut() {
            let g = plan.gammas;
            writeln!(
                log,
                "{epoch},{step},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{}",
                loss.total(),
                loss.ho,
                loss.at,
                loss.recon,
                loss.eik,
                loss.exp,
                loss.pc_ho,
                plan.lr_sdf,
                plan.lr_pf,
                g.ho,
                g.at,
                g.recon,
                g.eik,
                g.exp
            )?;
        }
        Ok(())
    }
}
