//! Run configuration as flat `key = value` text with section prefixes.
//!
//! ```text
//! # circle run
//! dim = 2
//! shape = circle
//! sampler.m = 16
//! optim.lr_sdf = 1e-4
//! ```
//!
//! `dim` picks the defaults and must come before any other key.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::geometry::{io, AnalyticShape};
use crate::gridref::GridConfig;
use crate::metrics::EvalOptions;
use crate::render::{Camera, TraceOptions};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub camera: Camera,
    pub trace: TraceOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Analytic shape name or a point-cloud / OBJ file.
    pub shape: String,
    /// Samples drawn from analytic shapes and meshes.
    pub points: usize,
    /// Ground truth for evaluation; empty means `shape`.
    pub ground_truth: String,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub grid: GridConfig,
    pub render: RenderOptions,
    /// Marching resolution (cells per axis) of `extract`.
    pub extract_resolution: usize,
    pub out: PathBuf,
}

impl RunConfig {
    /// Paper-scale defaults.
    pub fn reference(dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        Ok(RunConfig {
            shape: if dim == 2 { "circle" } else { "sphere" }.into(),
            points: if dim == 2 { 1000 } else { 20_000 },
            ground_truth: String::new(),
            train: TrainConfig::reference(dim),
            eval: EvalOptions::reference(dim),
            grid: GridConfig::reference(),
            render: RenderOptions {
                camera: Camera::default_view(256, 256),
                trace: TraceOptions::network(),
            },
            extract_resolution: if dim == 2 { 256 } else { 128 },
            out: PathBuf::from("runs/out"),
        })
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    pub fn analytic_shape(&self) -> Option<AnalyticShape> {
        AnalyticShape::by_name(&self.shape).ok()
    }

    pub fn ground_truth_name(&self) -> &str {
        if self.ground_truth.is_empty() {
            &self.shape
        } else {
            &self.ground_truth
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Option<RunConfig> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: lineno,
                key: line.to_string(),
                msg: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let err = |msg: String| Error::Config {
                line: lineno,
                key: key.to_string(),
                msg,
            };
            if key == "dim" {
                if cfg.is_some() {
                    return Err(err("`dim` must be the first key and appear once".into()));
                }
                let d: usize = parse_value(value).map_err(err)?;
                cfg = Some(RunConfig::reference(d).map_err(|e| err(e.to_string()))?);
                continue;
            }
            let c = cfg.get_or_insert_with(|| RunConfig::reference(2).unwrap());
            c.set(key, value).map_err(err)?;
        }
        let cfg = match cfg {
            Some(c) => c,
            None => RunConfig::reference(2)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let cfg_err = |key: &str, msg: &str| Error::Config {
            line: 0,
            key: key.into(),
            msg: msg.into(),
        };
        if self.shape.is_empty() {
            return Err(cfg_err("shape", "empty"));
        }
        if self.eval.resolution < 2 || self.extract_resolution < 2 {
            return Err(cfg_err("eval.resolution", "marching needs at least 2 cells"));
        }
        if self.eval.band[0] >= self.eval.band[1] {
            return Err(cfg_err("eval.band", "empty interval"));
        }
        let c = &self.render.camera;
        Camera::new(c.eye, c.look_at, c.up, c.fov_y, c.width, c.height)?;
        Ok(())
    }

    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        let v = value;
        match key {
            "shape" => self.shape = v.to_string(),
            "points" => self.points = parse_value(v)?,
            "ground_truth" => self.ground_truth = v.to_string(),
            "seed" => self.set_seed(parse_value(v)?),
            "out" => self.out = PathBuf::from(v),

            "sdf.width" => t.sdf.width = parse_value(v)?,
            "sdf.depth" => t.sdf.depth = parse_value(v)?,
            "sdf.omega0" => t.sdf.omega0 = parse_value(v)?,

            "pf.width" => t.pf.width = parse_value(v)?,
            "pf.blocks" => t.pf.blocks = parse_value(v)?,
            "pf.omega0" => t.pf.omega0 = parse_value(v)?,
            "pf.delta" => t.pf.delta = parse_value(v)?,
            "pf.head_bias" => t.pf.head_bias = parse_value(v)?,

            "loss.eps" => t.schedule.eps = parse_value(v)?,
            "loss.alpha" => t.schedule.alpha = parse_array(v)?,
            "loss.gamma_phase1" => t.schedule.gamma_phase1 = crate::loss::Gammas::new(parse_array(v)?),
            "loss.gamma_final" => t.schedule.gamma_final = crate::loss::Gammas::new(parse_array(v)?),
            "loss.phase2_start" => t.schedule.phase2_start = parse_value(v)?,
            "loss.phase3_start" => t.schedule.phase3_start = parse_value(v)?,
            "loss.epochs" => t.schedule.epochs = parse_value(v)?,

            "sampler.n" => t.sampler.batch = parse_value(v)?,
            "sampler.test_points" => t.sampler.test_points = parse_value(v)?,
            "sampler.m" => t.sampler.cells = parse_value(v)?,
            "sampler.k" => t.sampler.depth = parse_value(v)?,
            "sampler.tau_sdf" => t.sampler.tau_sdf = parse_value(v)?,
            "sampler.tau_pf" => t.sampler.tau_pf = parse_value(v)?,

            "optim.steps_per_epoch" => t.optim.steps_per_epoch = parse_value(v)?,
            "optim.lr_sdf" => t.optim.lr_sdf = parse_value(v)?,
            "optim.lr_pf" => t.optim.lr_pf = parse_value(v)?,
            "optim.beta_sdf" => t.optim.beta_sdf = parse_pair(v)?,
            "optim.beta_pf" => t.optim.beta_pf = parse_pair(v)?,
            "optim.lr_decay_epochs" => t.optim.lr_decay_epochs = parse_list(v)?,
            "optim.lr_decay" => t.optim.lr_decay = parse_value(v)?,
            "optim.clip_norm" => t.optim.clip_norm = parse_value(v)?,
            "optim.surface_batch" => t.optim.surface_batch = parse_value(v)?,
            "optim.ablate_phase_field" => t.optim.ablate_phase_field = parse_value(v)?,

            "pretrain.max_steps" => t.optim.pretrain.max_steps = parse_value(v)?,
            "pretrain.tol" => t.optim.pretrain.tol = parse_value(v)?,
            "pretrain.grad_tol" => t.optim.pretrain.grad_tol = parse_value(v)?,
            "pretrain.lr" => t.optim.pretrain.lr = parse_value(v)?,
            "pretrain.batch" => t.optim.pretrain.batch = parse_value(v)?,

            "eval.surface_samples" => self.eval.surface_samples = parse_value(v)?,
            "eval.omega_samples" => self.eval.omega_samples = parse_value(v)?,
            "eval.band_samples" => self.eval.band_samples = parse_value(v)?,
            "eval.band" => self.eval.band = parse_array(v)?,
            "eval.resolution" => self.eval.resolution = parse_value(v)?,
            "eval.brute_force" => self.eval.brute_force = parse_value(v)?,

            "extract.resolution" => self.extract_resolution = parse_value(v)?,

            "grid.resolution" => self.grid.resolution = parse_value(v)?,
            "grid.iterations" => self.grid.iterations = parse_value(v)?,
            "grid.lr_phi" => self.grid.lr_phi = parse_value(v)?,
            "grid.lr_v" => self.grid.lr_v = parse_value(v)?,

            "render.width" => self.render.camera.width = parse_value(v)?,
            "render.height" => self.render.camera.height = parse_value(v)?,
            "render.fov" => self.render.camera.fov_y = parse_value(v)?,
            "render.eye" => self.render.camera.eye = parse_array(v)?,
            "render.look_at" => self.render.camera.look_at = parse_array(v)?,
            "render.up" => self.render.camera.up = parse_array(v)?,
            "render.tolerance" => self.render.trace.tolerance = parse_value(v)?,
            "render.max_iter" => self.render.trace.max_iter = parse_value(v)?,
            "render.step_scale" => self.render.trace.step_scale = parse_value(v)?,
            _ => return Err("unknown key".into()),
        }
        // The grid reference shares the loss schedule.
        self.grid.schedule = self.train.schedule.clone();
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let s = &t.schedule;
        let o = &t.optim;
        let c = &self.render.camera;
        vec![
            ("dim", t.dim().to_string()),
            ("shape", self.shape.clone()),
            ("points", self.points.to_string()),
            ("ground_truth", self.ground_truth.clone()),
            ("seed", t.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("sdf.width", t.sdf.width.to_string()),
            ("sdf.depth", t.sdf.depth.to_string()),
            ("sdf.omega0", t.sdf.omega0.to_string()),
            ("pf.width", t.pf.width.to_string()),
            ("pf.blocks", t.pf.blocks.to_string()),
            ("pf.omega0", t.pf.omega0.to_string()),
            ("pf.delta", t.pf.delta.to_string()),
            ("pf.head_bias", t.pf.head_bias.to_string()),
            ("loss.eps", s.eps.to_string()),
            ("loss.alpha", join(&s.alpha)),
            ("loss.gamma_phase1", join(&s.gamma_phase1.to_array())),
            ("loss.gamma_final", join(&s.gamma_final.to_array())),
            ("loss.phase2_start", s.phase2_start.to_string()),
            ("loss.phase3_start", s.phase3_start.to_string()),
            ("loss.epochs", s.epochs.to_string()),
            ("sampler.n", t.sampler.batch.to_string()),
            ("sampler.test_points", t.sampler.test_points.to_string()),
            ("sampler.m", t.sampler.cells.to_string()),
            ("sampler.k", t.sampler.depth.to_string()),
            ("sampler.tau_sdf", t.sampler.tau_sdf.to_string()),
            ("sampler.tau_pf", t.sampler.tau_pf.to_string()),
            ("optim.steps_per_epoch", o.steps_per_epoch.to_string()),
            ("optim.lr_sdf", o.lr_sdf.to_string()),
            ("optim.lr_pf", o.lr_pf.to_string()),
            ("optim.beta_sdf", join(&[o.beta_sdf.0, o.beta_sdf.1])),
            ("optim.beta_pf", join(&[o.beta_pf.0, o.beta_pf.1])),
            ("optim.lr_decay_epochs", join(&o.lr_decay_epochs)),
            ("optim.lr_decay", o.lr_decay.to_string()),
            ("optim.clip_norm", o.clip_norm.to_string()),
            ("optim.surface_batch", o.surface_batch.to_string()),
            ("optim.ablate_phase_field", o.ablate_phase_field.to_string()),
            ("pretrain.max_steps", o.pretrain.max_steps.to_string()),
            ("pretrain.tol", o.pretrain.tol.to_string()),
            ("pretrain.grad_tol", o.pretrain.grad_tol.to_string()),
            ("pretrain.lr", o.pretrain.lr.to_string()),
            ("pretrain.batch", o.pretrain.batch.to_string()),
            ("eval.surface_samples", self.eval.surface_samples.to_string()),
            ("eval.omega_samples", self.eval.omega_samples.to_string()),
            ("eval.band_samples", self.eval.band_samples.to_string()),
            ("eval.band", join(&self.eval.band)),
            ("eval.resolution", self.eval.resolution.to_string()),
            ("eval.brute_force", self.eval.brute_force.to_string()),
            ("extract.resolution", self.extract_resolution.to_string()),
            ("grid.resolution", self.grid.resolution.to_string()),
            ("grid.iterations", self.grid.iterations.to_string()),
            ("grid.lr_phi", self.grid.lr_phi.to_string()),
            ("grid.lr_v", self.grid.lr_v.to_string()),
            ("render.width", c.width.to_string()),
            ("render.height", c.height.to_string()),
            ("render.fov", c.fov_y.to_string()),
            ("render.eye", join(&c.eye)),
            ("render.look_at", join(&c.look_at)),
            ("render.up", join(&c.up)),
            ("render.tolerance", self.render.trace.tolerance.to_string()),
            ("render.max_iter", self.render.trace.max_iter.to_string()),
            ("render.step_scale", self.render.trace.step_scale.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Write the effective configuration to `<dir>/config.txt`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.txt");
        io::write_atomic(&path, self.to_text().as_bytes())?;
        Ok(path)
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_value<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_value(s.trim())).collect()
}

fn parse_array<const N: usize>(v: &str) -> std::result::Result<[f64; N], String> {
    let l: Vec<f64> = parse_list(v)?;
    l.try_into().map_err(|l: Vec<f64>| format!("expected {N} values, got {}", l.len()))
}

fn parse_pair(v: &str) -> std::result::Result<(f64, f64), String> {
    let [a, b] = parse_array::<2>(v)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_reference_values() {
        let c2 = RunConfig::parse("").unwrap();
        assert_eq!(c2.dim(), 2);
        let s = &c2.train.schedule;
        assert_eq!(s.eps, 1e-3);
        assert_eq!(s.alpha, [100.0, 100.0, 10.0]);
        assert_eq!(s.gamma_phase1.to_array(), [10.0, 0.2, 10.0, 0.1, 100.0]);
        assert_eq!(s.gamma_final.to_array(), [10.0, 0.2, 10.0, 0.1, 1.0]);
        assert_eq!((s.phase2_start, s.phase3_start, s.epochs), (5, 20, 30));
        assert_eq!(c2.train.sampler.tau_sdf, 0.1);
        assert_eq!(c2.train.sampler.tau_pf, 0.75);
        let o = &c2.train.optim;
        assert_eq!((o.beta_sdf, o.beta_pf), ((0.9, 0.98), (0.9, 0.999)));
        assert_eq!((o.lr_sdf, o.lr_pf), (5e-5, 5e-4));
        let c3 = RunConfig::parse("dim = 3\n").unwrap();
        let s = &c3.train.schedule;
        assert_eq!(s.eps, 1e-4);
        assert_eq!(s.gamma_phase1.to_array(), [1.0, 0.02, 0.01, 0.05, 500.0]);
        assert_eq!(s.gamma_final.to_array(), [2.5, 0.2, 0.5, 0.2, 200.0]);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::parse("dim = 3\nshape = box\nsdf.width = 96\noptim.lr_sdf = 1.25e-4\nloss.alpha = 1, 2.5, 3\n").unwrap();
        c.render.camera.eye = [0.1, 1.0 / 3.0, 2.0];
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        let dir = tempfile::tempdir().unwrap();
        let p = c.echo(dir.path()).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), c);
    }

    #[test]
    fn every_echoed_key_is_settable() {
        let c = RunConfig::reference(2).unwrap();
        for (k, v) in c.entries().into_iter().skip(1) {
            let mut d = c.clone();
            d.set(k, &v).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_eq!(d, c, "{k}");
        }
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = RunConfig::parse("dim = 2\n\nsampler.mm = 3\n").unwrap_err();
        match e {
            Error::Config { line, key, .. } => assert_eq!((line, key.as_str()), (3, "sampler.mm")),
            other => panic!("{other}"),
        }
        let e = RunConfig::parse("optim.lr_sdf = fast\n").unwrap_err();
        assert!(e.to_string().contains("line 1") && e.to_string().contains("optim.lr_sdf"), "{e}");
        assert!(matches!(RunConfig::parse("novalue\n"), Err(Error::Config { line: 1, .. })));
        assert!(RunConfig::parse("shape = box\ndim = 3\n").is_err());
        assert!(RunConfig::parse("dim = 4\n").is_err());
        assert!(RunConfig::parse("loss.alpha = 1,2\n").is_err());
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/x.cfg")), Err(Error::MissingFile(_))));
    }
}
