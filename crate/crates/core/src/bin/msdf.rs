use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use medial_sdf::cli;
use medial_sdf::config::RunConfig;
use medial_sdf::{Error, Result};

#[derive(Parser)]
#[command(name = "msdf", version, about = "Signed distance functions with a phase-field medial axis")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (output file for `sample-shape`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to MSDF_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use O(n²) nearest-neighbour scans in the metrics.
    #[arg(long, global = true)]
    brute_force: bool,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write surface samples of an analytic shape.
    SampleShape {
        #[arg(long)]
        name: String,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
    },
    /// Train both networks; writes checkpoints and the step log.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare a checkpoint against the ground truth.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Extract the zero level set (polylines or OBJ).
    Extract {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sphere-trace a 3D checkpoint.
    Render {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference grid reference (2D).
    Gridref,
}

fn load_config(s: &Shared) -> Result<RunConfig> {
    let mut text = match &s.config {
        Some(p) => std::fs::read_to_string(p).map_err(|_| Error::MissingFile(p.clone()))?,
        None => String::new(),
    };
    for kv in &s.set {
        text.push('\n');
        text.push_str(kv);
    }
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = s.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &s.out {
        cfg.out = out.clone();
    }
    cfg.eval.brute_force |= s.brute_force;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let s = &cli.shared;
    cli::init_threads(s.threads)?;
    if let Command::SampleShape { name, n } = &cli.command {
        let out = s.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.xyz")));
        cli::cmd_sample_shape(name, *n, s.seed.unwrap_or(0), &out)?;
        return Ok(());
    }
    let cfg = load_config(s)?;
    std::fs::create_dir_all(&cfg.out)?;
    let ckpt = |c: &Option<PathBuf>| c.clone().unwrap_or_else(|| cli::default_checkpoint(&cfg));
    match &cli.command {
        Command::SampleShape { .. } => unreachable!(),
        Command::Train { resume } => {
            cli::cmd_train(&cfg, resume.as_deref())?;
        }
        Command::Eval { checkpoint } => {
            cli::cmd_eval(&cfg, &ckpt(checkpoint))?;
        }
        Command::Extract { checkpoint } => {
            let p = cli::cmd_extract(&cfg, &ckpt(checkpoint))?;
            println!("{}", p.display());
        }
        Command::Render { checkpoint } => {
            cli::cmd_render(&cfg, &ckpt(checkpoint))?;
        }
        Command::Gridref => {
            cli::cmd_gridref(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
