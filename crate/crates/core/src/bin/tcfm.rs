use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcfm::commands::{self, FINAL_CHECKPOINT};
use tcfm::config::RunConfig;
use tcfm::{Result, TcfmError};

/// Trajectory flow matching: generate data, train, sample, evaluate, benchmark.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Flags below override it.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write trajectory/context CSVs, normalization stats and a manifest.
    Generate(Common),
    /// Train the configured model family.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Draw samples for one test context.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        num_steps: Option<usize>,
        #[arg(long)]
        num_samples: Option<usize>,
    },
    /// Evaluate a checkpoint at several sampling step counts.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Latency and quality of one or more checkpoints.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn default_checkpoint(cfg: &RunConfig, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| cfg.resolved_output_dir().join(FINAL_CHECKPOINT))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let m = commands::cmd_generate(&load(&common)?)?;
            println!("generated {} trajectories (train {}, val {}, test {})", m.trajectories, m.train, m.val, m.test);
            if let Some(rate) = m.realized_detection_rate {
                println!("realized detection rate {rate:.4}");
            }
        }
        Command::Train { common, steps, resume } => {
            let mut cfg = load(&common)?;
            if let Some(s) = steps {
                cfg.trainer.steps = s;
            }
            let s = commands::cmd_train(&cfg, resume.as_deref())?;
            let last = s.losses.last().copied().unwrap_or(f64::NAN);
            println!("trained steps {}..{}; final loss {last:.6}; {}", s.first_step, s.final_step, s.checkpoint.display());
        }
        Command::Sample { common, checkpoint, num_steps, num_samples } => {
            let mut cfg = load(&common)?;
            cfg.sampler.num_steps = num_steps.unwrap_or(cfg.sampler.num_steps);
            cfg.sampler.num_samples = num_samples.unwrap_or(cfg.sampler.num_samples);
            let ckpt = default_checkpoint(&cfg, checkpoint);
            let samples = commands::cmd_sample(&cfg, &ckpt)?;
            println!("wrote {} samples to {}", samples.len(), cfg.resolved_output_dir().join("samples").display());
        }
        Command::Eval { common, checkpoint, n_list } => {
            let mut cfg = load(&common)?;
            if let Some(n) = n_list {
                cfg.sampler.n_list = n;
            }
            let ckpt = default_checkpoint(&cfg, checkpoint);
            for r in commands::cmd_eval(&cfg, &ckpt)? {
                let extras: String = ["maze_score", "collision_rate"]
                    .iter()
                    .filter_map(|k| r.scalars.get(*k).map(|v| format!(" {k}={v:.4}")))
                    .collect();
                println!("{} ade={:.4} min_ade={:.4}{extras}", r.label, r.scalars["ade"], r.scalars["min_ade"]);
            }
        }
        Command::Benchmark { common, checkpoints, n_list, repetitions } => {
            let mut cfg = load(&common)?;
            if let Some(n) = n_list {
                cfg.sampler.n_list = n;
            }
            if let Some(r) = repetitions {
                cfg.sampler.repetitions = r;
            }
            let checkpoints = if checkpoints.is_empty() { vec![default_checkpoint(&cfg, None)] } else { checkpoints };
            println!("model,n,mean_ms,std_ms,network_calls,ade");
            for r in commands::cmd_benchmark(&cfg, &checkpoints)? {
                println!("{},{},{:.3},{:.3},{},{:.4}", r.model, r.num_steps, r.mean_ms, r.std_ms, r.network_calls, r.ade);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let TcfmError::Diverged { last_good: Some(p), .. } = &e {
                eprintln!("last good checkpoint: {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
