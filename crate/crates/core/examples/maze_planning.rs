//! Goal-conditioned planning in the U-maze: both families are trained on
//! expert demonstrations, then plans are drawn with start and goal pinned and
//! scored against the expert.
//!
//! `STEPS=2000 cargo run --release --example maze_planning`

use diffcore::{SeededRng, Stream};
use tcfm::cfm::{train_with, FlowMatching, NoObserver, TrainState, TrainerConfig};
use tcfm::commands::evaluate;
use tcfm::config::ModelFamily;
use tcfm::ddpm::{DiffusionConfig, NoisePrediction, NoiseSchedule};
use tcfm::domains::maze::{generate_maze_dataset, MazeSpec};
use tcfm::domains::norm::{normalize_dataset, ContextLayout, NormStats};
use tcfm::model::{SampleOptions, TrainedModel};
use tcfm::{NetConfig, VectorFieldNet};

fn env(k: &str, d: usize) -> usize {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> tcfm::Result<()> {
    let maze = MazeSpec::u_maze().with_jitter(0.2);
    let horizon = env("H", 32);
    let data = generate_maze_dataset(&maze, env("N_TRAJ", 400), horizon, 2)?;
    let n_train = data.dataset.len() - 50;
    let train = data.dataset.subset(0..n_train);
    let test = data.dataset.subset(n_train..data.dataset.len());
    let stats = NormStats::fit(train.trajectories())?;
    let layout = ContextLayout::StartGoal;
    let train_n = normalize_dataset(&train, &stats, layout)?;

    let mut nc = NetConfig::new(horizon, 2, 4);
    nc.base_channels = env("BASE", 16);
    let steps = env("STEPS", 2000);
    let cfg = TrainerConfig { steps, lr: 2e-3, lr_decay_steps: steps, ..Default::default() };
    let diffusion = DiffusionConfig::default();
    let schedule = NoiseSchedule::cosine(diffusion.timesteps)?;

    for family in [ModelFamily::Tcfm, ModelFamily::Ddpm] {
        let start = std::time::Instant::now();
        let state = TrainState::new(VectorFieldNet::init(nc.clone(), &mut SeededRng::new(0, Stream::Init))?);
        let (state, _) = match family {
            ModelFamily::Tcfm => train_with(&train_n, state, &cfg, &FlowMatching { sigma: cfg.sigma }, &mut NoObserver)?,
            ModelFamily::Ddpm => train_with(&train_n, state, &cfg, &NoisePrediction { schedule: &schedule }, &mut NoObserver)?,
        };
        println!("{}: trained in {:.0?}", family.name(), start.elapsed());
        let model = TrainedModel { family, net: state.net, diffusion: diffusion.clone(), stats: stats.clone(), layout };
        for n in [1, 2, 8, 100] {
            let opts = SampleOptions { num_steps: n, num_samples: 4, solver: Default::default(), seed: 0 };
            let r = evaluate(&model, &test, test.len(), Some(&maze), &opts)?;
            println!(
                "  N={n:>3}  score {:6.1}  collisions {:.3}  ade {:.3}",
                r.scalars["maze_score"], r.scalars["collision_rate"], r.scalars["ade"]
            );
        }
    }
    Ok(())
}
