//! Trains both model families on the synthetic pursuit domain and prints ADE
//! against the number of sampling steps.
//!
//! `STEPS=3000 cargo run --release --example pursuit_sweep`

use diffcore::{SeededRng, Stream};
use tcfm::cfm::{train_with, FlowMatching, NoObserver, TrainState, TrainerConfig};
use tcfm::config::ModelFamily;
use tcfm::ddpm::{DiffusionConfig, NoiseSchedule, NoisePrediction};
use tcfm::domains::norm::{normalize_dataset, NormStats};
use tcfm::domains::pursuit::{generate_pursuit_dataset, PursuitScenario};
use tcfm::metrics::ade;
use tcfm::model::{SampleOptions, TrainedModel};
use tcfm::{NetConfig, VectorFieldNet};

fn env(k: &str, d: usize) -> usize {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> tcfm::Result<()> {
    let scn = PursuitScenario { horizon: env("H", 32), ..Default::default() };
    let data = generate_pursuit_dataset(&scn, env("N_TRAJ", 400), 1)?;
    println!("realized detection rate {:.4}", data.realized_rate);
    let n_train = data.dataset.len() * 9 / 10;
    let train = data.dataset.subset(0..n_train);
    let test = data.dataset.subset(n_train..data.dataset.len());
    let stats = NormStats::fit(train.trajectories())?;
    let layout = scn.context_layout();
    let train_n = normalize_dataset(&train, &stats, layout)?;

    let mut nc = NetConfig::new(scn.horizon, 2, scn.context_dim());
    nc.base_channels = env("BASE", 16);
    let cfg = TrainerConfig { steps: env("STEPS", 2000), lr: 1e-3 * env("LR_MILLI", 1000) as f64 / 1000.0, lr_decay_steps: env("DECAY", 0), batch_size: env("B", 32), ..Default::default() };
    let diffusion = DiffusionConfig::default();
    let schedule = NoiseSchedule::cosine(diffusion.timesteps)?;

    for family in [ModelFamily::Tcfm, ModelFamily::Ddpm].into_iter().take(env("FAMILIES", 2)) {
        let start = std::time::Instant::now();
        let state = TrainState::new(VectorFieldNet::init(nc.clone(), &mut SeededRng::new(0, Stream::Init))?);
        let (state, losses) = match family {
            ModelFamily::Tcfm => train_with(&train_n, state, &cfg, &FlowMatching { sigma: cfg.sigma }, &mut NoObserver)?,
            ModelFamily::Ddpm => train_with(&train_n, state, &cfg, &NoisePrediction { schedule: &schedule }, &mut NoObserver)?,
        };
        let tail: f64 = losses.iter().rev().take(100).sum::<f64>() / 100.0;
        println!("{}: trained in {:.0?}, final loss {tail:.4}", family.name(), start.elapsed());
        let model = TrainedModel { family, net: state.net, diffusion: diffusion.clone(), stats: stats.clone(), layout };
        for n in [1, 2, 4, 8, 16, 32, 64] {
            let items = env("ITEMS", 20).min(test.len());
            let mut total = 0.0;
            for i in 0..items {
                let (truth, ctx) = test.get(i);
                let opts = SampleOptions { num_steps: n, num_samples: 10, solver: Default::default(), seed: i as u64 };
                total += ade(&model.sample(ctx, None, &opts)?, truth)?.value;
            }
            println!("  N={n:>3}  ADE {:.3}", total / items as f64);
        }
    }
    Ok(())
}
