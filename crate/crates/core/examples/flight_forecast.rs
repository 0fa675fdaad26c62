//! Probabilistic forecasting of synthetic 3D flight tracks from their past
//! states: per-dimension MAE/RMSE at a few lead times.
//!
//! `STEPS=1500 cargo run --release --example flight_forecast`

use diffcore::{SeededRng, Stream};
use tcfm::cfm::{train, TrainerConfig};
use tcfm::config::ModelFamily;
use tcfm::ddpm::DiffusionConfig;
use tcfm::domains::flight::{generate_flight_dataset, train_val_test_split, FlightConfig};
use tcfm::domains::norm::{normalize_dataset, NormStats};
use tcfm::metrics::mae_rmse_per_dim;
use tcfm::model::{SampleOptions, TrainedModel};
use tcfm::{NetConfig, VectorFieldNet};

fn main() -> tcfm::Result<()> {
    let fc = FlightConfig::default();
    let data = generate_flight_dataset(&fc, 474, 0)?;
    let [train_idx, _, test_idx] = train_val_test_split(data.len());
    let (train_set, test) = (data.subset(train_idx), data.subset(test_idx));
    println!("{} train / {} test tracks, speed cap {:.3}", train_set.len(), test.len(), fc.speed_cap());

    let stats = NormStats::fit(train_set.trajectories())?;
    let layout = fc.context_layout();
    let train_n = normalize_dataset(&train_set, &stats, layout)?;
    let nc = NetConfig { base_channels: 16, ..NetConfig::new(fc.horizon, 3, fc.context_dim()) };
    let steps = std::env::var("STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(1500);
    let cfg = TrainerConfig { steps, lr: 2e-3, lr_decay_steps: steps, ..Default::default() };
    let start = std::time::Instant::now();
    let (net, _) = train(&train_n, VectorFieldNet::init(nc, &mut SeededRng::new(0, Stream::Init))?, &cfg)?;
    println!("trained in {:.0?}", start.elapsed());
    let model = TrainedModel { family: ModelFamily::Tcfm, net, diffusion: DiffusionConfig::default(), stats, layout };

    let leads = [0, fc.horizon / 2, fc.horizon - 1];
    for n in [1, 10] {
        let mut sums = vec![(0.0, 0.0); leads.len() * 3];
        for i in 0..test.len() {
            let (truth, ctx) = test.get(i);
            let opts = SampleOptions { num_steps: n, num_samples: 8, solver: Default::default(), seed: i as u64 };
            let errs = mae_rmse_per_dim(&model.sample(ctx, None, &opts)?, truth, &leads)?;
            for (s, e) in sums.iter_mut().zip(&errs) {
                s.0 += e.mae / test.len() as f64;
                s.1 += e.rmse / test.len() as f64;
            }
        }
        println!("N={n}");
        for (k, lead) in leads.iter().enumerate() {
            let row: Vec<String> =
                ["x", "y", "z"].iter().enumerate().map(|(d, name)| {
                    let (mae, rmse) = sums[k * 3 + d];
                    format!("{name} {mae:.3}/{rmse:.3}")
                }).collect();
            println!("  lead {lead:>2}  MAE/RMSE  {}", row.join("  "));
        }
    }
    Ok(())
}
