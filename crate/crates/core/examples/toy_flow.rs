//! Flow matching on a one-curve dataset: every prior draw should be carried
//! onto the same curve, in as little as one Euler step.
//!
//! `STEPS=2000 cargo run --release --example toy_flow`

use diffcore::{SeededRng, Stream};
use tcfm::cfm::{train, TrainerConfig};
use tcfm::sampler::{euler_sample, SampleRequest};
use tcfm::trajectory::distance;
use tcfm::{NetConfig, Trajectory, TrajectoryDataset, VectorFieldNet};

fn main() -> tcfm::Result<()> {
    let h = 8;
    let rows: Vec<Vec<f64>> = (0..h).map(|i| vec![0.5 - i as f64 * 0.1, 0.3 * (i as f64).sin()]).collect();
    let curve = Trajectory::from_rows(&rows)?;
    let ds = TrajectoryDataset::new(h, 2, 0, vec![curve.clone(); 16], vec![vec![]; 16])?;

    let nc = NetConfig { base_channels: 16, depth: 2, groups: 8, kernel_size: 5, ..NetConfig::new(h, 2, 0) };
    let steps = std::env::var("STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let cfg = TrainerConfig { sigma: 0.0, steps, lr: 1e-3, ..Default::default() };
    let net = VectorFieldNet::init(nc, &mut SeededRng::new(0, Stream::Init))?;
    println!("{} parameters", net.param_count());

    let start = std::time::Instant::now();
    let (net, losses) = train(&ds, net, &cfg)?;
    for chunk in (0..losses.len()).step_by((steps / 8).max(1)) {
        println!("  step {chunk:>5}  loss {:.5}", losses[chunk]);
    }
    let tail = &losses[losses.len().saturating_sub(50)..];
    println!("trained in {:.0?}; trailing mean loss {:.5}", start.elapsed(), tail.iter().sum::<f64>() / tail.len() as f64);

    for n in [1, 4, 16] {
        let samples = euler_sample(&net, &SampleRequest::new(vec![], n, 32, 1))?;
        let err = samples
            .iter()
            .map(|s| s.states().zip(curve.states()).map(|(a, b)| distance(a, b)).sum::<f64>() / h as f64)
            .sum::<f64>()
            / samples.len() as f64;
        println!("  N={n:>2}  mean distance to the curve {err:.4}");
    }
    Ok(())
}
