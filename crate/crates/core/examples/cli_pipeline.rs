//! The full command pipeline driven from a TOML config, as the `tcfm` binary
//! runs it: generate → train → sample → eval → benchmark, then a resumed
//! training run from the last checkpoint. Output goes under a temp directory.
//!
//! `cargo run --release --example cli_pipeline`

use tcfm::commands::{cmd_benchmark, cmd_eval, cmd_generate, cmd_sample, cmd_train, FINAL_CHECKPOINT};
use tcfm::config::RunConfig;

fn main() -> tcfm::Result<()> {
    let out = std::env::temp_dir().join("tcfm-cli-pipeline");
    let cfg = RunConfig::from_toml(&format!(
        r#"
seed = 5
output_dir = "{}"

[domain]
kind = "maze"
maze = "u_maze"
n = 200
horizon = 32

[model]
base_channels = 8
groups = 4

[trainer]
steps = 200
checkpoint_every = 100

[sampler]
num_samples = 4
n_list = [1, 2, 8]
eval_items = 10
repetitions = 3
"#,
        out.display()
    ))?;

    let manifest = cmd_generate(&cfg)?;
    println!("generated {} trajectories ({}/{}/{})", manifest.trajectories, manifest.train, manifest.val, manifest.test);

    let run = cmd_train(&cfg, None)?;
    println!("trained steps {}..{}, last loss {:.4}", run.first_step, run.final_step, run.losses.last().unwrap());
    let resumed = cmd_train(&cfg, Some(&run.checkpoint))?;
    println!("resumed to step {}, last loss {:.4}", resumed.final_step, resumed.losses.last().unwrap());

    let ckpt = out.join(FINAL_CHECKPOINT);
    println!("sampled {} plans", cmd_sample(&cfg, &ckpt)?.len());
    for report in cmd_eval(&cfg, &ckpt)? {
        println!("{}", report.to_kv_text());
    }
    for row in cmd_benchmark(&cfg, &[ckpt])? {
        println!("N={:>2}  {:.2} ms  {} calls  ade {:.3}", row.num_steps, row.mean_ms, row.network_calls, row.ade);
    }
    println!("outputs in {}", out.display());
    Ok(())
}
