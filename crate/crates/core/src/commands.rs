//! The five operator commands. Each takes a resolved [`RunConfig`], writes its
//! artifacts below the run's output directory, and persists the exact config
//! it ran with as `config.resolved.toml`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use diffcore::{SeededRng, Stream};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cfm::{train_with, FlowMatching, TrainObserver, TrainState};
use crate::checkpoint::Checkpoint;
use crate::config::{DomainConfig, ModelFamily, RunConfig};
use crate::ddpm::{NoisePrediction, NoiseSchedule};
use crate::domains::csv_io::{self, CsvSchema};
use crate::domains::flight::generate_flight_dataset;
use crate::domains::maze::{generate_maze_dataset, MazeSpec};
use crate::domains::norm::{normalize_dataset, ContextLayout, NormStats};
use crate::domains::pursuit::generate_pursuit_dataset;
use crate::domains::split_counts;
use crate::error::{Result, TcfmError};
use crate::metrics::{ade, collision_rate, mae_rmse_per_dim, maze_score, min_ade, EvalReport};
use crate::model::{SampleOptions, TrainedModel};
use crate::net::VectorFieldNet;
use crate::plot::{line_chart, trajectory_overlay, Series};
use crate::trajectory::{Trajectory, TrajectoryDataset};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

/// Dataset description written next to the generated CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub domain: String,
    pub seed: u64,
    pub trajectories: usize,
    pub horizon: usize,
    pub state_dim: usize,
    pub context_dim: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized_detection_rate: Option<f64>,
    pub layout: ContextLayout,
}

/// Raw-coordinate dataset with its split and normalization.
#[derive(Clone, Debug)]
pub struct DataBundle {
    pub manifest: Manifest,
    pub dataset: TrajectoryDataset,
    pub stats: NormStats,
    pub maze: Option<MazeSpec>,
}

impl DataBundle {
    pub fn train(&self) -> TrajectoryDataset {
        self.dataset.subset(0..self.manifest.train)
    }

    pub fn test(&self) -> TrajectoryDataset {
        let start = self.manifest.train + self.manifest.val;
        self.dataset.subset(start..start + self.manifest.test)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| TcfmError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| TcfmError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| TcfmError::io(path, e))
}

fn persist_config(cfg: &RunConfig) -> Result<()> {
    write(&cfg.resolved_output_dir().join(RESOLVED_CONFIG), cfg.to_toml())
}

/// Short stable hash of the resolved configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn resolve_maze(name: &str) -> Result<MazeSpec> {
    match name {
        "u_maze" => Ok(MazeSpec::u_maze()),
        "medium" => Ok(MazeSpec::medium()),
        path => MazeSpec::load(Path::new(path)),
    }
}

/// Generates (or ingests) the configured domain in raw coordinates.
pub fn build_dataset(cfg: &RunConfig) -> Result<(TrajectoryDataset, ContextLayout, Option<MazeSpec>, Option<f64>)> {
    Ok(match &cfg.domain {
        DomainConfig::Maze(m) => {
            let spec = resolve_maze(&m.maze)?.with_jitter(m.jitter);
            let data = generate_maze_dataset(&spec, m.n, m.horizon, cfg.seed)?;
            (data.dataset, ContextLayout::StartGoal, Some(spec), None)
        }
        DomainConfig::Pursuit(p) => {
            let data = generate_pursuit_dataset(&p.scenario, p.n, cfg.seed)?;
            (data.dataset, p.scenario.context_layout(), None, Some(data.realized_rate))
        }
        DomainConfig::Flight(f) => (generate_flight_dataset(&f.flight, f.n, cfg.seed)?, f.flight.context_layout(), None, None),
        DomainConfig::Csv(c) => {
            let loaded = csv_io::load_trajectory_csv(&c.path, &CsvSchema { state_dim: None, horizon: c.past + c.horizon })?;
            let dim = loaded.trajectories.first().map_or(1, Trajectory::state_dim);
            let (mut trajectories, mut contexts) = (vec![], vec![]);
            for t in &loaded.trajectories {
                let rows: Vec<Vec<f64>> = t.states().map(<[f64]>::to_vec).collect();
                contexts.push(rows[..c.past].iter().flatten().copied().collect());
                trajectories.push(Trajectory::from_rows(&rows[c.past..])?);
            }
            let layout = ContextLayout::PastStates { past: c.past };
            (TrajectoryDataset::new(c.horizon, dim, c.past * dim, trajectories, contexts)?, layout, None, None)
        }
    })
}

/// `generate`: trajectory and context CSVs, normalization stats and a manifest.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let (dataset, layout, maze, realized) = build_dataset(cfg)?;
    let counts = split_counts(dataset.len(), &[0.8, 0.1, 0.1]);
    if counts[0] == 0 {
        return Err(TcfmError::Data("dataset has no training trajectories".into()));
    }
    let stats = NormStats::fit(&dataset.trajectories()[..counts[0]])?;
    let manifest = Manifest {
        domain: cfg.domain.kind().into(),
        seed: cfg.seed,
        trajectories: dataset.len(),
        horizon: dataset.horizon(),
        state_dim: dataset.state_dim(),
        context_dim: dataset.context_dim(),
        train: counts[0],
        val: counts[1],
        test: counts[2],
        realized_detection_rate: realized,
        layout,
    };
    let dir = cfg.resolved_data_dir();
    let mut buf = vec![];
    csv_io::write_trajectory_csv(&mut buf, dataset.trajectories())?;
    write(&dir.join("trajectories.csv"), &buf)?;
    buf.clear();
    csv_io::write_context_csv(&mut buf, dataset.contexts())?;
    write(&dir.join("contexts.csv"), &buf)?;
    write(&dir.join("stats.toml"), toml::to_string(&stats).expect("stats serialize"))?;
    write(&dir.join("manifest.toml"), toml::to_string(&manifest).expect("manifest serializes"))?;
    if let Some(m) = &maze {
        write(&dir.join("maze.txt"), m.to_text())?;
    }
    persist_config(cfg)?;
    log::info!("generated {} {} trajectories into {}", manifest.trajectories, manifest.domain, dir.display());
    Ok(manifest)
}

/// Reads what `generate` wrote.
pub fn load_data(cfg: &RunConfig) -> Result<DataBundle> {
    let dir = cfg.resolved_data_dir();
    let manifest_path = dir.join("manifest.toml");
    if !manifest_path.exists() {
        return Err(TcfmError::Data(format!("no dataset at {} (run `generate` first)", dir.display())));
    }
    let manifest: Manifest =
        toml::from_str(&read(&manifest_path)?).map_err(|e| TcfmError::Data(format!("{}: {e}", manifest_path.display())))?;
    let stats_path = dir.join("stats.toml");
    let stats: NormStats =
        toml::from_str(&read(&stats_path)?).map_err(|e| TcfmError::Data(format!("{}: {e}", stats_path.display())))?;
    let schema = CsvSchema { state_dim: Some(manifest.state_dim), horizon: manifest.horizon };
    let loaded = csv_io::load_trajectory_csv(&dir.join("trajectories.csv"), &schema)?;
    let ctx_path = dir.join("contexts.csv");
    let contexts = csv_io::read_context_csv(fs::File::open(&ctx_path).map_err(|e| TcfmError::io(&ctx_path, e))?)?;
    let dataset = TrajectoryDataset::new(
        manifest.horizon,
        manifest.state_dim,
        manifest.context_dim,
        loaded.trajectories,
        contexts,
    )?;
    if dataset.len() != manifest.trajectories {
        return Err(TcfmError::Data(format!(
            "manifest lists {} trajectories, files hold {}",
            manifest.trajectories,
            dataset.len()
        )));
    }
    let maze_path = dir.join("maze.txt");
    let maze = if maze_path.exists() {
        let jitter = match &cfg.domain {
            DomainConfig::Maze(m) => m.jitter,
            _ => 0.0,
        };
        Some(MazeSpec::load(&maze_path)?.with_jitter(jitter))
    } else {
        None
    };
    Ok(DataBundle { manifest, dataset, stats, maze })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub losses: Vec<f64>,
    pub first_step: usize,
    pub final_step: usize,
}

struct CheckpointWriter<'a> {
    template: &'a Checkpoint,
    dir: PathBuf,
}

impl TrainObserver for CheckpointWriter<'_> {
    fn on_step(&mut self, step: usize, loss: f64) {
        if step % 100 == 0 {
            log::info!("step {step}: loss {loss:.6}");
        }
    }

    fn checkpoint(&mut self, state: &TrainState) -> Result<Option<PathBuf>> {
        let path = self.dir.join(format!("step_{:06}.ckpt", state.step));
        snapshot(self.template, state).save(&path)?;
        Ok(Some(path))
    }
}

fn snapshot(template: &Checkpoint, state: &TrainState) -> Checkpoint {
    Checkpoint {
        step: state.step as u64,
        params: state.net.params().clone(),
        optimizer: Some(state.optimizer.clone()),
        ..template.clone()
    }
}

/// `train`: fits the configured family on the training split. With `resume`,
/// continues from that checkpoint's parameters, optimizer state and step.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let train = normalize_dataset(&data.train(), &data.stats, data.manifest.layout)?;
    let net_cfg = cfg.model.net_config(train.horizon(), train.state_dim(), train.context_dim());
    net_cfg.validate()?;
    let state = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.family != cfg.model.family || ckpt.net_config != net_cfg {
                return Err(TcfmError::Config(format!(
                    "checkpoint {} does not match the configured model",
                    path.display()
                )));
            }
            TrainState {
                net: ckpt.net()?,
                optimizer: ckpt.optimizer.clone().unwrap_or_default(),
                step: ckpt.step as usize,
            }
        }
        None => TrainState::new(VectorFieldNet::init(net_cfg.clone(), &mut SeededRng::new(cfg.seed, Stream::Init))?),
    };
    let first_step = state.step;
    let out = cfg.resolved_output_dir();
    let template = Checkpoint {
        family: cfg.model.family,
        net_config: net_cfg,
        diffusion: cfg.model.diffusion.clone(),
        layout: data.manifest.layout,
        run: Some(cfg.clone()),
        stats: data.stats.clone(),
        step: 0,
        params: BTreeMap::new(),
        optimizer: None,
    };
    let mut observer = CheckpointWriter { template: &template, dir: out.join("checkpoints") };
    let (state, losses) = match cfg.model.family {
        ModelFamily::Tcfm => {
            train_with(&train, state, &cfg.trainer, &FlowMatching { sigma: cfg.trainer.sigma }, &mut observer)?
        }
        ModelFamily::Ddpm => {
            let schedule = NoiseSchedule::cosine(cfg.model.diffusion.timesteps)?;
            train_with(&train, state, &cfg.trainer, &NoisePrediction { schedule: &schedule }, &mut observer)?
        }
    };
    let checkpoint = out.join(FINAL_CHECKPOINT);
    snapshot(&template, &state).save(&checkpoint)?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", first_step + i));
    }
    write(&out.join("loss.csv"), csv)?;
    let curve = Series {
        name: "loss".into(),
        points: losses.iter().enumerate().map(|(i, &l)| ((first_step + i) as f64, l.max(1e-300).log10())).collect(),
    };
    write(&out.join("loss.svg"), line_chart("Training loss", "step", "log10 loss", &[curve]))?;
    persist_config(cfg)?;
    Ok(TrainSummary { checkpoint, losses, first_step, final_step: state.step })
}

/// Start and goal of a planning context `(sx, sy, gx, gy)`.
fn plan_of(layout: ContextLayout, ctx: &[f64]) -> Option<(&[f64], &[f64])> {
    match layout {
        ContextLayout::StartGoal => {
            let d = ctx.len() / 2;
            Some((&ctx[..d], &ctx[d..]))
        }
        _ => None,
    }
}

fn load_model(cfg: &RunConfig, checkpoint: &Path, data: &DataBundle) -> Result<TrainedModel> {
    let model = TrainedModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let nc = model.net_config();
    if nc.horizon != data.manifest.horizon || nc.state_dim != data.manifest.state_dim || nc.context_dim != data.manifest.context_dim {
        return Err(TcfmError::Config(format!(
            "checkpoint expects [H={}, D={}, C={}], dataset of {} is [H={}, D={}, C={}]",
            nc.horizon,
            nc.state_dim,
            nc.context_dim,
            cfg.resolved_data_dir().display(),
            data.manifest.horizon,
            data.manifest.state_dim,
            data.manifest.context_dim
        )));
    }
    if model.layout != data.manifest.layout {
        return Err(TcfmError::Config("checkpoint and dataset use different context layouts".into()));
    }
    Ok(model)
}

/// `sample`: draws `num_samples` trajectories for one test-split context.
pub fn cmd_sample(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let model = load_model(cfg, checkpoint, &data)?;
    let test = data.test();
    if cfg.sampler.item >= test.len() {
        return Err(TcfmError::Config(format!("item {} outside test split of {}", cfg.sampler.item, test.len())));
    }
    let (truth, ctx) = test.get(cfg.sampler.item);
    let opts = SampleOptions {
        num_steps: cfg.sampler.num_steps,
        num_samples: cfg.sampler.num_samples,
        solver: cfg.sampler.solver,
        seed: cfg.sampler.seed,
    };
    let samples = model.sample(ctx, plan_of(model.layout, ctx), &opts)?;
    let out = cfg.resolved_output_dir().join("samples");
    let mut buf = vec![];
    csv_io::write_samples_csv(&mut buf, &samples)?;
    write(&out.join("samples.csv"), &buf)?;
    let title = format!("{} samples, N={}", model.family.name(), opts.num_steps);
    write(&out.join("samples.svg"), trajectory_overlay(&title, &samples, Some(truth), data.maze.as_ref()))?;
    persist_config(cfg)?;
    Ok(samples)
}

fn eval_items(cfg: &RunConfig, test: &TrajectoryDataset) -> Result<usize> {
    if test.is_empty() {
        return Err(TcfmError::Data("test split is empty".into()));
    }
    Ok(if cfg.sampler.eval_items == 0 { test.len() } else { cfg.sampler.eval_items.min(test.len()) })
}

/// Metrics of one model at one step count over the first test items.
pub fn evaluate(
    model: &TrainedModel,
    test: &TrajectoryDataset,
    items: usize,
    maze: Option<&MazeSpec>,
    opts: &SampleOptions,
) -> Result<EvalReport> {
    let h = test.horizon();
    let mut curve = vec![0.0; h];
    let (mut min_total, mut score_total, mut collisions) = (0.0, 0.0, 0.0);
    let mut dim_errors: BTreeMap<String, f64> = BTreeMap::new();
    let horizons = [0, h / 2, h - 1];
    for i in 0..items {
        let (truth, ctx) = test.get(i);
        let item_opts = SampleOptions { seed: opts.seed.wrapping_add(i as u64), ..opts.clone() };
        let plan = plan_of(model.layout, ctx);
        let samples = model.sample(ctx, plan, &item_opts)?;
        let a = ade(&samples, truth)?;
        for (c, v) in curve.iter_mut().zip(&a.curve) {
            *c += v / items as f64;
        }
        min_total += min_ade(&samples, truth)?;
        for e in mae_rmse_per_dim(&samples, truth, &horizons)? {
            *dim_errors.entry(format!("mae_dim{}_h{}", e.dim, e.horizon)).or_default() += e.mae / items as f64;
            *dim_errors.entry(format!("rmse_dim{}_h{}", e.dim, e.horizon)).or_default() += e.rmse / items as f64;
        }
        if let (Some(m), Some((_, goal))) = (maze, plan) {
            let goal = [goal[0], goal[1]];
            for s in &samples {
                score_total += maze_score(s, goal, truth, m)? / samples.len() as f64;
            }
            collisions += collision_rate(&samples, m);
        }
    }
    let mut report = EvalReport {
        label: format!("{}_n{}", model.family.name(), opts.num_steps),
        num_samples: items * opts.num_samples,
        ..Default::default()
    };
    report.scalars.insert("ade".into(), curve.iter().sum::<f64>() / h as f64);
    report.scalars.insert("min_ade".into(), min_total / items as f64);
    report.scalars.insert("num_steps".into(), opts.num_steps as f64);
    report.scalars.extend(dim_errors);
    if maze.is_some() {
        report.scalars.insert("maze_score".into(), score_total / items as f64);
        report.scalars.insert("collision_rate".into(), collisions / items as f64);
    }
    report.curves.insert("ade".into(), curve);
    Ok(report)
}

/// `eval`: one report per step count plus ADE-vs-N and ADE-vs-horizon figures.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let model = load_model(cfg, checkpoint, &data)?;
    let test = data.test();
    let items = eval_items(cfg, &test)?;
    let out = cfg.resolved_output_dir().join("eval");
    let hash = config_hash(cfg);
    let mut reports = vec![];
    for &n in &cfg.sampler.n_list {
        let opts = SampleOptions {
            num_steps: n,
            num_samples: cfg.sampler.num_samples,
            solver: cfg.sampler.solver,
            seed: cfg.sampler.seed,
        };
        let mut report = evaluate(&model, &test, items, data.maze.as_ref(), &opts)?;
        report.config_hash = hash.clone();
        write(&out.join(format!("report_n{n}.txt")), report.to_kv_text())?;
        write(&out.join(format!("curves_n{n}.csv")), report.curves_csv()?)?;
        log::info!("N={n}: ade {:.4}", report.scalars["ade"]);
        reports.push(report);
    }

    let extra: Vec<&str> = ["maze_score", "collision_rate"]
        .into_iter()
        .filter(|k| reports.first().is_some_and(|r| r.scalars.contains_key(*k)))
        .collect();
    let mut csv = String::from("n,ade,min_ade");
    for k in &extra {
        csv.push_str(&format!(",{k}"));
    }
    csv.push('\n');
    for r in &reports {
        csv.push_str(&format!("{},{},{}", r.scalars["num_steps"], r.scalars["ade"], r.scalars["min_ade"]));
        for k in &extra {
            csv.push_str(&format!(",{}", r.scalars[*k]));
        }
        csv.push('\n');
    }
    write(&out.join("ade_vs_n.csv"), csv)?;
    let by_n = Series {
        name: model.family.name().into(),
        points: reports.iter().map(|r| (r.scalars["num_steps"], r.scalars["ade"])).collect(),
    };
    write(&out.join("ade_vs_n.svg"), line_chart("ADE vs sampling steps", "N", "ADE", &[by_n]))?;

    let mut csv = String::from("step");
    for r in &reports {
        csv.push_str(&format!(",ade_n{}", r.scalars["num_steps"]));
    }
    csv.push('\n');
    for k in 0..test.horizon() {
        csv.push_str(&k.to_string());
        for r in &reports {
            csv.push_str(&format!(",{}", r.curves["ade"][k]));
        }
        csv.push('\n');
    }
    write(&out.join("ade_vs_horizon.csv"), csv)?;
    let series: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            name: format!("N={}", r.scalars["num_steps"]),
            points: r.curves["ade"].iter().enumerate().map(|(k, &v)| (k as f64, v)).collect(),
        })
        .collect();
    write(&out.join("ade_vs_horizon.svg"), line_chart("ADE vs prediction horizon", "step", "ADE", &series))?;
    persist_config(cfg)?;
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub num_steps: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub network_calls: usize,
    pub ade: f64,
}

/// `benchmark`: latency and ADE of each checkpoint at each step count on the
/// first test item.
pub fn cmd_benchmark(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Err(TcfmError::Usage("benchmark needs at least one checkpoint".into()));
    }
    let data = load_data(cfg)?;
    let test = data.test();
    eval_items(cfg, &test)?;
    let (truth, ctx) = test.get(0);
    let mut rows = vec![];
    for path in checkpoints {
        let model = load_model(cfg, path, &data)?;
        let name = format!("{}:{}", model.family.name(), path.file_stem().map_or("", |s| s.to_str().unwrap_or("")));
        for &n in &cfg.sampler.n_list {
            let opts = SampleOptions {
                num_steps: n,
                num_samples: cfg.sampler.num_samples,
                solver: cfg.sampler.solver,
                seed: cfg.sampler.seed,
            };
            let req = model.request(ctx, plan_of(model.layout, ctx), &opts);
            let lat = model.latency(&req, cfg.sampler.repetitions)?;
            let samples = model.sample(ctx, plan_of(model.layout, ctx), &opts)?;
            rows.push(BenchRow {
                model: name.clone(),
                num_steps: n,
                mean_ms: lat.mean_ms,
                std_ms: lat.std_ms,
                network_calls: lat.network_calls,
                ade: ade(&samples, truth)?.value,
            });
        }
    }
    let out = cfg.resolved_output_dir();
    let mut w = csv::Writer::from_writer(vec![]);
    let csv_err = |e: csv::Error| TcfmError::Data(e.to_string());
    w.write_record(["model", "n", "mean_ms", "std_ms", "network_calls", "ade"]).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.model.clone(),
            r.num_steps.to_string(),
            r.mean_ms.to_string(),
            r.std_ms.to_string(),
            r.network_calls.to_string(),
            r.ade.to_string(),
        ])
        .map_err(csv_err)?;
    }
    write(&out.join("benchmark.csv"), w.into_inner().map_err(|e| TcfmError::Data(e.to_string()))?)?;
    let mut series: Vec<Series> = vec![];
    for r in &rows {
        match series.iter_mut().find(|s| s.name == r.model) {
            Some(s) => s.points.push((r.num_steps as f64, r.mean_ms)),
            None => series.push(Series { name: r.model.clone(), points: vec![(r.num_steps as f64, r.mean_ms)] }),
        }
    }
    write(&out.join("benchmark.svg"), line_chart("Sampling latency", "N", "ms per call", &series))?;
    persist_config(cfg)?;
    Ok(rows)
}
