//! Trajectory generation by integrating a learned field from Gaussian noise,
//! with optional start/goal inpainting for planning.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use diffcore::{Array, SeededRng, Stream};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcfmError};
use crate::net::{NetConfig, VectorFieldNet};
use crate::trajectory::Trajectory;

/// Samples are evaluated in chunks of at most this many trajectories.
const MAX_CHUNK: usize = 256;

/// Anything that maps `(t, τ, c)` batches to `[B, H, D]` outputs.
pub trait FieldModel: Sync {
    fn net_config(&self) -> &NetConfig;

    /// `t` is `[B]`, `traj` is `[B, H, D]`, `context` is `[B, max(C, 1)]`.
    fn evaluate(&self, t: &[f64], traj: &Array, context: &Array) -> Result<Array>;
}

impl FieldModel for VectorFieldNet {
    fn net_config(&self) -> &NetConfig {
        self.config()
    }

    fn evaluate(&self, t: &[f64], traj: &Array, context: &Array) -> Result<Array> {
        self.forward_batch(t, traj, context)
    }
}

/// Counts per-trajectory network evaluations of the wrapped model.
pub struct CountingModel<'a, M: FieldModel> {
    inner: &'a M,
    calls: AtomicUsize,
}

impl<'a, M: FieldModel> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    /// Total trajectory evaluations (batch rows) so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<M: FieldModel> FieldModel for CountingModel<'_, M> {
    fn net_config(&self) -> &NetConfig {
        self.inner.net_config()
    }

    fn evaluate(&self, t: &[f64], traj: &Array, context: &Array) -> Result<Array> {
        self.calls.fetch_add(t.len(), Ordering::Relaxed);
        self.inner.evaluate(t, traj, context)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Euler,
    Midpoint,
}

/// Start and goal states pinned during sampling, in model coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConstraint {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Index of the goal state; `None` means the last index.
    #[serde(default)]
    pub goal_index: Option<usize>,
}

impl PlanConstraint {
    pub fn new(start: Vec<f64>, goal: Vec<f64>) -> Self {
        Self { start, goal, goal_index: None }
    }

    fn goal_at(&self, horizon: usize) -> usize {
        self.goal_index.unwrap_or(horizon - 1)
    }

    fn validate(&self, horizon: usize, dim: usize) -> Result<()> {
        if self.start.len() != dim || self.goal.len() != dim {
            return Err(TcfmError::Config(format!(
                "constraint states have dims {}/{}, model state dim is {dim}",
                self.start.len(),
                self.goal.len()
            )));
        }
        if self.goal_at(horizon) >= horizon {
            return Err(TcfmError::Config(format!("goal index {} outside horizon {horizon}", self.goal_at(horizon))));
        }
        Ok(())
    }

    /// Overwrites the start and goal rows of every trajectory in `[B, H, D]` data.
    pub(crate) fn apply(&self, data: &mut [f64], horizon: usize, dim: usize) {
        let goal = self.goal_at(horizon);
        for traj in data.chunks_exact_mut(horizon * dim) {
            traj[..dim].copy_from_slice(&self.start);
            traj[goal * dim..(goal + 1) * dim].copy_from_slice(&self.goal);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    pub context: Vec<f64>,
    pub num_steps: usize,
    pub num_samples: usize,
    pub constraints: Option<PlanConstraint>,
    pub solver: Solver,
    pub seed: u64,
}

impl SampleRequest {
    pub fn new(context: Vec<f64>, num_steps: usize, num_samples: usize, seed: u64) -> Self {
        Self { context, num_steps, num_samples, constraints: None, solver: Solver::Euler, seed }
    }

    pub fn with_constraints(mut self, constraints: PlanConstraint) -> Self {
        self.constraints = Some(constraints);
        self
    }

    pub(crate) fn validate(&self, cfg: &NetConfig) -> Result<()> {
        if self.num_steps < 1 {
            return Err(TcfmError::Config("number of sampling steps must be >= 1".into()));
        }
        if self.num_samples < 1 {
            return Err(TcfmError::Config("number of samples must be >= 1".into()));
        }
        if self.context.len() != cfg.context_dim {
            return Err(TcfmError::Config(format!(
                "context has length {}, model expects {}",
                self.context.len(),
                cfg.context_dim
            )));
        }
        if let Some(c) = &self.constraints {
            c.validate(cfg.horizon, cfg.state_dim)?;
        }
        Ok(())
    }

    pub(crate) fn context_batch(&self, batch: usize) -> Result<Array> {
        if self.context.is_empty() {
            return Ok(Array::zeros(&[batch, 1]));
        }
        let data = (0..batch).flat_map(|_| self.context.iter().copied()).collect();
        Ok(Array::new(vec![batch, self.context.len()], data)?)
    }

    /// Chunk boundaries `(first_sample, count)` used for batched evaluation.
    pub(crate) fn chunks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_samples)
            .step_by(MAX_CHUNK)
            .map(|first| (first, MAX_CHUNK.min(self.num_samples - first)))
    }
}

/// The `τ0 ~ N(0, I)` draws a request starts from, one `[H, D]` array per sample.
///
/// Each sample has its own derived stream, so sample `i` does not depend on
/// how many other samples were requested.
pub fn draw_prior(cfg: &NetConfig, req: &SampleRequest) -> Vec<Array> {
    let base = SeededRng::new(req.seed, Stream::Sampling);
    (0..req.num_samples)
        .map(|i| base.derive(i as u64).normal_array(&[cfg.horizon, cfg.state_dim]))
        .collect()
}

/// Uniform Euler grid: `(i/N, 1/N)` for `i = 0..N`.
pub fn step_time_schedule(num_steps: usize) -> Vec<(f64, f64)> {
    let dt = 1.0 / num_steps as f64;
    (0..num_steps).map(|i| (i as f64 / num_steps as f64, dt)).collect()
}

fn check_finite(out: &Array, step: usize) -> Result<()> {
    if out.all_finite() {
        Ok(())
    } else {
        Err(TcfmError::NonFinite { step, detail: "network returned a non-finite field".into() })
    }
}

fn axpy(x: &mut [f64], a: f64, v: &[f64]) {
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi += a * vi;
    }
}

/// Integrates the learned field from `τ0 ~ N(0, I)` over `t ∈ [0, 1]` with
/// `N` fixed steps. Planning constraints are written into the state before
/// every field evaluation and once more after the final step.
pub fn euler_sample<M: FieldModel>(model: &M, req: &SampleRequest) -> Result<Vec<Trajectory>> {
    let cfg = model.net_config().clone();
    req.validate(&cfg)?;
    let (h, d) = (cfg.horizon, cfg.state_dim);
    let priors = draw_prior(&cfg, req);
    let schedule = step_time_schedule(req.num_steps);
    let mut out = Vec::with_capacity(req.num_samples);
    for (first, count) in req.chunks() {
        let mut x: Vec<f64> = priors[first..first + count].iter().flat_map(|a| a.data().iter().copied()).collect();
        let ctx = req.context_batch(count)?;
        let clamp = |x: &mut [f64]| {
            if let Some(c) = &req.constraints {
                c.apply(x, h, d);
            }
        };
        for (step, &(t, dt)) in schedule.iter().enumerate() {
            clamp(&mut x);
            let state = Array::new(vec![count, h, d], x.clone())?;
            let v = model.evaluate(&vec![t; count], &state, &ctx)?;
            check_finite(&v, step)?;
            match req.solver {
                Solver::Euler => axpy(&mut x, dt, v.data()),
                Solver::Midpoint => {
                    let mut mid = x.clone();
                    axpy(&mut mid, 0.5 * dt, v.data());
                    clamp(&mut mid);
                    let mid = Array::new(vec![count, h, d], mid)?;
                    let v_mid = model.evaluate(&vec![t + 0.5 * dt; count], &mid, &ctx)?;
                    check_finite(&v_mid, step)?;
                    axpy(&mut x, dt, v_mid.data());
                }
            }
        }
        clamp(&mut x);
        for chunk in x.chunks_exact(h * d) {
            out.push(Trajectory::new(Array::new(vec![h, d], chunk.to_vec())?)?);
        }
    }
    Ok(out)
}

/// Wall-clock statistics of repeated sampling calls.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyReport {
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Network evaluations per generated trajectory in one call.
    pub network_calls: usize,
    pub repetitions: usize,
}

/// Times `sample` after one warm-up call. `sample` returns the number of
/// network evaluations per trajectory it performed.
pub fn measure_latency(repetitions: usize, mut sample: impl FnMut() -> Result<usize>) -> Result<LatencyReport> {
    if repetitions < 3 {
        return Err(TcfmError::Config(format!("latency needs >= 3 repetitions, got {repetitions}")));
    }
    let network_calls = sample()?;
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let calls = sample()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        debug_assert_eq!(calls, network_calls);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (times.len() - 1) as f64;
    Ok(LatencyReport { mean_ms: mean, std_ms: var.sqrt(), network_calls, repetitions })
}

/// Latency of [`euler_sample`] for `req`, with an instrumented call count.
pub fn measure_sampling_latency<M: FieldModel>(model: &M, req: &SampleRequest, repetitions: usize) -> Result<LatencyReport> {
    measure_latency(repetitions, || {
        let counter = CountingModel::new(model);
        euler_sample(&counter, req)?;
        Ok(counter.calls() / req.num_samples)
    })
}
