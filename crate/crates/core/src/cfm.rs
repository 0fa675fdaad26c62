//! Conditional flow matching: the Gaussian probability path between a noise
//! trajectory and a data trajectory, its straight-line target field, the
//! regression loss, and the training loop.

use std::path::PathBuf;

use diffcore::{adam_step, AdamConfig, AdamState, Array, DiffError, SeededRng, Stream, Tape};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcfmError};
use crate::net::VectorFieldNet;
use crate::trajectory::{Trajectory, TrajectoryDataset};

/// Draws `t·τ1 + (1 − t)·τ0 + σ·ε`, `ε ~ N(0, I)` elementwise.
pub fn sample_probability_path(
    tau0: &Trajectory,
    tau1: &Trajectory,
    t: f64,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<Trajectory> {
    check_pair(tau0, tau1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(TcfmError::Domain(format!("flow time {t} outside [0, 1]")));
    }
    if sigma.is_nan() || sigma < 0.0 {
        return Err(TcfmError::Config(format!("path standard deviation {sigma} must be >= 0")));
    }
    let data = tau0
        .as_array()
        .data()
        .iter()
        .zip(tau1.as_array().data())
        .map(|(&a, &b)| {
            let mean = interpolate(a, b, t);
            if sigma == 0.0 {
                mean
            } else {
                mean + sigma * rng.normal()
            }
        })
        .collect();
    Trajectory::new(Array::new(tau0.as_array().shape().to_vec(), data)?)
}

/// `t·b + (1 − t)·a`; exact at both endpoints.
fn interpolate(a: f64, b: f64, t: f64) -> f64 {
    t * b + (1.0 - t) * a
}

/// The conditional target field `τ1 − τ0`; it does not depend on flow time.
pub fn target_vector_field(tau0: &Trajectory, tau1: &Trajectory) -> Result<Array> {
    check_pair(tau0, tau1)?;
    Ok(tau1.as_array().zip_map(tau0.as_array(), |b, a| b - a)?)
}

fn check_pair(tau0: &Trajectory, tau1: &Trajectory) -> Result<()> {
    if tau0.as_array().shape() != tau1.as_array().shape() {
        return Err(TcfmError::Shape(format!(
            "τ0 {:?} vs τ1 {:?}",
            tau0.as_array().shape(),
            tau1.as_array().shape()
        )));
    }
    Ok(())
}

/// Mean over every element of the squared difference.
pub fn cfm_loss(predicted: &Array, target: &Array) -> Result<f64> {
    if predicted.shape() != target.shape() {
        return Err(TcfmError::Shape(format!("prediction {:?} vs target {:?}", predicted.shape(), target.shape())));
    }
    let sum: f64 = predicted.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predicted.len() as f64)
}

/// One training batch: network inputs and regression targets.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSampleBatch {
    /// `[B]` network time inputs in `[0, 1]`.
    pub t: Vec<f64>,
    /// `[B, H, D]` points on the probability path.
    pub tau_t: Array,
    /// `[B, H, D]` regression targets.
    pub target_u: Array,
    /// `[B, C]` conditioning.
    pub context: Array,
}

/// Per-step random streams, derived from the run seed and the global step
/// index so a resumed run replays the same draws.
pub struct StepRng {
    pub data: SeededRng,
    pub time: SeededRng,
    pub noise: SeededRng,
}

impl StepRng {
    pub fn new(seed: u64, step: usize) -> Self {
        Self {
            data: SeededRng::new(seed, Stream::Data).derive(step as u64),
            time: SeededRng::new(seed, Stream::Time).derive(step as u64),
            noise: SeededRng::new(seed, Stream::Noise).derive(step as u64),
        }
    }
}

/// A regression objective that turns clean trajectories into a training batch.
pub trait Objective {
    fn make_batch(&self, tau1: Array, context: Array, rng: &mut StepRng) -> Result<FlowSampleBatch>;
}

/// Batched draw of the flow-matching objective: `τ0 ~ N(0, I)`, `t ~ U(0, 1)`
/// per element, `τ_t` on the Gaussian path, target `τ1 − τ0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowMatching {
    pub sigma: f64,
}

impl Objective for FlowMatching {
    fn make_batch(&self, tau1: Array, context: Array, rng: &mut StepRng) -> Result<FlowSampleBatch> {
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(TcfmError::Config(format!("path standard deviation {} must be >= 0", self.sigma)));
        }
        let shape = tau1.shape().to_vec();
        let batch = shape[0];
        let per = tau1.len() / batch;
        let tau0 = rng.noise.normal_array(&shape);
        let t: Vec<f64> = (0..batch).map(|_| rng.time.uniform()).collect();
        let mut tau_t = Vec::with_capacity(tau1.len());
        for (i, (&a, &b)) in tau0.data().iter().zip(tau1.data()).enumerate() {
            let mean = interpolate(a, b, t[i / per]);
            tau_t.push(if self.sigma == 0.0 { mean } else { mean + self.sigma * rng.noise.normal() });
        }
        let target_u = tau1.zip_map(&tau0, |b, a| b - a)?;
        Ok(FlowSampleBatch { t, tau_t: Array::new(shape, tau_t)?, target_u, context })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::steps")]
    pub steps: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Checkpoint period in steps; 0 disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Cosine-anneal the learning rate to zero over this many global steps;
    /// 0 keeps it constant.
    #[serde(default)]
    pub lr_decay_steps: usize,
}

mod defaults {
    pub fn sigma() -> f64 {
        0.01
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn steps() -> usize {
        2000
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            sigma: defaults::sigma(),
            batch_size: defaults::batch_size(),
            steps: defaults::steps(),
            lr: defaults::lr(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            eps: defaults::eps(),
            seed: 0,
            checkpoint_every: 0,
            lr_decay_steps: 0,
        }
    }
}

impl TrainerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    /// Learning rate used for global step `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.lr_decay_steps == 0 {
            return self.lr;
        }
        let progress = step.min(self.lr_decay_steps) as f64 / self.lr_decay_steps as f64;
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(TcfmError::Config(format!("sigma {} must be >= 0", self.sigma)));
        }
        if self.batch_size == 0 {
            return Err(TcfmError::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(TcfmError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Everything needed to continue training: parameters, optimizer moments and
/// the global step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub net: VectorFieldNet,
    pub optimizer: AdamState,
    pub step: usize,
}

impl TrainState {
    pub fn new(net: VectorFieldNet) -> Self {
        Self { net, optimizer: AdamState::new(), step: 0 }
    }
}

/// Hooks the training loop calls; the default implementation does nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _step: usize, _loss: f64) {}

    /// Persists `state` and returns where it went.
    fn checkpoint(&mut self, _state: &TrainState) -> Result<Option<PathBuf>> {
        Ok(None)
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Runs `cfg.steps` optimizer steps starting at `state.step` and returns the
/// updated state with the per-step losses of this call.
pub fn train_with<O: Objective>(
    dataset: &TrajectoryDataset,
    mut state: TrainState,
    cfg: &TrainerConfig,
    objective: &O,
    observer: &mut dyn TrainObserver,
) -> Result<(TrainState, Vec<f64>)> {
    cfg.validate()?;
    let net_cfg = state.net.config();
    if dataset.horizon() != net_cfg.horizon
        || dataset.state_dim() != net_cfg.state_dim
        || dataset.context_dim() != net_cfg.context_dim
    {
        return Err(TcfmError::Config(format!(
            "dataset is [H={}, D={}, C={}] but the network expects [H={}, D={}, C={}]",
            dataset.horizon(),
            dataset.state_dim(),
            dataset.context_dim(),
            net_cfg.horizon,
            net_cfg.state_dim,
            net_cfg.context_dim
        )));
    }
    if cfg.steps > 0 && dataset.is_empty() {
        return Err(TcfmError::Data("cannot train on an empty dataset".into()));
    }
    let mut adam = cfg.adam();
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut last_good = None;
    for _ in 0..cfg.steps {
        let step = state.step;
        let mut rng = StepRng::new(cfg.seed, step);
        let indices: Vec<usize> = (0..cfg.batch_size).map(|_| rng.data.index(dataset.len())).collect();
        let (tau1, context) = dataset.gather(&indices)?;
        let batch = objective.make_batch(tau1, context, &mut rng)?;

        let mut tape = Tape::new();
        let pred = state.net.record(&mut tape, &batch.t, &batch.tau_t, &batch.context)?;
        let target = tape.constant(batch.target_u);
        let loss_var = tape.mean_square(pred, target)?;
        let loss = tape.value(loss_var).item();
        if !loss.is_finite() {
            return Err(TcfmError::Diverged { step, last_good });
        }
        let grads = tape.backward(loss_var, &Array::scalar(1.0))?;
        adam.lr = cfg.lr_at(step);
        match adam_step(state.net.params_mut(), &grads, &mut state.optimizer, &adam) {
            Err(DiffError::NonFinite(_)) => return Err(TcfmError::Diverged { step, last_good }),
            other => other?,
        }
        state.step += 1;
        losses.push(loss);
        observer.on_step(step, loss);
        if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 {
            if let Some(path) = observer.checkpoint(&state)? {
                last_good = Some(path);
            }
        }
    }
    Ok((state, losses))
}

/// Flow-matching training from a freshly initialized (or pre-trained) network.
pub fn train(
    dataset: &TrajectoryDataset,
    net: VectorFieldNet,
    cfg: &TrainerConfig,
) -> Result<(VectorFieldNet, Vec<f64>)> {
    let objective = FlowMatching { sigma: cfg.sigma };
    let (state, losses) = train_with(dataset, TrainState::new(net), cfg, &objective, &mut NoObserver)?;
    Ok((state.net, losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(rows: &[&[f64]]) -> Trajectory {
        Trajectory::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn rng() -> SeededRng {
        SeededRng::new(0, Stream::Noise)
    }

    #[test]
    fn path_endpoint_at_zero() {
        let a = traj(&[&[0.3, -1.2], &[2.0, 0.1]]);
        let b = traj(&[&[5.0, 4.0], &[-3.0, 0.7]]);
        assert_eq!(sample_probability_path(&a, &b, 0.0, 0.0, &mut rng()).unwrap(), a);
        assert_eq!(sample_probability_path(&a, &b, 1.0, 0.0, &mut rng()).unwrap(), b);
    }

    #[test]
    fn path_midpoint() {
        let a = Trajectory::constant(&[0.0, 0.0], 3).unwrap();
        let b = Trajectory::constant(&[2.0, 2.0], 3).unwrap();
        let mid = sample_probability_path(&a, &b, 0.5, 0.0, &mut rng()).unwrap();
        assert_eq!(mid, Trajectory::constant(&[1.0, 1.0], 3).unwrap());
    }

    #[test]
    fn path_rejects_negative_sigma() {
        let a = Trajectory::constant(&[0.0], 2).unwrap();
        assert!(matches!(sample_probability_path(&a, &a, 0.5, -0.1, &mut rng()), Err(TcfmError::Config(_))));
    }

    #[test]
    fn path_noise_has_requested_spread() {
        let a = Trajectory::constant(&[0.0; 10], 100).unwrap();
        let b = Trajectory::constant(&[1.0; 10], 100).unwrap();
        let mut r = SeededRng::new(42, Stream::Noise);
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for _ in 0..100 {
            let s = sample_probability_path(&a, &b, 0.3, 0.1, &mut r).unwrap();
            for v in s.as_array().data() {
                sum_sq += (v - 0.3) * (v - 0.3);
                n += 1;
            }
        }
        assert_eq!(n, 100_000);
        let std = (sum_sq / n as f64).sqrt();
        assert!((0.099..=0.101).contains(&std), "{std}");
    }

    #[test]
    fn target_field_cases() {
        let a = traj(&[&[1.0, 2.0]]);
        assert_eq!(target_vector_field(&a, &a).unwrap().data(), &[0.0, 0.0]);
        let zeros = traj(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let one = traj(&[&[0.0, 0.0], &[0.0, 4.0]]);
        assert_eq!(target_vector_field(&zeros, &one).unwrap().data(), &[0.0, 0.0, 0.0, 4.0]);
        let mut r = SeededRng::new(9, Stream::Custom(3));
        let t0 = Trajectory::new(r.normal_array(&[8, 3])).unwrap();
        let t1 = Trajectory::new(r.normal_array(&[8, 3])).unwrap();
        let u = target_vector_field(&t0, &t1).unwrap();
        let back = u.zip_map(t0.as_array(), |x, y| x + y).unwrap();
        for (x, y) in back.data().iter().zip(t1.as_array().data()) {
            assert!((x - y).abs() <= f64::EPSILON * 4.0 * y.abs().max(1.0));
        }
        assert!(target_vector_field(&a, &zeros).is_err());
    }

    #[test]
    fn loss_cases() {
        let t = Array::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(cfm_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(cfm_loss(&t.map(|v| v + 1.0), &t).unwrap(), 1.0);
        let p = Array::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap();
        assert_eq!(cfm_loss(&p, &Array::zeros(&[1, 1, 2])).unwrap(), 0.5);
    }

    #[test]
    fn flow_batch_draws_time_per_element() {
        let tau1 = Array::full(&[4, 2, 1], 1.0);
        let mut r = StepRng::new(3, 0);
        let b = FlowMatching { sigma: 0.0 }.make_batch(tau1, Array::zeros(&[4, 1]), &mut r).unwrap();
        assert_eq!(b.t.len(), 4);
        assert!(b.t.windows(2).any(|w| w[0] != w[1]));
        // τ_t + (1 − t)·u == τ1 when σ = 0.
        for i in 0..8 {
            let t = b.t[i / 2];
            let rec = b.tau_t.data()[i] + (1.0 - t) * b.target_u.data()[i];
            assert!((rec - 1.0).abs() < 1e-12);
        }
    }
}
