//! A trained network of either family together with its data normalization,
//! sampled in raw (denormalized) coordinates.

use crate::checkpoint::Checkpoint;
use crate::config::ModelFamily;
use crate::ddpm::{ancestral_sample_with, DiffusionConfig, NoiseSchedule};
use crate::domains::norm::{ContextLayout, NormStats};
use crate::error::Result;
use crate::net::{NetConfig, VectorFieldNet};
use crate::sampler::{euler_sample, measure_latency, CountingModel, PlanConstraint, SampleRequest, Solver};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub family: ModelFamily,
    pub net: VectorFieldNet,
    pub diffusion: DiffusionConfig,
    pub stats: NormStats,
    pub layout: ContextLayout,
}

/// Raw-coordinate sampling options.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOptions {
    pub num_steps: usize,
    pub num_samples: usize,
    pub solver: Solver,
    pub seed: u64,
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            family: ckpt.family,
            net: ckpt.net()?,
            diffusion: ckpt.diffusion.clone(),
            stats: ckpt.stats.clone(),
            layout: ckpt.layout,
        })
    }

    pub fn net_config(&self) -> &NetConfig {
        self.net.config()
    }

    /// Builds the model-space request for a raw context and optional raw
    /// `(start, goal)` plan constraint.
    pub fn request(&self, raw_context: &[f64], plan: Option<(&[f64], &[f64])>, opts: &SampleOptions) -> SampleRequest {
        let mut req = SampleRequest::new(
            self.layout.normalize(&self.stats, raw_context),
            opts.num_steps,
            opts.num_samples,
            opts.seed,
        );
        req.solver = opts.solver;
        if let Some((start, goal)) = plan {
            req = req.with_constraints(PlanConstraint::new(
                self.stats.normalize_state(start),
                self.stats.normalize_state(goal),
            ));
        }
        req
    }

    /// Samples in model space (normalized coordinates).
    pub fn sample_normalized(&self, req: &SampleRequest) -> Result<Vec<Trajectory>> {
        match self.family {
            ModelFamily::Tcfm => euler_sample(&self.net, req),
            ModelFamily::Ddpm => {
                let schedule = NoiseSchedule::cosine(self.diffusion.timesteps)?;
                ancestral_sample_with(&self.net, &schedule, self.diffusion.clip_denoised, req)
            }
        }
    }

    /// Samples in raw coordinates. With a plan, the start and goal states of
    /// every sample equal the requested ones exactly.
    pub fn sample(&self, raw_context: &[f64], plan: Option<(&[f64], &[f64])>, opts: &SampleOptions) -> Result<Vec<Trajectory>> {
        let req = self.request(raw_context, plan, opts);
        let samples = self.sample_normalized(&req)?;
        samples
            .iter()
            .map(|s| {
                let raw = self.stats.denormalize(s)?;
                match plan {
                    // Denormalizing the clamped rows is only exact up to
                    // rounding, so the raw constraint is written back.
                    Some((start, goal)) => raw.map_states(|i, st| {
                        if i == 0 {
                            start.to_vec()
                        } else if i == raw.horizon() - 1 {
                            goal.to_vec()
                        } else {
                            st.to_vec()
                        }
                    }),
                    None => Ok(raw),
                }
            })
            .collect()
    }

    /// Wall-clock latency and network evaluations per sample for `req`.
    pub fn latency(&self, req: &SampleRequest, repetitions: usize) -> Result<crate::sampler::LatencyReport> {
        let schedule = NoiseSchedule::cosine(self.diffusion.timesteps)?;
        measure_latency(repetitions, || {
            let counter = CountingModel::new(&self.net);
            match self.family {
                ModelFamily::Tcfm => euler_sample(&counter, req)?,
                ModelFamily::Ddpm => ancestral_sample_with(&counter, &schedule, self.diffusion.clip_denoised, req)?,
            };
            Ok(counter.calls() / req.num_samples)
        })
    }
}
