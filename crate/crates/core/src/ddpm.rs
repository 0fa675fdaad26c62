//! Matched diffusion baseline: the same U-Net trained to predict the noise of
//! a cosine-schedule forward process, sampled ancestrally on an evenly
//! strided subset of its timesteps.

use diffcore::{Array, SeededRng, Stream};
use serde::{Deserialize, Serialize};

use crate::cfm::{FlowSampleBatch, Objective, StepRng};
use crate::error::{Result, TcfmError};
use crate::net::{NetConfig, VectorFieldNet};
use crate::sampler::{draw_prior, CountingModel, FieldModel, LatencyReport, SampleRequest};
use crate::trajectory::Trajectory;

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    /// Clip the predicted clean trajectory to `[-1, 1]` at every step.
    #[serde(default = "default_clip")]
    pub clip_denoised: bool,
}

fn default_timesteps() -> usize {
    100
}

fn default_clip() -> bool {
    true
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self { timesteps: default_timesteps(), clip_denoised: default_clip() }
    }
}

/// Cosine noise schedule: `ᾱ(k) = f(k)/f(0)`, `f(k) = cos²(((k/T) + s)/(1 + s) · π/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas_cumprod: Vec<f64>,
}

impl NoiseSchedule {
    pub fn cosine(timesteps: usize) -> Result<Self> {
        if timesteps == 0 {
            return Err(TcfmError::Config("diffusion needs at least one timestep".into()));
        }
        let f = |k: usize| {
            let x = (k as f64 / timesteps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
        };
        let betas: Vec<f64> = (0..timesteps).map(|k| (1.0 - f(k + 1) / f(k)).min(MAX_BETA)).collect();
        let mut alphas_cumprod = Vec::with_capacity(timesteps);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alphas_cumprod.push(acc);
        }
        Ok(Self { betas, alphas_cumprod })
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas_cumprod(&self) -> &[f64] {
        &self.alphas_cumprod
    }

    /// Network time input for timestep `k`.
    pub fn time_input(&self, k: usize) -> f64 {
        k as f64 / self.timesteps() as f64
    }

    /// `N` timesteps evenly strided over `[0, T-1]`, ascending, always
    /// including the noisiest step.
    pub fn strided(&self, n: usize) -> Result<Vec<usize>> {
        let t = self.timesteps();
        if n == 0 || n > t {
            return Err(TcfmError::Config(format!("{n} sampling steps requested, schedule has {t}")));
        }
        if n == 1 {
            return Ok(vec![t - 1]);
        }
        Ok((0..n).map(|i| ((i * (t - 1)) as f64 / (n - 1) as f64).round() as usize).collect())
    }
}

/// Noise-prediction objective: `x_k = √ᾱ_k x0 + √(1−ᾱ_k) ε`, target `ε`.
pub struct NoisePrediction<'a> {
    pub schedule: &'a NoiseSchedule,
}

impl Objective for NoisePrediction<'_> {
    fn make_batch(&self, x0: Array, context: Array, rng: &mut StepRng) -> Result<FlowSampleBatch> {
        let shape = x0.shape().to_vec();
        let batch = shape[0];
        let per = x0.len() / batch;
        let steps: Vec<usize> = (0..batch).map(|_| rng.time.index(self.schedule.timesteps())).collect();
        let noise = rng.noise.normal_array(&shape);
        let mut noisy = Vec::with_capacity(x0.len());
        for (i, (&x, &e)) in x0.data().iter().zip(noise.data()).enumerate() {
            let ab = self.schedule.alphas_cumprod[steps[i / per]];
            noisy.push(ab.sqrt() * x + (1.0 - ab).sqrt() * e);
        }
        Ok(FlowSampleBatch {
            t: steps.iter().map(|&k| self.schedule.time_input(k)).collect(),
            tau_t: Array::new(shape, noisy)?,
            target_u: noise,
            context,
        })
    }
}

/// A noise-prediction U-Net together with its schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionNet {
    pub net: VectorFieldNet,
    pub config: DiffusionConfig,
    schedule: NoiseSchedule,
}

impl DiffusionNet {
    pub fn new(net: VectorFieldNet, config: DiffusionConfig) -> Result<Self> {
        let schedule = NoiseSchedule::cosine(config.timesteps)?;
        Ok(Self { net, config, schedule })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn objective(&self) -> NoisePrediction<'_> {
        NoisePrediction { schedule: &self.schedule }
    }

    pub fn net_config(&self) -> &NetConfig {
        self.net.config()
    }
}

/// Ancestral sampling over `N` strided timesteps, with the same start/goal
/// clamping as the flow sampler.
pub fn ddpm_ancestral_sample(baseline: &DiffusionNet, req: &SampleRequest) -> Result<Vec<Trajectory>> {
    ancestral_sample_with(&baseline.net, &baseline.schedule, baseline.config.clip_denoised, req)
}

pub fn ancestral_sample_with<M: FieldModel>(
    model: &M,
    schedule: &NoiseSchedule,
    clip: bool,
    req: &SampleRequest,
) -> Result<Vec<Trajectory>> {
    let cfg = model.net_config().clone();
    req.validate(&cfg)?;
    let steps = schedule.strided(req.num_steps)?;
    let (h, d) = (cfg.horizon, cfg.state_dim);
    let priors = draw_prior(&cfg, req);
    let ab = schedule.alphas_cumprod();
    let mut out = Vec::with_capacity(req.num_samples);
    for (first, count) in req.chunks() {
        let mut x: Vec<f64> = priors[first..first + count].iter().flat_map(|a| a.data().iter().copied()).collect();
        // Per-sample ancestral noise streams, independent of the prior draws.
        let mut noise_rngs: Vec<SeededRng> = (first..first + count)
            .map(|i| SeededRng::new(req.seed, Stream::Noise).derive(i as u64))
            .collect();
        let ctx = req.context_batch(count)?;
        for (pos, &k) in steps.iter().enumerate().rev() {
            if let Some(c) = &req.constraints {
                c.apply(&mut x, h, d);
            }
            let state = Array::new(vec![count, h, d], x.clone())?;
            let eps = model.evaluate(&vec![schedule.time_input(k); count], &state, &ctx)?;
            if !eps.all_finite() {
                return Err(TcfmError::NonFinite {
                    step: steps.len() - 1 - pos,
                    detail: "network returned a non-finite noise estimate".into(),
                });
            }
            let ab_k = ab[k];
            let ab_prev = if pos == 0 { 1.0 } else { ab[steps[pos - 1]] };
            let beta = 1.0 - ab_k / ab_prev;
            let coef_x0 = ab_prev.sqrt() * beta / (1.0 - ab_k);
            let coef_xt = (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab_k);
            let var = beta * (1.0 - ab_prev) / (1.0 - ab_k);
            let per = h * d;
            for (i, (xi, &e)) in x.iter_mut().zip(eps.data()).enumerate() {
                let mut x0 = (*xi - (1.0 - ab_k).sqrt() * e) / ab_k.sqrt();
                if clip {
                    x0 = x0.clamp(-1.0, 1.0);
                }
                *xi = if pos == 0 {
                    x0
                } else {
                    coef_x0 * x0 + coef_xt * *xi + var.sqrt() * noise_rngs[i / per].normal()
                };
            }
        }
        if let Some(c) = &req.constraints {
            c.apply(&mut x, h, d);
        }
        for chunk in x.chunks_exact(h * d) {
            out.push(Trajectory::new(Array::new(vec![h, d], chunk.to_vec())?)?);
        }
    }
    Ok(out)
}

/// Latency of [`ddpm_ancestral_sample`] for `req`, with an instrumented call count.
pub fn measure_ddpm_latency(baseline: &DiffusionNet, req: &SampleRequest, repetitions: usize) -> Result<LatencyReport> {
    crate::sampler::measure_latency(repetitions, || {
        let counter = CountingModel::new(&baseline.net);
        ancestral_sample_with(&counter, &baseline.schedule, baseline.config.clip_denoised, req)?;
        Ok(counter.calls() / req.num_samples)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_is_monotone() {
        let s = NoiseSchedule::cosine(64).unwrap();
        assert_eq!(s.timesteps(), 64);
        assert!(s.alphas_cumprod().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alphas_cumprod()[0] > 0.99);
        assert!(*s.alphas_cumprod().last().unwrap() < 1e-3);
        assert!(s.betas().iter().all(|&b| b > 0.0 && b <= MAX_BETA));
    }

    #[test]
    fn strided_subsets() {
        let s = NoiseSchedule::cosine(64).unwrap();
        assert_eq!(s.strided(1).unwrap(), vec![63]);
        assert_eq!(s.strided(2).unwrap(), vec![0, 63]);
        assert_eq!(s.strided(64).unwrap(), (0..64).collect::<Vec<_>>());
        let four = s.strided(4).unwrap();
        assert_eq!(four, vec![0, 21, 42, 63]);
        assert!(s.strided(65).is_err());
        assert!(s.strided(0).is_err());
    }
}
