//! The vector-field network: a 1D temporal U-Net over `[horizon, state_dim]`
//! trajectories, conditioned on flow time and a context vector through FiLM.
//!
//! Layout of one forward pass:
//!
//! ```text
//! cond   = fc2(mish(fc1(time_embed(t) ‖ context)))
//! down_i = ResBlock -> (skip) -> stride-2 conv          i = 0..depth
//! mid    = ResBlock, ResBlock
//! up_i   = nearest x2 -> conv -> concat(skip_i) -> ResBlock
//! out    = 1x1 conv to state_dim (zero-initialized)
//! ```
//!
//! A ResBlock is `[conv k -> group-norm -> Mish] x2` with a FiLM modulation
//! (from `mish(cond)`) after the first stage and a 1x1 residual projection
//! when the channel count changes.

use std::collections::BTreeMap;

use diffcore::{Array, SeededRng, Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcfmError};

const NORM_EPS: f64 = 1e-5;
const MAX_FREQUENCY: f64 = 16.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub horizon: usize,
    pub state_dim: usize,
    #[serde(default)]
    pub context_dim: usize,
    #[serde(default = "defaults::base_channels")]
    pub base_channels: usize,
    #[serde(default = "defaults::depth")]
    pub depth: usize,
    #[serde(default = "defaults::kernel_size")]
    pub kernel_size: usize,
    #[serde(default = "defaults::time_embed_dim")]
    pub time_embed_dim: usize,
    #[serde(default = "defaults::groups")]
    pub groups: usize,
}

mod defaults {
    pub fn base_channels() -> usize {
        32
    }
    pub fn depth() -> usize {
        2
    }
    pub fn kernel_size() -> usize {
        5
    }
    pub fn time_embed_dim() -> usize {
        32
    }
    pub fn groups() -> usize {
        8
    }
}

impl NetConfig {
    pub fn new(horizon: usize, state_dim: usize, context_dim: usize) -> Self {
        Self {
            horizon,
            state_dim,
            context_dim,
            base_channels: defaults::base_channels(),
            depth: defaults::depth(),
            kernel_size: defaults::kernel_size(),
            time_embed_dim: defaults::time_embed_dim(),
            groups: defaults::groups(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(TcfmError::Config(msg));
        if self.horizon == 0 || self.state_dim == 0 || self.base_channels == 0 || self.depth == 0 {
            return fail(format!("horizon, state_dim, base_channels and depth must be positive: {self:?}"));
        }
        if self.horizon % (1 << self.depth) != 0 {
            return fail(format!("horizon {} is not divisible by 2^{}", self.horizon, self.depth));
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.groups == 0 || self.base_channels % self.groups != 0 {
            return fail(format!("base_channels {} not divisible by groups {}", self.base_channels, self.groups));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return fail(format!("time_embed_dim {} must be even and >= 2", self.time_embed_dim));
        }
        Ok(())
    }

    /// Channel width at each U-Net level, `base · 2^i` for `i = 0..=depth`.
    pub fn level_channels(&self) -> Vec<usize> {
        (0..=self.depth).map(|i| self.base_channels << i).collect()
    }

    fn cond_hidden(&self) -> usize {
        2 * self.time_embed_dim
    }
}

/// Sinusoidal features of flow time `t ∈ [0, 1]`:
/// `[sin(ω_0 t) .. sin(ω_{k-1} t), cos(ω_0 t) .. cos(ω_{k-1} t)]`, `k = dim / 2`,
/// with `ω_i` log-spaced from 1 to 100.
pub fn time_embed(t: f64, dim: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(TcfmError::Domain(format!("flow time {t} outside [0, 1]")));
    }
    if dim < 2 || dim % 2 != 0 {
        return Err(TcfmError::Config(format!("time embedding dim {dim} must be even and >= 2")));
    }
    let freqs = frequencies(dim / 2);
    let mut out: Vec<f64> = freqs.iter().map(|w| (w * t).sin()).collect();
    out.extend(freqs.iter().map(|w| (w * t).cos()));
    Ok(out)
}

fn frequencies(half: usize) -> Vec<f64> {
    if half == 1 {
        return vec![1.0];
    }
    (0..half).map(|i| MAX_FREQUENCY.powf(i as f64 / (half - 1) as f64)).collect()
}

/// `out[c, l] = features[c, l] · (1 + scale[c]) + shift[c]`.
pub fn film_modulate(features: &Array, scale: &Array, shift: &Array) -> Result<Array> {
    let mut tape = Tape::new();
    let f = tape.constant(features.clone());
    let s = tape.constant(scale.clone());
    let h = tape.constant(shift.clone());
    let out = tape.film(f, s, h)?;
    Ok(tape.value(out).clone())
}

/// Parameters plus architecture of `v_θ(t, τ, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldNet {
    config: NetConfig,
    params: BTreeMap<String, Array>,
}

struct Init<'a> {
    rng: &'a mut SeededRng,
    params: BTreeMap<String, Array>,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let value = self.rng.uniform_array(shape, -bound, bound);
        self.params.insert(name, value);
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f64) {
        self.params.insert(name, Array::full(shape, value));
    }

    fn dense(&mut self, prefix: &str, inputs: usize, outputs: usize) {
        self.uniform(format!("{prefix}.w"), &[outputs, inputs], inputs);
        self.uniform(format!("{prefix}.b"), &[outputs], inputs);
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) {
        self.uniform(format!("{prefix}.w"), &[cout, cin, k], cin * k);
        self.uniform(format!("{prefix}.b"), &[cout], cin * k);
    }

    fn norm(&mut self, prefix: &str, channels: usize) {
        self.constant(format!("{prefix}.g"), &[channels], 1.0);
        self.constant(format!("{prefix}.b"), &[channels], 0.0);
    }

    fn res_block(&mut self, prefix: &str, cin: usize, cout: usize, cfg: &NetConfig) {
        self.conv(&format!("{prefix}.conv1"), cin, cout, cfg.kernel_size);
        self.norm(&format!("{prefix}.norm1"), cout);
        self.conv(&format!("{prefix}.conv2"), cout, cout, cfg.kernel_size);
        self.norm(&format!("{prefix}.norm2"), cout);
        // Zero FiLM projection: identity modulation until trained.
        self.constant(format!("{prefix}.film.w"), &[2 * cout, cfg.time_embed_dim], 0.0);
        self.constant(format!("{prefix}.film.b"), &[2 * cout], 0.0);
        if cin != cout {
            self.conv(&format!("{prefix}.skip"), cin, cout, 1);
        }
    }
}

/// Records parameters on a tape and looks them up by name.
struct Bound<'t> {
    tape: &'t mut Tape,
    vars: BTreeMap<String, Var>,
    cfg: &'t NetConfig,
}

impl Bound<'_> {
    fn p(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    fn conv(&mut self, prefix: &str, x: Var, stride: usize) -> Result<Var> {
        let (w, b) = (self.p(&format!("{prefix}.w")), self.p(&format!("{prefix}.b")));
        let k = self.tape.value(w).shape()[2];
        let pad = if stride == 1 { k / 2 } else { (k - 1) / 2 };
        Ok(self.tape.conv1d(x, w, b, stride, pad)?)
    }

    fn conv_norm_mish(&mut self, conv: &str, norm: &str, x: Var) -> Result<Var> {
        let h = self.conv(conv, x, 1)?;
        let (g, b) = (self.p(&format!("{norm}.g")), self.p(&format!("{norm}.b")));
        let h = self.tape.group_norm(h, g, b, self.cfg.groups, NORM_EPS)?;
        Ok(self.tape.mish(h)?)
    }

    fn res_block(&mut self, prefix: &str, x: Var, cond: Var) -> Result<Var> {
        let h = self.conv_norm_mish(&format!("{prefix}.conv1"), &format!("{prefix}.norm1"), x)?;
        let channels = self.tape.value(h).shape()[1];
        let (fw, fb) = (self.p(&format!("{prefix}.film.w")), self.p(&format!("{prefix}.film.b")));
        let film = self.tape.dense(cond, fw, fb)?;
        let scale = self.tape.narrow(film, 0, channels)?;
        let shift = self.tape.narrow(film, channels, channels)?;
        let h = self.tape.film(h, scale, shift)?;
        let h = self.conv_norm_mish(&format!("{prefix}.conv2"), &format!("{prefix}.norm2"), h)?;
        let skip_name = format!("{prefix}.skip.w");
        let residual = if self.vars.contains_key(&skip_name) {
            self.conv(&format!("{prefix}.skip"), x, 1)?
        } else {
            x
        };
        Ok(self.tape.add(h, residual)?)
    }

    fn dense(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let (w, b) = (self.p(&format!("{prefix}.w")), self.p(&format!("{prefix}.b")));
        Ok(self.tape.dense(x, w, b)?)
    }
}

impl VectorFieldNet {
    /// Fan-in scaled uniform initialization; FiLM projections and the output
    /// projection start at zero, so a fresh network is the zero field.
    pub fn init(config: NetConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let dims = config.level_channels();
        let mut init = Init { rng, params: BTreeMap::new() };
        let te = config.time_embed_dim;
        init.dense("cond.fc1", te + config.context_dim, config.cond_hidden());
        init.dense("cond.fc2", config.cond_hidden(), te);
        let mut channels = config.state_dim;
        for (i, &width) in dims.iter().enumerate().take(config.depth) {
            init.res_block(&format!("down{i}.res"), channels, width, &config);
            init.conv(&format!("down{i}.pool"), width, width, 3);
            channels = width;
        }
        init.res_block("mid.res0", channels, dims[config.depth], &config);
        init.res_block("mid.res1", dims[config.depth], dims[config.depth], &config);
        channels = dims[config.depth];
        for i in (0..config.depth).rev() {
            init.conv(&format!("up{i}.conv"), channels, channels, 3);
            init.res_block(&format!("up{i}.res"), channels + dims[i], dims[i], &config);
            channels = dims[i];
        }
        init.constant("out.w".into(), &[config.state_dim, dims[0], 1], 0.0);
        init.constant("out.b".into(), &[config.state_dim], 0.0);
        Ok(Self { config, params: init.params })
    }

    /// Rebuilds a network from stored parameters, checking every name and shape.
    pub fn from_params(config: NetConfig, params: BTreeMap<String, Array>) -> Result<Self> {
        let reference = Self::init(config, &mut SeededRng::new(0, diffcore::Stream::Init))?;
        if reference.params.len() != params.len() {
            return Err(TcfmError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (name, value) in &reference.params {
            match params.get(name) {
                Some(p) if p.shape() == value.shape() => {}
                Some(p) => {
                    return Err(TcfmError::Checkpoint(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        p.shape(),
                        value.shape()
                    )))
                }
                None => return Err(TcfmError::Checkpoint(format!("missing parameter `{name}`"))),
            }
        }
        Ok(Self { config: reference.config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Array> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Array> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Array::len).sum()
    }

    fn check_inputs(&self, t: &[f64], traj: &Array, context: &Array) -> Result<usize> {
        let c = &self.config;
        let batch = t.len();
        if traj.shape() != [batch, c.horizon, c.state_dim] {
            return Err(TcfmError::Shape(format!(
                "trajectory batch {:?}, expected [{batch}, {}, {}]",
                traj.shape(),
                c.horizon,
                c.state_dim
            )));
        }
        let expected_ctx = [batch, c.context_dim.max(1)];
        if c.context_dim > 0 && context.shape() != expected_ctx {
            return Err(TcfmError::Shape(format!(
                "context batch {:?}, expected [{batch}, {}]",
                context.shape(),
                c.context_dim
            )));
        }
        Ok(batch)
    }

    /// Records a batched forward pass. Parameters become named leaves so a
    /// subsequent backward pass yields their gradients.
    ///
    /// `traj` is `[B, H, D]`; `context` is `[B, C]` (ignored when `C = 0`).
    /// Returns the `[B, H, D]` output.
    pub fn record(&self, tape: &mut Tape, t: &[f64], traj: &Array, context: &Array) -> Result<Var> {
        let mut vars = BTreeMap::new();
        for (name, value) in &self.params {
            vars.insert(name.clone(), tape.leaf(name, value.clone())?);
        }
        self.record_with(tape, vars, t, traj, context)
    }

    /// Like [`record`](Self::record), but with parameters already on the tape
    /// (`vars` maps every parameter name to its variable).
    pub fn record_with(
        &self,
        tape: &mut Tape,
        vars: BTreeMap<String, Var>,
        t: &[f64],
        traj: &Array,
        context: &Array,
    ) -> Result<Var> {
        let batch = self.check_inputs(t, traj, context)?;
        let cfg = &self.config;
        if let Some(name) = self.params.keys().find(|k| !vars.contains_key(*k)) {
            return Err(TcfmError::Usage(format!("parameter `{name}` is not on the tape")));
        }
        let te = cfg.time_embed_dim;
        let mut cond_in = Vec::with_capacity(batch * (te + cfg.context_dim));
        for (b, &tb) in t.iter().enumerate() {
            cond_in.extend(time_embed(tb, te)?);
            if cfg.context_dim > 0 {
                cond_in.extend_from_slice(&context.data()[b * cfg.context_dim..(b + 1) * cfg.context_dim]);
            }
        }
        let cond_in = tape.constant(Array::new(vec![batch, te + cfg.context_dim], cond_in)?);
        let x = tape.constant(traj.clone());
        let mut net = Bound { tape, vars, cfg };

        let h = net.dense("cond.fc1", cond_in)?;
        let h = net.tape.mish(h)?;
        let cond = net.dense("cond.fc2", h)?;
        let cond = net.tape.mish(cond)?;

        let mut h = net.tape.transpose12(x)?;
        let mut skips = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            h = net.res_block(&format!("down{i}.res"), h, cond)?;
            skips.push(h);
            h = net.conv(&format!("down{i}.pool"), h, 2)?;
        }
        h = net.res_block("mid.res0", h, cond)?;
        h = net.res_block("mid.res1", h, cond)?;
        for i in (0..cfg.depth).rev() {
            h = net.tape.upsample_nearest(h)?;
            h = net.conv(&format!("up{i}.conv"), h, 1)?;
            h = net.tape.concat(h, skips[i])?;
            h = net.res_block(&format!("up{i}.res"), h, cond)?;
        }
        let out = net.conv("out", h, 1)?;
        Ok(net.tape.transpose12(out)?)
    }

    /// Batched evaluation without keeping the tape.
    pub fn forward_batch(&self, t: &[f64], traj: &Array, context: &Array) -> Result<Array> {
        let mut tape = Tape::new();
        let out = self.record(&mut tape, t, traj, context)?;
        Ok(tape.value(out).clone())
    }

    /// Single trajectory `[H, D]` at flow time `t`.
    pub fn forward(&self, t: f64, traj: &Array, context: &[f64]) -> Result<Array> {
        let c = &self.config;
        if traj.shape() != [c.horizon, c.state_dim] {
            return Err(TcfmError::Shape(format!(
                "trajectory {:?}, expected [{}, {}]",
                traj.shape(),
                c.horizon,
                c.state_dim
            )));
        }
        if context.len() != c.context_dim {
            return Err(TcfmError::Shape(format!("context length {}, expected {}", context.len(), c.context_dim)));
        }
        let batch = traj.clone().reshape(&[1, c.horizon, c.state_dim])?;
        let ctx = if c.context_dim > 0 {
            Array::new(vec![1, c.context_dim], context.to_vec())?
        } else {
            Array::zeros(&[1, 1])
        };
        let out = self.forward_batch(&[t], &batch, &ctx)?;
        Ok(out.reshape(&[c.horizon, c.state_dim])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffcore::Stream;

    #[test]
    fn time_embed_at_zero() {
        let e = time_embed(0.0, 8).unwrap();
        assert_eq!(&e[..4], &[0.0; 4]);
        assert_eq!(&e[4..], &[1.0; 4]);
    }

    #[test]
    fn time_embed_distinguishes_endpoints() {
        assert_ne!(time_embed(0.0, 2).unwrap(), time_embed(1.0, 2).unwrap());
    }

    #[test]
    fn time_embed_half_dim4_formula() {
        // ω = [1, 16]
        let e = time_embed(0.5, 4).unwrap();
        let expected = [0.5f64.sin(), 8f64.sin(), 0.5f64.cos(), 8f64.cos()];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn time_embed_rejects_out_of_range() {
        assert!(matches!(time_embed(1.5, 4), Err(TcfmError::Domain(_))));
        assert!(matches!(time_embed(-0.1, 4), Err(TcfmError::Domain(_))));
    }

    #[test]
    fn time_embed_entries_bounded() {
        for i in 0..=20 {
            let e = time_embed(i as f64 / 20.0, 32).unwrap();
            assert_eq!(e.len(), 32);
            assert!(e.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn film_modulate_rejects_channel_mismatch() {
        let f = Array::zeros(&[3, 4]);
        assert!(film_modulate(&f, &Array::zeros(&[2]), &Array::zeros(&[3])).is_err());
    }

    #[test]
    fn config_rejects_bad_horizon() {
        let mut cfg = NetConfig::new(12, 2, 0);
        cfg.depth = 3;
        let err = VectorFieldNet::init(cfg, &mut SeededRng::new(0, Stream::Init)).unwrap_err();
        assert!(matches!(err, TcfmError::Config(_)));
    }

    #[test]
    fn config_rejects_even_kernel_and_bad_groups() {
        let mut cfg = NetConfig::new(16, 2, 0);
        cfg.kernel_size = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = NetConfig::new(16, 2, 0);
        cfg.groups = 5;
        assert!(cfg.validate().is_err());
    }
}
