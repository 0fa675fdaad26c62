//! Run configuration: one TOML file drives every command.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/umaze"
//!
//! [domain]
//! kind = "maze"
//! maze = "u_maze"
//! n = 400
//!
//! [model]
//! family = "tcfm"
//! base_channels = 16
//!
//! [trainer]
//! steps = 1500
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cfm::TrainerConfig;
use crate::ddpm::DiffusionConfig;
use crate::domains::flight::FlightConfig;
use crate::domains::pursuit::PursuitScenario;
use crate::error::{Result, TcfmError};
use crate::net::NetConfig;
use crate::sampler::Solver;

/// Environment variable that roots relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "TCFM_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Dataset directory; defaults to `<output_dir>/data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub domain: DomainConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainConfig {
    Maze(MazeDomain),
    Pursuit(PursuitDomain),
    Flight(FlightDomain),
    Csv(CsvDomain),
}

impl DomainConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            DomainConfig::Maze(_) => "maze",
            DomainConfig::Pursuit(_) => "pursuit",
            DomainConfig::Flight(_) => "flight",
            DomainConfig::Csv(_) => "csv",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            DomainConfig::Maze(m) => m.horizon,
            DomainConfig::Pursuit(p) => p.scenario.horizon,
            DomainConfig::Flight(f) => f.flight.horizon,
            DomainConfig::Csv(c) => c.horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MazeDomain {
    /// `u_maze`, `medium`, or a path to a text grid.
    pub maze: String,
    pub jitter: f64,
    pub n: usize,
    pub horizon: usize,
}

impl Default for MazeDomain {
    fn default() -> Self {
        Self { maze: "u_maze".into(), jitter: 0.2, n: 400, horizon: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitDomain {
    pub n: usize,
    pub scenario: PursuitScenario,
}

impl Default for PursuitDomain {
    fn default() -> Self {
        Self { n: 500, scenario: PursuitScenario::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightDomain {
    pub n: usize,
    pub flight: FlightConfig,
}

impl Default for FlightDomain {
    fn default() -> Self {
        Self { n: 474, flight: FlightConfig::default() }
    }
}

/// User-supplied trajectories: each track is resampled to `past + horizon`
/// states; the first `past` become the context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDomain {
    pub path: PathBuf,
    #[serde(default = "default_csv_horizon")]
    pub horizon: usize,
    #[serde(default = "default_csv_past")]
    pub past: usize,
}

fn default_csv_horizon() -> usize {
    32
}

fn default_csv_past() -> usize {
    8
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    #[default]
    Tcfm,
    Ddpm,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Tcfm => "tcfm",
            ModelFamily::Ddpm => "ddpm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub base_channels: usize,
    pub depth: usize,
    pub kernel_size: usize,
    pub time_embed_dim: usize,
    pub groups: usize,
    pub diffusion: DiffusionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let net = NetConfig::new(1, 1, 0);
        Self {
            family: ModelFamily::Tcfm,
            base_channels: net.base_channels,
            depth: net.depth,
            kernel_size: net.kernel_size,
            time_embed_dim: net.time_embed_dim,
            groups: net.groups,
            diffusion: DiffusionConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn net_config(&self, horizon: usize, state_dim: usize, context_dim: usize) -> NetConfig {
        NetConfig {
            base_channels: self.base_channels,
            depth: self.depth,
            kernel_size: self.kernel_size,
            time_embed_dim: self.time_embed_dim,
            groups: self.groups,
            ..NetConfig::new(horizon, state_dim, context_dim)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_steps: usize,
    pub num_samples: usize,
    pub solver: Solver,
    pub seed: u64,
    /// Step counts evaluated by `eval` and `benchmark`.
    pub n_list: Vec<usize>,
    /// Test-split items evaluated (0 means all).
    pub eval_items: usize,
    pub repetitions: usize,
    /// Which test-split item `sample` draws its context from.
    pub item: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_steps: 1,
            num_samples: 10,
            solver: Solver::Euler,
            seed: 0,
            n_list: vec![1, 2, 4, 8, 16, 32, 64],
            eval_items: 20,
            repetitions: 5,
            item: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TcfmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TcfmError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            TcfmError::Config(m) => TcfmError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fully materialized TOML; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if self.sampler.n_list.contains(&0) || self.sampler.num_steps == 0 {
            return Err(TcfmError::Config("sampling step counts must be >= 1".into()));
        }
        if self.sampler.num_samples == 0 {
            return Err(TcfmError::Config("num_samples must be >= 1".into()));
        }
        match &self.domain {
            DomainConfig::Maze(m) => {
                if m.horizon < 2 {
                    return Err(TcfmError::Config("maze horizon must be >= 2".into()));
                }
            }
            DomainConfig::Pursuit(p) => p.scenario.validate()?,
            DomainConfig::Flight(f) => f.flight.validate()?,
            DomainConfig::Csv(c) => {
                if c.horizon < 2 || c.past < 1 {
                    return Err(TcfmError::Config("csv domain needs horizon >= 2 and past >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Output directory, rooted at `$TCFM_OUTPUT_ROOT` when it is relative
    /// and the variable is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn resolved_data_dir(&self) -> PathBuf {
        match &self.data_dir {
            Some(d) if d.is_relative() => match std::env::var_os(OUTPUT_ROOT_ENV) {
                Some(root) => PathBuf::from(root).join(d),
                None => d.clone(),
            },
            Some(d) => d.clone(),
            None => self.resolved_output_dir().join("data"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_defaults() {
        let cfg = RunConfig::from_toml("[domain]\nkind = \"maze\"\n").unwrap();
        assert_eq!(cfg.domain, DomainConfig::Maze(MazeDomain::default()));
        assert_eq!(cfg.trainer, TrainerConfig::default());
        let text = cfg.to_toml();
        assert!(text.contains("base_channels"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[domain]\nkind = \"maze\"\nwidth = 3\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n[domain]\nkind = \"maze\"\n").is_err());
        assert!(RunConfig::from_toml("[domain]\nkind = \"lake\"\n").is_err());
    }

    #[test]
    fn nested_domain_sections() {
        let text = "[domain]\nkind = \"pursuit\"\nn = 10\n[domain.scenario]\ndetection_rate = 0.129\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        match &cfg.domain {
            DomainConfig::Pursuit(p) => {
                assert_eq!(p.n, 10);
                assert_eq!(p.scenario.detection_rate, 0.129);
                assert_eq!(p.scenario.horizon, 64);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn zero_steps_in_n_list_rejected() {
        let err = RunConfig::from_toml("[domain]\nkind = \"maze\"\n[sampler]\nn_list = [1, 0]\n").unwrap_err();
        assert!(matches!(err, TcfmError::Config(_)));
    }
}
