//! Trajectory generation with conditional flow matching.
//!
//! A temporal U-Net is trained to regress the straight-line field between
//! Gaussian noise and data trajectories; sampling integrates that field with
//! a handful of Euler steps. A noise-prediction diffusion model over the same
//! network serves as the baseline.

pub mod cfm;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod ddpm;
pub mod domains;
pub mod error;
pub mod metrics;
pub mod model;
pub mod net;
pub mod plot;
pub mod sampler;
pub mod trajectory;

pub use error::{Result, TcfmError};
pub use net::{NetConfig, VectorFieldNet};
pub use trajectory::{Trajectory, TrajectoryDataset};
