//! Displacement errors, per-dimension errors at fixed horizons, and the
//! normalized maze score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::domains::maze::MazeSpec;
use crate::error::{Result, TcfmError};
use crate::trajectory::{distance, Trajectory};

/// Upper clamp of the normalized maze score (in units of the expert reward).
pub const MAZE_SCORE_CAP: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Ade {
    pub value: f64,
    /// Mean distance per timestep, length `H`.
    pub curve: Vec<f64>,
}

fn check_shapes(samples: &[Trajectory], truth: &Trajectory) -> Result<()> {
    if samples.is_empty() {
        return Err(TcfmError::Usage("ADE needs at least one sample".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.horizon() != truth.horizon() || s.state_dim() != truth.state_dim() {
            return Err(TcfmError::Shape(format!(
                "sample {i} is [{}, {}], truth is [{}, {}]",
                s.horizon(),
                s.state_dim(),
                truth.horizon(),
                truth.state_dim()
            )));
        }
    }
    Ok(())
}

fn step_distances(sample: &Trajectory, truth: &Trajectory) -> Vec<f64> {
    sample.states().zip(truth.states()).map(|(a, b)| distance(a, b)).collect()
}

/// Average displacement error over all samples and timesteps.
pub fn ade(samples: &[Trajectory], truth: &Trajectory) -> Result<Ade> {
    check_shapes(samples, truth)?;
    let mut curve = vec![0.0; truth.horizon()];
    for s in samples {
        for (c, d) in curve.iter_mut().zip(step_distances(s, truth)) {
            *c += d;
        }
    }
    for c in &mut curve {
        *c /= samples.len() as f64;
    }
    let value = curve.iter().sum::<f64>() / curve.len() as f64;
    Ok(Ade { value, curve })
}

/// Smallest per-sample ADE.
pub fn min_ade(samples: &[Trajectory], truth: &Trajectory) -> Result<f64> {
    check_shapes(samples, truth)?;
    Ok(samples
        .iter()
        .map(|s| step_distances(s, truth).iter().sum::<f64>() / truth.horizon() as f64)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimError {
    pub dim: usize,
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
}

/// MAE and RMSE over samples for every dimension at each horizon index.
/// Rows are ordered by horizon, then dimension.
pub fn mae_rmse_per_dim(samples: &[Trajectory], truth: &Trajectory, horizons: &[usize]) -> Result<Vec<DimError>> {
    check_shapes(samples, truth)?;
    let mut out = Vec::with_capacity(horizons.len() * truth.state_dim());
    for &h in horizons {
        if h >= truth.horizon() {
            return Err(TcfmError::Usage(format!("horizon index {h} outside trajectory of {}", truth.horizon())));
        }
        for dim in 0..truth.state_dim() {
            let errs: Vec<f64> = samples.iter().map(|s| s.state(h)[dim] - truth.state(h)[dim]).collect();
            let n = errs.len() as f64;
            out.push(DimError {
                dim,
                horizon: h,
                mae: errs.iter().map(|e| e.abs()).sum::<f64>() / n,
                rmse: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Steps spent within one cell of `goal`, counted up to (excluding) the
/// first colliding segment.
pub fn maze_reward(traj: &Trajectory, goal: [f64; 2], maze: &MazeSpec) -> usize {
    let end = maze.first_collision(traj).unwrap_or(traj.horizon());
    traj.states()
        .take(end)
        .filter(|s| distance(&s[..2], &goal) <= maze.cell_size)
        .count()
}

/// `100 · clamp(reward(executed) / reward(expert), 0, 1.5)`.
pub fn maze_score(executed: &Trajectory, goal: [f64; 2], expert: &Trajectory, maze: &MazeSpec) -> Result<f64> {
    match maze.cell_of(&goal) {
        Some(c) if !maze.is_occupied(c) => {}
        _ => return Err(TcfmError::Config(format!("goal {goal:?} is not a free maze position"))),
    }
    let reference = maze_reward(expert, goal, maze);
    if reference == 0 {
        return Err(TcfmError::Config("expert trajectory never reaches the goal".into()));
    }
    let ratio = maze_reward(executed, goal, maze) as f64 / reference as f64;
    Ok(100.0 * ratio.clamp(0.0, MAZE_SCORE_CAP))
}

/// Fraction of samples that touch an occupied cell or leave the grid.
pub fn collision_rate(samples: &[Trajectory], maze: &MazeSpec) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| maze.trajectory_collides(s)).count() as f64 / samples.len() as f64
}

/// Scalars, per-step curves and run metadata of one evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub num_samples: usize,
    pub config_hash: String,
    pub scalars: BTreeMap<String, f64>,
    pub curves: BTreeMap<String, Vec<f64>>,
    pub mean_ms: Option<f64>,
    pub std_ms: Option<f64>,
}

impl EvalReport {
    /// Flat `key=value` lines in a fixed order.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "label={}", self.label);
        let _ = writeln!(s, "num_samples={}", self.num_samples);
        let _ = writeln!(s, "config_hash={}", self.config_hash);
        for (k, v) in &self.scalars {
            let _ = writeln!(s, "{k}={v}");
        }
        if let (Some(m), Some(sd)) = (self.mean_ms, self.std_ms) {
            let _ = writeln!(s, "mean_ms={m}");
            let _ = writeln!(s, "std_ms={sd}");
        }
        s
    }

    /// `step,<curve names...>`; all curves must share one length.
    pub fn curves_csv(&self) -> Result<String> {
        let len = self.curves.values().next().map_or(0, Vec::len);
        if self.curves.values().any(|c| c.len() != len) {
            return Err(TcfmError::Usage("report curves have different lengths".into()));
        }
        let mut w = csv::Writer::from_writer(vec![]);
        let mut header = vec!["step".to_string()];
        header.extend(self.curves.keys().cloned());
        w.write_record(&header).map_err(|e| TcfmError::Data(e.to_string()))?;
        for k in 0..len {
            let mut row = vec![k.to_string()];
            row.extend(self.curves.values().map(|c| c[k].to_string()));
            w.write_record(&row).map_err(|e| TcfmError::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| TcfmError::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
