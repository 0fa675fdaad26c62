//! Per-dimension min/max scaling into `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcfmError};
use crate::trajectory::{Trajectory, TrajectoryDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self { min: vec![-1.0; dim], max: vec![1.0; dim] }
    }

    /// Fits the per-dimension range of every state in `trajectories`.
    pub fn fit<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self> {
        let mut stats: Option<NormStats> = None;
        for tr in trajectories {
            let s = stats.get_or_insert_with(|| NormStats {
                min: vec![f64::INFINITY; tr.state_dim()],
                max: vec![f64::NEG_INFINITY; tr.state_dim()],
            });
            if tr.state_dim() != s.dim() {
                return Err(TcfmError::Shape("trajectories with differing state dims".into()));
            }
            for state in tr.states() {
                for (d, &v) in state.iter().enumerate() {
                    s.min[d] = s.min[d].min(v);
                    s.max[d] = s.max[d].max(v);
                }
            }
        }
        let stats = stats.ok_or_else(|| TcfmError::Data("cannot fit normalization on no data".into()))?;
        for d in 0..stats.dim() {
            if stats.max[d] == stats.min[d] {
                log::warn!("dimension {d} has zero range; it normalizes to a constant 0");
            }
        }
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn normalize_value(&self, d: usize, v: f64) -> f64 {
        let range = self.max[d] - self.min[d];
        if range == 0.0 {
            0.0
        } else {
            2.0 * (v - self.min[d]) / range - 1.0
        }
    }

    pub fn denormalize_value(&self, d: usize, v: f64) -> f64 {
        let range = self.max[d] - self.min[d];
        if range == 0.0 {
            self.min[d]
        } else {
            (v + 1.0) * 0.5 * range + self.min[d]
        }
    }

    pub fn normalize_state(&self, state: &[f64]) -> Vec<f64> {
        state.iter().enumerate().map(|(d, &v)| self.normalize_value(d, v)).collect()
    }

    pub fn denormalize_state(&self, state: &[f64]) -> Vec<f64> {
        state.iter().enumerate().map(|(d, &v)| self.denormalize_value(d, v)).collect()
    }

    pub fn normalize(&self, traj: &Trajectory) -> Result<Trajectory> {
        self.check(traj)?;
        traj.map_states(|_, s| self.normalize_state(s))
    }

    pub fn denormalize(&self, traj: &Trajectory) -> Result<Trajectory> {
        self.check(traj)?;
        traj.map_states(|_, s| self.denormalize_state(s))
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        if traj.state_dim() != self.dim() {
            return Err(TcfmError::Shape(format!(
                "trajectory state dim {} vs normalization dim {}",
                traj.state_dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// How a domain's context vector relates to the state space, so contexts can
/// be normalized consistently with the trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextLayout {
    None,
    /// `(age, x, y, valid)` per slot; positions use state dims 0 and 1.
    Detections { slots: usize },
    /// `past` full states, oldest first.
    PastStates { past: usize },
    /// Start state then goal state.
    StartGoal,
}

impl ContextLayout {
    pub fn len(&self, state_dim: usize) -> usize {
        match *self {
            ContextLayout::None => 0,
            ContextLayout::Detections { slots } => 4 * slots,
            ContextLayout::PastStates { past } => past * state_dim,
            ContextLayout::StartGoal => 2 * state_dim,
        }
    }

    fn map(&self, stats: &NormStats, ctx: &[f64], f: impl Fn(&NormStats, usize, f64) -> f64) -> Vec<f64> {
        let dim = stats.dim();
        match *self {
            ContextLayout::None => vec![],
            ContextLayout::Detections { .. } => ctx
                .chunks_exact(4)
                .flat_map(|slot| {
                    if slot[3] == 0.0 {
                        [0.0; 4]
                    } else {
                        [slot[0], f(stats, 0, slot[1]), f(stats, 1, slot[2]), slot[3]]
                    }
                })
                .collect(),
            ContextLayout::PastStates { .. } | ContextLayout::StartGoal => {
                ctx.iter().enumerate().map(|(i, &v)| f(stats, i % dim, v)).collect()
            }
        }
    }

    pub fn normalize(&self, stats: &NormStats, ctx: &[f64]) -> Vec<f64> {
        self.map(stats, ctx, |s, d, v| s.normalize_value(d, v))
    }

    pub fn denormalize(&self, stats: &NormStats, ctx: &[f64]) -> Vec<f64> {
        self.map(stats, ctx, |s, d, v| s.denormalize_value(d, v))
    }
}

/// Normalizes trajectories and contexts of a dataset.
pub fn normalize_dataset(ds: &TrajectoryDataset, stats: &NormStats, layout: ContextLayout) -> Result<TrajectoryDataset> {
    let trajectories = ds.trajectories().iter().map(|t| stats.normalize(t)).collect::<Result<Vec<_>>>()?;
    let contexts = ds.contexts().iter().map(|c| layout.normalize(stats, c)).collect();
    TrajectoryDataset::new(ds.horizon(), ds.state_dim(), ds.context_dim(), trajectories, contexts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffcore::{SeededRng, Stream};

    #[test]
    fn unit_range_is_identity() {
        let stats = NormStats::identity(2);
        let t = Trajectory::from_rows(&[vec![-1.0, 0.25], vec![0.5, 1.0]]).unwrap();
        let n = stats.normalize(&t).unwrap();
        for (a, b) in n.as_array().data().iter().zip(t.as_array().data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fitted_data_lands_in_unit_box_and_roundtrips() {
        let mut rng = SeededRng::new(4, Stream::Custom(9));
        let trajs: Vec<Trajectory> = (0..10)
            .map(|_| Trajectory::new(rng.uniform_array(&[16, 3], -50.0, 300.0)).unwrap())
            .collect();
        let stats = NormStats::fit(&trajs).unwrap();
        for t in &trajs {
            let n = stats.normalize(t).unwrap();
            assert!(n.as_array().data().iter().all(|v| (-1.0..=1.0).contains(v)));
            let back = stats.denormalize(&n).unwrap();
            for (a, b) in back.as_array().data().iter().zip(t.as_array().data()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_dimension_collapses_to_zero() {
        let t = Trajectory::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        let stats = NormStats::fit([&t]).unwrap();
        let n = stats.normalize(&t).unwrap();
        assert_eq!(n.state(0)[0], 0.0);
        assert_eq!(n.state(1)[0], 0.0);
        assert_eq!(stats.denormalize(&n).unwrap().state(1)[0], 3.0);
    }

    #[test]
    fn invalid_detection_slots_stay_zero() {
        let stats = NormStats { min: vec![0.0, 0.0], max: vec![10.0, 10.0] };
        let layout = ContextLayout::Detections { slots: 2 };
        let ctx = [0.5, 5.0, 10.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(layout.normalize(&stats, &ctx), vec![0.5, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
