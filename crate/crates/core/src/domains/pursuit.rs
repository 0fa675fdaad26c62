//! Synthetic pursuit–evasion tracking: an evader heads for one of several
//! hideouts with a noisy heading while a sensor reports its position
//! intermittently. The model predicts the next `H` positions from the last
//! `K` detections.

use serde::{Deserialize, Serialize};

use diffcore::{SeededRng, Stream};

use crate::domains::norm::ContextLayout;
use crate::error::{Result, TcfmError};
use crate::trajectory::{Trajectory, TrajectoryDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitScenario {
    /// Map extent `[width, height]`; the map spans `[0, width] × [0, height]`.
    pub bounds: [f64; 2],
    pub hideouts: Vec<[f64; 2]>,
    /// Distance moved per timestep.
    pub speed: f64,
    /// Standard deviation of the per-step heading perturbation (radians).
    pub heading_noise: f64,
    /// Per-timestep detection probability during the observed history.
    pub detection_rate: f64,
    /// Predicted steps.
    pub horizon: usize,
    /// Observed steps before the prediction starts.
    pub history: usize,
    /// Detection slots in the context vector.
    pub slots: usize,
}

impl Default for PursuitScenario {
    fn default() -> Self {
        Self {
            bounds: [100.0, 100.0],
            hideouts: vec![[15.0, 85.0], [50.0, 92.0], [85.0, 85.0]],
            speed: 1.0,
            heading_noise: 0.15,
            detection_rate: 0.44,
            horizon: 64,
            history: 32,
            slots: 8,
        }
    }
}

impl PursuitScenario {
    pub fn validate(&self) -> Result<()> {
        if self.hideouts.is_empty() {
            return Err(TcfmError::Config("pursuit scenario needs at least one hideout".into()));
        }
        if !(self.bounds[0] > 0.0 && self.bounds[1] > 0.0) {
            return Err(TcfmError::Config(format!("map bounds must be positive, got {:?}", self.bounds)));
        }
        for h in &self.hideouts {
            if !(0.0..=self.bounds[0]).contains(&h[0]) || !(0.0..=self.bounds[1]).contains(&h[1]) {
                return Err(TcfmError::Config(format!("hideout {h:?} outside map bounds {:?}", self.bounds)));
            }
        }
        if !(self.detection_rate > 0.0 && self.detection_rate < 1.0) {
            return Err(TcfmError::Config(format!("detection rate must be in (0, 1), got {}", self.detection_rate)));
        }
        if !(self.speed > 0.0) || !(self.heading_noise >= 0.0) {
            return Err(TcfmError::Config("speed must be positive and heading noise non-negative".into()));
        }
        if self.horizon < 2 || self.history < 1 || self.slots < 1 {
            return Err(TcfmError::Config("pursuit needs horizon >= 2, history >= 1 and slots >= 1".into()));
        }
        Ok(())
    }

    pub fn context_layout(&self) -> ContextLayout {
        ContextLayout::Detections { slots: self.slots }
    }

    pub fn context_dim(&self) -> usize {
        4 * self.slots
    }
}

/// One sensor report of the evader position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub step: usize,
    pub position: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct PursuitDataset {
    /// Future evader positions with detection-history contexts.
    pub dataset: TrajectoryDataset,
    /// All detections per episode (history window only), oldest first.
    pub detections: Vec<Vec<Detection>>,
    /// Index of the hideout chosen in each episode.
    pub hideout_choice: Vec<usize>,
    /// Fraction of history timesteps with a detection.
    pub realized_rate: f64,
}

/// Simulates one episode of `history + horizon` positions.
fn simulate(scn: &PursuitScenario, rng: &mut SeededRng) -> (Vec<[f64; 2]>, usize) {
    let target_idx = rng.index(scn.hideouts.len());
    let target = scn.hideouts[target_idx];
    // Start anywhere in the lower fifth of the map.
    let mut pos = [rng.uniform_range(0.0, scn.bounds[0]), rng.uniform_range(0.0, 0.2 * scn.bounds[1])];
    let steps = scn.history + scn.horizon;
    let mut path = Vec::with_capacity(steps);
    path.push(pos);
    for _ in 1..steps {
        let (dx, dy) = (target[0] - pos[0], target[1] - pos[1]);
        let dist = dx.hypot(dy);
        if dist <= scn.speed {
            pos = target;
        } else {
            let mut heading = dy.atan2(dx);
            if scn.heading_noise > 0.0 {
                heading += scn.heading_noise * rng.normal();
            }
            pos = [
                (pos[0] + scn.speed * heading.cos()).clamp(0.0, scn.bounds[0]),
                (pos[1] + scn.speed * heading.sin()).clamp(0.0, scn.bounds[1]),
            ];
        }
        path.push(pos);
    }
    (path, target_idx)
}

/// Context of the `K` most recent detections before step `now`, newest
/// first: `(age / history, x, y, 1)` per used slot, zeros otherwise.
pub fn detection_context(detections: &[Detection], now: usize, history: usize, slots: usize) -> Vec<f64> {
    let mut ctx = vec![0.0; 4 * slots];
    let recent = detections.iter().rev().filter(|d| d.step < now).take(slots);
    for (slot, d) in recent.enumerate() {
        let age = (now - d.step) as f64 / history as f64;
        ctx[4 * slot..4 * slot + 4].copy_from_slice(&[age, d.position[0], d.position[1], 1.0]);
    }
    ctx
}

/// Generates `n` episodes. Episode `i` uses its own derived stream.
pub fn generate_pursuit_dataset(scn: &PursuitScenario, n: usize, seed: u64) -> Result<PursuitDataset> {
    scn.validate()?;
    let base = SeededRng::new(seed, Stream::Generation);
    let mut trajectories = Vec::with_capacity(n);
    let mut contexts = Vec::with_capacity(n);
    let mut all_detections = Vec::with_capacity(n);
    let mut hideout_choice = Vec::with_capacity(n);
    let mut detected = 0usize;
    for i in 0..n {
        let mut rng = base.derive(i as u64);
        let (path, target) = simulate(scn, &mut rng);
        let detections: Vec<Detection> = (0..scn.history)
            .filter(|_| rng.bernoulli(scn.detection_rate))
            .map(|step| Detection { step, position: path[step] })
            .collect();
        detected += detections.len();
        contexts.push(detection_context(&detections, scn.history, scn.history, scn.slots));
        let future: Vec<Vec<f64>> = path[scn.history..].iter().map(|p| p.to_vec()).collect();
        trajectories.push(Trajectory::from_rows(&future)?);
        all_detections.push(detections);
        hideout_choice.push(target);
    }
    let realized_rate = if n == 0 { 0.0 } else { detected as f64 / (n * scn.history) as f64 };
    Ok(PursuitDataset {
        dataset: TrajectoryDataset::new(scn.horizon, 2, scn.context_dim(), trajectories, contexts)?,
        detections: all_detections,
        hideout_choice,
        realized_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_newest_first_and_zero_padded() {
        let dets = [
            Detection { step: 1, position: [1.0, 2.0] },
            Detection { step: 5, position: [3.0, 4.0] },
        ];
        let ctx = detection_context(&dets, 10, 10, 3);
        assert_eq!(ctx, vec![0.5, 3.0, 4.0, 1.0, 0.9, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn future_detections_are_ignored() {
        let dets = [Detection { step: 12, position: [1.0, 1.0] }];
        assert_eq!(detection_context(&dets, 10, 10, 1), vec![0.0; 4]);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = PursuitScenario { hideouts: vec![], ..Default::default() };
        assert!(s.validate().is_err());
        s = PursuitScenario { detection_rate: 1.0, ..Default::default() };
        assert!(s.validate().is_err());
        s = PursuitScenario { hideouts: vec![[200.0, 5.0]], ..Default::default() };
        assert!(s.validate().is_err());
    }
}
