//! Synthetic small-aircraft tracks in `(lon-like, lat-like, alt-like)`
//! coordinates: cruise segments joined by a few smooth heading and altitude
//! changes. The model forecasts `H` states from the preceding `P`.

use serde::{Deserialize, Serialize};

use diffcore::{SeededRng, Stream};

use crate::domains::norm::ContextLayout;
use crate::domains::split_counts;
use crate::error::{Result, TcfmError};
use crate::trajectory::{Trajectory, TrajectoryDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightConfig {
    pub horizon: usize,
    /// Past states in the context.
    pub past: usize,
    /// Horizontal distance per step.
    pub ground_speed: f64,
    /// Largest climb or descent per step.
    pub max_climb: f64,
    /// Largest heading change per step (radians).
    pub max_turn: f64,
    pub min_events: usize,
    pub max_events: usize,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self {
            horizon: 32,
            past: 8,
            ground_speed: 1.0,
            max_climb: 0.3,
            max_turn: 0.15,
            min_events: 2,
            max_events: 5,
        }
    }
}

impl FlightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 || self.past < 1 {
            return Err(TcfmError::Config("flight needs horizon >= 2 and past >= 1".into()));
        }
        if self.min_events > self.max_events {
            return Err(TcfmError::Config(format!(
                "min_events {} exceeds max_events {}",
                self.min_events, self.max_events
            )));
        }
        if !(self.ground_speed > 0.0 && self.max_climb >= 0.0 && self.max_turn >= 0.0) {
            return Err(TcfmError::Config("flight speeds and turn rate must be non-negative".into()));
        }
        Ok(())
    }

    /// Bound on the 3D distance between consecutive states.
    pub fn speed_cap(&self) -> f64 {
        self.ground_speed.hypot(self.max_climb)
    }

    pub fn context_layout(&self) -> ContextLayout {
        ContextLayout::PastStates { past: self.past }
    }

    pub fn context_dim(&self) -> usize {
        3 * self.past
    }
}

/// A maneuver: from `step` on, steer towards `heading` and hold `climb`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Event {
    step: usize,
    heading: f64,
    climb: f64,
}

/// Simulates `past + horizon` states with the given events.
fn fly(cfg: &FlightConfig, start: [f64; 3], heading0: f64, events: &[Event]) -> Vec<Vec<f64>> {
    let steps = cfg.past + cfg.horizon;
    let (mut pos, mut heading, mut climb) = (start, heading0, 0.0);
    let (mut target_heading, mut target_climb) = (heading0, 0.0);
    let mut out = Vec::with_capacity(steps);
    out.push(pos.to_vec());
    for step in 1..steps {
        for e in events.iter().filter(|e| e.step == step) {
            target_heading = e.heading;
            target_climb = e.climb;
        }
        let turn = wrap_angle(target_heading - heading).clamp(-cfg.max_turn, cfg.max_turn);
        heading += turn;
        // Climb rate eases towards its target over a few steps.
        climb += (target_climb - climb) * 0.5;
        climb = climb.clamp(-cfg.max_climb, cfg.max_climb);
        pos = [
            pos[0] + cfg.ground_speed * heading.cos(),
            pos[1] + cfg.ground_speed * heading.sin(),
            pos[2] + climb,
        ];
        out.push(pos.to_vec());
    }
    out
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
}

/// Generates `n` tracks. Track `i` uses its own derived stream.
pub fn generate_flight_dataset(cfg: &FlightConfig, n: usize, seed: u64) -> Result<TrajectoryDataset> {
    cfg.validate()?;
    let base = SeededRng::new(seed, Stream::Generation);
    let steps = cfg.past + cfg.horizon;
    let mut trajectories = Vec::with_capacity(n);
    let mut contexts = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = base.derive(i as u64);
        let start = [rng.uniform_range(-20.0, 20.0), rng.uniform_range(-20.0, 20.0), rng.uniform_range(5.0, 15.0)];
        let heading0 = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
        let count = cfg.min_events + rng.index(cfg.max_events - cfg.min_events + 1);
        let mut events: Vec<Event> = (0..count)
            .map(|_| Event {
                step: 1 + rng.index(steps - 1),
                heading: heading0 + rng.uniform_range(-1.5, 1.5),
                climb: rng.uniform_range(-cfg.max_climb, cfg.max_climb),
            })
            .collect();
        events.sort_by_key(|e| e.step);
        let states = fly(cfg, start, heading0, &events);
        contexts.push(states[..cfg.past].iter().flatten().copied().collect());
        trajectories.push(Trajectory::from_rows(&states[cfg.past..])?);
    }
    TrajectoryDataset::new(cfg.horizon, 3, cfg.context_dim(), trajectories, contexts)
}

/// Train/validation/test index ranges in 80/10/10 proportion.
pub fn train_val_test_split(n: usize) -> [std::ops::Range<usize>; 3] {
    let c = split_counts(n, &[0.8, 0.1, 0.1]);
    [0..c[0], c[0]..c[0] + c[1], c[0] + c[1]..n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_events_is_a_straight_line() {
        let cfg = FlightConfig { min_events: 0, max_events: 0, ..Default::default() };
        let states = fly(&cfg, [0.0, 0.0, 10.0], 0.3, &[]);
        for (k, s) in states.iter().enumerate() {
            assert!((s[0] - k as f64 * 0.3f64.cos()).abs() < 1e-9);
            assert!((s[1] - k as f64 * 0.3f64.sin()).abs() < 1e-9);
            assert_eq!(s[2], 10.0);
        }
    }

    #[test]
    fn split_ranges_cover() {
        let [a, b, c] = train_val_test_split(474);
        assert_eq!((a.len(), b.len(), c.len()), (379, 47, 48));
        assert_eq!(c.end, 474);
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12
            || (wrap_angle(3.0 * std::f64::consts::PI) + std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
