//! Kinematic grid mazes: text format, collision oracle, shortest-path expert,
//! and the planning dataset generator.
//!
//! Cells are unit squares scaled by `cell_size`; cell `(row, col)` covers
//! `x ∈ [col, col + 1)·cell_size`, `y ∈ [row, row + 1)·cell_size`. Anything
//! outside the grid counts as occupied.

use std::collections::VecDeque;
use std::path::Path;

use diffcore::{SeededRng, Stream};
use serde::{Deserialize, Serialize};

use crate::domains::resample_arc_length;
use crate::error::{Result, TcfmError};
use crate::trajectory::{Trajectory, TrajectoryDataset};

pub type Cell = (usize, usize);

/// Clearance kept from walls when shortcutting the grid route.
const SHORTCUT_MARGIN: f64 = 0.3;
const CORNER_CUT: f64 = 0.25;

/// The 5x5 U-shaped maze.
pub const U_MAZE: &str = "\
#####
#...#
###.#
#...#
#####
";

/// An 8x8 maze with several corridors.
pub const MEDIUM_MAZE: &str = "\
########
#..#...#
#..#...#
##...###
#..#...#
#.#..#.#
#...#..#
########
";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    occupied: Vec<Vec<bool>>,
    pub cell_size: f64,
    start_cells: Vec<Cell>,
    goal_cells: Vec<Cell>,
    /// Uniform offset (fraction of a cell, `< 0.5`) applied to sampled start
    /// and goal positions around their cell centers.
    pub jitter: f64,
}

impl MazeSpec {
    /// Parses `#` (occupied), `.` (free), `S` (free, start region) and `G`
    /// (free, goal region). Without `S` or `G` cells every free cell is
    /// eligible for that role.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(TcfmError::Config("maze text is empty".into()));
        }
        let cols = lines[0].chars().count();
        let mut occupied = Vec::with_capacity(lines.len());
        let (mut starts, mut goals, mut free) = (vec![], vec![], vec![]);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(TcfmError::Config(format!("maze row {} has {} cells, expected {cols}", r + 1, line.len())));
            }
            let mut row = Vec::with_capacity(cols);
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => row.push(true),
                    '.' | 'S' | 'G' => {
                        row.push(false);
                        free.push((r, c));
                        if ch == 'S' {
                            starts.push((r, c));
                        } else if ch == 'G' {
                            goals.push((r, c));
                        }
                    }
                    other => {
                        return Err(TcfmError::Config(format!("unknown maze character {other:?} at row {}", r + 1)))
                    }
                }
            }
            occupied.push(row);
        }
        if free.is_empty() {
            return Err(TcfmError::Config("maze has no free cells".into()));
        }
        let start_cells = if starts.is_empty() { free.clone() } else { starts };
        let goal_cells = if goals.is_empty() { free } else { goals };
        Ok(Self { occupied, cell_size: 1.0, start_cells, goal_cells, jitter: 0.0 })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TcfmError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn u_maze() -> Self {
        Self::parse(U_MAZE).expect("bundled maze parses")
    }

    pub fn medium() -> Self {
        Self::parse(MEDIUM_MAZE).expect("bundled maze parses")
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn rows(&self) -> usize {
        self.occupied.len()
    }

    pub fn cols(&self) -> usize {
        self.occupied[0].len()
    }

    pub fn start_cells(&self) -> &[Cell] {
        &self.start_cells
    }

    pub fn goal_cells(&self) -> &[Cell] {
        &self.goal_cells
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied.get(cell.0).and_then(|r| r.get(cell.1)).copied().unwrap_or(true)
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = vec![];
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if !self.occupied[r][c] {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let explicit_starts = self.start_cells.len() != self.free_cells().len();
        let explicit_goals = self.goal_cells.len() != self.free_cells().len();
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                s.push(if self.occupied[r][c] {
                    '#'
                } else if explicit_starts && self.start_cells.contains(&(r, c)) {
                    'S'
                } else if explicit_goals && self.goal_cells.contains(&(r, c)) {
                    'G'
                } else {
                    '.'
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn cell_center(&self, cell: Cell) -> [f64; 2] {
        [(cell.1 as f64 + 0.5) * self.cell_size, (cell.0 as f64 + 0.5) * self.cell_size]
    }

    pub fn cell_of(&self, p: &[f64]) -> Option<Cell> {
        let (x, y) = (p[0] / self.cell_size, p[1] / self.cell_size);
        if x < 0.0 || y < 0.0 || !x.is_finite() || !y.is_finite() {
            return None;
        }
        let (r, c) = (y.floor() as usize, x.floor() as usize);
        (r < self.rows() && c < self.cols()).then_some((r, c))
    }

    pub fn point_is_free(&self, p: &[f64]) -> bool {
        self.cell_of(p).is_some_and(|c| !self.is_occupied(c)) && !self.segment_collides(p, p)
    }

    /// Conservative collision test: the closed segment `a–b` collides if it
    /// touches any occupied cell (closed square) or leaves the grid.
    pub fn segment_collides(&self, a: &[f64], b: &[f64]) -> bool {
        self.segment_collides_with_margin(a, b, 0.0)
    }

    fn segment_collides_with_margin(&self, a: &[f64], b: &[f64], margin: f64) -> bool {
        let s = self.cell_size;
        let (w, h) = (self.cols() as f64 * s, self.rows() as f64 * s);
        for p in [a, b] {
            if !(p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h) {
                return true;
            }
        }
        // Closed boxes: a coordinate on a cell boundary touches both neighbours.
        let lo_c = (((a[0].min(b[0]) - margin) / s).ceil() - 1.0).max(0.0) as usize;
        let hi_c = (((a[0].max(b[0]) + margin) / s).floor() as usize).min(self.cols() - 1);
        let lo_r = (((a[1].min(b[1]) - margin) / s).ceil() - 1.0).max(0.0) as usize;
        let hi_r = (((a[1].max(b[1]) + margin) / s).floor() as usize).min(self.rows() - 1);
        for r in lo_r..=hi_r {
            for c in lo_c..=hi_c {
                if self.occupied[r][c] {
                    let min = [c as f64 * s - margin, r as f64 * s - margin];
                    let max = [(c + 1) as f64 * s + margin, (r + 1) as f64 * s + margin];
                    if segment_hits_box(a, b, min, max) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// True when any state lies in an occupied cell or any consecutive pair
    /// of states is joined by a colliding segment.
    pub fn trajectory_collides(&self, traj: &Trajectory) -> bool {
        self.first_collision(traj).is_some()
    }

    /// Index of the first state whose incoming segment (or the state itself,
    /// for index 0) collides.
    pub fn first_collision(&self, traj: &Trajectory) -> Option<usize> {
        if self.segment_collides(traj.state(0), traj.state(0)) {
            return Some(0);
        }
        (1..traj.horizon()).find(|&i| self.segment_collides(traj.state(i - 1), traj.state(i)))
    }

    /// 4-connected breadth-first shortest route between two free cells.
    pub fn shortest_cell_path(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        if self.is_occupied(from) || self.is_occupied(to) {
            return None;
        }
        let (rows, cols) = (self.rows(), self.cols());
        let mut prev = vec![vec![None; cols]; rows];
        let mut seen = vec![vec![false; cols]; rows];
        let mut queue = VecDeque::from([from]);
        seen[from.0][from.1] = true;
        while let Some((r, c)) = queue.pop_front() {
            if (r, c) == to {
                let mut path = vec![to];
                let mut cur = to;
                while let Some(p) = prev[cur.0][cur.1] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            let neighbours = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for n in neighbours {
                if n.0 < rows && n.1 < cols && !self.occupied[n.0][n.1] && !seen[n.0][n.1] {
                    seen[n.0][n.1] = true;
                    prev[n.0][n.1] = Some((r, c));
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Expert route from `start` to `goal` (points inside free cells): grid
    /// shortest path, shortcut where a wall clearance allows, corners cut,
    /// then resampled to `horizon` states equally spaced in arc length.
    pub fn expert_path(&self, start: [f64; 2], goal: [f64; 2], horizon: usize) -> Result<Trajectory> {
        let (Some(sc), Some(gc)) = (self.cell_of(&start), self.cell_of(&goal)) else {
            return Err(TcfmError::Generation(format!("start {start:?} or goal {goal:?} outside the maze")));
        };
        if self.is_occupied(gc) {
            return Err(TcfmError::Config(format!("goal {goal:?} lies in an occupied cell")));
        }
        let cells = self
            .shortest_cell_path(sc, gc)
            .ok_or_else(|| TcfmError::Generation(format!("goal cell {gc:?} unreachable from {sc:?}")))?;
        let mut route: Vec<Vec<f64>> = vec![start.to_vec()];
        if cells.len() > 2 {
            for &c in &cells[1..cells.len() - 1] {
                route.push(self.cell_center(c).to_vec());
            }
        }
        route.push(goal.to_vec());

        let candidates = [smooth_corners(self, &shortcut(self, &route)), route.clone()];
        for candidate in candidates {
            let rows = resample_arc_length(&candidate, horizon);
            let traj = Trajectory::from_rows(&rows)?;
            if !self.trajectory_collides(&traj) {
                return Ok(traj);
            }
        }
        Err(TcfmError::Generation(format!("no collision-free route from {start:?} to {goal:?}")))
    }

    /// Length of the expert route (before resampling it is a polyline; the
    /// resampled trajectory is within a corner-cut of it).
    pub fn expert_cost(&self, start: [f64; 2], goal: [f64; 2], horizon: usize) -> Result<f64> {
        Ok(self.expert_path(start, goal, horizon)?.path_length())
    }

    fn sample_point(&self, cells: &[Cell], rng: &mut SeededRng) -> [f64; 2] {
        let cell = cells[rng.index(cells.len())];
        let center = self.cell_center(cell);
        let j = self.jitter.clamp(0.0, 0.49) * self.cell_size;
        [center[0] + rng.uniform_range(-j, j), center[1] + rng.uniform_range(-j, j)]
    }
}

/// Slab test of a closed segment against a closed axis-aligned box.
fn segment_hits_box(a: &[f64], b: &[f64], min: [f64; 2], max: [f64; 2]) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        let d = b[axis] - a[axis];
        if d == 0.0 {
            if a[axis] < min[axis] || a[axis] > max[axis] {
                return false;
            }
        } else {
            let (mut lo, mut hi) = ((min[axis] - a[axis]) / d, (max[axis] - a[axis]) / d);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Greedy line-of-sight shortcutting that keeps a clearance from walls.
fn shortcut(maze: &MazeSpec, route: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let margin = SHORTCUT_MARGIN * maze.cell_size;
    let mut out = vec![route[0].clone()];
    let mut i = 0;
    while i < route.len() - 1 {
        let mut next = i + 1;
        for j in (i + 2..route.len()).rev() {
            if !maze.segment_collides_with_margin(&route[i], &route[j], margin) {
                next = j;
                break;
            }
        }
        out.push(route[next].clone());
        i = next;
    }
    out
}

/// One pass of corner cutting; a corner is kept sharp if its cut collides.
fn smooth_corners(maze: &MazeSpec, route: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if route.len() < 3 {
        return route.to_vec();
    }
    let mut out = vec![route[0].clone()];
    for w in route.windows(3) {
        let (prev, corner, next) = (&w[0], &w[1], &w[2]);
        let before: Vec<f64> = corner.iter().zip(prev).map(|(c, p)| c + CORNER_CUT * (p - c)).collect();
        let after: Vec<f64> = corner.iter().zip(next).map(|(c, n)| c + CORNER_CUT * (n - c)).collect();
        if maze.segment_collides(&before, &after) {
            out.push(corner.clone());
        } else {
            out.push(before);
            out.push(after);
        }
    }
    out.push(route[route.len() - 1].clone());
    out
}

/// Planning dataset: expert trajectories between sampled start/goal points,
/// with `(start, goal)` as the context vector.
#[derive(Clone, Debug)]
pub struct MazeDataset {
    pub dataset: TrajectoryDataset,
    pub starts: Vec<[f64; 2]>,
    pub goals: Vec<[f64; 2]>,
}

const MAX_ATTEMPTS: usize = 64;

/// Generates `n` expert trajectories of `horizon` states.
///
/// Start and goal cells differ whenever the start and goal regions allow it.
/// Item `i` is drawn from its own derived stream, so the output is identical
/// regardless of how items are scheduled.
pub fn generate_maze_dataset(spec: &MazeSpec, n: usize, horizon: usize, seed: u64) -> Result<MazeDataset> {
    let base = SeededRng::new(seed, Stream::Generation);
    let mut trajectories = Vec::with_capacity(n);
    let mut contexts = Vec::with_capacity(n);
    let (mut starts, mut goals) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let distinct_possible = spec.start_cells.iter().any(|s| spec.goal_cells.iter().any(|g| g != s));
    for i in 0..n {
        let mut rng = base.derive(i as u64);
        let mut last_err = None;
        let mut done = false;
        for _ in 0..MAX_ATTEMPTS {
            let start = spec.sample_point(&spec.start_cells, &mut rng);
            let goal = spec.sample_point(&spec.goal_cells, &mut rng);
            if distinct_possible && spec.cell_of(&start) == spec.cell_of(&goal) {
                continue;
            }
            match spec.expert_path(start, goal, horizon) {
                Ok(traj) => {
                    trajectories.push(traj);
                    contexts.push(vec![start[0], start[1], goal[0], goal[1]]);
                    starts.push(start);
                    goals.push(goal);
                    done = true;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if !done {
            return Err(last_err.unwrap_or_else(|| {
                TcfmError::Generation(format!("could not sample a start/goal pair for trajectory {i}"))
            }));
        }
    }
    Ok(MazeDataset { dataset: TrajectoryDataset::new(horizon, 2, 4, trajectories, contexts)?, starts, goals })
}
