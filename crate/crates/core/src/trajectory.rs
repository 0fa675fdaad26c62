use diffcore::Array;

use crate::error::{Result, TcfmError};

/// Fixed-horizon sequence of state vectors, stored as an `[H, D]` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Array,
}

impl Trajectory {
    pub fn new(states: Array) -> Result<Self> {
        if states.rank() != 2 {
            return Err(TcfmError::Shape(format!("trajectory must be [H, D], got {:?}", states.shape())));
        }
        if !states.all_finite() {
            return Err(TcfmError::Data("trajectory contains non-finite states".into()));
        }
        Ok(Self { states })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(TcfmError::Shape("ragged trajectory rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(Array::new(vec![rows.len(), dim], data)?)
    }

    /// `horizon` copies of one state.
    pub fn constant(state: &[f64], horizon: usize) -> Result<Self> {
        Self::from_rows(&vec![state.to_vec(); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn state_dim(&self) -> usize {
        self.states.shape()[1]
    }

    pub fn state(&self, index: usize) -> &[f64] {
        let d = self.state_dim();
        &self.states.data()[index * d..(index + 1) * d]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.data().chunks_exact(self.state_dim())
    }

    pub fn as_array(&self) -> &Array {
        &self.states
    }

    pub fn into_array(self) -> Array {
        self.states
    }

    pub fn map_states(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = self.states().enumerate().map(|(i, s)| f(i, s)).collect();
        Self::from_rows(&rows)
    }

    /// Total polyline length over all dimensions.
    pub fn path_length(&self) -> f64 {
        self.states()
            .zip(self.states().skip(1))
            .map(|(a, b)| distance(a, b))
            .sum()
    }
}

/// Euclidean distance between two states.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Trajectories with their fixed-length conditioning vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    horizon: usize,
    state_dim: usize,
    context_dim: usize,
    trajectories: Vec<Trajectory>,
    contexts: Vec<Vec<f64>>,
}

impl TrajectoryDataset {
    pub fn new(
        horizon: usize,
        state_dim: usize,
        context_dim: usize,
        trajectories: Vec<Trajectory>,
        contexts: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if trajectories.len() != contexts.len() {
            return Err(TcfmError::Data(format!(
                "{} trajectories but {} contexts",
                trajectories.len(),
                contexts.len()
            )));
        }
        for (i, (tr, ctx)) in trajectories.iter().zip(&contexts).enumerate() {
            if tr.horizon() != horizon || tr.state_dim() != state_dim {
                return Err(TcfmError::Shape(format!(
                    "trajectory {i} is [{}, {}], dataset expects [{horizon}, {state_dim}]",
                    tr.horizon(),
                    tr.state_dim()
                )));
            }
            if ctx.len() != context_dim {
                return Err(TcfmError::Shape(format!(
                    "context {i} has length {}, dataset expects {context_dim}",
                    ctx.len()
                )));
            }
            if ctx.iter().any(|v| !v.is_finite()) {
                return Err(TcfmError::Data(format!("context {i} contains non-finite values")));
            }
        }
        Ok(Self { horizon, state_dim, context_dim, trajectories, contexts })
    }

    pub fn empty(horizon: usize, state_dim: usize, context_dim: usize) -> Self {
        Self { horizon, state_dim, context_dim, trajectories: vec![], contexts: vec![] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    pub fn get(&self, index: usize) -> (&Trajectory, &[f64]) {
        (&self.trajectories[index], &self.contexts[index])
    }

    /// Batched `[B, H, D]` trajectories and `[B, max(C, 1)]` contexts.
    pub fn gather(&self, indices: &[usize]) -> Result<(Array, Array)> {
        let mut states = Vec::with_capacity(indices.len() * self.horizon * self.state_dim);
        let width = self.context_dim.max(1);
        let mut ctx = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            states.extend_from_slice(self.trajectories[i].as_array().data());
            if self.context_dim == 0 {
                ctx.push(0.0);
            } else {
                ctx.extend_from_slice(&self.contexts[i]);
            }
        }
        Ok((
            Array::new(vec![indices.len(), self.horizon, self.state_dim], states)?,
            Array::new(vec![indices.len(), width], ctx)?,
        ))
    }

    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        let (mut trajectories, mut contexts) = (vec![], vec![]);
        for i in indices {
            trajectories.push(self.trajectories[i].clone());
            contexts.push(self.contexts[i].clone());
        }
        Self { trajectories, contexts, ..self.clone_shape() }
    }

    fn clone_shape(&self) -> Self {
        Self::empty(self.horizon, self.state_dim, self.context_dim)
    }
}
