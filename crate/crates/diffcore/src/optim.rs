//! Bias-corrected adaptive moment (Adam) updates over named parameters.

use std::collections::BTreeMap;

use crate::array::Array;
use crate::error::DiffError;
use crate::tape::Gradients;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the number of updates applied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: BTreeMap<String, Array>,
    pub second: BTreeMap<String, Array>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Applies one update to every parameter in `params`.
///
/// Gradients are validated before anything is touched, so a non-finite
/// gradient leaves both parameters and moments untouched.
pub fn adam_step(
    params: &mut BTreeMap<String, Array>,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<(), DiffError> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| DiffError::Usage(format!("no gradient for parameter `{name}`")))?;
        if g.shape() != p.shape() {
            return Err(DiffError::Shape {
                op: "adam_step",
                detail: format!("`{name}`: gradient {:?} vs parameter {:?}", g.shape(), p.shape()),
            });
        }
        if !g.all_finite() {
            return Err(DiffError::NonFinite(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("validated above").data();
        let m = state.first.entry(name.clone()).or_insert_with(|| Array::zeros(p.shape()));
        let v = state.second.entry(name.clone()).or_insert_with(|| Array::zeros(p.shape()));
        if m.shape() != p.shape() || v.shape() != p.shape() {
            return Err(DiffError::Shape {
                op: "adam_step",
                detail: format!("moments for `{name}` do not match parameter shape {:?}", p.shape()),
            });
        }
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let denom = (v[i] / c2).sqrt() + hyper.eps;
            if denom > 0.0 {
                *w -= hyper.lr * (m[i] / c1) / denom;
            }
        }
    }
    Ok(())
}
