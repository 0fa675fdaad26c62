//! Central finite-difference gradient checking.
//!
//! The numeric side only re-runs the forward expression, so it is independent
//! of the reverse-mode rules it is used to validate.

use crate::array::Array;
use crate::error::DiffError;
use crate::tape::{record_forward, Tape, Var};

/// Worst disagreement between reverse-mode and finite-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_leaf: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries whose true gradient is zero (or lost to
/// cancellation) from dividing by round-off noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradient of a scalar-valued `expr` against central differences
/// with step `h`, for every element of every leaf.
pub fn check_gradients<F>(leaves: &[(&str, Array)], expr: F, h: f64, floor: f64) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let (value, mut tape, out) = record_forward(leaves, &expr)?;
    if value.len() != 1 {
        return Err(DiffError::Shape {
            op: "check_gradients",
            detail: format!("expression must be scalar, got {:?}", value.shape()),
        });
    }
    let grads = tape.backward(out, &Array::full(value.shape(), 1.0))?;
    let eval_at = |leaf: usize, index: usize, delta: f64| -> Result<f64, DiffError> {
        let mut perturbed = leaves.to_vec();
        let mut data = perturbed[leaf].1.clone().into_data();
        data[index] += delta;
        perturbed[leaf].1 = Array::new(leaves[leaf].1.shape().to_vec(), data)?;
        Ok(record_forward(&perturbed, &expr)?.0.item())
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_leaf: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (li, (name, leaf)) in leaves.iter().enumerate() {
        let analytic = grads.get(name).expect("every leaf receives a gradient");
        for i in 0..leaf.len() {
            let numeric = (eval_at(li, i, h)? - eval_at(li, i, -h)?) / (2.0 * h);
            let a = analytic.data()[i];
            let err = relative_error(a, numeric, floor);
            if err > report.max_rel_error || report.worst_leaf.is_empty() {
                report = GradCheckReport {
                    max_rel_error: err,
                    worst_leaf: name.to_string(),
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
