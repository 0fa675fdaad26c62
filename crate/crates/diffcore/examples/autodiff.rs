//! Records a small conv → group norm → Mish → mean-square expression, runs
//! the backward pass and compares every gradient against central differences.
//!
//! `cargo run --example autodiff`

use diffcore::gradcheck::check_gradients;
use diffcore::{record_forward, Array, DiffError, SeededRng, Stream, Tape, Var};

fn expr(t: &mut Tape, v: &[Var]) -> Result<Var, DiffError> {
    let h = t.conv1d(v[0], v[1], v[2], 1, 1)?;
    let h = t.group_norm(h, v[3], v[4], 2, 1e-5)?;
    let h = t.mish(h)?;
    let target = t.constant(Array::zeros(t.value(h).shape()));
    t.mean_square(h, target)
}

fn main() -> Result<(), DiffError> {
    let mut rng = SeededRng::new(0, Stream::Custom(0));
    let leaves = vec![
        ("x", rng.normal_array(&[2, 3, 8])),
        ("w", rng.normal_array(&[4, 3, 3])),
        ("b", rng.normal_array(&[4])),
        ("gamma", Array::full(&[4], 1.0)),
        ("beta", Array::zeros(&[4])),
    ];

    let (value, mut tape, out) = record_forward(&leaves, expr)?;
    println!("loss {:.6}  ({} tape nodes)", value.data()[0], tape.len());
    let grads = tape.backward(out, &Array::full(&[1], 1.0))?;
    for (name, g) in grads.iter() {
        let norm = g.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("  d/d{name:<5} shape {:?}  |g| {norm:.4}", g.shape());
    }

    let report = check_gradients(&leaves, expr, 1e-5, 1e-6)?;
    println!(
        "gradcheck: max relative error {:.2e} ({}[{}]: analytic {:.6}, numeric {:.6})",
        report.max_rel_error, report.worst_leaf, report.worst_index, report.analytic, report.numeric
    );
    Ok(())
}
