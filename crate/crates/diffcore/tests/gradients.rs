//! Reverse-mode gradients against central finite differences, every primitive,
//! 100 seeds each.

use diffcore::gradcheck::check_gradients;
use diffcore::{Array, DiffError, SeededRng, Stream, Tape, Var};

const SEEDS: u64 = 100;
const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

/// Contracts `out` against a fixed random weighting so every output element
/// carries a distinct upstream gradient.
fn weighted_sum(t: &mut Tape, out: Var, rng: &mut SeededRng) -> Result<Var, DiffError> {
    let w = rng.normal_array(t.value(out).shape());
    let w = t.constant(w);
    let prod = t.mul(out, w)?;
    t.sum(prod)
}

fn run_primitive(
    label: &str,
    make_leaves: impl Fn(&mut SeededRng) -> Vec<(&'static str, Array)>,
    body: impl Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
) {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed, Stream::Custom(77));
        let leaves = make_leaves(&mut rng);
        let weight_rng = rng.derive(0);
        let report = check_gradients(
            &leaves,
            |t, v| {
                let out = body(t, v)?;
                weighted_sum(t, out, &mut weight_rng.clone())
            },
            H,
            FLOOR,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
        assert!(report.max_rel_error < TOL, "{label} seed {seed}: {report:?}");
    }
    println!("{label}: worst relative error {worst:.3e} over {SEEDS} seeds");
}

#[test]
fn dense() {
    run_primitive(
        "dense",
        |r| vec![("x", r.normal_array(&[3, 4])), ("w", r.normal_array(&[5, 4])), ("b", r.normal_array(&[5]))],
        |t, v| t.dense(v[0], v[1], v[2]),
    );
}

#[test]
fn conv1d_same_padding() {
    run_primitive(
        "conv1d",
        |r| vec![("x", r.normal_array(&[2, 3, 6])), ("w", r.normal_array(&[4, 3, 5])), ("b", r.normal_array(&[4]))],
        |t, v| t.conv1d(v[0], v[1], v[2], 1, 2),
    );
}

#[test]
fn conv1d_strided() {
    run_primitive(
        "conv1d stride 2",
        |r| vec![("x", r.normal_array(&[2, 3, 8])), ("w", r.normal_array(&[3, 3, 3])), ("b", r.normal_array(&[3]))],
        |t, v| t.conv1d(v[0], v[1], v[2], 2, 1),
    );
}

#[test]
fn group_norm() {
    run_primitive(
        "group_norm",
        |r| {
            vec![
                ("x", r.normal_array(&[2, 4, 5])),
                ("gamma", r.normal_array(&[4])),
                ("beta", r.normal_array(&[4])),
            ]
        },
        |t, v| t.group_norm(v[0], v[1], v[2], 2, 1e-5),
    );
}

#[test]
fn mish() {
    run_primitive("mish", |r| vec![("x", r.uniform_array(&[3, 7], -4.0, 4.0))], |t, v| t.mish(v[0]));
}

#[test]
fn film_affine() {
    run_primitive(
        "film",
        |r| {
            vec![
                ("x", r.normal_array(&[2, 3, 4])),
                ("scale", r.normal_array(&[2, 3])),
                ("shift", r.normal_array(&[2, 3])),
            ]
        },
        |t, v| t.film(v[0], v[1], v[2]),
    );
}

#[test]
fn mean_square_reduction() {
    run_primitive(
        "mean_square",
        |r| vec![("a", r.normal_array(&[2, 3, 4])), ("b", r.normal_array(&[2, 3, 4]))],
        |t, v| t.mean_square(v[0], v[1]),
    );
}

#[test]
fn structural_ops() {
    run_primitive(
        "concat/narrow/upsample/transpose",
        |r| vec![("a", r.normal_array(&[2, 3, 4])), ("b", r.normal_array(&[2, 2, 4]))],
        |t, v| {
            let c = t.concat(v[0], v[1])?;
            let n = t.narrow(c, 1, 3)?;
            let u = t.upsample_nearest(n)?;
            let tr = t.transpose12(u)?;
            let s = t.scale(tr, 0.5)?;
            let m = t.mul(s, s)?;
            t.sub(m, s)
        },
    );
}

#[test]
fn mse_through_dense_layer() {
    run_primitive(
        "mse(dense)",
        |r| {
            vec![
                ("x", r.normal_array(&[4, 3])),
                ("w", r.normal_array(&[2, 3])),
                ("b", r.normal_array(&[2])),
                ("y", r.normal_array(&[4, 2])),
            ]
        },
        |t, v| {
            let p = t.dense(v[0], v[1], v[2])?;
            let l = t.mean_square(p, v[3])?;
            t.add(l, l)
        },
    );
}
