use diffcore::{record_forward, Array, DiffError, SeededRng, Stream, Tape};

fn arr(shape: &[usize], data: &[f64]) -> Array {
    Array::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Same-padded 1D cross-correlation, written out loop by loop.
fn conv_oracle(x: &[f64], k: &[f64]) -> Vec<f64> {
    let pad = (k.len() / 2) as isize;
    (0..x.len() as isize)
        .map(|l| {
            let mut acc = 0.0;
            for (j, w) in k.iter().enumerate() {
                let pos = l + j as isize - pad;
                if pos >= 0 && pos < x.len() as isize {
                    acc += x[pos as usize] * w;
                }
            }
            acc
        })
        .collect()
}

#[test]
fn sum_of_squares_value() {
    let (value, _, _) = record_forward(&[("x", arr(&[1], &[3.0]))], |t, v| {
        let sq = t.mul(v[0], v[0])?;
        t.sum(sq)
    })
    .unwrap();
    assert_eq!(value.item(), 9.0);
}

#[test]
fn sum_of_zeros() {
    let (value, _, _) = record_forward(&[("x", Array::zeros(&[4]))], |t, v| t.sum(v[0])).unwrap();
    assert_eq!(value.item(), 0.0);
}

#[test]
fn conv1d_impulse_matches_loop_oracle() {
    let x = [1.0, 0.0, 0.0, 0.0];
    let k = [1.0, 2.0, 3.0];
    let expected = conv_oracle(&x, &k);
    assert_eq!(expected, vec![2.0, 1.0, 0.0, 0.0]);
    let (value, tape, _) = record_forward(
        &[("x", arr(&[1, 1, 4], &x)), ("k", arr(&[1, 1, 3], &k)), ("b", Array::zeros(&[1]))],
        |t, v| t.conv1d(v[0], v[1], v[2], 1, 1),
    )
    .unwrap();
    assert_eq!(value.data(), expected.as_slice());
    assert!(tape.replay_matches().unwrap());
}

#[test]
fn conv1d_random_multichannel_matches_loop_oracle() {
    let mut rng = SeededRng::new(11, Stream::Custom(0));
    let (b, cin, cout, l, k) = (3, 2, 4, 7, 5);
    let x = rng.normal_array(&[b, cin, l]);
    let w = rng.normal_array(&[cout, cin, k]);
    let bias = rng.normal_array(&[cout]);
    let (value, _, _) = record_forward(&[("x", x.clone()), ("w", w.clone()), ("b", bias.clone())], |t, v| {
        t.conv1d(v[0], v[1], v[2], 1, 2)
    })
    .unwrap();
    for bi in 0..b {
        for co in 0..cout {
            let mut expect = vec![bias.data()[co]; l];
            for ci in 0..cin {
                let xs = &x.data()[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                let ks = &w.data()[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                for (e, c) in expect.iter_mut().zip(conv_oracle(xs, ks)) {
                    *e += c;
                }
            }
            let got = &value.data()[(bi * cout + co) * l..(bi * cout + co + 1) * l];
            for (g, e) in got.iter().zip(&expect) {
                assert!((g - e).abs() < 1e-12, "{g} vs {e}");
            }
        }
    }
}

#[test]
fn strided_conv_halves_length() {
    let (value, _, _) = record_forward(
        &[("x", Array::full(&[2, 3, 8], 1.0)), ("w", Array::full(&[3, 3, 3], 1.0)), ("b", Array::zeros(&[3]))],
        |t, v| t.conv1d(v[0], v[1], v[2], 2, 1),
    )
    .unwrap();
    assert_eq!(value.shape(), &[2, 3, 4]);
    // First window sees one padded zero.
    assert_eq!(value.data()[0], 6.0);
    assert_eq!(value.data()[1], 9.0);
}

#[test]
fn shape_errors_name_the_primitive() {
    let err = record_forward(&[("a", Array::zeros(&[2])), ("b", Array::zeros(&[3]))], |t, v| t.add(v[0], v[1]))
        .unwrap_err();
    assert!(matches!(err, DiffError::Shape { op: "add", .. }), "{err:?}");
    let err = record_forward(
        &[("x", Array::zeros(&[1, 2, 4])), ("w", Array::zeros(&[1, 3, 3])), ("b", Array::zeros(&[1]))],
        |t, v| t.conv1d(v[0], v[1], v[2], 1, 1),
    )
    .unwrap_err();
    assert!(matches!(err, DiffError::Shape { op: "conv1d", .. }), "{err:?}");
    let err = record_forward(
        &[("x", Array::zeros(&[1, 6, 4])), ("g", Array::zeros(&[6])), ("b", Array::zeros(&[6]))],
        |t, v| t.group_norm(v[0], v[1], v[2], 4, 1e-5),
    )
    .unwrap_err();
    assert!(matches!(err, DiffError::Shape { op: "group_norm", .. }), "{err:?}");
}

#[test]
fn derivative_of_square_sum() {
    let (_, mut tape, out) = record_forward(&[("x", arr(&[1], &[3.0]))], |t, v| {
        let sq = t.mul(v[0], v[0])?;
        t.sum(sq)
    })
    .unwrap();
    let grads = tape.backward(out, &Array::scalar(1.0)).unwrap();
    assert_eq!(grads.get("x").unwrap().data(), &[6.0]);
}

#[test]
fn constant_expression_has_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf("x", arr(&[3], &[1.0, 2.0, 3.0])).unwrap();
    let c = tape.constant(arr(&[3], &[4.0, 5.0, 6.0]));
    let out = tape.sum(c).unwrap();
    let _ = x;
    let grads = tape.backward(out, &Array::scalar(1.0)).unwrap();
    assert_eq!(grads.get("x").unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn second_backward_is_a_usage_error() {
    let (_, mut tape, out) = record_forward(&[("x", arr(&[2], &[1.0, 2.0]))], |t, v| t.sum(v[0])).unwrap();
    tape.backward(out, &Array::scalar(1.0)).unwrap();
    let err = tape.backward(out, &Array::scalar(1.0)).unwrap_err();
    assert!(matches!(err, DiffError::Usage(_)));
}

#[test]
fn seed_shape_must_match_output() {
    let (_, mut tape, out) = record_forward(&[("x", arr(&[2], &[1.0, 2.0]))], |t, v| t.scale(v[0], 2.0)).unwrap();
    assert!(matches!(tape.backward(out, &Array::scalar(1.0)), Err(DiffError::Shape { .. })));
    let g = tape.backward(out, &arr(&[2], &[1.0, -1.0])).unwrap();
    assert_eq!(g.get("x").unwrap().data(), &[2.0, -2.0]);
}

#[test]
fn duplicate_leaf_names_rejected() {
    let mut tape = Tape::new();
    tape.leaf("w", Array::zeros(&[1])).unwrap();
    assert!(matches!(tape.leaf("w", Array::zeros(&[1])), Err(DiffError::Usage(_))));
}

#[test]
fn film_identity_and_shift() {
    let mut rng = SeededRng::new(2, Stream::Custom(1));
    let feats = rng.normal_array(&[3, 4]);
    let run = |scale: Array, shift: Array| {
        record_forward(&[("f", feats.clone()), ("s", scale), ("h", shift)], |t, v| t.film(v[0], v[1], v[2]))
            .unwrap()
            .0
    };
    assert_eq!(run(Array::zeros(&[3]), Array::zeros(&[3])), feats);
    assert_eq!(run(Array::zeros(&[3]), Array::full(&[3], 1.0)), feats.map(|v| v + 1.0));
    let scale = rng.normal_array(&[3]);
    let shift = rng.normal_array(&[3]);
    let out = run(scale.clone(), shift.clone());
    for c in 0..3 {
        for l in 0..4 {
            let expect = feats.data()[c * 4 + l] * (1.0 + scale.data()[c]) + shift.data()[c];
            assert_eq!(out.data()[c * 4 + l], expect);
        }
    }
}

#[test]
fn replay_reproduces_a_mixed_graph_bit_exactly() {
    let mut rng = SeededRng::new(5, Stream::Custom(2));
    let leaves = [
        ("x", rng.normal_array(&[2, 4, 8])),
        ("w", rng.normal_array(&[8, 4, 3])),
        ("b", rng.normal_array(&[8])),
        ("g", rng.normal_array(&[8])),
        ("beta", rng.normal_array(&[8])),
    ];
    let (_, tape, _) = record_forward(&leaves, |t, v| {
        let h = t.conv1d(v[0], v[1], v[2], 1, 1)?;
        let h = t.group_norm(h, v[3], v[4], 4, 1e-5)?;
        let h = t.mish(h)?;
        let h = t.upsample_nearest(h)?;
        let h = t.transpose12(h)?;
        t.mean(h)
    })
    .unwrap();
    assert!(tape.replay_matches().unwrap());
}
