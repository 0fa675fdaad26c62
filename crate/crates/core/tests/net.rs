use diffcore::gradcheck::check_gradients;
use diffcore::{Array, SeededRng, Stream, Tape};
use proptest::prelude::*;
use tcfm::cfm::{train, TrainerConfig};
use tcfm::{NetConfig, TcfmError, Trajectory, TrajectoryDataset, VectorFieldNet};

fn tiny(h: usize, d: usize, c: usize) -> NetConfig {
    NetConfig { base_channels: 8, depth: 1, kernel_size: 3, time_embed_dim: 8, groups: 4, ..NetConfig::new(h, d, c) }
}

#[test]
fn parameter_count_matches_shape_walk() {
    // Independent shape walk of the architecture (see the README).
    let net = VectorFieldNet::init(NetConfig::new(16, 2, 0), &mut SeededRng::new(0, Stream::Init)).unwrap();
    assert_eq!(net.param_count(), 564_866);
    let net = VectorFieldNet::init(tiny(8, 1, 0), &mut SeededRng::new(0, Stream::Init)).unwrap();
    assert_eq!(net.param_count(), 6_457);
}

#[test]
fn fresh_network_is_the_zero_field() {
    let net = VectorFieldNet::init(NetConfig::new(16, 2, 3), &mut SeededRng::new(1, Stream::Init)).unwrap();
    let x = SeededRng::new(2, Stream::Custom(0)).normal_array(&[16, 2]);
    let out = net.forward(0.3, &x, &[1.0, -2.0, 0.5]).unwrap();
    assert_eq!(out.shape(), &[16, 2]);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn same_seed_same_parameters() {
    let a = VectorFieldNet::init(NetConfig::new(16, 2, 0), &mut SeededRng::new(9, Stream::Init)).unwrap();
    let b = VectorFieldNet::init(NetConfig::new(16, 2, 0), &mut SeededRng::new(9, Stream::Init)).unwrap();
    let c = VectorFieldNet::init(NetConfig::new(16, 2, 0), &mut SeededRng::new(10, Stream::Init)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn horizon_must_divide_by_downsampling() {
    let cfg = NetConfig { depth: 2, ..NetConfig::new(10, 2, 0) };
    let err = VectorFieldNet::init(cfg, &mut SeededRng::new(0, Stream::Init)).unwrap_err();
    assert!(matches!(err, TcfmError::Config(_)), "{err:?}");
}

#[test]
fn input_shape_mismatch_is_shape_error() {
    let net = VectorFieldNet::init(tiny(8, 2, 0), &mut SeededRng::new(0, Stream::Init)).unwrap();
    let err = net.forward(0.1, &Array::zeros(&[8, 3]), &[]).unwrap_err();
    assert!(matches!(err, TcfmError::Shape(_)), "{err:?}");
}

/// Perturbs every parameter so the zero-initialized layers carry gradient.
fn randomized(cfg: NetConfig, seed: u64) -> VectorFieldNet {
    let mut net = VectorFieldNet::init(cfg, &mut SeededRng::new(seed, Stream::Init)).unwrap();
    let mut rng = SeededRng::new(seed, Stream::Custom(7));
    for p in net.params_mut().values_mut() {
        let noise = rng.uniform_array(p.shape(), -0.3, 0.3);
        *p = p.zip_map(&noise, |a, b| a + b).unwrap();
    }
    net
}

#[test]
fn full_network_loss_gradients_match_finite_differences() {
    let cfg = tiny(8, 1, 2);
    for seed in 0..3 {
        let net = randomized(cfg.clone(), seed);
        let mut rng = SeededRng::new(seed, Stream::Custom(1));
        let x = rng.normal_array(&[2, 8, 1]);
        let target = rng.normal_array(&[2, 8, 1]);
        let ctx = rng.normal_array(&[2, 2]);
        let t = [rng.uniform(), rng.uniform()];
        let leaves: Vec<(&str, Array)> = net.params().iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let names: Vec<String> = net.params().keys().cloned().collect();
        let report = check_gradients(
            &leaves,
            |tape: &mut Tape, vars| {
                let map = names.iter().cloned().zip(vars.iter().copied()).collect();
                let pred = net.record_with(tape, map, &t, &x, &ctx).map_err(|e| match e {
                    TcfmError::Diff(d) => d,
                    other => panic!("{other}"),
                })?;
                let tgt = tape.constant(target.clone());
                tape.mean_square(pred, tgt)
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn context_changes_trained_output() {
    // Two contexts, two different constant targets.
    let h = 8;
    let up = Trajectory::constant(&[0.8], h).unwrap();
    let down = Trajectory::constant(&[-0.8], h).unwrap();
    let ds = TrajectoryDataset::new(h, 1, 1, vec![up, down], vec![vec![1.0], vec![-1.0]]).unwrap();
    let net = VectorFieldNet::init(tiny(h, 1, 1), &mut SeededRng::new(0, Stream::Init)).unwrap();
    let cfg = TrainerConfig { steps: 100, batch_size: 8, lr: 3e-3, ..Default::default() };
    let (net, _) = train(&ds, net, &cfg).unwrap();
    let x = SeededRng::new(3, Stream::Custom(2)).normal_array(&[h, 1]);
    let a = net.forward(0.5, &x, &[1.0]).unwrap();
    let b = net.forward(0.5, &x, &[-1.0]).unwrap();
    let diff = a.zip_map(&b, |p, q| (p - q).abs()).unwrap().max_abs();
    assert!(diff > 0.0, "context had no effect");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_shape_follows_input(
        depth in 1usize..3,
        mult in 1usize..4,
        dim in 1usize..4,
        ctx in 0usize..3,
        batch in 1usize..4,
        t in 0.0f64..=1.0,
    ) {
        let h = mult << depth;
        let cfg = NetConfig { depth, ..tiny(h, dim, ctx) };
        let net = randomized(cfg, 0);
        let x = SeededRng::new(1, Stream::Custom(0)).normal_array(&[batch, h, dim]);
        let c = Array::zeros(&[batch, ctx.max(1)]);
        let out = net.forward_batch(&vec![t; batch], &x, &c).unwrap();
        prop_assert_eq!(out.shape(), &[batch, h, dim][..]);
        prop_assert!(out.all_finite());
    }
}
