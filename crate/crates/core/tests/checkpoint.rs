use std::collections::BTreeMap;

use diffcore::{AdamState, SeededRng, Stream};
use tcfm::checkpoint::{Checkpoint, FORMAT_VERSION};
use tcfm::config::{ModelFamily, RunConfig};
use tcfm::ddpm::DiffusionConfig;
use tcfm::domains::norm::{ContextLayout, NormStats};
use tcfm::{NetConfig, TcfmError, VectorFieldNet};

fn sample_checkpoint(with_optimizer: bool) -> Checkpoint {
    let cfg = NetConfig { base_channels: 8, groups: 4, depth: 1, ..NetConfig::new(8, 2, 4) };
    let net = VectorFieldNet::init(cfg.clone(), &mut SeededRng::new(3, Stream::Init)).unwrap();
    let params = net.params().clone();
    let optimizer = with_optimizer.then(|| AdamState {
        step: 17,
        first: params.iter().map(|(k, v)| (k.clone(), v.map(|x| 0.1 * x))).collect(),
        second: params.iter().map(|(k, v)| (k.clone(), v.map(|x| x * x))).collect::<BTreeMap<_, _>>(),
    });
    Checkpoint {
        family: ModelFamily::Ddpm,
        net_config: cfg,
        diffusion: DiffusionConfig::default(),
        layout: ContextLayout::StartGoal,
        run: Some(RunConfig::from_toml("seed = 4\n[domain]\nkind = \"maze\"\n").unwrap()),
        stats: NormStats { min: vec![-1.5, 0.0], max: vec![2.0, 7.25] },
        step: 17,
        params,
        optimizer,
    }
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = std::env::temp_dir().join(format!("tcfm-ckpt-{}", std::process::id()));
    for opt in [false, true] {
        let ckpt = sample_checkpoint(opt);
        let path = dir.join(format!("m{opt}.ckpt"));
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.to_bytes(), std::fs::read(&path).unwrap());
        assert_eq!(loaded.net().unwrap().params(), ckpt.net().unwrap().params());
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn any_flipped_byte_is_rejected() {
    let bytes = sample_checkpoint(true).to_bytes();
    let mut rng = SeededRng::new(0, Stream::Custom(3));
    for _ in 0..50 {
        let mut bad = bytes.clone();
        let i = 12 + rng.index(bytes.len() - 12);
        bad[i] ^= 1 << rng.index(8);
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(TcfmError::Checkpoint(_))), "byte {i}");
    }
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(TcfmError::Checkpoint(_))));
}

#[test]
fn wrong_magic_and_version_are_rejected() {
    let bytes = sample_checkpoint(false).to_bytes();
    let mut magic = bytes.clone();
    magic[0] = b'X';
    match Checkpoint::from_bytes(&magic).unwrap_err() {
        TcfmError::Checkpoint(m) => assert!(m.contains("magic")),
        other => panic!("{other:?}"),
    }
    let mut version = bytes;
    version[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    match Checkpoint::from_bytes(&version).unwrap_err() {
        TcfmError::Checkpoint(m) => assert!(m.contains("version")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_file_is_io_error() {
    let err = Checkpoint::load(std::path::Path::new("/nonexistent/model.ckpt")).unwrap_err();
    assert!(matches!(err, TcfmError::Io { .. }));
}
