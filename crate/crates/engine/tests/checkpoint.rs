use slide_core::{Network, QuantMode};
use slide_engine::checkpoint::{self, CheckpointError};
use slide_engine::synth::{self, SynthSpec};
use slide_engine::{TrainConfig, TrainOptions, Trainer};

fn trained(cfg: &TrainConfig) -> Network {
    let data = synth::generate(
        &SynthSpec { input_dim: 120, label_dim: 40, ..SynthSpec::desk(64, 1) },
        0,
    )
    .unwrap();
    let spec = cfg.network_spec(120, 40).unwrap();
    let mut t = Trainer::new(Network::new(&spec).unwrap(), TrainOptions::from_config(cfg)).unwrap();
    t.train_pass(&data).unwrap();
    t.into_network()
}

fn cfg() -> TrainConfig {
    TrainConfig { hidden: 16, min_active: 5, batch_size: 8, ..TrainConfig::desk() }
}

#[test]
fn round_trip_restores_weights_and_tables() {
    for mode in QuantMode::ALL {
        let c = TrainConfig { bf16_mode: mode, ..cfg() };
        let mut net = trained(&c);
        // Loading rebuilds the tables from the weights.
        net.maintain(true).unwrap();
        let mut bytes = Vec::new();
        checkpoint::write(&net, &mut bytes).unwrap();
        let back = checkpoint::read(&c.network_spec(120, 40).unwrap(), bytes.as_slice()).unwrap();
        assert_eq!(back.weight_snapshot(), net.weight_snapshot());
        for (a, b) in back.layers().iter().zip(net.layers()) {
            assert_eq!(a.weights(), b.weights());
            assert_eq!(a.tables(), b.tables());
        }
        let mut again = Vec::new();
        checkpoint::write(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }
}

#[test]
fn header_is_checked() {
    let net = trained(&cfg());
    let spec = cfg().network_spec(120, 40).unwrap();
    let mut bytes = Vec::new();
    checkpoint::write(&net, &mut bytes).unwrap();
    assert_eq!(&bytes[..8], b"SLDCKPT\0");

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint::read(&spec, bad.as_slice()), Err(CheckpointError::Magic)));
    let mut bad = bytes.clone();
    bad[8] = 2;
    assert!(matches!(checkpoint::read(&spec, bad.as_slice()), Err(CheckpointError::Version(2))));
    assert!(matches!(
        checkpoint::read(&spec, &bytes[..bytes.len() - 1]),
        Err(CheckpointError::Io(_))
    ));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(checkpoint::read(&spec, long.as_slice()), Err(CheckpointError::Corrupt(_))));

    let other = TrainConfig { hidden: 17, ..cfg() }.network_spec(120, 40).unwrap();
    assert!(matches!(checkpoint::read(&other, bytes.as_slice()), Err(CheckpointError::Nn(_))));
}
