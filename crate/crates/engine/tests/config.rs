use std::path::PathBuf;

use slide_core::{QuantMode, StorageOrder};
use slide_engine::config::{HashKind, Order, Preset};
use slide_engine::{Overrides, TrainConfig};

#[test]
fn empty_object_is_the_desk_preset() {
    assert_eq!(TrainConfig::from_json("{}").unwrap(), TrainConfig::desk());
    let p = TrainConfig::from_json(r#"{"preset": "full"}"#).unwrap();
    assert_eq!(p, TrainConfig::full());
    assert_eq!((p.k, p.l, p.lr), (6, 400, 1e-4));
}

#[test]
fn serialized_config_parses_back_to_itself() {
    let mut cfg = TrainConfig::desk();
    cfg.hash_family = HashKind::Simhash;
    cfg.bf16_mode = QuantMode::ActivationsOnly;
    cfg.train_path = Some(PathBuf::from("data/train.txt"));
    cfg.hidden_layers = 2;
    cfg.hidden_order = Order::Row;
    cfg.hidden_lsh = true;
    cfg.lr = 0.0123;
    let text = cfg.to_json();
    let back = TrainConfig::from_json(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_json(), text);
}

#[test]
fn file_keys_override_the_preset() {
    let cfg = TrainConfig::from_json(
        r#"{"preset": "full", "threads": 3, "bf16_mode": "both", "k": 9, "l": 50}"#,
    )
    .unwrap();
    assert_eq!(cfg.preset, Preset::Full);
    assert_eq!((cfg.threads, cfg.k, cfg.l), (3, 9, 50));
    assert_eq!(cfg.bf16_mode, QuantMode::WeightsAndActivations);
    assert_eq!(cfg.min_active, TrainConfig::full().min_active);
}

#[test]
fn bad_files_are_rejected() {
    for text in [
        r#"{"learning_rate": 0.1}"#,
        r#"{"threads": 0}"#,
        r#"{"batch_size": 0}"#,
        r#"{"rehash_period": 0}"#,
        r#"{"bf16_mode": "half"}"#,
        r#"{"lane_width": 12}"#,
        r#"{"hidden_lsh": true}"#,
        r#"{"k": "six"}"#,
        r#"[1, 2]"#,
        "not json",
    ] {
        assert!(TrainConfig::from_json(text).is_err(), "{text}");
    }
}

#[test]
fn every_override_takes_precedence() {
    let file = TrainConfig::from_json(
        r#"{"threads": 2, "seed": 5, "lane_enabled": true, "bf16_mode": "none", "metrics_path": "a.csv"}"#,
    )
    .unwrap();

    let mut c = file.clone();
    Overrides { threads: Some(7), ..Default::default() }.apply(&mut c).unwrap();
    assert_eq!(c, TrainConfig { threads: 7, ..file.clone() });

    let mut c = file.clone();
    Overrides { seed: Some(9), ..Default::default() }.apply(&mut c).unwrap();
    assert_eq!(c, TrainConfig { seed: 9, ..file.clone() });

    let mut c = file.clone();
    Overrides { no_lanes: true, ..Default::default() }.apply(&mut c).unwrap();
    assert_eq!(c, TrainConfig { lane_enabled: false, ..file.clone() });

    let mut c = file.clone();
    Overrides { bf16: Some(QuantMode::ActivationsOnly), ..Default::default() }
        .apply(&mut c)
        .unwrap();
    assert_eq!(c, TrainConfig { bf16_mode: QuantMode::ActivationsOnly, ..file.clone() });

    let mut c = file.clone();
    Overrides { metrics: Some("b.csv".into()), ..Default::default() }
        .apply(&mut c)
        .unwrap();
    assert_eq!(c, TrainConfig { metrics_path: Some("b.csv".into()), ..file.clone() });

    let mut c = file.clone();
    assert!(Overrides { threads: Some(0), ..Default::default() }.apply(&mut c).is_err());
}

#[test]
fn network_spec_follows_the_config() {
    let spec = TrainConfig::desk().network_spec(1000, 500).unwrap();
    assert_eq!(spec.layers.len(), 2);
    let (h, o) = (&spec.layers[0], &spec.layers[1]);
    assert_eq!((h.n, h.m, h.order), (64, 1000, StorageOrder::ColMajor));
    assert!(h.lsh.is_none());
    assert_eq!((o.n, o.m, o.order), (500, 64, StorageOrder::RowMajor));
    let s = o.lsh.unwrap();
    assert_eq!((s.hash.k, s.hash.l, s.min_active), (6, 4, 25));

    let dense = TrainConfig { use_lsh: false, ..TrainConfig::desk() };
    assert!(dense.network_spec(1000, 500).unwrap().layers[1].lsh.is_none());

    let deep = TrainConfig { hidden_layers: 2, hidden_order: Order::Row, hidden_lsh: true, ..TrainConfig::desk() };
    let spec = deep.network_spec(100, 50).unwrap();
    assert_eq!(spec.layers.len(), 3);
    assert!(spec.layers.iter().all(|l| l.lsh.is_some()));

    let flat = TrainConfig { hidden_layers: 0, ..TrainConfig::desk() };
    assert!(flat.network_spec(100, 50).is_err());
    let flat = TrainConfig { use_lsh: false, ..flat };
    assert_eq!(flat.network_spec(100, 50).unwrap().layers.len(), 1);
}
