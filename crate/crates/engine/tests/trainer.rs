use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slide_core::nn::NetworkSpec;
use slide_core::quant::apply_mode;
use slide_core::sparse_data::BatchBuilder;
use slide_core::{
    Activation, AdamHyper, LaneConfig, LayerConfig, LayerWeights, LshInput, Network, QuantMode,
    Rounding, SparseBatch, StorageOrder,
};
use slide_engine::synth::{self, SynthSpec};
use slide_engine::{evaluate_p_at_1, TrainConfig, TrainError, TrainOptions, Trainer};

fn small_task(n: usize) -> SparseBatch {
    let spec = SynthSpec {
        input_dim: 200,
        label_dim: 100,
        ..SynthSpec::desk(n, 3)
    };
    synth::generate(&spec, 0).unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        hidden: 32,
        min_active: 8,
        batch_size: 16,
        epochs: 2,
        ..TrainConfig::desk()
    }
}

fn trainer(cfg: &TrainConfig, data: &SparseBatch) -> Trainer {
    let spec = cfg
        .network_spec(data.header().input_dim, data.header().label_dim)
        .unwrap();
    Trainer::new(Network::new(&spec).unwrap(), TrainOptions::from_config(cfg)).unwrap()
}

fn weights(net: &Network) -> Vec<(Vec<f32>, Vec<f32>)> {
    net.weight_snapshot()
}

#[test]
fn empty_dataset_gives_zero_updates() {
    let data = SparseBatch::empty(200, 100).unwrap();
    let cfg = small_cfg();
    let mut t = trainer(&cfg, &data);
    let before = weights(t.network());
    let m = t.train_pass(&data).unwrap();
    assert_eq!((m.batches, m.samples, m.maintenance_rounds), (0, 0, 0));
    assert_eq!(t.network().step(), 0);
    assert_eq!(weights(t.network()), before);
    assert!(matches!(
        t.train_epoch(&data, None::<&SparseBatch>),
        Err(TrainError::EmptyEval)
    ));
}

#[test]
fn step_counter_counts_batches() {
    let data = small_task(100);
    let mut t = trainer(&small_cfg(), &data);
    let m = t.train_pass(&data).unwrap();
    assert_eq!(m.batches, 7);
    assert_eq!(t.network().step(), 7);
    t.train_pass(&data).unwrap();
    assert_eq!(t.network().step(), 14);
}

#[test]
fn deterministic_runs_are_bitwise_identical() {
    let data = small_task(120);
    let cfg = small_cfg();
    let run = |threads: usize| {
        let c = TrainConfig { threads, ..cfg.clone() };
        let mut t = trainer(&c, &data);
        let mut losses = Vec::new();
        for _ in 0..2 {
            losses.push(t.train_pass(&data).unwrap().loss.to_bits());
        }
        (weights(t.network()), losses)
    };
    let a = run(1);
    assert_eq!(a, run(1));
    // Gradients are taken against batch-start weights and applied in
    // sample order, so the thread count does not matter.
    assert_eq!(a.0, run(3).0);
}

#[test]
fn hogwild_trains() {
    let data = small_task(200);
    let cfg = TrainConfig { threads: 4, hogwild: true, ..small_cfg() };
    let mut t = trainer(&cfg, &data);
    let first = t.train_pass(&data).unwrap().loss;
    let mut last = first;
    for _ in 0..4 {
        last = t.train_pass(&data).unwrap().loss;
    }
    assert!(last.is_finite() && last < first, "{first} -> {last}");
}

#[test]
fn active_fraction_matches_trace() {
    let data = small_task(150);
    let cfg = small_cfg();
    let spec = cfg.network_spec(200, 100).unwrap();
    let opts = TrainOptions { record_trace: true, ..TrainOptions::from_config(&cfg) };
    let mut t = Trainer::new(Network::new(&spec).unwrap(), opts).unwrap();
    for _ in 0..2 {
        let m = t.train_pass(&data).unwrap();
        assert_eq!(t.trace().len(), m.samples);
        let active: u64 = t.trace().iter().map(|&(a, _)| a as u64).sum();
        let outputs: u64 = t.trace().iter().map(|&(_, n)| n as u64).sum();
        assert!(t.trace().iter().all(|&(a, n)| n == 100 && a >= 8 && a <= n));
        assert_eq!(m.active_frac, active as f64 / outputs as f64);
        assert!((0.0..=1.0).contains(&m.active_frac));
        assert!((0.0..=1.0).contains(&m.touched_frac));
    }
}

#[test]
fn wall_clock_is_cumulative() {
    let data = small_task(80);
    let mut t = trainer(&small_cfg(), &data);
    let mut prev = 0.0;
    for e in 1..=3 {
        let m = t.train_epoch(&data, None::<&SparseBatch>).unwrap();
        assert_eq!(m.epoch, e);
        assert!(m.wall_seconds >= prev);
        assert!((0.0..=1.0).contains(&m.p_at_1));
        prev = m.wall_seconds;
    }
}

#[test]
fn maintenance_schedule_is_counted() {
    let data = small_task(160);
    let cfg = TrainConfig { rehash_period: 2, rebuild_every: 3, ..small_cfg() };
    let mut t = trainer(&cfg, &data);
    let m = t.train_pass(&data).unwrap();
    assert_eq!(m.batches, 10);
    assert_eq!(m.maintenance_rounds, 5);
    assert_eq!(m.full_rebuilds, 1);
}

fn output_rows(net: &Network) -> Vec<Vec<f32>> {
    let w = net.layers().last().unwrap().weights();
    (0..w.n())
        .map(|i| {
            let mut r = vec![0.0; w.m()];
            w.read_row(i, &mut r);
            r
        })
        .collect()
}

#[test]
fn maintenance_is_idempotent_and_matches_rebuild() {
    let data = small_task(200);
    // No maintenance during the pass, so the tables go stale.
    let cfg = TrainConfig { rehash_period: 1_000_000, ..small_cfg() };
    let mut t = trainer(&cfg, &data);
    t.train_pass(&data).unwrap();
    let net = t.network_mut();
    let first = net.maintain(false).unwrap();
    assert!(first.changed > 0);
    let tables = net.layers().last().unwrap().tables().unwrap().clone();

    let again = net.maintain(false).unwrap();
    assert_eq!(again.changed, 0);
    assert_eq!(net.layers().last().unwrap().tables().unwrap(), &tables);

    let rows = output_rows(net);
    let mut rebuilt = tables.clone();
    rebuilt.rebuild(rows.iter()).unwrap();
    assert_eq!(rebuilt, tables);
    for (i, r) in rows.iter().enumerate() {
        assert!(tables.query(LshInput::Dense(r)).unwrap().contains(&(i as u32)));
    }
}

fn identity_net(d: usize) -> Network {
    let spec = NetworkSpec {
        layers: vec![LayerConfig {
            n: d,
            m: d,
            activation: Activation::Softmax,
            order: StorageOrder::ColMajor,
            lsh: None,
        }],
        hyper: AdamHyper::default(),
        lanes: LaneConfig::default(),
        policy: apply_mode(QuantMode::None, Rounding::Truncate),
        seed: 0,
    };
    let mut eye = vec![0.0; d * d];
    (0..d).for_each(|i| eye[i * d + i] = 1.0);
    let w = LayerWeights::from_row_major(
        d,
        d,
        StorageOrder::ColMajor,
        &eye,
        &vec![0.0; d],
        spec.policy.weights,
        Rounding::Truncate,
    )
    .unwrap();
    Network::from_weights(&spec, vec![w]).unwrap()
}

#[test]
fn p_at_1_is_one_when_every_prediction_is_right() {
    let d = 12;
    let net = identity_net(d);
    let mut b = BatchBuilder::new(d, d);
    for i in 0..d as u32 {
        b.push(&[(i, 1.0), ((i + 1) % d as u32, 0.5)], &[i], i as usize + 1).unwrap();
    }
    let data = b.finish().unwrap();
    assert_eq!(evaluate_p_at_1(&net, &data, 1).unwrap(), 1.0);
    assert_eq!(evaluate_p_at_1(&net, &data, 4).unwrap(), 1.0);

    let single = data.slice(3, 1).unwrap();
    assert_eq!(evaluate_p_at_1(&net, &single, 1).unwrap(), 1.0);
}

#[test]
fn p_at_1_of_random_network_is_chance() {
    // Labels independent of features: any predictor hits 1/d on average.
    let (d, classes, n) = (50, 10, 5000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut b = BatchBuilder::new(d, classes);
    for i in 0..n {
        let mut f: Vec<(u32, f32)> = (0..5).map(|_| (rng.gen_range(0..d as u32), rng.gen_range(0.1..1.0))).collect();
        f.sort_by_key(|p| p.0);
        f.dedup_by_key(|p| p.0);
        b.push(&f, &[rng.gen_range(0..classes as u32)], i + 1).unwrap();
    }
    let data = b.finish().unwrap();
    let cfg = TrainConfig { hidden: 16, use_lsh: false, ..TrainConfig::desk() };
    let net = Network::new(&cfg.network_spec(d, classes).unwrap()).unwrap();
    let p = evaluate_p_at_1(&net, &data, 2).unwrap();
    // Four standard deviations of a binomial(5000, 0.1) proportion.
    assert!((p - 0.1).abs() <= 4.0 * (0.1f64 * 0.9 / n as f64).sqrt(), "{p}");
}

#[test]
fn dimension_mismatch_is_an_error() {
    let data = small_task(10);
    let cfg = small_cfg();
    let spec = cfg.network_spec(201, 100).unwrap();
    let mut t = Trainer::new(Network::new(&spec).unwrap(), TrainOptions::from_config(&cfg)).unwrap();
    assert!(matches!(t.train_pass(&data), Err(TrainError::Dimension { .. })));
}

#[test]
fn bad_options_are_rejected() {
    let cfg = small_cfg();
    let net = Network::new(&cfg.network_spec(200, 100).unwrap()).unwrap();
    let opts = TrainOptions { threads: 0, ..TrainOptions::from_config(&cfg) };
    assert!(Trainer::new(net, opts).is_err());
}
