use std::fs;
use std::path::{Path, PathBuf};

use slide_core::sparse_data::ParseOptions;
use slide_engine::cli::run;
use slide_engine::synth::{self, SynthSpec};

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { input_dim: 150, label_dim: 30, ..SynthSpec::desk(120, 4) };
        for (name, split) in [("train.txt", 0), ("test.txt", 1)] {
            let data = synth::generate(&spec, split).unwrap();
            fs::write(dir.path().join(name), data.write_libsvm(true, ParseOptions::default())).unwrap();
        }
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// A small config with `extra` keys appended.
    fn config(&self, name: &str, extra: &str) -> PathBuf {
        let text = format!(
            r#"{{"train_path": "{}", "test_path": "{}", "hidden": 16, "min_active": 6,
                "batch_size": 16, "epochs": 3, "metrics_path": "{}",
                "checkpoint_path": "{}"{extra}}}"#,
            self.path("train.txt").display(),
            self.path("test.txt").display(),
            self.path(&format!("{name}.csv")).display(),
            self.path(&format!("{name}.ckpt")).display(),
        );
        let p = self.path(&format!("{name}.json"));
        fs::write(&p, text).unwrap();
        p
    }
}

fn slide(args: &[&str]) -> i32 {
    run(std::iter::once("slide").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_writes_one_metrics_row_per_epoch_and_a_checkpoint() {
    let f = Fixture::new();
    let cfg = f.config("run", "");
    assert_eq!(slide(&["train", "--config", p(&cfg)]), 0);
    let csv = fs::read_to_string(f.path("run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,wall_seconds,loss,p_at_1,active_frac,touched_frac");
    assert_eq!(lines.len(), 4);
    for (i, l) in lines[1..].iter().enumerate() {
        let cols: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[0] as usize, i + 1);
        assert!((0.0..=1.0).contains(&cols[3]));
    }
    assert!(f.path("run.ckpt").exists());
    assert_eq!(slide(&["eval", "--config", p(&cfg)]), 0);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let f = Fixture::new();
    let a = f.config("a", "");
    let b = f.config("b", "");
    assert_eq!(slide(&["train", "--config", p(&a), "--threads", "1", "--seed", "7"]), 0);
    assert_eq!(slide(&["train", "--config", p(&b), "--threads", "1", "--seed", "7"]), 0);
    let (ca, cb) = (fs::read(f.path("a.ckpt")).unwrap(), fs::read(f.path("b.ckpt")).unwrap());
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);

    let c = f.config("c", "");
    assert_eq!(slide(&["train", "--config", p(&c), "--threads", "1", "--seed", "8"]), 0);
    assert_ne!(ca, fs::read(f.path("c.ckpt")).unwrap());
}

#[test]
fn flags_override_the_file() {
    let f = Fixture::new();
    let cfg = f.config("flags", r#", "epochs": 1"#);
    let metrics = f.path("other.csv");
    assert_eq!(
        slide(&["train", "--config", p(&cfg), "--metrics", p(&metrics), "--no-lanes", "--bf16", "activations"]),
        0
    );
    assert!(metrics.exists());
    assert!(!f.path("flags.csv").exists());
}

#[test]
fn missing_files_and_bad_configs_exit_2() {
    let f = Fixture::new();
    assert_eq!(slide(&["train", "--config", p(&f.path("absent.json"))]), 2);

    let cfg = f.path("nodata.json");
    fs::write(&cfg, r#"{"train_path": "/definitely/not/here.txt"}"#).unwrap();
    assert_eq!(slide(&["train", "--config", p(&cfg)]), 2);

    let cfg = f.config("typo", r#", "learnig_rate": 0.1"#);
    assert_eq!(slide(&["train", "--config", p(&cfg)]), 2);

    let cfg = f.config("bf", "");
    assert_eq!(slide(&["train", "--config", p(&cfg), "--bf16", "fp8"]), 2);
    assert_eq!(slide(&["train", "--config", p(&cfg), "--threads", "0"]), 2);
    assert_eq!(slide(&["bench", "speed", "--config", p(&cfg)]), 2);
    assert_eq!(slide(&["frobnicate"]), 2);
    assert_eq!(slide(&[]), 2);

    // No checkpoint written yet.
    assert_eq!(slide(&["eval", "--config", p(&cfg)]), 2);
}

#[test]
fn training_errors_exit_1() {
    let f = Fixture::new();
    // A test file with a different label space only fails once training
    // reaches evaluation.
    let other = SynthSpec { input_dim: 150, label_dim: 31, ..SynthSpec::desk(10, 4) };
    fs::write(
        f.path("test.txt"),
        synth::generate(&other, 1).unwrap().write_libsvm(true, ParseOptions::default()),
    )
    .unwrap();
    let cfg = f.config("mismatch", "");
    assert_eq!(slide(&["train", "--config", p(&cfg)]), 1);
}

fn bench_rows(f: &Fixture, ablation: &str) -> Vec<Vec<String>> {
    let cfg = f.config(ablation, r#", "epochs": 1"#);
    assert_eq!(slide(&["bench", ablation, "--config", p(&cfg)]), 0);
    let csv = fs::read_to_string(f.path(&format!("{ablation}.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "ablation,variant,epochs,mean_epoch_seconds,final_loss,ratio");
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn bench_emits_matched_rows_with_consistent_ratios() {
    let f = Fixture::new();
    for (ablation, variants) in [
        ("avx", vec!["lanes_off", "lanes_on"]),
        ("bf16", vec!["none", "activations", "both"]),
        ("layout", vec!["coalesced", "fragmented"]),
    ] {
        let rows = bench_rows(&f, ablation);
        assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), variants);
        let base: f64 = rows[0][3].parse().unwrap();
        for r in &rows {
            assert_eq!(r[0], ablation);
            let secs: f64 = r[3].parse().unwrap();
            let ratio: f64 = r[5].parse().unwrap();
            assert_eq!(ratio, secs / base, "{r:?}");
        }
    }
}
