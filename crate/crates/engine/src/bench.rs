//! Matched-configuration timing runs: lanes on/off, the three BF16 modes,
//! and coalesced vs fragmented batch layout. Every variant starts from the
//! same seed and trains for `epochs` passes. Variants run interleaved
//! `repeats` times and each keeps its fastest mean epoch time.

use std::fmt::Write as _;
use std::str::FromStr;

use slide_core::{Examples, Network, QuantMode, SparseBatch};

use crate::config::TrainConfig;
use crate::trainer::{TrainError, TrainOptions, Trainer};

pub const BENCH_HEADER: &str = "ablation,variant,epochs,mean_epoch_seconds,final_loss,ratio";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Avx,
    Bf16,
    Layout,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Avx => "avx",
            Ablation::Bf16 => "bf16",
            Ablation::Layout => "layout",
        }
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "avx" => Ok(Ablation::Avx),
            "bf16" => Ok(Ablation::Bf16),
            "layout" => Ok(Ablation::Layout),
            _ => Err(format!("unknown ablation `{s}` (expected avx, bf16 or layout)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub ablation: Ablation,
    pub variant: String,
    pub epochs: usize,
    pub mean_epoch_seconds: f64,
    pub final_loss: f64,
    /// `mean_epoch_seconds` over that of the first row.
    pub ratio: f64,
}

/// Train one variant and return `(mean epoch seconds, final epoch loss)`.
pub fn time_variant<D: Examples + Sync>(cfg: &TrainConfig, data: &D) -> Result<(f64, f64), TrainError> {
    let spec = cfg
        .network_spec(data.input_dim(), data.label_dim())
        .map_err(|_| TrainError::Options("configuration does not fit the data"))?;
    let mut t = Trainer::new(Network::new(&spec)?, TrainOptions::from_config(cfg))?;
    let mut last = None;
    for _ in 0..cfg.epochs {
        last = Some(t.train_pass(data)?);
    }
    let last = last.ok_or(TrainError::Options("epochs must be >= 1"))?;
    Ok((last.wall_seconds / cfg.epochs as f64, last.loss))
}

pub fn run(
    ablation: Ablation,
    cfg: &TrainConfig,
    train: &SparseBatch,
    repeats: usize,
) -> Result<Vec<BenchRow>, TrainError> {
    let mut raw = once(ablation, cfg, train)?;
    for _ in 1..repeats {
        for (best, again) in raw.iter_mut().zip(once(ablation, cfg, train)?) {
            best.1 = best.1.min(again.1);
            best.2 = again.2;
        }
    }
    let base = raw[0].1;
    Ok(raw
        .into_iter()
        .map(|(variant, secs, loss)| BenchRow {
            ablation,
            variant,
            epochs: cfg.epochs,
            mean_epoch_seconds: secs,
            final_loss: loss,
            ratio: secs / base,
        })
        .collect())
}

fn once(ablation: Ablation, cfg: &TrainConfig, train: &SparseBatch) -> Result<Vec<(String, f64, f64)>, TrainError> {
    let mut raw: Vec<(String, f64, f64)> = Vec::new();
    match ablation {
        Ablation::Avx => {
            for on in [false, true] {
                let c = TrainConfig { lane_enabled: on, ..cfg.clone() };
                let (secs, loss) = time_variant(&c, train)?;
                raw.push((if on { "lanes_on" } else { "lanes_off" }.to_string(), secs, loss));
            }
        }
        Ablation::Bf16 => {
            for mode in QuantMode::ALL {
                let c = TrainConfig { bf16_mode: mode, ..cfg.clone() };
                let (secs, loss) = time_variant(&c, train)?;
                raw.push((mode.as_str().to_string(), secs, loss));
            }
        }
        Ablation::Layout => {
            let (secs, loss) = time_variant(cfg, train)?;
            raw.push(("coalesced".to_string(), secs, loss));
            let fragmented = train.fragmented_copy();
            let (secs, loss) = time_variant(cfg, &fragmented)?;
            raw.push(("fragmented".to_string(), secs, loss));
        }
    }
    Ok(raw)
}

/// Floats are printed in shortest round-trip form, so the ratio column can
/// be recomputed exactly from the time column.
pub fn csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.ablation.as_str(),
            r.variant,
            r.epochs,
            r.mean_epoch_seconds,
            r.final_loss,
            r.ratio
        );
    }
    out
}
