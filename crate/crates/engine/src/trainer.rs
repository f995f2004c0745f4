//! Epoch loop: samples of a batch are split into contiguous chunks, one per
//! thread. In HOGWILD mode each sample's gradient is applied as soon as it
//! is computed, racing with other threads. Otherwise every gradient of the
//! batch is computed against the batch-start weights and then applied one
//! sample at a time, in sample order, which makes the run independent of
//! the thread count.

use std::fmt::Write as _;
use std::time::Instant;

use log::debug;
use slide_core::nn::{SampleGradients, SampleStats, Workspace};
use slide_core::optimizer::AdamScratch;
use slide_core::{rng, Examples, Network, NnError};

use crate::config::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("cannot evaluate on an empty dataset")]
    EmptyEval,
    #[error("data has {data} {what} but the network expects {net}")]
    Dimension {
        what: &'static str,
        data: usize,
        net: usize,
    },
    #[error("invalid options: {0}")]
    Options(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub threads: usize,
    pub hogwild: bool,
    pub rehash_period: usize,
    pub rebuild_every: usize,
    pub seed: u64,
    /// Keep `(active, outputs)` of every sample of the last epoch.
    pub record_trace: bool,
}

impl TrainOptions {
    pub fn from_config(c: &TrainConfig) -> Self {
        Self {
            batch_size: c.batch_size,
            threads: c.threads,
            hogwild: c.hogwild,
            rehash_period: c.rehash_period,
            rebuild_every: c.rebuild_every,
            seed: c.seed,
            record_trace: false,
        }
    }
}

pub const METRICS_HEADER: &str = "epoch,wall_seconds,loss,p_at_1,active_frac,touched_frac";

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Training time since the trainer was created (evaluation excluded).
    pub wall_seconds: f64,
    /// Mean over labeled samples.
    pub loss: f64,
    pub p_at_1: f64,
    /// Mean of `|active| / n` of the output layer.
    pub active_frac: f64,
    /// Mean fraction of all weights that received a gradient.
    pub touched_frac: f64,
    pub samples: usize,
    pub batches: usize,
    pub maintenance_rounds: usize,
    pub full_rebuilds: usize,
    /// Neurons re-bucketed because their codes changed.
    pub rehashed: usize,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.wall_seconds, self.loss, self.p_at_1, self.active_frac, self.touched_frac
        )
    }
}

/// Header plus one row per epoch.
pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Counts are kept as integers (every sample has the same number of
/// outputs and weights) so the means do not depend on summation order.
#[derive(Debug, Clone, Copy, Default)]
struct Totals {
    loss: f64,
    active: u64,
    outputs: u64,
    touched: u64,
    weights: u64,
    count: usize,
}

impl Totals {
    fn add(&mut self, s: &SampleStats) {
        self.loss += s.loss;
        self.active += s.active as u64;
        self.outputs += s.outputs as u64;
        self.touched += s.touched as u64;
        self.weights += s.weights as u64;
        self.count += 1;
    }

    fn merge(&mut self, o: &Totals) {
        self.loss += o.loss;
        self.active += o.active;
        self.outputs += o.outputs;
        self.touched += o.touched;
        self.weights += o.weights;
        self.count += o.count;
    }
}

/// What one thread produced for its chunk of a batch.
#[derive(Default)]
struct ChunkOut {
    totals: Totals,
    trace: Vec<(u32, u32)>,
    grads: Vec<SampleGradients>,
}

pub struct Trainer {
    net: Network,
    opts: TrainOptions,
    epoch: usize,
    batches: u64,
    rounds: u64,
    wall: f64,
    workspaces: Vec<Workspace>,
    adam: AdamScratch,
    trace: Vec<(u32, u32)>,
}

impl Trainer {
    pub fn new(net: Network, opts: TrainOptions) -> Result<Self, TrainError> {
        if opts.threads == 0 || opts.batch_size == 0 {
            return Err(TrainError::Options("threads and batch_size must be >= 1"));
        }
        if opts.rehash_period == 0 || opts.rebuild_every == 0 {
            return Err(TrainError::Options("rehash_period and rebuild_every must be >= 1"));
        }
        Ok(Self {
            net,
            opts,
            epoch: 0,
            batches: 0,
            rounds: 0,
            wall: 0.0,
            workspaces: (0..opts.threads).map(|_| Workspace::default()).collect(),
            adam: AdamScratch::default(),
            trace: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn options(&self) -> &TrainOptions {
        &self.opts
    }

    /// `(active, outputs)` per sample of the last epoch, in sample order,
    /// when `record_trace` is on.
    pub fn trace(&self) -> &[(u32, u32)] {
        &self.trace
    }

    /// One pass over `data`, then P@1 on `eval` (on `data` when `None`).
    pub fn train_epoch<D, E>(&mut self, data: &D, eval: Option<&E>) -> Result<EpochMetrics, TrainError>
    where
        D: Examples + Sync,
        E: Examples + Sync,
    {
        let mut metrics = self.train_pass(data)?;
        metrics.p_at_1 = match eval {
            Some(e) => evaluate_p_at_1(&self.net, e, self.opts.threads)?,
            None => evaluate_p_at_1(&self.net, data, self.opts.threads)?,
        };
        Ok(metrics)
    }

    /// One pass over `data` without evaluation; `p_at_1` is left at 0.
    pub fn train_pass<D: Examples + Sync>(&mut self, data: &D) -> Result<EpochMetrics, TrainError> {
        check_dims(&self.net, data)?;
        self.epoch += 1;
        self.trace.clear();
        let mut metrics = EpochMetrics {
            epoch: self.epoch,
            ..Default::default()
        };
        let mut totals = Totals::default();
        let started = Instant::now();
        let n = data.len();
        let mut start = 0;
        while start < n {
            let count = self.opts.batch_size.min(n - start);
            self.run_batch(data, start, count, &mut totals)?;
            metrics.batches += 1;
            self.batches += 1;
            if self.batches % self.opts.rehash_period as u64 == 0 {
                self.rounds += 1;
                let full = self.rounds % self.opts.rebuild_every as u64 == 0;
                let m = self.net.maintain(full)?;
                metrics.maintenance_rounds += 1;
                metrics.full_rebuilds += full as usize;
                metrics.rehashed += m.changed;
                debug!("maintenance round {}: {} of {} rehashed, full={}", self.rounds, m.changed, m.checked, full);
            }
            start += count;
        }
        self.wall += started.elapsed().as_secs_f64();

        metrics.wall_seconds = self.wall;
        metrics.samples = totals.count;
        if totals.count > 0 {
            let c = totals.count as f64;
            metrics.loss = totals.loss / c;
            metrics.active_frac = totals.active as f64 / totals.outputs as f64;
            metrics.touched_frac = totals.touched as f64 / totals.weights as f64;
        }
        Ok(metrics)
    }

    fn run_batch<D: Examples + Sync>(
        &mut self,
        data: &D,
        start: usize,
        count: usize,
        totals: &mut Totals,
    ) -> Result<(), TrainError> {
        self.net.begin_step();
        let (net, opts, epoch) = (&self.net, self.opts, self.epoch as u64);
        let chunk = count.div_ceil(opts.threads);
        let ranges: Vec<(usize, usize)> = (0..opts.threads)
            .map(|t| {
                let a = (start + t * chunk).min(start + count);
                (a, (a + chunk).min(start + count))
            })
            .filter(|(a, b)| a < b)
            .collect();

        let outs: Vec<Result<ChunkOut, TrainError>> = if ranges.len() == 1 {
            vec![run_chunk(net, data, ranges[0], epoch, opts, &mut self.workspaces[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = ranges
                    .iter()
                    .zip(self.workspaces.iter_mut())
                    .map(|(&r, ws)| s.spawn(move || run_chunk(net, data, r, epoch, opts, ws)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect()
            })
        };

        for out in outs {
            let out = out?;
            totals.merge(&out.totals);
            if opts.record_trace {
                self.trace.extend_from_slice(&out.trace);
            }
            for g in &out.grads {
                self.net.apply_gradients(g, &mut self.adam)?;
            }
        }
        Ok(())
    }
}

fn run_chunk<D: Examples>(
    net: &Network,
    data: &D,
    (a, b): (usize, usize),
    epoch: u64,
    opts: TrainOptions,
    ws: &mut Workspace,
) -> Result<ChunkOut, TrainError> {
    let mut out = ChunkOut::default();
    for i in a..b {
        let mut rng = rng::stream(opts.seed, &[epoch, i as u64]);
        let Some(stats) = net.compute_gradients(data.example(i), &mut rng, ws)? else {
            continue;
        };
        out.totals.add(&stats);
        if opts.record_trace {
            out.trace.push((stats.active as u32, stats.outputs as u32));
        }
        if opts.hogwild {
            net.apply_workspace(ws)?;
        } else {
            out.grads.push(std::mem::take(&mut ws.grads));
        }
    }
    Ok(out)
}

fn check_dims<D: Examples>(net: &Network, data: &D) -> Result<(), TrainError> {
    if data.input_dim() != net.input_dim() {
        return Err(TrainError::Dimension {
            what: "features",
            data: data.input_dim(),
            net: net.input_dim(),
        });
    }
    if data.label_dim() != net.output_dim() {
        return Err(TrainError::Dimension {
            what: "labels",
            data: data.label_dim(),
            net: net.output_dim(),
        });
    }
    Ok(())
}

/// Fraction of examples whose top-scoring output (over all outputs, FP32,
/// no sampling) is one of their labels.
pub fn evaluate_p_at_1<E: Examples + Sync>(
    net: &Network,
    data: &E,
    threads: usize,
) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyEval);
    }
    check_dims(net, data)?;
    let n = data.len();
    let threads = threads.clamp(1, n);
    let chunk = n.div_ceil(threads);
    let count = |a: usize, b: usize| -> Result<usize, TrainError> {
        let mut ws = Workspace::default();
        let mut hits = 0;
        for i in a..b {
            let ex = data.example(i);
            if ex.labels.contains(&net.predict(ex, &mut ws)?) {
                hits += 1;
            }
        }
        Ok(hits)
    };
    let hits: usize = if threads == 1 {
        count(0, n)?
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let (a, b) = ((t * chunk).min(n), ((t + 1) * chunk).min(n));
                    let count = &count;
                    s.spawn(move || count(a, b))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .sum::<Result<usize, TrainError>>()
        })?
    };
    Ok(hits as f64 / n as f64)
}
