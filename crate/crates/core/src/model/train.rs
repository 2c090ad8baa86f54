use std::fmt::Write as _;

use super::eval::{evaluate, Evaluation};
use super::forward::forward_window;
use super::loss::{compute_losses, LossValues};
use super::params::ModelParams;
use crate::data::{Dataset, Split, WindowSample};
use crate::error::{Error, Result};
use crate::graph::CityGraph;
use crate::numerics::{Adam, AdamConfig, Tape, Tensor};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Epochs without validation O1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Train on a seeded random subset of this many windows per epoch.
    pub windows_per_epoch: Option<usize>,
    /// Score every n-th validation window.
    pub validation_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            max_epochs: 200,
            patience: 10,
            seed: 0,
            windows_per_epoch: None,
            validation_stride: 1,
        }
    }
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: &'static str,
    /// 1-based horizon; `None` for whole-window loss rows.
    pub horizon: Option<usize>,
    pub lot_class: &'static str,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub losses: Option<LossValues>,
}

pub const METRICS_HEADER: &str = "epoch,split,horizon,lot_class,mae,rmse,o1,o2,o3";

impl MetricRecord {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let horizon = self.horizon.map_or_else(|| "all".to_string(), |h| h.to_string());
        let (o1, o2, o3) = match self.losses {
            Some(l) => (Some(l.o1), Some(l.o2), Some(l.o3)),
            None => (None, None, None),
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            horizon,
            self.lot_class,
            opt(self.mae),
            opt(self.rmse),
            opt(o1),
            opt(o2),
            opt(o3)
        )
    }
}

pub fn render_metrics(records: &[MetricRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{}", r.to_csv());
    }
    s
}

/// Rows for one evaluation: a loss row, then per-horizon MAE/RMSE for
/// labeled and unlabeled lots.
pub fn evaluation_records(epoch: usize, split: &'static str, eval: &Evaluation) -> Vec<MetricRecord> {
    let mut out = vec![MetricRecord {
        epoch,
        split,
        horizon: None,
        lot_class: "labeled",
        mae: None,
        rmse: None,
        losses: Some(eval.losses),
    }];
    for h in 0..eval.horizon() {
        for (class, stats) in [("labeled", &eval.labeled[h]), ("unlabeled", &eval.unlabeled[h])] {
            if stats.count == 0 {
                continue;
            }
            out.push(MetricRecord {
                epoch,
                split,
                horizon: Some(h + 1),
                lot_class: class,
                mae: Some(stats.mae()),
                rmse: Some(stats.rmse()),
                losses: None,
            });
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub records: Vec<MetricRecord>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_o1: f64,
}

/// Objective values and one gradient per registered parameter.
pub fn loss_and_gradients(
    params: &ModelParams,
    sample: &WindowSample,
    graph: &CityGraph,
    capacities: &[u32],
) -> Result<(LossValues, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let out = forward_window(&mut tape, params, &bound, sample, graph, params.config.variant)?;
    let cfg = &params.config;
    let losses = compute_losses(&mut tape, &out, sample, capacities, cfg.beta, cfg.ce_all_steps)?;
    if let Some(term) = losses.non_finite_term(&tape) {
        return Err(Error::NonFinite(format!("loss term {term} at window starting {}", sample.start)));
    }
    tape.backward(losses.total)?;
    let grads = bound
        .vars
        .iter()
        .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
        .collect();
    Ok((losses.values(&tape), grads))
}

/// Full-graph training: each window is one Adam step on `O`. Keeps the
/// parameters with the best validation O1 and stops after `patience` epochs
/// without improvement.
pub fn train(params: &mut ModelParams, dataset: &Dataset, graph: &CityGraph, cfg: &TrainConfig) -> Result<TrainReport> {
    let starts = dataset.starts(Split::Train);
    if starts.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    let has_validation = !dataset.starts(Split::Validation).is_empty();
    let mut optimizer = Adam::new(cfg.adam, &params.store)?;
    let mut records = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.store.clone());
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order = starts.clone();
        Rng::derive(cfg.seed, 1000 + epoch as u64).shuffle(&mut order);
        if let Some(limit) = cfg.windows_per_epoch {
            order.truncate(limit.max(1));
        }
        let mut sum = LossValues::default();
        for &start in &order {
            let sample = dataset.sample(start);
            let (loss, grads) = loss_and_gradients(params, &sample, graph, &dataset.capacities)?;
            optimizer.step(&mut params.store, &grads)?;
            sum.o1 += loss.o1;
            sum.o2 += loss.o2;
            sum.o3 += loss.o3;
            sum.total += loss.total;
        }
        let w = order.len() as f64;
        let mean = LossValues { o1: sum.o1 / w, o2: sum.o2 / w, o3: sum.o3 / w, total: sum.total / w };
        records.push(MetricRecord {
            epoch,
            split: "train",
            horizon: None,
            lot_class: "labeled",
            mae: None,
            rmse: None,
            losses: Some(mean),
        });

        let score = if has_validation {
            let eval = evaluate(params, dataset, graph, Split::Validation, cfg.validation_stride)?;
            records.extend(evaluation_records(epoch, "validation", &eval));
            eval.losses.o1
        } else {
            mean.o1
        };
        if score < best.0 {
            best = (score, epoch, params.store.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (best_validation_o1, best_epoch, store) = best;
    params.store = store;
    Ok(TrainReport { records, epochs_run, best_epoch, best_validation_o1 })
}
