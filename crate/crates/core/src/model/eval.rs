use super::forward::forward_window;
use super::loss::{compute_losses, LossValues};
use super::params::ModelParams;
use crate::data::{Dataset, Split, WindowSample};
use crate::error::{Error, Result};
use crate::graph::CityGraph;
use crate::numerics::Tape;

/// Running absolute/squared error sums; merging is order-independent up to
/// floating-point association.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorStats {
    pub abs_sum: f64,
    pub sq_sum: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn push(&mut self, predicted: f64, truth: f64) {
        let e = predicted - truth;
        self.abs_sum += e.abs();
        self.sq_sum += e * e;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &ErrorStats) {
        self.abs_sum += other.abs_sum;
        self.sq_sum += other.sq_sum;
        self.count += other.count;
    }

    pub fn mae(&self) -> f64 {
        self.abs_sum / self.count as f64
    }

    pub fn rmse(&self) -> f64 {
        (self.sq_sum / self.count as f64).sqrt()
    }
}

/// `(MAE, RMSE)` of paired values.
pub fn mae_rmse(predicted: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid("mae_rmse", "need equally many, non-zero pairs"));
    }
    let mut s = ErrorStats::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        s.push(p, t);
    }
    Ok((s.mae(), s.rmse()))
}

/// Per-horizon error statistics split by lot class.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub labeled: Vec<ErrorStats>,
    pub unlabeled: Vec<ErrorStats>,
    pub all: Vec<ErrorStats>,
    /// Mean training objectives over the evaluated windows.
    pub losses: LossValues,
    pub windows: usize,
}

impl Evaluation {
    pub fn horizon(&self) -> usize {
        self.all.len()
    }

    pub fn overall(stats: &[ErrorStats]) -> ErrorStats {
        let mut total = ErrorStats::default();
        for s in stats {
            total.merge(s);
        }
        total
    }
}

/// Normalized forward pass plus losses with frozen parameters.
pub fn infer(
    params: &ModelParams,
    sample: &WindowSample,
    graph: &CityGraph,
    capacities: &[u32],
) -> Result<(Vec<Vec<f64>>, LossValues)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward_window(&mut tape, params, &bound, sample, graph, params.config.variant)?;
    let losses = compute_losses(&mut tape, &out, sample, capacities, params.config.beta, params.config.ce_all_steps)?;
    let pred = tape.value(out.predictions);
    let rows = (0..pred.rows()).map(|i| pred.row(i).to_vec()).collect();
    Ok((rows, losses.values(&tape)))
}

/// Absolute PA forecasts, `[lot][horizon]`, scaled back by capacity.
pub fn predict_window(
    params: &ModelParams,
    sample: &WindowSample,
    graph: &CityGraph,
    capacities: &[u32],
) -> Result<Vec<Vec<f64>>> {
    let (norm, _) = infer(params, sample, graph, capacities)?;
    Ok(norm.into_iter().zip(capacities).map(|(row, &cap)| row.into_iter().map(|v| v * cap as f64).collect()).collect())
}

/// Scores every `stride`-th window of a split against the full truth of all
/// lots.
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    graph: &CityGraph,
    split: Split,
    stride: usize,
) -> Result<Evaluation> {
    let starts: Vec<usize> = dataset.starts(split).into_iter().step_by(stride.max(1)).collect();
    if starts.is_empty() {
        return Err(Error::EmptySplit(split.name().to_string()));
    }
    let tau = dataset.horizon;
    let mut eval = Evaluation {
        labeled: vec![ErrorStats::default(); tau],
        unlabeled: vec![ErrorStats::default(); tau],
        all: vec![ErrorStats::default(); tau],
        losses: LossValues::default(),
        windows: starts.len(),
    };
    for &start in &starts {
        let sample = dataset.sample(start);
        let (norm, losses) = infer(params, &sample, graph, &dataset.capacities)?;
        for (i, row) in norm.iter().enumerate() {
            let cap = dataset.capacities[i] as f64;
            for (h, &v) in row.iter().enumerate() {
                let truth = sample.targets[h][i] as f64;
                let pred = v * cap;
                eval.all[h].push(pred, truth);
                if dataset.labeled[i] {
                    eval.labeled[h].push(pred, truth);
                } else {
                    eval.unlabeled[h].push(pred, truth);
                }
            }
        }
        eval.losses.o1 += losses.o1;
        eval.losses.o2 += losses.o2;
        eval.losses.o3 += losses.o3;
        eval.losses.total += losses.total;
    }
    let w = starts.len() as f64;
    eval.losses.o1 /= w;
    eval.losses.o2 /= w;
    eval.losses.o3 /= w;
    eval.losses.total /= w;
    Ok(eval)
}
