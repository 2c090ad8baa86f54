use std::ops::Range;
use std::sync::Arc;

use super::city::City;
use super::series::{Observations, STEPS_PER_DAY};
use crate::approx::{pa_bin, Binning};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Chronological split boundaries: `[0, a)`, `[a, b)`, `[b, len)` with
/// `a = floor(train * len)` and `b = floor((train + validation) * len)`.
pub fn split_ranges(len: usize, train: f64, validation: f64) -> Result<[Range<usize>; 3]> {
    if !(train > 0.0 && validation >= 0.0 && train + validation <= 1.0) {
        return Err(Error::Config(format!("bad split fractions {train}/{validation}")));
    }
    let a = (train * len as f64 + 1e-9).floor() as usize;
    let b = (((train + validation) * len as f64) + 1e-9).floor() as usize;
    Ok([0..a, a..b.min(len), b.min(len)..len])
}

/// Window starts inside one split: inputs `s..s+T`, targets `s+T..s+T+τ`,
/// stride one, never crossing the split end.
pub fn window_starts(range: Range<usize>, window: usize, horizon: usize) -> Vec<usize> {
    let span = window + horizon;
    if range.len() < span {
        return Vec::new();
    }
    (range.start..=range.end - span).collect()
}

/// Per-step model inputs shared by every window that covers the step.
#[derive(Clone, Debug)]
pub struct StepInputs {
    /// N × M contextual features.
    pub features: Arc<Tensor>,
    /// N × p: one-hot observed PA for labeled lots, zero rows otherwise.
    pub observed: Arc<Tensor>,
}

/// One training/evaluation sample.
#[derive(Clone, Debug)]
pub struct WindowSample {
    pub start: usize,
    /// T entries of N × M features.
    pub features: Vec<Arc<Tensor>>,
    /// T entries of N × p observed one-hots (labeled rows only non-zero).
    pub observed: Vec<Arc<Tensor>>,
    /// T × |P_l| observed counts, labeled lots in id order.
    pub observed_pa: Vec<Vec<u32>>,
    /// τ × N true counts for every lot.
    pub targets: Vec<Vec<u32>>,
    /// Lots whose targets may enter the loss.
    pub target_mask: Vec<bool>,
}

impl WindowSample {
    pub fn window(&self) -> usize {
        self.features.len()
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }
}

/// Per-step tensors for a whole series plus the split bookkeeping.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub window: usize,
    pub horizon: usize,
    pub bins: usize,
    pub capacities: Vec<u32>,
    pub labeled: Vec<bool>,
    pub labeled_ids: Vec<usize>,
    pub steps: Vec<StepInputs>,
    pub pa: Arc<Vec<Vec<u32>>>,
    pub splits: [Range<usize>; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Feature row: POI mix ⊕ capacity / max capacity ⊕ (sin, cos) of time of
/// day ⊕ population signal.
pub fn feature_row(city: &City, lot: usize, step: usize, population: f64) -> Vec<f64> {
    let phase = 2.0 * std::f64::consts::PI * (step % STEPS_PER_DAY) as f64 / STEPS_PER_DAY as f64;
    let mut row = city.poi[lot].clone();
    row.push(city.lots[lot].capacity as f64 / city.max_capacity() as f64);
    row.push(phase.sin());
    row.push(phase.cos());
    row.push(population);
    row
}

impl Dataset {
    pub fn new(
        city: &City,
        obs: &Observations,
        window: usize,
        horizon: usize,
        bins: usize,
        binning: Binning,
        fractions: (f64, f64),
    ) -> Result<Self> {
        if window == 0 || horizon == 0 || bins == 0 {
            return Err(Error::Config("T, tau and p must be positive".into()));
        }
        if obs.steps() < window + horizon {
            return Err(Error::SeriesTooShort { len: obs.steps(), window, horizon });
        }
        let n = city.lot_count();
        let m = city.spec.feature_width;
        let max_cap = city.max_capacity();
        let mut steps = Vec::with_capacity(obs.steps());
        for t in 0..obs.steps() {
            let mut feats = Vec::with_capacity(n * m);
            let mut onehot = vec![0.0; n * bins];
            for (i, lot) in city.lots.iter().enumerate() {
                let row = feature_row(city, i, t, obs.population[t][i]);
                if row.len() != m {
                    return Err(Error::Config(format!("lot {i} has {} features, expected {m}", row.len())));
                }
                feats.extend(row);
                if lot.labeled {
                    let scale = match binning {
                        Binning::CapacityRelative => lot.capacity,
                        Binning::Absolute => max_cap,
                    };
                    let b = pa_bin(obs.pa[t][i] as i64, lot.capacity, scale, bins)?;
                    onehot[i * bins + b] = 1.0;
                }
            }
            steps.push(StepInputs {
                features: Arc::new(Tensor::matrix(n, m, feats)?),
                observed: Arc::new(Tensor::matrix(n, bins, onehot)?),
            });
        }
        Ok(Dataset {
            window,
            horizon,
            bins,
            capacities: city.lots.iter().map(|l| l.capacity).collect(),
            labeled: city.labeled_mask(),
            labeled_ids: city.labeled_ids(),
            steps,
            pa: Arc::new(obs.pa.clone()),
            splits: split_ranges(obs.steps(), fractions.0, fractions.1)?,
        })
    }

    pub fn lot_count(&self) -> usize {
        self.capacities.len()
    }

    pub fn split_range(&self, split: Split) -> Range<usize> {
        self.splits[split.index()].clone()
    }

    pub fn starts(&self, split: Split) -> Vec<usize> {
        window_starts(self.split_range(split), self.window, self.horizon)
    }

    pub fn sample(&self, start: usize) -> WindowSample {
        let inputs = start..start + self.window;
        let outputs = start + self.window..start + self.window + self.horizon;
        WindowSample {
            start,
            features: inputs.clone().map(|t| self.steps[t].features.clone()).collect(),
            observed: inputs.clone().map(|t| self.steps[t].observed.clone()).collect(),
            observed_pa: inputs.map(|t| self.labeled_ids.iter().map(|&i| self.pa[t][i]).collect()).collect(),
            targets: outputs.map(|t| self.pa[t].clone()).collect(),
            target_mask: self.labeled.clone(),
        }
    }

    pub fn samples(&self, split: Split) -> Vec<WindowSample> {
        self.starts(split).into_iter().map(|s| self.sample(s)).collect()
    }
}

/// All windows of the three chronological splits.
pub struct WindowSets {
    pub dataset: Dataset,
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

pub fn make_windows(
    city: &City,
    obs: &Observations,
    window: usize,
    horizon: usize,
    bins: usize,
    fractions: (f64, f64),
) -> Result<WindowSets> {
    let dataset = Dataset::new(city, obs, window, horizon, bins, Binning::CapacityRelative, fractions)?;
    Ok(WindowSets {
        train: dataset.samples(Split::Train),
        validation: dataset.samples(Split::Validation),
        test: dataset.samples(Split::Test),
        dataset,
    })
}
