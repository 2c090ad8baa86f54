//! End-to-end glue: hyperparameters, dataset preparation and one training
//! run per variant.

use crate::approx::Binning;
use crate::data::{generate_city, generate_observations, City, CitySpec, Dataset, Observations, SeriesSpec, Split};
use crate::error::{Error, Result};
use crate::graph::BoundingBox;
use crate::graph::CityGraph;
use crate::kv::KeyValues;
use crate::model::{
    evaluate, latent_count, train, Evaluation, ModelConfig, ModelParams, TrainConfig, TrainReport, Variant,
};
use crate::numerics::AdamConfig;
use crate::spatial::LatentScaling;

/// Every model and training hyperparameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub window: usize,
    pub horizon: usize,
    pub epsilon_km: f64,
    pub k: usize,
    pub hidden: usize,
    pub bins: usize,
    pub latent_ratio: f64,
    pub beta: f64,
    pub ce_all_steps: bool,
    pub latent_scaling: LatentScaling,
    pub binning: Binning,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub windows_per_epoch: Option<usize>,
    pub validation_stride: usize,
    pub test_stride: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::Share,
            window: 12,
            horizon: 3,
            epsilon_km: 1.0,
            k: 10,
            hidden: 32,
            bins: 50,
            latent_ratio: 0.1,
            beta: 0.5,
            ce_all_steps: false,
            latent_scaling: LatentScaling::Normalized,
            binning: Binning::CapacityRelative,
            lr: 1e-3,
            epochs: 200,
            patience: 10,
            windows_per_epoch: None,
            validation_stride: 1,
            test_stride: 1,
            train_fraction: 0.6,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn model_config(&self, lots: usize, feature_width: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            lots,
            feature_width,
            hidden: self.hidden,
            bins: self.bins,
            latent: latent_count(lots, self.latent_ratio),
            window: self.window,
            horizon: self.horizon,
            cxt_layers: 2,
            beta: self.beta,
            ce_all_steps: self.ce_all_steps,
            latent_scaling: self.latent_scaling,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            windows_per_epoch: self.windows_per_epoch,
            validation_stride: self.validation_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_km > 0.0) || self.k == 0 {
            return Err(Error::Config("epsilon and k must be positive".into()));
        }
        if !(self.latent_ratio > 0.0) {
            return Err(Error::Config("latent ratio must be positive".into()));
        }
        if !(self.lr >= 0.0) || self.epochs == 0 {
            return Err(Error::Config("need lr >= 0 and at least one epoch".into()));
        }
        if self.validation_stride == 0 || self.test_stride == 0 {
            return Err(Error::Config("strides must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("run.variant", self.variant);
        kv.set("run.window", self.window);
        kv.set("run.horizon", self.horizon);
        kv.set("run.epsilon_km", self.epsilon_km);
        kv.set("run.k", self.k);
        kv.set("run.hidden", self.hidden);
        kv.set("run.bins", self.bins);
        kv.set("run.latent_ratio", self.latent_ratio);
        kv.set("run.beta", self.beta);
        kv.set("run.ce_all_steps", self.ce_all_steps);
        kv.set("run.latent_scaling", self.latent_scaling);
        kv.set("run.binning", self.binning);
        kv.set("run.lr", self.lr);
        kv.set("run.epochs", self.epochs);
        kv.set("run.patience", self.patience);
        kv.set("run.windows_per_epoch", self.windows_per_epoch.map_or_else(|| "all".to_string(), |w| w.to_string()));
        kv.set("run.validation_stride", self.validation_stride);
        kv.set("run.test_stride", self.test_stride);
        kv.set("run.train_fraction", self.train_fraction);
        kv.set("run.validation_fraction", self.validation_fraction);
        kv.set("run.seed", self.seed);
    }

    /// Overlays every `run.*` key present in `kv`; unknown `run.*` keys are
    /// rejected so typos surface.
    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        for key in kv.keys() {
            let Some(field) = key.strip_prefix("run.") else { continue };
            match field {
                "variant" => self.variant = kv.require(key)?,
                "window" => self.window = kv.require(key)?,
                "horizon" => self.horizon = kv.require(key)?,
                "epsilon_km" => self.epsilon_km = kv.require(key)?,
                "k" => self.k = kv.require(key)?,
                "hidden" => self.hidden = kv.require(key)?,
                "bins" => self.bins = kv.require(key)?,
                "latent_ratio" => self.latent_ratio = kv.require(key)?,
                "beta" => self.beta = kv.require(key)?,
                "ce_all_steps" => self.ce_all_steps = kv.require(key)?,
                "latent_scaling" => self.latent_scaling = kv.require(key)?,
                "binning" => self.binning = kv.require(key)?,
                "lr" => self.lr = kv.require(key)?,
                "epochs" => self.epochs = kv.require(key)?,
                "patience" => self.patience = kv.require(key)?,
                "windows_per_epoch" => {
                    self.windows_per_epoch = match kv.get_str(key) {
                        Some("all") | None => None,
                        Some(_) => Some(kv.require(key)?),
                    }
                }
                "validation_stride" => self.validation_stride = kv.require(key)?,
                "test_stride" => self.test_stride = kv.require(key)?,
                "train_fraction" => self.train_fraction = kv.require(key)?,
                "validation_fraction" => self.validation_fraction = kv.require(key)?,
                "seed" => self.seed = kv.require(key)?,
                other => return Err(Error::Config(format!("unknown key `run.{other}`"))),
            }
        }
        Ok(())
    }
}

/// A city with its graphs and windowed dataset.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub city: City,
    pub graph: CityGraph,
    pub dataset: Dataset,
}

pub fn prepare(city: &City, obs: &Observations, cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let graph = CityGraph::build(&city.lots, &city.road, cfg.epsilon_km, cfg.k)?;
    let dataset = Dataset::new(
        city,
        obs,
        cfg.window,
        cfg.horizon,
        cfg.bins,
        cfg.binning,
        (cfg.train_fraction, cfg.validation_fraction),
    )?;
    Ok(Prepared { city: city.clone(), graph, dataset })
}

/// Trained parameters, the training log and held-out test scores (absent
/// when the split fractions leave no test window).
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub params: ModelParams,
    pub report: TrainReport,
    pub test: Option<Evaluation>,
}

/// Initializes from `cfg.seed`, trains and scores the test split.
pub fn fit(prepared: &Prepared, cfg: &RunConfig) -> Result<RunOutcome> {
    let model_cfg = cfg.model_config(prepared.city.lot_count(), prepared.city.spec.feature_width);
    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    let report = train(&mut params, &prepared.dataset, &prepared.graph, &cfg.train_config())?;
    let test = if prepared.dataset.starts(Split::Test).is_empty() {
        None
    } else {
        Some(evaluate(&params, &prepared.dataset, &prepared.graph, Split::Test, cfg.test_stride)?)
    };
    Ok(RunOutcome { params, report, test })
}

/// The small city used by gradient checks: 6 lots, T = 4, d = 8, K = 2,
/// p = 8, three labeled lots.
pub fn toy_problem(seed: u64) -> Result<(Prepared, RunConfig)> {
    let spec = CitySpec {
        lots: 6,
        bbox: BoundingBox::square(1.5)?,
        grid_spacing_km: 0.25,
        capacity_min: 20,
        capacity_max: 60,
        feature_width: 8,
        labeled_fraction: 0.5,
        zones: 2,
        centers_per_zone: 1,
        cluster_sd_km: 0.3,
        seed,
    };
    let city = generate_city(&spec)?;
    let obs = generate_observations(&city, &SeriesSpec { steps: 40, seed, ..SeriesSpec::default() })?;
    let cfg = RunConfig {
        window: 4,
        horizon: 3,
        hidden: 8,
        bins: 8,
        latent_ratio: 1.0 / 3.0,
        k: 2,
        seed,
        ..RunConfig::default()
    };
    Ok((prepare(&city, &obs, &cfg)?, cfg))
}
