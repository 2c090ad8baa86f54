//! WebAssembly bindings behind `www/index.html`.
//!
//! The plain Rust API (`DemoCity::build`, `fuse_summary`, ...) is what the
//! tests exercise; the `#[wasm_bindgen]` wrappers only translate errors.

use wasm_bindgen::prelude::*;

use share_core::approx::{entropy_of, fuse_distributions, pa_bin, propconv};
use share_core::data::{
    feature_row, generate_city, generate_observations, City, CitySpec, Observations, SeriesSpec, STEPS_PER_DAY,
};
use share_core::graph::CityGraph;
use share_core::numerics::{Tape, Tensor};
use share_core::rng::Rng;
use share_core::{Error, Result};

/// PA bins of the propagated distributions.
pub const BINS: usize = 10;
/// Width of the attention projection used for propagation.
const ATTENTION_WIDTH: usize = 8;
const DAYS: usize = 2;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A generated city with its series and graphs.
#[wasm_bindgen]
pub struct DemoCity {
    city: City,
    obs: Observations,
    graph: CityGraph,
    /// Fixed random attention direction; the page scales it.
    w_a: Tensor,
}

impl DemoCity {
    pub fn build(lots: usize, labeled_fraction: f64, seed: u64) -> Result<Self> {
        let spec = CitySpec { lots, labeled_fraction, seed, ..CitySpec::default() };
        let city = generate_city(&spec)?;
        let obs =
            generate_observations(&city, &SeriesSpec { steps: DAYS * STEPS_PER_DAY, seed, ..SeriesSpec::default() })?;
        let graph = CityGraph::build(&city.lots, &city.road, 1.0, 10)?;
        let mut rng = Rng::derive(seed, 77);
        let m = spec.feature_width;
        let w_a = Tensor::matrix(m, ATTENTION_WIDTH, (0..m * ATTENTION_WIDTH).map(|_| rng.normal()).collect())?;
        Ok(DemoCity { city, obs, graph, w_a })
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step >= self.obs.steps() {
            return Err(Error::Config(format!("step {step} is past the last step {}", self.obs.steps() - 1)));
        }
        Ok(())
    }

    /// Expected availability ratio of each lot's PropConv distribution at
    /// `step`, with attention weights `sharpness * w_a`. Zero sharpness
    /// averages the labeled sources evenly.
    pub fn propagated_ratios(&self, step: usize, sharpness: f64) -> Result<Vec<f64>> {
        self.check_step(step)?;
        let n = self.city.lot_count();
        let m = self.city.spec.feature_width;
        let mut feats = Vec::with_capacity(n * m);
        let mut onehot = vec![0.0; n * BINS];
        for (i, lot) in self.city.lots.iter().enumerate() {
            feats.extend(feature_row(&self.city, i, step, self.obs.population[step][i]));
            if lot.labeled {
                let b = pa_bin(self.obs.pa[step][i] as i64, lot.capacity, lot.capacity, BINS)?;
                onehot[i * BINS + b] = 1.0;
            }
        }
        let mut tape = Tape::new();
        let features = tape.constant(Tensor::matrix(n, m, feats)?);
        let observed = tape.constant(Tensor::matrix(n, BINS, onehot)?);
        let w_a = tape.constant(self.w_a.map(|v| v * sharpness));
        let labeled = self.city.labeled_mask();
        let sp = propconv(&mut tape, w_a, features, &self.graph.prop_sources, observed, &labeled)?;
        let dist = tape.value(sp);
        Ok((0..n)
            .map(|i| dist.row(i).iter().enumerate().map(|(b, p)| p * (b as f64 + 0.5) / BINS as f64).sum())
            .collect())
    }
}

#[wasm_bindgen]
impl DemoCity {
    #[wasm_bindgen(constructor)]
    pub fn new(lots: usize, labeled_fraction: f64, seed: u32) -> std::result::Result<DemoCity, JsError> {
        DemoCity::build(lots, labeled_fraction, seed as u64).map_err(js)
    }

    pub fn lot_count(&self) -> usize {
        self.city.lot_count()
    }

    pub fn steps(&self) -> usize {
        self.obs.steps()
    }

    pub fn steps_per_day(&self) -> usize {
        STEPS_PER_DAY
    }

    /// `[min_x, min_y, max_x, max_y]` in km.
    pub fn bounds(&self) -> Vec<f64> {
        let b = &self.city.spec.bbox;
        vec![b.min_x, b.min_y, b.max_x, b.max_y]
    }

    /// Interleaved `x, y` per lot in km.
    pub fn positions(&self) -> Vec<f64> {
        self.city.lots.iter().flat_map(|l| [l.x_km, l.y_km]).collect()
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.city.lots.iter().map(|l| l.capacity).collect()
    }

    /// 1 for lots with a real-time sensor.
    pub fn labeled(&self) -> Vec<u8> {
        self.city.lots.iter().map(|l| u8::from(l.labeled)).collect()
    }

    /// Flattened `(i, j)` pairs with `i < j`, one per contextual edge.
    pub fn context_edges(&self) -> Vec<u32> {
        let adj = &self.graph.context;
        (0..adj.rows())
            .flat_map(|i| adj.neighbors(i).iter().filter(move |&&j| j > i).flat_map(move |&j| [i as u32, j as u32]))
            .collect()
    }

    /// Observed availability ratio `PA / capacity` of every lot.
    pub fn availability(&self, step: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.check_step(step).map_err(js)?;
        Ok(self.city.lots.iter().zip(&self.obs.pa[step]).map(|(l, &pa)| pa as f64 / l.capacity as f64).collect())
    }

    pub fn propagated(&self, step: usize, sharpness: f64) -> std::result::Result<Vec<f64>, JsError> {
        self.propagated_ratios(step, sharpness).map_err(js)
    }
}

/// Normalizes two nonnegative weight vectors and fuses them. Returns the
/// fused distribution followed by `[w_sp, w_tp, H_sp, H_tp]`, where the
/// weights are the normalized `exp(-H)` shares.
pub fn fuse_summary(sp: &[f64], tp: &[f64]) -> Result<Vec<f64>> {
    if sp.len() != tp.len() || sp.is_empty() {
        return Err(Error::Config("both distributions need the same positive length".into()));
    }
    let normalize = |v: &[f64]| -> Result<Vec<f64>> {
        let total: f64 = v.iter().sum();
        if v.iter().any(|&x| !(x >= 0.0)) || !(total > 0.0) {
            return Err(Error::Config("weights must be nonnegative with a positive sum".into()));
        }
        Ok(v.iter().map(|x| x / total).collect())
    };
    let (sp, tp) = (normalize(sp)?, normalize(tp)?);
    let (mut fused, e_sp, e_tp) = fuse_distributions(&sp, &tp);
    let z = e_sp + e_tp;
    fused.extend([e_sp / z, e_tp / z, entropy_of(&sp), entropy_of(&tp)]);
    Ok(fused)
}

#[wasm_bindgen]
pub fn fuse(sp: Vec<f64>, tp: Vec<f64>) -> std::result::Result<Vec<f64>, JsError> {
    fuse_summary(&sp, &tp).map_err(js)
}
