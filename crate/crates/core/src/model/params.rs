use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::spatial::{CxtConvLayer, LatentScaling, SCConvBlock};
use crate::temporal::GruParams;

/// Which modules take part in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// CxtConv + PropConv/temporal PA approximation + SCConv + GRU.
    Share,
    /// SHARE without the soft-clustering block.
    Cagnn,
    /// CxtConv + GRU only.
    CxtGnn,
    /// GRU on raw contextual features.
    GruOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Share, Variant::Cagnn, Variant::CxtGnn, Variant::GruOnly];

    pub fn uses_context(self) -> bool {
        !matches!(self, Variant::GruOnly)
    }

    pub fn uses_approximation(self) -> bool {
        matches!(self, Variant::Share | Variant::Cagnn)
    }

    pub fn uses_clustering(self) -> bool {
        matches!(self, Variant::Share)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Share => "share",
            Variant::Cagnn => "cagnn",
            Variant::CxtGnn => "cxtgnn",
            Variant::GruOnly => "gru",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "share" => Ok(Variant::Share),
            "cagnn" => Ok(Variant::Cagnn),
            "cxtgnn" => Ok(Variant::CxtGnn),
            "gru" | "gru-only" | "gruonly" => Ok(Variant::GruOnly),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub lots: usize,
    /// Contextual feature width M.
    pub feature_width: usize,
    /// Width of x^c, x^sc, the attention projections and the GRU state.
    pub hidden: usize,
    /// PA distribution bins p.
    pub bins: usize,
    /// Latent cluster count K.
    pub latent: usize,
    pub window: usize,
    pub horizon: usize,
    pub cxt_layers: usize,
    pub beta: f64,
    /// Average the cross-entropy terms over every window step instead of
    /// only the last one.
    pub ce_all_steps: bool,
    pub latent_scaling: LatentScaling,
}

/// `round(ratio * N)`, at least one.
pub fn latent_count(lots: usize, ratio: f64) -> usize {
    ((ratio * lots as f64).round() as usize).max(1)
}

impl ModelConfig {
    pub fn new(variant: Variant, lots: usize, feature_width: usize) -> Self {
        ModelConfig {
            variant,
            lots,
            feature_width,
            hidden: 32,
            bins: 50,
            latent: latent_count(lots, 0.1),
            window: 12,
            horizon: 3,
            cxt_layers: 2,
            beta: 0.5,
            ce_all_steps: false,
            latent_scaling: LatentScaling::Normalized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lots", self.lots),
            ("feature width", self.feature_width),
            ("hidden width", self.hidden),
            ("bins", self.bins),
            ("latent count", self.latent),
            ("T", self.window),
            ("tau", self.horizon),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.variant.uses_context() && self.cxt_layers == 0 {
            return Err(Error::Config("need at least one CxtConv layer".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        Ok(())
    }

    /// Width of the representation the GRU consumes each step.
    pub fn gru_input_width(&self) -> usize {
        match self.variant {
            Variant::Share => 2 * self.hidden + self.bins,
            Variant::Cagnn => self.hidden + self.bins,
            Variant::CxtGnn => self.hidden,
            Variant::GruOnly => self.feature_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ParamIds {
    cxt: Vec<(ParamId, ParamId)>,
    prop_w_a: Option<ParamId>,
    sc: Option<(ParamId, ParamId)>,
    gru: [ParamId; 6],
    w_o: ParamId,
    w_tp: Option<ParamId>,
}

/// Every learnable tensor of one model, registered once in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    ids: ParamIds,
}

/// Parameters placed on a tape for one forward pass.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub cxt: Vec<CxtConvLayer>,
    pub prop_w_a: Option<Var>,
    pub sc: Option<SCConvBlock>,
    pub gru: GruParams,
    pub w_o: Var,
    pub w_tp: Option<Var>,
    /// One entry per store parameter, in registration order.
    pub vars: Vec<Var>,
}

fn xavier(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.range(-a, a)).collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

impl ModelParams {
    /// Xavier-uniform matrices, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derive(seed, 100);
        let mut store = ParamStore::new();
        let (m, d, p, k) = (config.feature_width, config.hidden, config.bins, config.latent);
        let v = config.variant;

        let mut cxt = Vec::new();
        if v.uses_context() {
            for layer in 0..config.cxt_layers {
                let d_in = if layer == 0 { m } else { d };
                let w_a = store.register(format!("cxt{layer}.w_a"), xavier(&mut rng, d_in, d))?;
                let w_c = store.register(format!("cxt{layer}.w_c"), xavier(&mut rng, d_in, d))?;
                cxt.push((w_a, w_c));
            }
        }
        let prop_w_a =
            if v.uses_approximation() { Some(store.register("prop.w_a", xavier(&mut rng, m, d))?) } else { None };
        let sc = if v.uses_clustering() {
            let w_s = store.register("sc.w_s", xavier(&mut rng, d + p, k))?;
            let w_l = store.register("sc.w_l", xavier(&mut rng, d + p, d))?;
            Some((w_s, w_l))
        } else {
            None
        };
        let gin = config.gru_input_width() + d;
        let gru = [
            store.register("gru.w_r", xavier(&mut rng, gin, d))?,
            store.register("gru.w_z", xavier(&mut rng, gin, d))?,
            store.register("gru.w_h", xavier(&mut rng, gin, d))?,
            store.register("gru.b_r", Tensor::zeros(&[d]))?,
            store.register("gru.b_z", Tensor::zeros(&[d]))?,
            store.register("gru.b_h", Tensor::zeros(&[d]))?,
        ];
        let w_o = store.register("head.w_o", xavier(&mut rng, d, config.horizon))?;
        let w_tp = if v.uses_approximation() { Some(store.register("tp.w_tp", xavier(&mut rng, d, p))?) } else { None };
        Ok(ModelParams { config, store, ids: ParamIds { cxt, prop_w_a, sc, gru, w_o, w_tp } })
    }

    /// Rebuilds the parameter layout for `config` and fills it from `store`,
    /// checking names and shapes.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        let mut params = Self::init(config, 0)?;
        if params.store.len() != store.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                params.store.len(),
                store.len()
            )));
        }
        for ((_, name, expected), (_, got_name, got)) in params.store.iter().zip(store.iter()) {
            if name != got_name || expected.shape() != got.shape() {
                return Err(Error::Config(format!(
                    "parameter `{got_name}` {:?} does not match `{name}` {:?}",
                    got.shape(),
                    expected.shape()
                )));
            }
        }
        params.store = store;
        Ok(params)
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundModel {
        let vars: Vec<Var> = self.store.iter().map(|(_, _, t)| tape.leaf(t.clone(), requires_grad)).collect();
        let at = |id: ParamId| vars[id.index()];
        let ids = &self.ids;
        BoundModel {
            cxt: ids.cxt.iter().map(|&(a, c)| CxtConvLayer { w_a: at(a), w_c: at(c) }).collect(),
            prop_w_a: ids.prop_w_a.map(at),
            sc: ids.sc.map(|(s, l)| SCConvBlock { w_s: at(s), w_l: at(l), scaling: self.config.latent_scaling }),
            gru: GruParams {
                w_r: at(ids.gru[0]),
                w_z: at(ids.gru[1]),
                w_h: at(ids.gru[2]),
                b_r: at(ids.gru[3]),
                b_z: at(ids.gru[4]),
                b_h: at(ids.gru[5]),
            },
            w_o: at(ids.w_o),
            w_tp: ids.w_tp.map(at),
            vars,
        }
    }

    /// Parameter group of a registered name: `cxt`, `sc`, `prop`, `gru`,
    /// `head` or `tp`.
    pub fn group_of(name: &str) -> &str {
        name.split('.').next().unwrap_or(name).trim_end_matches(char::is_numeric)
    }
}
