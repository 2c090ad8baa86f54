use super::params::{BoundModel, ModelConfig, ModelParams, Variant};
use crate::approx::{fuse, propconv, temporal_pa_distribution};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::graph::CityGraph;
use crate::numerics::{Tape, Tensor, Var};
use crate::spatial::{cxtconv_layer, scconv};
use crate::temporal::{gru_cell, predict_head};

/// Tape handles produced by one window.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// N × τ normalized predictions in (0, 1).
    pub predictions: Var,
    /// Per input step, N × p spatial PA estimates (approximation variants).
    pub spatial_pa: Vec<Var>,
    /// Per input step, N × p temporal PA estimates (approximation variants).
    pub temporal_pa: Vec<Var>,
    /// Per input step, the N × p distributions fed downstream.
    pub fused_pa: Vec<Var>,
}

fn check_sample(cfg: &ModelConfig, sample: &WindowSample, graph: &CityGraph) -> Result<()> {
    let n = cfg.lots;
    let bad = |msg: String| Err(Error::invalid("forward_window", msg));
    if graph.lot_count() != n || sample.target_mask.len() != n {
        return bad(format!("model expects {n} lots, city has {}", graph.lot_count()));
    }
    if sample.window() != cfg.window || sample.horizon() != cfg.horizon {
        return bad(format!(
            "sample is T={} tau={}, model is T={} tau={}",
            sample.window(),
            sample.horizon(),
            cfg.window,
            cfg.horizon
        ));
    }
    for (x, y) in sample.features.iter().zip(&sample.observed) {
        if x.shape() != [n, cfg.feature_width] || y.shape() != [n, cfg.bins] {
            return bad(format!("step shapes {:?}/{:?} do not fit the model", x.shape(), y.shape()));
        }
    }
    Ok(())
}

/// Runs the recurrent window: per step CxtConv, PA approximation and fusion,
/// SCConv on `[x^c ⊕ x^p]`, then the GRU on `[x^c ⊕ x^sc ⊕ x^p]`; the last
/// hidden state feeds the prediction head. Labeled lots use their observed
/// one-hot in place of the fused estimate.
pub fn forward_window(
    tape: &mut Tape,
    params: &ModelParams,
    model: &BoundModel,
    sample: &WindowSample,
    graph: &CityGraph,
    variant: Variant,
) -> Result<ForwardOutput> {
    let cfg = &params.config;
    if cfg.variant != variant {
        return Err(Error::Config(format!("parameters belong to variant `{}`, asked to run `{variant}`", cfg.variant)));
    }
    check_sample(cfg, sample, graph)?;
    let n = cfg.lots;
    let labeled = &sample.target_mask;

    let unlabeled_col = variant.uses_approximation().then(|| {
        let col = labeled.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
        tape.constant(Tensor::matrix(n, 1, col).expect("n > 0"))
    });

    let mut h = tape.constant(Tensor::zeros(&[n, cfg.hidden]));
    let mut out =
        ForwardOutput { predictions: h, spatial_pa: Vec::new(), temporal_pa: Vec::new(), fused_pa: Vec::new() };
    for (features, observed) in sample.features.iter().zip(&sample.observed) {
        let x = tape.constant(features.as_ref().clone());
        let gru_in = if variant == Variant::GruOnly {
            x
        } else {
            let mut xc = x;
            for layer in &model.cxt {
                xc = cxtconv_layer(tape, layer, xc, &graph.context)?;
            }
            if variant.uses_approximation() {
                let obs = tape.constant(observed.as_ref().clone());
                let w_a = model.prop_w_a.expect("approximation variant binds prop.w_a");
                let w_tp = model.w_tp.expect("approximation variant binds tp.w_tp");
                let sp = propconv(tape, w_a, x, &graph.prop_sources, obs, labeled)?;
                let tp = temporal_pa_distribution(tape, w_tp, h)?;
                let fused = fuse(tape, sp, tp)?;
                let masked = tape.mul(fused, unlabeled_col.expect("set above"))?;
                let xp = tape.add(masked, obs)?;
                out.spatial_pa.push(sp);
                out.temporal_pa.push(tp);
                out.fused_pa.push(xp);
                if let Some(block) = &model.sc {
                    let cluster_in = tape.concat(&[xc, xp])?;
                    let xsc = scconv(tape, block, cluster_in, &graph.context)?;
                    tape.concat(&[xc, xsc, xp])?
                } else {
                    tape.concat(&[xc, xp])?
                }
            } else {
                xc
            }
        };
        h = gru_cell(tape, &model.gru, h, gru_in)?;
    }
    out.predictions = predict_head(tape, model.w_o, h)?;
    Ok(out)
}
