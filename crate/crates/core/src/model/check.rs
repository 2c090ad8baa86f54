use std::cell::Cell;

use super::forward::forward_window;
use super::loss::compute_losses;
use super::params::ModelParams;
use super::train::loss_and_gradients;
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::graph::CityGraph;
use crate::numerics::{relative_error, ridders_derivative, Tape};

/// Denominator floor for relative errors; gradients below it are compared
/// on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Initial step of the extrapolated differences. The objective mixes O(1)
/// squared errors with cross entropies of small probabilities, so no single
/// fixed step is both above rounding noise and below the curvature scale.
pub const CHECK_STEP: f64 = 1e-3;

/// Times the initial step is divided by ten while looking for a step whose
/// endpoints stay on the centre's side of every LeakyReLU kink and log floor.
const MAX_STEP_REDUCTIONS: usize = 4;

/// Worst reverse-mode vs finite-difference disagreement within one
/// parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// Coordinates that needed a smaller initial step to stay on one smooth
    /// piece of the objective.
    pub reduced_step: usize,
    /// Coordinates within reach of a kink at every tried step; not compared.
    pub at_kink: usize,
}

fn objective(params: &ModelParams, sample: &WindowSample, graph: &CityGraph, caps: &[u32]) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new();
    // Tracked binding keeps every op on the record, which the branch
    // signature needs.
    let bound = params.bind(&mut tape, true);
    let out = forward_window(&mut tape, params, &bound, sample, graph, params.config.variant)?;
    let cfg = &params.config;
    let losses = compute_losses(&mut tape, &out, sample, caps, cfg.beta, cfg.ce_all_steps)?;
    let value = tape.value(losses.total).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("objective during gradient check".into()));
    }
    Ok((value, tape.branch_signature()))
}

/// Compares the backward pass of the full objective `O` with extrapolated
/// central differences for every coordinate of every parameter. Differences
/// that would straddle a kink are retried from a smaller step.
pub fn gradient_check(
    params: &ModelParams,
    sample: &WindowSample,
    graph: &CityGraph,
    capacities: &[u32],
    step: f64,
) -> Result<Vec<GroupError>> {
    if !(step > 0.0) {
        return Err(Error::invalid("gradient_check", format!("step must be positive, got {step}")));
    }
    let (_, grads) = loss_and_gradients(params, sample, graph, capacities)?;
    let (_, centre) = objective(params, sample, graph, capacities)?;
    let mut groups: Vec<GroupError> = Vec::new();
    let mut probe = params.clone();
    for ((id, name, tensor), grad) in params.store.iter().zip(&grads) {
        let group = ModelParams::group_of(name).to_string();
        let pos = match groups.iter().position(|g| g.group == group) {
            Some(p) => p,
            None => {
                groups.push(GroupError { group, coordinates: 0, max_relative_error: 0.0, reduced_step: 0, at_kink: 0 });
                groups.len() - 1
            }
        };
        for k in 0..tensor.len() {
            let orig = tensor.data()[k];
            let mut h0 = step;
            let mut numeric = None;
            for attempt in 0..=MAX_STEP_REDUCTIONS {
                let crossed = Cell::new(false);
                let d = ridders_derivative(
                    |t| {
                        probe.store.get_mut(id).data_mut()[k] = orig + t;
                        let (v, sig) = objective(&probe, sample, graph, capacities)?;
                        if sig != centre {
                            crossed.set(true);
                        }
                        Ok(v)
                    },
                    h0,
                )?;
                if !crossed.get() {
                    numeric = Some((d.0, attempt > 0));
                    break;
                }
                h0 /= 10.0;
            }
            probe.store.get_mut(id).data_mut()[k] = orig;
            let g = &mut groups[pos];
            g.coordinates += 1;
            match numeric {
                Some((n, reduced)) => {
                    g.reduced_step += usize::from(reduced);
                    g.max_relative_error = g.max_relative_error.max(relative_error(grad.data()[k], n, GRADIENT_FLOOR));
                }
                None => g.at_kink += 1,
            }
        }
    }
    Ok(groups)
}
