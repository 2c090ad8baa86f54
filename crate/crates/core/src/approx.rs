//! Parking-availability approximation: discretized PA distributions,
//! spatial propagation from sensor lots, the temporal distribution head and
//! entropy-weighted fusion.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{Adjacency, Tape, Tensor, Var, DEFAULT_LOG_FLOOR};

pub const DEFAULT_BINS: usize = 50;

/// How a PA count maps onto the `p` bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Binning {
    /// bins span `[0, capacity]` of each lot
    #[default]
    CapacityRelative,
    /// bins span `[0, max capacity]` shared by the whole city
    Absolute,
}

impl std::str::FromStr for Binning {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capacity" | "capacity-relative" => Ok(Binning::CapacityRelative),
            "absolute" => Ok(Binning::Absolute),
            other => Err(Error::Config(format!("unknown binning `{other}`"))),
        }
    }
}

impl std::fmt::Display for Binning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Binning::CapacityRelative => "capacity",
            Binning::Absolute => "absolute",
        })
    }
}

/// Bin index `min(floor(p * pa / scale), p - 1)`, where `scale` is the
/// lot's capacity (or the city maximum for absolute binning).
pub fn pa_bin(pa: i64, capacity: u32, scale: u32, bins: usize) -> Result<usize> {
    if pa < 0 || pa > capacity as i64 {
        return Err(Error::PaOutsideCapacity { pa, capacity });
    }
    let raw = (bins as f64 * pa as f64 / scale as f64).floor() as usize;
    Ok(raw.min(bins - 1))
}

pub fn discretize_pa(pa: i64, capacity: u32, bins: usize) -> Result<Vec<f64>> {
    let bin = pa_bin(pa, capacity, capacity, bins)?;
    let mut v = vec![0.0; bins];
    v[bin] = 1.0;
    Ok(v)
}

/// `x^{sp}_i = Σ_j α_ij y_j` over each lot's labeled propagation neighbors,
/// with `α` the dot-product attention of `w_a` over `features`. `observed`
/// holds one-hot rows for labeled lots (other rows are ignored). A labeled
/// lot with no other labeled lot in reach gets the uniform distribution.
pub fn propconv(
    tape: &mut Tape,
    w_a: Var,
    features: Var,
    sources: &Arc<Adjacency>,
    observed: Var,
    labeled: &[bool],
) -> Result<Var> {
    let n = sources.rows();
    let bins = tape.value(observed).cols();
    let mut fallback: Option<Vec<f64>> = None;
    for i in 0..n {
        if sources.degree(i) == 0 {
            if !labeled[i] {
                return Err(Error::EmptyPropagationSet(i));
            }
            let f = fallback.get_or_insert_with(|| vec![0.0; n * bins]);
            f[i * bins..(i + 1) * bins].fill(1.0 / bins as f64);
        }
    }
    let alpha = crate::spatial::attention_proximity(tape, w_a, features, sources)?;
    let spread = tape.segment_aggregate(alpha, observed, sources.clone())?;
    match fallback {
        Some(f) => {
            let u = tape.constant(Tensor::matrix(n, bins, f)?);
            tape.add(spread, u)
        }
        None => Ok(spread),
    }
}

/// `softmax(h_prev W_tp)`, one distribution per lot.
pub fn temporal_pa_distribution(tape: &mut Tape, w_tp: Var, h_prev: Var) -> Result<Var> {
    let logits = tape.matmul(h_prev, w_tp)?;
    Ok(tape.row_softmax(logits))
}

/// Row entropies `-Σ x log x` as an N × 1 column.
pub fn entropy(tape: &mut Tape, dist: Var) -> Result<Var> {
    let logs = tape.log(dist, DEFAULT_LOG_FLOOR)?;
    let terms = tape.mul(dist, logs)?;
    let sums = tape.row_sum(terms);
    Ok(tape.scale(sums, -1.0))
}

/// `(e^{-H(sp)} sp + e^{-H(tp)} tp) / (e^{-H(sp)} + e^{-H(tp)})` per row.
pub fn fuse(tape: &mut Tape, sp: Var, tp: Var) -> Result<Var> {
    let h_sp = entropy(tape, sp)?;
    let h_tp = entropy(tape, tp)?;
    let neg_sp = tape.scale(h_sp, -1.0);
    let w_sp = tape.exp(neg_sp);
    let neg_tp = tape.scale(h_tp, -1.0);
    let w_tp = tape.exp(neg_tp);
    let a = tape.mul(sp, w_sp)?;
    let b = tape.mul(tp, w_tp)?;
    let num = tape.add(a, b)?;
    let z = tape.add(w_sp, w_tp)?;
    tape.div(num, z)
}

/// Entropy of a single distribution, same clamp convention as the tape op.
pub fn entropy_of(dist: &[f64]) -> f64 {
    -dist.iter().map(|&x| x * x.max(DEFAULT_LOG_FLOOR).ln()).sum::<f64>()
}

/// Fusion of two plain distributions; returns the fused vector and the two
/// weights `(e^{-H(sp)}, e^{-H(tp)})`.
pub fn fuse_distributions(sp: &[f64], tp: &[f64]) -> (Vec<f64>, f64, f64) {
    let ws = (-entropy_of(sp)).exp();
    let wt = (-entropy_of(tp)).exp();
    let z = ws + wt;
    let fused = sp.iter().zip(tp).map(|(a, b)| (ws * a + wt * b) / z).collect();
    (fused, ws, wt)
}
