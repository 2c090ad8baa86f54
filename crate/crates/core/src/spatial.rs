//! Contextual graph convolution and soft-clustering graph convolution.
//!
//! Features are row-per-lot matrices and weights multiply on the right, so a
//! layer mapping width `a` to width `b` holds an `a × b` matrix.

use std::sync::Arc;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Adjacency, Tape, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;

/// One CxtConv layer: dot-product attention through `w_a`, transform `w_c`.
#[derive(Clone, Copy, Debug)]
pub struct CxtConvLayer {
    pub w_a: Var,
    pub w_c: Var,
}

/// How the pooled latent graph is scaled before convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LatentScaling {
    /// `X^s = Sᵀ X`, `α^s = Sᵀ A S` as sums. Entries grow with cluster size
    /// and degree, which saturates the GRU on cities of a few hundred lots.
    Raw,
    /// Cluster means `diag(Sᵀ1)⁻¹ Sᵀ X` and row-normalized `α^s`.
    #[default]
    Normalized,
}

impl FromStr for LatentScaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(LatentScaling::Raw),
            "normalized" => Ok(LatentScaling::Normalized),
            other => Err(Error::Config(format!("unknown latent scaling `{other}`"))),
        }
    }
}

impl fmt::Display for LatentScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatentScaling::Raw => "raw",
            LatentScaling::Normalized => "normalized",
        })
    }
}

/// Soft assignment `w_s` (d_in × K) and latent transform `w_l` (d_in × d).
#[derive(Clone, Copy, Debug)]
pub struct SCConvBlock {
    pub w_s: Var,
    pub w_l: Var,
    pub scaling: LatentScaling,
}

/// Per-edge proximity: `c_ij = <x_i W_a, x_j W_a>`, softmax over each
/// neighborhood. Returns one weight per adjacency edge.
pub fn attention_proximity(tape: &mut Tape, w_a: Var, x: Var, adj: &Arc<Adjacency>) -> Result<Var> {
    let q = tape.matmul(x, w_a)?;
    let scores = tape.edge_dot(q, adj.clone())?;
    tape.segment_softmax(scores, adj.clone())
}

/// `x_i' = LeakyReLU(Σ_{j∈N_i} α_ij x_j W_c)`
pub fn cxtconv_layer(tape: &mut Tape, layer: &CxtConvLayer, x: Var, adj: &Arc<Adjacency>) -> Result<Var> {
    let alpha = attention_proximity(tape, layer.w_a, x, adj)?;
    let v = tape.matmul(x, layer.w_c)?;
    let agg = tape.segment_aggregate(alpha, v, adj.clone())?;
    tape.leaky_relu(agg, LEAKY_SLOPE)
}

/// Row-stochastic `S = softmax(X W_s)`, N × K.
pub fn soft_assignment(tape: &mut Tape, block: &SCConvBlock, x: Var) -> Result<Var> {
    let logits = tape.matmul(x, block.w_s)?;
    Ok(tape.row_softmax(logits))
}

/// Latent features `Sᵀ X` (K × d) and latent proximity `Sᵀ A S` (K × K),
/// with `A` the binary contextual adjacency.
pub fn latent_pool(tape: &mut Tape, s: Var, x: Var, adj: &Arc<Adjacency>) -> Result<(Var, Var)> {
    let st = tape.transpose(s)?;
    let xs = tape.matmul(st, x)?;
    let ones = tape.constant(Tensor::filled(&[adj.edge_count()], 1.0));
    let a_s = tape.segment_aggregate(ones, s, adj.clone())?;
    let alpha_s = tape.matmul(st, a_s)?;
    Ok((xs, alpha_s))
}

/// [`latent_pool`] rescaled: each latent feature row becomes the
/// assignment-weighted mean of its members and each `α^s` row sums to one.
pub fn latent_pool_normalized(tape: &mut Tape, s: Var, x: Var, adj: &Arc<Adjacency>) -> Result<(Var, Var)> {
    let (xs, alpha_s) = latent_pool(tape, s, x, adj)?;
    let n = tape.value(s).rows();
    let ones = tape.constant(Tensor::filled(&[n, 1], 1.0));
    let st = tape.transpose(s)?;
    let mass = tape.matmul(st, ones)?;
    let xs = tape.div(xs, mass)?;
    let row_mass = tape.row_sum(alpha_s);
    let alpha_s = tape.div(alpha_s, row_mass)?;
    Ok((xs, alpha_s))
}

/// `X^{s'} = LeakyReLU(α^s X^s W_l)` over the complete latent graph, then
/// unpooled back to lots as `S X^{s'}`.
pub fn scconv_unpool(tape: &mut Tape, block: &SCConvBlock, xs: Var, alpha_s: Var, s: Var) -> Result<Var> {
    let v = tape.matmul(xs, block.w_l)?;
    let mixed = tape.matmul(alpha_s, v)?;
    let latent = tape.leaky_relu(mixed, LEAKY_SLOPE)?;
    tape.matmul(s, latent)
}

/// Full SCConv block on lot features.
pub fn scconv(tape: &mut Tape, block: &SCConvBlock, x: Var, adj: &Arc<Adjacency>) -> Result<Var> {
    let s = soft_assignment(tape, block, x)?;
    let (xs, alpha_s) = match block.scaling {
        LatentScaling::Raw => latent_pool(tape, s, x, adj)?,
        LatentScaling::Normalized => latent_pool_normalized(tape, s, x, adj)?,
    };
    scconv_unpool(tape, block, xs, alpha_s, s)
}
