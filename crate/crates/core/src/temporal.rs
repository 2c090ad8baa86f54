//! Shared GRU over all lots and the multi-horizon prediction head.

use crate::error::Result;
use crate::numerics::{Tape, Var};

/// Gate matrices act on `[h ⊕ x]` and are `(|h| + |x|) × |h|`.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub w_r: Var,
    pub w_z: Var,
    pub w_h: Var,
    pub b_r: Var,
    pub b_z: Var,
    pub b_h: Var,
}

/// One step for every lot at once: rows of `h_prev` and `x` are lots.
pub fn gru_cell(tape: &mut Tape, p: &GruParams, h_prev: Var, x: Var) -> Result<Var> {
    let hx = tape.concat(&[h_prev, x])?;
    let r_pre = tape.matmul(hx, p.w_r)?;
    let r_pre = tape.add(r_pre, p.b_r)?;
    let r = tape.sigmoid(r_pre);
    let z_pre = tape.matmul(hx, p.w_z)?;
    let z_pre = tape.add(z_pre, p.b_z)?;
    let z = tape.sigmoid(z_pre);
    let rh = tape.mul(r, h_prev)?;
    let rhx = tape.concat(&[rh, x])?;
    let c_pre = tape.matmul(rhx, p.w_h)?;
    let c_pre = tape.add(c_pre, p.b_h)?;
    let candidate = tape.tanh(c_pre);
    // (1 - z) ∘ h + z ∘ h̃
    let keep = tape.affine(z, -1.0, 1.0);
    let kept = tape.mul(keep, h_prev)?;
    let fresh = tape.mul(z, candidate)?;
    tape.add(kept, fresh)
}

/// `σ(h W_o)`: normalized predictions for all horizons, one row per lot.
pub fn predict_head(tape: &mut Tape, w_o: Var, h: Var) -> Result<Var> {
    let logits = tape.matmul(h, w_o)?;
    Ok(tape.sigmoid(logits))
}
