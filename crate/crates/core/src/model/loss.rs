use super::forward::ForwardOutput;
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var, DEFAULT_LOG_FLOOR};

#[derive(Clone, Copy, Debug)]
pub struct Losses {
    pub o1: Var,
    pub o2: Option<Var>,
    pub o3: Option<Var>,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub o1: f64,
    pub o2: f64,
    pub o3: f64,
    pub total: f64,
}

impl Losses {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        LossValues {
            o1: tape.value(self.o1).item(),
            o2: get(self.o2),
            o3: get(self.o3),
            total: tape.value(self.total).item(),
        }
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self, tape: &Tape) -> Option<&'static str> {
        let v = self.values(tape);
        [("O1", v.o1), ("O2", v.o2), ("O3", v.o3), ("O", v.total)]
            .into_iter()
            .find(|(_, x)| !x.is_finite())
            .map(|(n, _)| n)
    }
}

/// `-(1/|P_l|) Σ_i y_i · log x_i` over labeled rows.
fn cross_entropy(tape: &mut Tape, dist: Var, onehot: &Tensor, rows: &[usize]) -> Result<Var> {
    let picked = tape.gather_rows(dist, rows)?;
    let logs = tape.log(picked, DEFAULT_LOG_FLOOR)?;
    let mut target = Vec::with_capacity(rows.len() * onehot.cols());
    for &r in rows {
        target.extend_from_slice(onehot.row(r));
    }
    let y = tape.constant(Tensor::matrix(rows.len(), onehot.cols(), target)?);
    let terms = tape.mul(logs, y)?;
    let s = tape.sum(terms);
    Ok(tape.scale(s, -1.0 / rows.len() as f64))
}

fn mean_of(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(tape.scale(acc, 1.0 / terms.len() as f64))
}

/// `O1` is the mean squared error of normalized predictions over labeled
/// lots and all horizons; `O2`/`O3` are the cross entropies between observed
/// one-hots and the spatial/temporal estimates at the last input step (or
/// averaged over all steps); `O = O1 + β (O2 + O3)`.
pub fn compute_losses(
    tape: &mut Tape,
    out: &ForwardOutput,
    sample: &WindowSample,
    capacities: &[u32],
    beta: f64,
    all_steps: bool,
) -> Result<Losses> {
    let rows: Vec<usize> = (0..sample.target_mask.len()).filter(|&i| sample.target_mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::invalid("compute_losses", "no labeled lot in sample"));
    }
    let horizon = sample.horizon();
    let mut target = Vec::with_capacity(rows.len() * horizon);
    for &i in &rows {
        for step in &sample.targets {
            target.push(step[i] as f64 / capacities[i] as f64);
        }
    }
    let pred = tape.gather_rows(out.predictions, &rows)?;
    let y = tape.constant(Tensor::matrix(rows.len(), horizon, target)?);
    let diff = tape.sub(pred, y)?;
    let sq = tape.mul(diff, diff)?;
    let o1 = tape.mean(sq);

    if out.spatial_pa.is_empty() {
        return Ok(Losses { o1, o2: None, o3: None, total: o1 });
    }
    let last = out.spatial_pa.len() - 1;
    let steps: Vec<usize> = if all_steps { (0..=last).collect() } else { vec![last] };
    let mut o2_terms = Vec::with_capacity(steps.len());
    let mut o3_terms = Vec::with_capacity(steps.len());
    for &t in &steps {
        let onehot = sample.observed[t].as_ref();
        o2_terms.push(cross_entropy(tape, out.spatial_pa[t], onehot, &rows)?);
        o3_terms.push(cross_entropy(tape, out.temporal_pa[t], onehot, &rows)?);
    }
    let o2 = mean_of(tape, &o2_terms)?;
    let o3 = mean_of(tape, &o3_terms)?;
    let ce = tape.add(o2, o3)?;
    let weighted = tape.scale(ce, beta);
    let total = tape.add(o1, weighted)?;
    Ok(Losses { o1, o2: Some(o2), o3: Some(o3), total })
}
