use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient `(f(x+h) - f(x-h)) / 2h`, one coordinate at a time.
pub fn finite_difference<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite_difference", format!("step must be positive, got {h}")));
    }
    let mut x = params.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x)?;
        x[i] = orig - h;
        let down = f(&x)?;
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero pairs from
/// reporting huge ratios out of rounding noise.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| relative_error(x, y, floor)).fold(0.0, f64::max)
}

/// Ridders' extrapolated central difference of a scalar function of one
/// offset, `f(t) ≈ g(x + t)`. Starts at step `h0`, shrinks it by 1.4 per
/// round and extrapolates the tableau; returns the derivative and the
/// tableau's own error estimate.
pub fn ridders_derivative<F>(mut f: F, h0: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const SHRINK: f64 = 1.4;
    const ROUNDS: usize = 10;
    const SAFE: f64 = 2.0;
    if !(h0 > 0.0) {
        return Err(Error::invalid("ridders_derivative", format!("step must be positive, got {h0}")));
    }
    let mut central = |h: f64| -> Result<f64> {
        let (up, down) = (f(h)?, f(-h)?);
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at offset ±{h:e}")));
        }
        Ok((up - down) / (2.0 * h))
    };
    let mut table = vec![vec![0.0; ROUNDS]; ROUNDS];
    let mut h = h0;
    table[0][0] = central(h)?;
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..ROUNDS {
        h /= SHRINK;
        table[0][i] = central(h)?;
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok((best, err))
}
