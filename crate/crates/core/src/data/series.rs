use super::city::City;
use crate::error::{Error, Result};
use crate::graph::build_context_graph;
use crate::rng::Rng;

pub const STEPS_PER_DAY: usize = 96;

/// Parameters of the synthetic PA dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSpec {
    /// Number of 15-minute steps.
    pub steps: usize,
    /// Scales every stochastic component; 0 gives purely periodic series.
    pub noise: f64,
    /// Weight of neighbor innovations in each lot's local noise.
    pub diffusion: f64,
    /// Radius (km) over which local noise diffuses.
    pub diffusion_radius_km: f64,
    /// AR(1) persistence of the per-lot local component.
    pub local_persistence: f64,
    /// AR(1) persistence of the zone-wide component.
    pub zone_persistence: f64,
    /// Standard deviation of the local occupancy component (at noise 1).
    pub local_sd: f64,
    /// Standard deviation of the zone-wide occupancy component (at noise 1).
    pub zone_sd: f64,
    /// Standard deviation of the population signal's own noise (at noise 1).
    pub population_sd: f64,
    pub seed: u64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        SeriesSpec {
            steps: 30 * STEPS_PER_DAY,
            noise: 1.0,
            diffusion: 1.0,
            diffusion_radius_km: 1.0,
            local_persistence: 0.95,
            zone_persistence: 0.97,
            local_sd: 0.12,
            zone_sd: 0.12,
            population_sd: 0.05,
            seed: 0,
        }
    }
}

impl SeriesSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if self.steps == 0 {
            return Err(Error::Config("series needs at least one step".into()));
        }
        if !(self.noise >= 0.0) || !(self.diffusion >= 0.0) {
            return Err(Error::Config("noise and diffusion must be non-negative".into()));
        }
        if !unit(self.local_persistence) || !unit(self.zone_persistence) {
            return Err(Error::Config("persistence must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Generated observations: integer PA and the population signal, both
/// indexed `[step][lot]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub pa: Vec<Vec<u32>>,
    pub population: Vec<Vec<f64>>,
}

impl Observations {
    pub fn steps(&self) -> usize {
        self.pa.len()
    }
}

fn circular_bump(hour: f64, center: f64, width: f64) -> f64 {
    let mut d = (hour - center).abs() % 24.0;
    if d > 12.0 {
        d = 24.0 - d;
    }
    (-d * d / (2.0 * width * width)).exp()
}

/// Expected occupancy in `[0, 1]` of a pure zone at a time of day (hours).
pub fn zone_profile(zone: usize, hour: f64) -> f64 {
    let shift = 1.5 * (zone / 4) as f64;
    let h = hour - shift;
    match zone % 4 {
        // business: full during office hours
        0 => 0.15 + 0.7 * circular_bump(h, 13.0, 3.5),
        // residential: full at night, empties during the day
        1 => 0.85 - 0.6 * circular_bump(h, 13.0, 4.5),
        // commercial: evening peak
        2 => 0.1 + 0.75 * circular_bump(h, 19.0, 2.5),
        // recreation: morning and late-evening peaks
        _ => 0.2 + 0.4 * circular_bump(h, 10.0, 2.0) + 0.35 * circular_bump(h, 21.5, 1.5),
    }
}

pub fn hour_of_step(step: usize) -> f64 {
    (step % STEPS_PER_DAY) as f64 * 24.0 / STEPS_PER_DAY as f64
}

/// Mixture occupancy of a lot with the given zone weights.
pub fn base_occupancy(weights: &[f64], step: usize) -> f64 {
    let hour = hour_of_step(step);
    weights.iter().enumerate().map(|(z, w)| w * zone_profile(z, hour)).sum()
}

/// Spatially diffused unit-variance innovations `u[step][lot]`:
/// `u_i = (η_i + s Σ_{j near i, j≠i} η_j) / sqrt(1 + s² deg_i)` with i.i.d.
/// standard normal `η`.
pub fn local_innovations(city: &City, spec: &SeriesSpec) -> Result<Vec<Vec<f64>>> {
    let n = city.lot_count();
    let near = build_context_graph(n, |i, j| city.road.distance(i, j), spec.diffusion_radius_km)?;
    let mut rng = Rng::derive(spec.seed, 11);
    let s = spec.diffusion;
    let others: Vec<Vec<usize>> =
        (0..n).map(|i| near.neighbors(i).iter().copied().filter(|&j| j != i).collect()).collect();
    let mut out = Vec::with_capacity(spec.steps);
    let mut eta = vec![0.0; n];
    for _ in 0..spec.steps {
        for e in eta.iter_mut() {
            *e = rng.normal();
        }
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let sum: f64 = others[i].iter().map(|&j| eta[j]).sum();
                (eta[i] + s * sum) / (1.0 + s * s * others[i].len() as f64).sqrt()
            })
            .collect();
        out.push(u);
    }
    Ok(out)
}

/// PA = round(capacity · (1 − occupancy)), with occupancy the zone-mixture
/// daily profile plus a zone-wide AR(1) factor (shared by distant lots of the
/// same zone) plus a spatially diffused per-lot AR(1) component.
pub fn generate_observations(city: &City, spec: &SeriesSpec) -> Result<Observations> {
    spec.validate()?;
    let n = city.lot_count();
    let zones = city.spec.zones;
    let innovations = local_innovations(city, spec)?;
    let mut zone_rng = Rng::derive(spec.seed, 12);
    let mut pop_rng = Rng::derive(spec.seed, 13);

    let rho_l = spec.local_persistence;
    let rho_z = spec.zone_persistence;
    let sd_l = spec.noise * spec.local_sd * (1.0 - rho_l * rho_l).sqrt();
    let sd_z = spec.noise * spec.zone_sd * (1.0 - rho_z * rho_z).sqrt();

    let mut local = vec![0.0; n];
    let mut zone = vec![0.0; zones];
    let mut pa = Vec::with_capacity(spec.steps);
    let mut population = Vec::with_capacity(spec.steps);
    for (step, u) in innovations.iter().enumerate() {
        for g in zone.iter_mut() {
            *g = rho_z * *g + sd_z * zone_rng.normal();
        }
        for (e, ui) in local.iter_mut().zip(u) {
            *e = rho_l * *e + sd_l * ui;
        }
        let mut pa_row = Vec::with_capacity(n);
        let mut pop_row = Vec::with_capacity(n);
        for (i, lot) in city.lots.iter().enumerate() {
            let w = &city.zone_weights[i];
            let base = base_occupancy(w, step);
            let shared: f64 = w.iter().zip(&zone).map(|(wz, g)| wz * g).sum();
            let occ = (base + shared + local[i]).clamp(0.0, 1.0);
            let cap = lot.capacity as f64;
            pa_row.push((cap * (1.0 - occ)).round().clamp(0.0, cap) as u32);
            pop_row.push(base + spec.noise * spec.population_sd * pop_rng.normal());
        }
        pa.push(pa_row);
        population.push(pop_row);
    }
    Ok(Observations { pa, population })
}
