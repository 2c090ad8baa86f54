use crate::error::{Error, Result};
use crate::graph::{BoundingBox, ParkingLot, RoadNetwork};
use crate::rng::Rng;

/// Parameters of a synthetic city.
#[derive(Clone, Debug, PartialEq)]
pub struct CitySpec {
    pub lots: usize,
    pub bbox: BoundingBox,
    pub grid_spacing_km: f64,
    pub capacity_min: u32,
    pub capacity_max: u32,
    /// Width of the per-step contextual feature vector.
    pub feature_width: usize,
    pub labeled_fraction: f64,
    /// Number of functional zones (business, residential, ...).
    pub zones: usize,
    pub centers_per_zone: usize,
    /// Spread of lots around their zone center (km).
    pub cluster_sd_km: f64,
    pub seed: u64,
}

/// Non-POI entries of a feature row: capacity, tod sin, tod cos, population.
pub const DYNAMIC_FEATURES: usize = 4;

impl Default for CitySpec {
    fn default() -> Self {
        CitySpec {
            lots: 200,
            bbox: BoundingBox { min_x: 0.0, min_y: 0.0, max_x: 6.0, max_y: 6.0 },
            grid_spacing_km: 0.25,
            capacity_min: 50,
            capacity_max: 400,
            feature_width: 16,
            labeled_fraction: 0.3,
            zones: 4,
            centers_per_zone: 3,
            cluster_sd_km: 0.5,
            seed: 0,
        }
    }
}

impl CitySpec {
    pub fn validate(&self) -> Result<()> {
        BoundingBox::new(self.bbox.min_x, self.bbox.min_y, self.bbox.max_x, self.bbox.max_y)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.lots < 2 {
            return bad("a city needs at least 2 lots");
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return bad("labeled fraction must be in (0, 1]");
        }
        if self.capacity_min == 0 || self.capacity_max < self.capacity_min {
            return bad("capacity range must satisfy 1 <= min <= max");
        }
        if self.feature_width <= DYNAMIC_FEATURES {
            return bad("feature width must exceed 4");
        }
        if self.zones == 0 || self.centers_per_zone == 0 {
            return bad("need at least one zone and one center per zone");
        }
        if !(self.grid_spacing_km > 0.0) || !(self.cluster_sd_km > 0.0) {
            return bad("grid spacing and cluster spread must be positive");
        }
        Ok(())
    }

    /// `floor(fraction * N)`, at least one.
    pub fn labeled_count(&self) -> usize {
        ((self.labeled_fraction * self.lots as f64 + 1e-9).floor() as usize).clamp(1, self.lots)
    }

    pub fn poi_categories(&self) -> usize {
        self.feature_width - DYNAMIC_FEATURES
    }
}

#[derive(Clone, Debug)]
pub struct City {
    pub spec: CitySpec,
    pub lots: Vec<ParkingLot>,
    /// Zone mixture per lot; rows sum to one.
    pub zone_weights: Vec<Vec<f64>>,
    /// Static POI-category mix per lot; rows sum to one.
    pub poi: Vec<Vec<f64>>,
    pub road: RoadNetwork,
}

impl City {
    pub fn lot_count(&self) -> usize {
        self.lots.len()
    }

    pub fn labeled_ids(&self) -> Vec<usize> {
        self.lots.iter().filter(|l| l.labeled).map(|l| l.id).collect()
    }

    pub fn unlabeled_ids(&self) -> Vec<usize> {
        self.lots.iter().filter(|l| !l.labeled).map(|l| l.id).collect()
    }

    pub fn labeled_mask(&self) -> Vec<bool> {
        self.lots.iter().map(|l| l.labeled).collect()
    }

    pub fn max_capacity(&self) -> u32 {
        self.lots.iter().map(|l| l.capacity).max().unwrap_or(1)
    }

    pub fn mean_capacity(&self) -> f64 {
        self.lots.iter().map(|l| l.capacity as f64).sum::<f64>() / self.lots.len() as f64
    }

    /// Same lots and geometry with a different sensor assignment.
    pub fn relabel(&self, labeled_fraction: f64, seed: u64) -> Result<City> {
        let mut spec = self.spec.clone();
        spec.labeled_fraction = labeled_fraction;
        spec.validate()?;
        let mut lots = self.lots.clone();
        assign_labels(&mut lots, spec.labeled_count(), seed);
        Ok(City { spec, lots, ..self.clone() })
    }
}

fn assign_labels(lots: &mut [ParkingLot], count: usize, seed: u64) {
    let mut order: Vec<usize> = (0..lots.len()).collect();
    Rng::derive(seed, 3).shuffle(&mut order);
    for lot in lots.iter_mut() {
        lot.labeled = false;
    }
    for &i in &order[..count] {
        lots[i].labeled = true;
    }
}

/// Places lots around zone centers, derives zone mixtures from proximity to
/// every center, then POI mixes from per-zone category profiles.
pub fn generate_city(spec: &CitySpec) -> Result<City> {
    spec.validate()?;
    let bbox = spec.bbox;
    let mut rng = Rng::derive(spec.seed, 1);

    let margin_x = 0.1 * bbox.width();
    let margin_y = 0.1 * bbox.height();
    let centers: Vec<Vec<(f64, f64)>> = (0..spec.zones)
        .map(|_| {
            (0..spec.centers_per_zone)
                .map(|_| {
                    (
                        rng.range(bbox.min_x + margin_x, bbox.max_x - margin_x),
                        rng.range(bbox.min_y + margin_y, bbox.max_y - margin_y),
                    )
                })
                .collect()
        })
        .collect();

    let mut lots = Vec::with_capacity(spec.lots);
    for id in 0..spec.lots {
        let zone = rng.below(spec.zones);
        let (cx, cy) = centers[zone][rng.below(spec.centers_per_zone)];
        let mut pos = (cx, cy);
        for _ in 0..32 {
            let x = cx + spec.cluster_sd_km * rng.normal();
            let y = cy + spec.cluster_sd_km * rng.normal();
            if bbox.contains(x, y) {
                pos = (x, y);
                break;
            }
        }
        let span = (spec.capacity_max - spec.capacity_min) as usize + 1;
        let capacity = spec.capacity_min + rng.below(span) as u32;
        lots.push(ParkingLot { id, x_km: pos.0, y_km: pos.1, capacity, labeled: false });
    }
    assign_labels(&mut lots, spec.labeled_count(), spec.seed);

    let reach = 1.4 * spec.cluster_sd_km;
    let zone_weights: Vec<Vec<f64>> = lots
        .iter()
        .map(|lot| {
            let raw: Vec<f64> = centers
                .iter()
                .map(|cs| {
                    0.02 + cs
                        .iter()
                        .map(|&(cx, cy)| {
                            let d2 = (lot.x_km - cx).powi(2) + (lot.y_km - cy).powi(2);
                            (-d2 / (2.0 * reach * reach)).exp()
                        })
                        .sum::<f64>()
                })
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect();

    let cats = spec.poi_categories();
    let profiles: Vec<Vec<f64>> = (0..spec.zones)
        .map(|_| {
            let raw: Vec<f64> = (0..cats).map(|_| (1.5 * rng.normal()).exp()).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / t).collect()
        })
        .collect();
    let poi: Vec<Vec<f64>> = zone_weights
        .iter()
        .map(|w| {
            let raw: Vec<f64> = (0..cats)
                .map(|c| {
                    let base: f64 = w.iter().zip(&profiles).map(|(wz, p)| wz * p[c]).sum();
                    base * (1.0 + 0.1 * rng.uniform())
                })
                .collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / t).collect()
        })
        .collect();

    let road = RoadNetwork::build(&lots, bbox, spec.grid_spacing_km)?;
    Ok(City { spec: spec.clone(), lots, zone_weights, poi, road })
}
