//! Comma-separated city and series files plus the key-value data manifest.

use std::fs;
use std::path::Path;

use super::city::{City, CitySpec};
use super::series::{Observations, SeriesSpec};
use crate::error::{Error, Result};
use crate::graph::{BoundingBox, ParkingLot, RoadNetwork};
use crate::kv::KeyValues;

pub const CITY_FILE: &str = "city.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn csv_err(what: &str, e: csv::Error) -> Error {
    Error::parse(what, e.to_string())
}

pub fn write_city_csv(path: &Path, city: &City) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("city file", e))?;
    let mut header: Vec<String> = ["id", "x_km", "y_km", "capacity", "labeled"].map(String::from).to_vec();
    header.extend((0..city.spec.zones).map(|z| format!("zone_{z}")));
    header.extend((0..city.spec.poi_categories()).map(|c| format!("poi_{c}")));
    w.write_record(&header).map_err(|e| csv_err("city file", e))?;
    for (i, lot) in city.lots.iter().enumerate() {
        let mut rec = vec![
            lot.id.to_string(),
            lot.x_km.to_string(),
            lot.y_km.to_string(),
            lot.capacity.to_string(),
            u8::from(lot.labeled).to_string(),
        ];
        rec.extend(city.zone_weights[i].iter().map(f64::to_string));
        rec.extend(city.poi[i].iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_err("city file", e))?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, what: &str) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| Error::parse(what, format!("missing column {idx}")))?;
    raw.trim().parse().map_err(|_| Error::parse(what, format!("bad value `{raw}` in column {idx}")))
}

pub fn read_city_csv(path: &Path, spec: &CitySpec) -> Result<City> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err("city file", e))?;
    let header = r.headers().map_err(|e| csv_err("city file", e))?.clone();
    let zone_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("zone_")).collect();
    let poi_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("poi_")).collect();
    if zone_cols.len() != spec.zones || poi_cols.len() != spec.poi_categories() {
        return Err(Error::parse("city file", "zone/POI columns disagree with the manifest"));
    }
    let mut lots = Vec::new();
    let mut zone_weights = Vec::new();
    let mut poi = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err("city file", e))?;
        let id: usize = field(&rec, 0, "city file")?;
        if id != lots.len() {
            return Err(Error::parse("city file", format!("ids must be dense, found {id}")));
        }
        let labeled: u8 = field(&rec, 4, "city file")?;
        let capacity: u32 = field(&rec, 3, "city file")?;
        if capacity == 0 {
            return Err(Error::parse("city file", format!("lot {id} has zero capacity")));
        }
        lots.push(ParkingLot {
            id,
            x_km: field(&rec, 1, "city file")?,
            y_km: field(&rec, 2, "city file")?,
            capacity,
            labeled: labeled != 0,
        });
        zone_weights.push(zone_cols.iter().map(|&c| field(&rec, c, "city file")).collect::<Result<_>>()?);
        poi.push(poi_cols.iter().map(|&c| field(&rec, c, "city file")).collect::<Result<_>>()?);
    }
    if lots.len() != spec.lots {
        return Err(Error::parse("city file", format!("{} lots, manifest says {}", lots.len(), spec.lots)));
    }
    let road = RoadNetwork::build(&lots, spec.bbox, spec.grid_spacing_km)?;
    Ok(City { spec: spec.clone(), lots, zone_weights, poi, road })
}

pub fn write_series_csv(path: &Path, obs: &Observations) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("series file", e))?;
    w.write_record(["step", "lot_id", "pa", "population"]).map_err(|e| csv_err("series file", e))?;
    for (t, (pa, pop)) in obs.pa.iter().zip(&obs.population).enumerate() {
        for (i, (y, p)) in pa.iter().zip(pop).enumerate() {
            w.write_record([t.to_string(), i.to_string(), y.to_string(), p.to_string()])
                .map_err(|e| csv_err("series file", e))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path, lots: usize) -> Result<Observations> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err("series file", e))?;
    let mut pa: Vec<Vec<u32>> = Vec::new();
    let mut population: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err("series file", e))?;
        let t: usize = field(&rec, 0, "series file")?;
        let i: usize = field(&rec, 1, "series file")?;
        if t == pa.len() && i == 0 {
            pa.push(Vec::with_capacity(lots));
            population.push(Vec::with_capacity(lots));
        }
        if t + 1 != pa.len() || i != pa[t].len() || i >= lots {
            return Err(Error::parse("series file", format!("unexpected row (step {t}, lot {i})")));
        }
        pa[t].push(field(&rec, 2, "series file")?);
        population[t].push(field(&rec, 3, "series file")?);
    }
    if pa.last().map_or(true, |row| row.len() != lots) {
        return Err(Error::parse("series file", "incomplete final step"));
    }
    Ok(Observations { pa, population })
}

pub fn city_spec_to_kv(spec: &CitySpec, kv: &mut KeyValues) {
    kv.set("city.lots", spec.lots);
    kv.set("city.min_x_km", spec.bbox.min_x);
    kv.set("city.min_y_km", spec.bbox.min_y);
    kv.set("city.max_x_km", spec.bbox.max_x);
    kv.set("city.max_y_km", spec.bbox.max_y);
    kv.set("city.grid_spacing_km", spec.grid_spacing_km);
    kv.set("city.capacity_min", spec.capacity_min);
    kv.set("city.capacity_max", spec.capacity_max);
    kv.set("city.feature_width", spec.feature_width);
    kv.set("city.labeled_fraction", spec.labeled_fraction);
    kv.set("city.zones", spec.zones);
    kv.set("city.centers_per_zone", spec.centers_per_zone);
    kv.set("city.cluster_sd_km", spec.cluster_sd_km);
    kv.set("city.seed", spec.seed);
}

pub fn series_spec_to_kv(spec: &SeriesSpec, kv: &mut KeyValues) {
    kv.set("series.steps", spec.steps);
    kv.set("series.noise", spec.noise);
    kv.set("series.diffusion", spec.diffusion);
    kv.set("series.diffusion_radius_km", spec.diffusion_radius_km);
    kv.set("series.local_persistence", spec.local_persistence);
    kv.set("series.zone_persistence", spec.zone_persistence);
    kv.set("series.local_sd", spec.local_sd);
    kv.set("series.zone_sd", spec.zone_sd);
    kv.set("series.population_sd", spec.population_sd);
    kv.set("series.seed", spec.seed);
}

/// Reads `city.*` keys, falling back to defaults for absent ones.
pub fn city_spec_from_kv(kv: &KeyValues) -> Result<CitySpec> {
    let d = CitySpec::default();
    let bbox = BoundingBox::new(
        kv.get("city.min_x_km")?.unwrap_or(d.bbox.min_x),
        kv.get("city.min_y_km")?.unwrap_or(d.bbox.min_y),
        kv.get("city.max_x_km")?.unwrap_or(d.bbox.max_x),
        kv.get("city.max_y_km")?.unwrap_or(d.bbox.max_y),
    )?;
    let spec = CitySpec {
        lots: kv.get("city.lots")?.unwrap_or(d.lots),
        bbox,
        grid_spacing_km: kv.get("city.grid_spacing_km")?.unwrap_or(d.grid_spacing_km),
        capacity_min: kv.get("city.capacity_min")?.unwrap_or(d.capacity_min),
        capacity_max: kv.get("city.capacity_max")?.unwrap_or(d.capacity_max),
        feature_width: kv.get("city.feature_width")?.unwrap_or(d.feature_width),
        labeled_fraction: kv.get("city.labeled_fraction")?.unwrap_or(d.labeled_fraction),
        zones: kv.get("city.zones")?.unwrap_or(d.zones),
        centers_per_zone: kv.get("city.centers_per_zone")?.unwrap_or(d.centers_per_zone),
        cluster_sd_km: kv.get("city.cluster_sd_km")?.unwrap_or(d.cluster_sd_km),
        seed: kv.get("city.seed")?.unwrap_or(d.seed),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn series_spec_from_kv(kv: &KeyValues) -> Result<SeriesSpec> {
    let d = SeriesSpec::default();
    let spec = SeriesSpec {
        steps: kv.get("series.steps")?.unwrap_or(d.steps),
        noise: kv.get("series.noise")?.unwrap_or(d.noise),
        diffusion: kv.get("series.diffusion")?.unwrap_or(d.diffusion),
        diffusion_radius_km: kv.get("series.diffusion_radius_km")?.unwrap_or(d.diffusion_radius_km),
        local_persistence: kv.get("series.local_persistence")?.unwrap_or(d.local_persistence),
        zone_persistence: kv.get("series.zone_persistence")?.unwrap_or(d.zone_persistence),
        local_sd: kv.get("series.local_sd")?.unwrap_or(d.local_sd),
        zone_sd: kv.get("series.zone_sd")?.unwrap_or(d.zone_sd),
        population_sd: kv.get("series.population_sd")?.unwrap_or(d.population_sd),
        seed: kv.get("series.seed")?.unwrap_or(d.seed),
    };
    spec.validate()?;
    Ok(spec)
}

/// Writes `city.csv`, `series.csv` and `manifest.txt` into `dir`. `extra`
/// entries (e.g. the effective run config) are appended to the manifest.
pub fn write_dataset(
    dir: &Path,
    city: &City,
    series: &SeriesSpec,
    obs: &Observations,
    extra: &KeyValues,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_city_csv(&dir.join(CITY_FILE), city)?;
    write_series_csv(&dir.join(SERIES_FILE), obs)?;
    let mut kv = extra.clone();
    city_spec_to_kv(&city.spec, &mut kv);
    series_spec_to_kv(series, &mut kv);
    fs::write(dir.join(MANIFEST_FILE), kv.render())?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<(City, SeriesSpec, Observations)> {
    let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let kv = KeyValues::parse(&manifest)?;
    let city_spec = city_spec_from_kv(&kv)?;
    let series_spec = series_spec_from_kv(&kv)?;
    let city = read_city_csv(&dir.join(CITY_FILE), &city_spec)?;
    let obs = read_series_csv(&dir.join(SERIES_FILE), city.lot_count())?;
    for (t, row) in obs.pa.iter().enumerate() {
        for (lot, &y) in city.lots.iter().zip(row) {
            if y > lot.capacity {
                return Err(Error::parse(
                    "series file",
                    format!("step {t}: PA {y} exceeds capacity of lot {}", lot.id),
                ));
            }
        }
    }
    Ok((city, series_spec, obs))
}
