use share_core::approx::Binning;
use share_core::data::io::{read_dataset, write_dataset};
use share_core::data::{
    generate_city, generate_observations, local_innovations, make_windows, split_ranges, window_starts, CitySpec,
    Dataset, SeriesSpec, Split, STEPS_PER_DAY,
};
use share_core::graph::{BoundingBox, RoadNetwork};
use share_core::kv::KeyValues;
use share_core::Error;

fn small_city(lots: usize, seed: u64) -> CitySpec {
    CitySpec { lots, bbox: BoundingBox::square(3.0).unwrap(), seed, ..CitySpec::default() }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn city_has_requested_lots_inside_the_box() {
    let spec = small_city(50, 3);
    let city = generate_city(&spec).unwrap();
    assert_eq!(city.lot_count(), 50);
    for lot in &city.lots {
        assert!(spec.bbox.contains(lot.x_km, lot.y_km));
        assert!((spec.capacity_min..=spec.capacity_max).contains(&lot.capacity));
    }
    for row in city.zone_weights.iter().chain(&city.poi) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let spec = small_city(40, 9);
    let (a, b) = (generate_city(&spec).unwrap(), generate_city(&spec).unwrap());
    assert_eq!(a.lots, b.lots);
    assert_eq!(a.poi, b.poi);
    let series = SeriesSpec { steps: 300, seed: 4, ..SeriesSpec::default() };
    assert_eq!(generate_observations(&a, &series).unwrap(), generate_observations(&b, &series).unwrap());
    let other = generate_city(&CitySpec { seed: 10, ..spec }).unwrap();
    assert_ne!(a.lots, other.lots);
}

#[test]
fn labeled_count_floors() {
    let city = generate_city(&CitySpec { lots: 100, labeled_fraction: 0.3, ..small_city(100, 1) }).unwrap();
    assert_eq!(city.labeled_ids().len(), 30);
    assert_eq!(CitySpec { lots: 7, labeled_fraction: 0.5, ..CitySpec::default() }.labeled_count(), 3);
    assert_eq!(CitySpec { lots: 7, labeled_fraction: 0.01, ..CitySpec::default() }.labeled_count(), 1);
    // Relabeling with one seed nests the sensor sets.
    let sparse = city.relabel(0.1, 5).unwrap().labeled_ids();
    let dense = city.relabel(0.5, 5).unwrap().labeled_ids();
    assert!(sparse.iter().all(|i| dense.contains(i)));
}

#[test]
fn invalid_specs_are_rejected() {
    let degenerate =
        CitySpec { bbox: BoundingBox { min_x: 0.0, min_y: 0.0, max_x: 0.0, max_y: 1.0 }, ..CitySpec::default() };
    assert!(generate_city(&degenerate).is_err());
    assert!(generate_city(&CitySpec { labeled_fraction: 0.0, ..CitySpec::default() }).is_err());
    assert!(generate_city(&CitySpec { lots: 1, ..CitySpec::default() }).is_err());
}

#[test]
fn noiseless_single_zone_series_has_daily_period() {
    let city = generate_city(&CitySpec { zones: 1, ..small_city(10, 2) }).unwrap();
    let obs =
        generate_observations(&city, &SeriesSpec { steps: 4 * STEPS_PER_DAY, noise: 0.0, ..SeriesSpec::default() })
            .unwrap();
    for t in STEPS_PER_DAY..obs.steps() {
        assert_eq!(obs.pa[t], obs.pa[t - STEPS_PER_DAY]);
    }
    assert!(obs.pa[0] != obs.pa[STEPS_PER_DAY / 2], "profile should move within a day");
}

#[test]
fn identical_lots_share_noiseless_series() {
    let mut city = generate_city(&small_city(12, 6)).unwrap();
    let (first, rest) = city.lots.split_at_mut(1);
    rest[0].x_km = first[0].x_km;
    rest[0].y_km = first[0].y_km;
    rest[0].capacity = first[0].capacity;
    city.zone_weights[1] = city.zone_weights[0].clone();
    city.road = RoadNetwork::build(&city.lots, city.spec.bbox, city.spec.grid_spacing_km).unwrap();
    let obs = generate_observations(&city, &SeriesSpec { steps: 500, noise: 0.0, ..SeriesSpec::default() }).unwrap();
    assert!(obs.pa.iter().all(|row| row[0] == row[1]));
}

#[test]
fn pa_stays_within_capacity() {
    let city = generate_city(&small_city(30, 8)).unwrap();
    let obs = generate_observations(&city, &SeriesSpec { steps: 1000, noise: 3.0, ..SeriesSpec::default() }).unwrap();
    for row in &obs.pa {
        for (y, lot) in row.iter().zip(&city.lots) {
            assert!(*y <= lot.capacity);
        }
    }
}

#[test]
fn diffusion_controls_neighbor_noise_correlation() {
    let city = generate_city(&small_city(30, 12)).unwrap();
    let radius = SeriesSpec::default().diffusion_radius_km;
    let pairs: Vec<(usize, usize)> = (0..30)
        .flat_map(|i| (i + 1..30).map(move |j| (i, j)))
        .filter(|&(i, j)| city.road.distance(i, j) <= radius)
        .collect();
    assert!(!pairs.is_empty());
    let max_r = |diffusion: f64| {
        let u =
            local_innovations(&city, &SeriesSpec { steps: 2000, diffusion, seed: 3, ..SeriesSpec::default() }).unwrap();
        let col = |i: usize| u.iter().map(|row| row[i]).collect::<Vec<_>>();
        pairs.iter().map(|&(i, j)| correlation(&col(i), &col(j))).fold(f64::MIN, f64::max)
    };
    assert!(max_r(0.0).abs() < 0.1);
    assert!(max_r(1.0) > 0.3);
}

#[test]
fn window_counts() {
    assert_eq!(window_starts(0..20, 12, 3).len(), 6);
    assert!(window_starts(0..14, 12, 3).is_empty());

    let [train, val, test] = split_ranges(100, 0.6, 0.2).unwrap();
    assert_eq!((train.clone(), val, test), (0..60, 60..80, 80..100));
    for s in window_starts(train, 12, 3) {
        assert!(s + 12 + 3 <= 60);
    }

    // 60/20/20 over 1000 steps gives splits of 600, 200, 200 steps.
    let [a, b, c] = split_ranges(1000, 0.6, 0.2).unwrap();
    let expected = |len: usize| len - 12 - 3 + 1;
    assert_eq!(window_starts(a, 12, 3).len(), expected(600));
    assert_eq!(window_starts(b, 12, 3).len(), expected(200));
    assert_eq!(window_starts(c, 12, 3).len(), expected(200));
}

#[test]
fn windows_carry_labeled_observations_and_full_targets() {
    let city = generate_city(&small_city(20, 1)).unwrap();
    let obs = generate_observations(&city, &SeriesSpec { steps: 200, ..SeriesSpec::default() }).unwrap();
    let sets = make_windows(&city, &obs, 12, 3, 50, (0.6, 0.2)).unwrap();
    assert_eq!(sets.train.len(), 120 - 14);
    let labeled = city.labeled_mask();
    let w = &sets.test[3];
    assert_eq!(w.window(), 12);
    assert_eq!(w.horizon(), 3);
    for (t, step) in w.observed.iter().enumerate() {
        for i in 0..20 {
            let mass: f64 = step.row(i).iter().sum();
            assert_eq!(mass, if labeled[i] { 1.0 } else { 0.0 });
        }
        assert_eq!(w.observed_pa[t].len(), city.labeled_ids().len());
    }
    assert_eq!(w.targets[0], obs.pa[w.start + 12]);
    assert_eq!(w.target_mask, labeled);

    let err = Dataset::new(
        &city,
        &generate_observations(&city, &SeriesSpec { steps: 10, ..SeriesSpec::default() }).unwrap(),
        12,
        3,
        50,
        Binning::CapacityRelative,
        (0.6, 0.2),
    );
    assert!(matches!(err, Err(Error::SeriesTooShort { .. })));
    let ds = sets.dataset;
    assert!(ds.starts(Split::Validation).iter().all(|&s| s >= 120 && s + 15 <= 160));
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let city = generate_city(&small_city(15, 21)).unwrap();
    let series = SeriesSpec { steps: 150, seed: 21, ..SeriesSpec::default() };
    let obs = generate_observations(&city, &series).unwrap();
    let mut extra = KeyValues::new();
    extra.set("note", "round trip");
    write_dataset(dir.path(), &city, &series, &obs, &extra).unwrap();
    let (city2, series2, obs2) = read_dataset(dir.path()).unwrap();
    assert_eq!(city2.lots, city.lots);
    assert_eq!(city2.zone_weights, city.zone_weights);
    assert_eq!(city2.poi, city.poi);
    assert_eq!(city2.spec, city.spec);
    assert_eq!(series2, series);
    assert_eq!(obs2, obs);
}
