//! Times one training step and one inference pass per variant on the default
//! 200-lot city.

use std::time::Instant;

use share_core::approx::Binning;
use share_core::data::{generate_city, generate_observations, CitySpec, Dataset, SeriesSpec, Split};
use share_core::graph::CityGraph;
use share_core::model::{infer, loss_and_gradients, ModelConfig, ModelParams, Variant};

fn main() -> share_core::Result<()> {
    let city = generate_city(&CitySpec::default())?;
    let obs = generate_observations(&city, &SeriesSpec::default())?;
    let graph = CityGraph::build(&city.lots, &city.road, 1.0, 10)?;
    let ds = Dataset::new(&city, &obs, 12, 3, 50, Binning::CapacityRelative, (0.6, 0.2))?;
    println!(
        "lots {} context edges {} prop edges {} train windows {}",
        city.lot_count(),
        graph.context.edge_count(),
        graph.prop_sources.edge_count(),
        ds.starts(Split::Train).len()
    );
    let sample = ds.sample(0);
    for variant in Variant::ALL {
        let cfg = ModelConfig::new(variant, city.lot_count(), city.spec.feature_width);
        let params = ModelParams::init(cfg, 0)?;
        let reps = 10;
        let t = Instant::now();
        for _ in 0..reps {
            loss_and_gradients(&params, &sample, &graph, &ds.capacities)?;
        }
        let train_ms = t.elapsed().as_secs_f64() * 1e3 / reps as f64;
        let t = Instant::now();
        for _ in 0..reps {
            infer(&params, &sample, &graph, &ds.capacities)?;
        }
        let infer_ms = t.elapsed().as_secs_f64() * 1e3 / reps as f64;
        println!("{variant:>7}: train step {train_ms:.2} ms, inference {infer_ms:.2} ms");
    }
    Ok(())
}
