use std::collections::BTreeSet;
use std::fs;

use anyhow::{bail, Context, Result};

use share_core::data::io::{city_spec_to_kv, series_spec_to_kv};
use share_core::data::{CitySpec, SeriesSpec};
use share_core::kv::KeyValues;
use share_core::pipeline::RunConfig;

use crate::ConfigArgs;

/// Effective configuration: defaults, then the config file, then flags.
pub struct Layers {
    pub merged: KeyValues,
    pub run: RunConfig,
}

fn known_keys() -> BTreeSet<String> {
    let mut kv = KeyValues::new();
    city_spec_to_kv(&CitySpec::default(), &mut kv);
    series_spec_to_kv(&SeriesSpec::default(), &mut kv);
    RunConfig::default().to_kv(&mut kv);
    kv.keys().map(String::from).collect()
}

pub fn load_layers(args: &ConfigArgs, flags: &KeyValues) -> Result<Layers> {
    let mut merged = KeyValues::new();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file = KeyValues::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merged.extend(&file);
    }
    for item in &args.overrides {
        let Some((k, v)) = item.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{item}`");
        };
        merged.set(k.trim(), v.trim());
    }
    merged.extend(flags);

    let known = known_keys();
    if let Some(bad) = merged.keys().find(|k| !known.contains(*k)) {
        bail!("unknown config key `{bad}`");
    }
    let mut run = RunConfig::default();
    run.apply_kv(&merged)?;
    run.validate()?;
    Ok(Layers { merged, run })
}
