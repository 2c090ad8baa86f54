//! Synthetic city generation, PA series, sensor masking and windowing.

mod city;
pub mod io;
mod series;
mod windows;

pub use city::{generate_city, City, CitySpec, DYNAMIC_FEATURES};
pub use series::{
    base_occupancy, generate_observations, hour_of_step, local_innovations, zone_profile, Observations, SeriesSpec,
    STEPS_PER_DAY,
};
pub use windows::{
    feature_row, make_windows, split_ranges, window_starts, Dataset, Split, StepInputs, WindowSample, WindowSets,
};
