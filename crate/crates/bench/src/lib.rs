//! Fixtures shared by the benchmarks.

use cifkit_core::sim::{sample_dataset, ScenarioConfig, ShapeKind};
use cifkit_core::SurvivalDataset;

/// A simulated two-cause dataset of size `n` from the increasing-hazard cell.
pub fn dataset(n: usize, censor_rate: f64, seed: u64) -> SurvivalDataset {
    let config = ScenarioConfig::new(0, ShapeKind::Increasing, n, 3.0, 0.0, censor_rate);
    sample_dataset(&config, seed).expect("valid scenario")
}
