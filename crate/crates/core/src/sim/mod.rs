//! Monte Carlo engine: hazard family, population truth and scenario runs.

pub mod hazard;
pub mod scenario;
pub mod truth;

pub use hazard::{HazardShape, ShapeKind};
pub use scenario::{
    calibrate_sigmas, normal_grid, paper_grid, quantile_type7, run_scenario, sample_dataset,
    uniform_censoring_bound, CovariateLaw, Generator, MethodCauseMetrics, ScenarioConfig, ScenarioResult,
    TotalCifQuantiles, DEFAULT_SEED, PILOT_DRAWS, TOTAL_CIF_PROBS,
};
pub use truth::{true_cif, CauseHazard, CompetingRisksLaw};
