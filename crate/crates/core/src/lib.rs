//! Cumulative incidence estimation for competing-risks data under the
//! cause-specific Cox model.

pub mod bootstrap;
pub mod cox;
pub mod data;
pub mod error;
pub mod estimate;
pub mod io;
pub mod pipeline;
pub mod sim;
pub mod step;

pub use bootstrap::{band_critical_value, bootstrap_bands, draw_weights, BandConfig, BandResult, BandSet};
pub use cox::{fit_all_causes, fit_cause_specific, linear_predictor, CoxFit, CoxOptions, FitStatus};
pub use data::{risk_sum, EventIndex, RiskSetLayout, SubjectRecord, SurvivalDataset, TiePolicy, TieReport};
pub use error::{Error, Result};
pub use estimate::{
    breslow_cumhaz, cif_m1, cif_m2, cif_m3, survival_m1, survival_m2, survival_m3, total_cif, CauseSel,
    CifEstimate, CifModel, Method,
};
pub use io::{parse_csv, write_csv, CsvOptions};
pub use pipeline::{run_analysis, run_simulation, AnalysisRequest, BandSettings};
pub use sim::{run_scenario, ScenarioConfig, ScenarioResult};
pub use step::StepFunction;
