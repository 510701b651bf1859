//! File formats: survival CSVs, simulation configs and report tables.

pub mod config;
pub mod dataset;
pub mod report;

pub use config::{load_simulation_config, parse_simulation_config, SimulationConfig};
pub use dataset::{parse_csv, read_csv, write_csv, CsvOptions, ParsedDataset};
pub use report::{
    render_svg, write_curve_csv, write_manifest, write_quantiles_csv, write_results_csv, CurveMeta, PlotSeries,
    VERSION,
};
