//! TOML simulation configs.
//!
//! ```toml
//! seed = 7
//! replications = 200
//! bootstrap_b = 200        # 0 disables bands
//! grid = "paper-grid"      # or "normal-grid"
//! only = [1, 3, 5]         # optional subset of grid ids
//!
//! [[scenario]]             # explicit cells, alone or after a grid
//! id = 101
//! shape = "decreasing"
//! n = 75
//! relative_risk = 3
//! z = 0.0
//! censor_rate = 0.5
//! ```

use std::ops::Range;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sim::{normal_grid, paper_grid, CovariateLaw, ScenarioConfig, ShapeKind, DEFAULT_SEED};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub seed: u64,
    pub scenarios: Vec<ScenarioConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    replications: Option<usize>,
    bootstrap_b: Option<usize>,
    level: Option<f64>,
    grid: Option<toml::Spanned<String>>,
    only: Option<toml::Spanned<Vec<u32>>>,
    #[serde(default)]
    scenario: Vec<toml::Spanned<RawScenario>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: u32,
    shape: String,
    n: usize,
    relative_risk: f64,
    z: f64,
    #[serde(default)]
    censor_rate: f64,
    covariate_law: Option<String>,
    final_cifs: Option<(f64, f64)>,
    horizon: Option<f64>,
    horizon_total: Option<f64>,
    truncation: Option<f64>,
    replications: Option<usize>,
    bootstrap_b: Option<usize>,
    level: Option<f64>,
    seed: Option<u64>,
}

pub fn load_simulation_config(path: impl AsRef<Path>) -> Result<SimulationConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_simulation_config(&text)
}

pub fn parse_simulation_config(text: &str) -> Result<SimulationConfig> {
    let line_of = |span: Range<usize>| text[..span.start.min(text.len())].matches('\n').count() + 1;
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map_or(1, line_of),
        message: e.message().trim().to_string(),
    })?;
    let err = |span: Range<usize>, message: String| Error::Config {
        line: line_of(span),
        message,
    };

    let seed = raw.seed.unwrap_or(DEFAULT_SEED);
    let mut scenarios = Vec::new();
    if let Some(grid) = &raw.grid {
        let mut cells = match grid.get_ref().as_str() {
            "paper-grid" => paper_grid(),
            "normal-grid" => normal_grid(),
            other => {
                return Err(err(
                    grid.span(),
                    format!("unknown grid `{other}` (expected paper-grid or normal-grid)"),
                ))
            }
        };
        if let Some(only) = &raw.only {
            if let Some(bad) = only.get_ref().iter().find(|id| !cells.iter().any(|c| c.id == **id)) {
                return Err(err(only.span(), format!("grid has no scenario {bad}")));
            }
            cells.retain(|c| only.get_ref().contains(&c.id));
        }
        scenarios.extend(cells);
    } else if let Some(only) = &raw.only {
        return Err(err(only.span(), "`only` needs a `grid`".into()));
    }
    for s in &mut scenarios {
        s.seed = seed;
        if let Some(r) = raw.replications {
            s.replications = r;
        }
        if let Some(b) = raw.bootstrap_b {
            s.bootstrap_b = b;
        }
        if let Some(l) = raw.level {
            s.level = l;
        }
    }

    for spanned in &raw.scenario {
        let span = spanned.span();
        let r = spanned.get_ref();
        let shape: ShapeKind = r.shape.parse().map_err(|e: Error| err(span.clone(), e.to_string()))?;
        let mut cfg = ScenarioConfig::new(r.id, shape, r.n, r.relative_risk, r.z, r.censor_rate);
        if let Some(law) = &r.covariate_law {
            cfg.covariate_law = law
                .parse::<CovariateLaw>()
                .map_err(|e| err(span.clone(), e.to_string()))?;
        }
        cfg.final_cifs = r.final_cifs.unwrap_or(cfg.final_cifs);
        cfg.horizon = r.horizon.unwrap_or(cfg.horizon);
        cfg.horizon_total = r.horizon_total.unwrap_or(cfg.horizon_total);
        cfg.truncation = r.truncation.unwrap_or(cfg.truncation);
        cfg.replications = r.replications.or(raw.replications).unwrap_or(cfg.replications);
        cfg.bootstrap_b = r.bootstrap_b.or(raw.bootstrap_b).unwrap_or(cfg.bootstrap_b);
        cfg.level = r.level.or(raw.level).unwrap_or(cfg.level);
        cfg.seed = r.seed.unwrap_or(seed);
        if scenarios.iter().any(|s| s.id == cfg.id) {
            return Err(err(span, format!("duplicate scenario id {}", cfg.id)));
        }
        cfg.validate().map_err(|e| err(span.clone(), e.to_string()))?;
        scenarios.push(cfg);
    }
    if scenarios.is_empty() {
        return Err(Error::Config {
            line: 1,
            message: "no scenarios: set `grid` or add [[scenario]] tables".into(),
        });
    }
    for s in &scenarios {
        s.validate().map_err(|e| Error::Config {
            line: 1,
            message: e.to_string(),
        })?;
    }
    Ok(SimulationConfig { seed, scenarios })
}
