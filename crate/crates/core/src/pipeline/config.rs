use crate::trend::Sidedness;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Run configuration, read from a flat TOML file. Every key is optional.
/// Relative paths are resolved against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub events: PathBuf,
    /// Baseline grids (`region.asc`, `landuse.asc`, `population.asc`, ...).
    pub grid_dir: PathBuf,
    pub river_mask: PathBuf,
    pub coastal_mask: PathBuf,
    pub region_stats: PathBuf,
    /// `grid_value,code` table; without it region codes are grid values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_codes: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub baseline_year: i32,
    pub start_years: Vec<i32>,
    pub end_year: i32,
    /// Years whose backcast grids are written by the backcast stage.
    pub backcast_years: Vec<i32>,
    pub mc_replicates: usize,
    pub conditional_samples: usize,
    pub reference_period: [i32; 2],
    pub seed: u64,
    pub mc_sidedness: Sidedness,
    pub alpha: f64,
    /// Write every replicate rate of every trend test.
    pub dump_replicates: bool,
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            events: "events.csv".into(),
            grid_dir: "grids".into(),
            river_mask: "grids/mask_river.asc".into(),
            coastal_mask: "grids/mask_coastal.asc".into(),
            region_stats: "region_stats.csv".into(),
            region_codes: None,
            output_dir: "out".into(),
            baseline_year: 2011,
            start_years: vec![1870, 1900, 1930, 1950, 1970],
            end_year: 2016,
            backcast_years: vec![1870, 1900, 1930, 1950, 1970],
            mc_replicates: 10_000,
            conditional_samples: 10_000,
            reference_period: [1990, 2016],
            seed: 0,
            mc_sidedness: Sidedness::Magnitude,
            alpha: 0.05,
            dump_replicates: false,
            parallel: true,
        }
    }
}

/// Replicate count below which significance verdicts are reported but not
/// relied on.
pub const MIN_REPLICATES_FOR_CLAIMS: usize = 1000;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Read `path` and resolve relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.events);
        fix(&mut self.grid_dir);
        fix(&mut self.river_mask);
        fix(&mut self.coastal_mask);
        fix(&mut self.region_stats);
        fix(&mut self.output_dir);
        if let Some(p) = self.region_codes.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.start_years.is_empty() {
            return Err("start_years is empty".into());
        }
        if let Some(y) = self.start_years.iter().find(|&&y| y >= self.end_year) {
            return Err(format!("start year {y} is not before end year {}", self.end_year));
        }
        let first = crate::events::FIRST_YEAR;
        let last = crate::events::LAST_YEAR;
        if self.start_years.iter().any(|&y| y < first) || self.end_year > last {
            return Err(format!("analysis years must lie within {first}-{last}"));
        }
        if let Some(y) = self.backcast_years.iter().find(|&&y| y > self.baseline_year) {
            return Err(format!("backcast year {y} is after the baseline year"));
        }
        let [a, b] = self.reference_period;
        if a > b {
            return Err(format!("reference period {a}-{b} is reversed"));
        }
        if self.mc_replicates == 0 || self.conditional_samples == 0 {
            return Err("mc_replicates and conditional_samples must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.mc_replicates < MIN_REPLICATES_FOR_CLAIMS {
            log::warn!(
                "{} Monte Carlo replicates; significance needs at least {MIN_REPLICATES_FOR_CLAIMS}",
                self.mc_replicates
            );
        }
        Ok(())
    }

    pub fn first_start_year(&self) -> i32 {
        self.start_years.iter().copied().min().unwrap_or(self.end_year)
    }
}
