//! Intermediate files passed between stages.

use super::StageResult;
use crate::events::{parse_catalog, FloodEvent};
use crate::normalize::{Factors, NormalizedRecord};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> StageResult<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a header-only file when `rows` is empty, so downstream readers
/// always find a header.
pub fn write_rows_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> StageResult<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(header)?;
        w.flush()?;
        return Ok(());
    }
    write_rows(path, rows)
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> StageResult<Vec<T>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row.map_err(|e| format!("{}: {e}", path.display()))?);
    }
    Ok(out)
}

/// Validated events written by the ingest stage.
pub fn read_events(path: &Path) -> StageResult<Vec<FloodEvent>> {
    let parsed = parse_catalog(File::open(path)?)?;
    if let Some(d) = parsed.rejected.first() {
        return Err(format!("{}: {d}", path.display()).into());
    }
    Ok(parsed.events)
}

/// Relative damages of one event plus the baseline exposure inside its
/// footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRow {
    pub id: String,
    pub year: i32,
    pub area: Option<f64>,
    pub fatalities: Option<f64>,
    pub affected: Option<f64>,
    pub losses_gdp: Option<f64>,
    pub losses_wealth: Option<f64>,
    pub footprint_area_km2: f64,
    pub population: f64,
    pub gdp: f64,
    pub wealth: f64,
}

impl RelativeRow {
    pub fn relative(&self) -> [Option<f64>; 5] {
        [self.area, self.fatalities, self.affected, self.losses_gdp, self.losses_wealth]
    }

    pub fn potential(&self) -> [f64; 5] {
        [self.footprint_area_km2, self.population, self.population, self.gdp, self.wealth]
    }
}

#[derive(Debug, Deserialize)]
struct NormalizedRow {
    id: String,
    area_km2: Option<f64>,
    fatalities: Option<f64>,
    persons_affected: Option<f64>,
    losses_by_gdp: Option<f64>,
    losses_by_wealth: Option<f64>,
    factor_population: f64,
    factor_gdp: f64,
    factor_wealth: f64,
}

pub fn read_normalized(path: &Path) -> StageResult<Vec<NormalizedRecord>> {
    Ok(read_rows::<NormalizedRow>(path)?
        .into_iter()
        .map(|r| NormalizedRecord {
            event_id: r.id,
            factors: Factors {
                population: r.factor_population,
                gdp: r.factor_gdp,
                wealth: r.factor_wealth,
            },
            fatalities: r.fatalities,
            persons_affected: r.persons_affected,
            losses_by_gdp: r.losses_by_gdp,
            losses_by_wealth: r.losses_by_wealth,
            area_km2: r.area_km2,
        })
        .collect())
}

/// Baseline-over-year exposure ratio of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureFactorRow {
    pub region: u32,
    pub year: i32,
    pub population: f64,
    pub gdp: f64,
    pub wealth: f64,
}

/// Regional factors per year for population, GDP and wealth.
pub type FactorTables = [BTreeMap<i32, Vec<f64>>; 3];

pub fn factor_tables(rows: &[ExposureFactorRow]) -> FactorTables {
    let mut t: FactorTables = Default::default();
    for r in rows {
        for (k, v) in [r.population, r.gdp, r.wealth].into_iter().enumerate() {
            if v.is_finite() && v > 0.0 {
                t[k].entry(r.year).or_default().push(v);
            }
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRow {
    pub id: String,
    pub year: i32,
    pub average_rank: Option<f64>,
    /// Empty for events that could not be ranked.
    pub quintile: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub quintile: u8,
    pub ratio_to_top: f64,
}

pub fn read_ratios(path: &Path) -> StageResult<[f64; 4]> {
    let rows: Vec<RatioRow> = read_rows(path)?;
    let mut out = [f64::NAN; 4];
    for r in rows {
        if !(1..=4).contains(&r.quintile) {
            return Err(format!("{}: quintile {}", path.display(), r.quintile).into());
        }
        // stored as q4, q3, q2, q1
        out[4 - r.quintile as usize] = r.ratio_to_top;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(format!("{}: incomplete ratios", path.display()).into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub stage: String,
    pub quantity: String,
    pub start_year: i32,
    pub end_year: i32,
    pub rate_percent: Option<f64>,
    pub b: Option<f64>,
    pub mc_p: Option<f64>,
    pub significant: Option<bool>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub replicates: usize,
    pub t_test_significant: Option<bool>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub stage: String,
    pub quantity: String,
    pub year: i32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub stage: String,
    pub quantity: String,
    pub year: i32,
    pub p2_5: f64,
    pub p50: f64,
    pub p97_5: f64,
}
