//! Rescaling reported losses to baseline-year exposure inside the footprint.

use crate::events::FloodEvent;
use crate::exposure::{exposure_in, ExposureAggregates, ExposureGrid};
use crate::footprint::Footprint;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("event {event}: footprint is empty")]
    EmptyFootprint { event: String },
    #[error("event {event}: {variable} is zero in the event year but {baseline} at baseline")]
    UndefinedFactor {
        event: String,
        variable: &'static str,
        baseline: f64,
    },
}

/// Baseline exposure divided by event-year exposure inside a footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub population: f64,
    pub gdp: f64,
    pub wealth: f64,
}

impl Factors {
    pub const ONE: Factors = Factors {
        population: 1.0,
        gdp: 1.0,
        wealth: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRecord {
    pub event_id: String,
    pub factors: Factors,
    pub fatalities: Option<f64>,
    pub persons_affected: Option<f64>,
    pub losses_by_gdp: Option<f64>,
    pub losses_by_wealth: Option<f64>,
    pub area_km2: Option<f64>,
}

fn ratio(event: &str, variable: &'static str, baseline: f64, then: f64) -> Result<f64, NormalizeError> {
    if then > 0.0 {
        Ok(baseline / then)
    } else if baseline > 0.0 {
        Err(NormalizeError::UndefinedFactor {
            event: event.to_string(),
            variable,
            baseline,
        })
    } else {
        log::warn!("event {event}: no {variable} in the footprint in either year, factor set to 1");
        Ok(1.0)
    }
}

pub fn factors_from_aggregates(
    event_id: &str,
    event_year: &ExposureAggregates,
    baseline: &ExposureAggregates,
) -> Result<Factors, NormalizeError> {
    if event_year.empty || baseline.empty {
        return Err(NormalizeError::EmptyFootprint {
            event: event_id.to_string(),
        });
    }
    Ok(Factors {
        population: ratio(event_id, "population", baseline.population, event_year.population)?,
        gdp: ratio(event_id, "gdp", baseline.gdp, event_year.gdp)?,
        wealth: ratio(event_id, "wealth", baseline.wealth, event_year.wealth)?,
    })
}

pub fn normalization_factors(
    footprint: &Footprint,
    grid_event_year: &ExposureGrid,
    grid_baseline: &ExposureGrid,
) -> Result<Factors, NormalizeError> {
    factors_from_aggregates(
        &footprint.event_id,
        &exposure_in(footprint, grid_event_year),
        &exposure_in(footprint, grid_baseline),
    )
}

/// Scale person counts by the population factor and losses by the GDP and
/// wealth factors. Area is copied unchanged.
pub fn normalize(event: &FloodEvent, factors: Factors) -> NormalizedRecord {
    NormalizedRecord {
        event_id: event.id.clone(),
        factors,
        fatalities: event.known_fatalities().map(|v| v as f64 * factors.population),
        persons_affected: event.persons_affected.map(|v| v as f64 * factors.population),
        losses_by_gdp: event.losses_eur2011.map(|v| v * factors.gdp),
        losses_by_wealth: event.losses_eur2011.map(|v| v * factors.wealth),
        area_km2: event.area_km2,
    }
}

/// Normalized losses relative to what the footprint holds at baseline.
/// A variable is `None` when it is missing or its denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelativeDamages {
    pub area: Option<f64>,
    pub fatalities: Option<f64>,
    pub affected: Option<f64>,
    pub losses_gdp: Option<f64>,
    pub losses_wealth: Option<f64>,
}

impl RelativeDamages {
    pub fn as_array(&self) -> [Option<f64>; 5] {
        [
            self.area,
            self.fatalities,
            self.affected,
            self.losses_gdp,
            self.losses_wealth,
        ]
    }
}

fn divide(value: Option<f64>, by: f64) -> Option<f64> {
    value.filter(|_| by > 0.0).map(|v| v / by)
}

pub fn relative_damages(
    record: &NormalizedRecord,
    baseline: &ExposureAggregates,
    footprint_area_km2: f64,
) -> RelativeDamages {
    RelativeDamages {
        area: divide(record.area_km2, footprint_area_km2),
        fatalities: divide(record.fatalities, baseline.population),
        affected: divide(record.persons_affected, baseline.population),
        losses_gdp: divide(record.losses_by_gdp, baseline.gdp),
        losses_wealth: divide(record.losses_by_wealth, baseline.wealth),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write records as CSV: the normalized variables followed by the factors.
pub fn write_normalized<W: Write>(writer: W, records: &[NormalizedRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "id",
        "area_km2",
        "fatalities",
        "persons_affected",
        "losses_by_gdp",
        "losses_by_wealth",
        "factor_population",
        "factor_gdp",
        "factor_wealth",
    ])?;
    for r in records {
        w.write_record([
            r.event_id.clone(),
            opt(r.area_km2),
            opt(r.fatalities),
            opt(r.persons_affected),
            opt(r.losses_by_gdp),
            opt(r.losses_by_wealth),
            r.factors.population.to_string(),
            r.factors.gdp.to_string(),
            r.factors.wealth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::FloodType;

    fn agg(population: f64, gdp: f64, wealth: f64) -> ExposureAggregates {
        ExposureAggregates {
            population,
            gdp,
            wealth,
            cell_count: 3,
            empty: false,
        }
    }

    fn event() -> FloodEvent {
        FloodEvent {
            id: "nl1953".into(),
            country: "NL".into(),
            year: 1953,
            month: 2,
            flood_type: FloodType::Coastal,
            regions: vec!["1".into()],
            area_km2: Some(2000.0),
            fatalities: Some(1835),
            fatalities_positive_unknown: false,
            persons_affected: None,
            losses_eur2011: Some(4.8e9),
        }
    }

    #[test]
    fn sixty_percent_population_growth() {
        let f = factors_from_aggregates("x", &agg(100.0, 1.0, 1.0), &agg(160.0, 1.0, 7.36)).unwrap();
        assert!((f.population - 1.6).abs() < 1e-12);
        let r = normalize(&event(), f);
        assert!((r.fatalities.unwrap() - 2936.0).abs() < 1e-9);
        assert!((r.losses_by_wealth.unwrap() - 35.328e9).abs() < 1e-3);
        assert_eq!(r.area_km2, Some(2000.0));
        assert_eq!(r.persons_affected, None);
    }

    #[test]
    fn zero_exposure_in_event_year() {
        let err = factors_from_aggregates("x", &agg(0.0, 1.0, 1.0), &agg(5.0, 1.0, 1.0)).unwrap_err();
        assert!(matches!(err, NormalizeError::UndefinedFactor { variable: "population", .. }));
        let f = factors_from_aggregates("x", &agg(0.0, 1.0, 1.0), &agg(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(f.population, 1.0);
    }

    #[test]
    fn relative_damage_ratios() {
        let mut e = event();
        e.persons_affected = Some(50);
        e.losses_eur2011 = Some(0.0);
        let r = normalize(&e, Factors::ONE);
        let d = relative_damages(&r, &agg(2000.0, 0.0, 10.0), 4000.0);
        assert_eq!(d.affected, Some(0.025));
        assert_eq!(d.area, Some(0.5));
        assert_eq!(d.losses_gdp, None);
        assert_eq!(d.losses_wealth, Some(0.0));
    }
}
