//! Annual series, Poisson-regression trends and their significance.

mod mc;
mod poisson;
mod precip;

pub use mc::{
    mc_significance, mc_significance_normalized, ExposureUncertainty, LogNormalFit, McConfig, McEvent, McOutcome,
    Sidedness,
};
pub use poisson::{poisson_trend, t_test_check, wald_t_test, TrendFit};
pub use precip::{cell_events, extreme_precip_counts, read_precip_csv, DailySeries, PrecipError};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrendError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("period {0}-{1} is outside 1870-2016 or reversed")]
    Period(i32, i32),
    #[error("degenerate series: fewer than two nonzero years")]
    Degenerate,
    #[error("Newton iteration did not converge; gradient norms: {trace:?}")]
    NoConvergence { trace: Vec<f64> },
    #[error("{failed} of {replicates} replicate fits failed")]
    ReplicateFailures { failed: usize, replicates: usize },
    #[error("exposure factors for {year}: {msg}")]
    Exposure { year: i32, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Events,
    Area,
    Fatalities,
    Affected,
    /// Reported losses, adjusted for inflation only.
    Losses,
    LossesGdp,
    LossesWealth,
    ExtremePrecipitation,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::Events,
        Quantity::Area,
        Quantity::Fatalities,
        Quantity::Affected,
        Quantity::Losses,
        Quantity::LossesGdp,
        Quantity::LossesWealth,
        Quantity::ExtremePrecipitation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Events => "events",
            Quantity::Area => "area",
            Quantity::Fatalities => "fatalities",
            Quantity::Affected => "affected",
            Quantity::Losses => "losses",
            Quantity::LossesGdp => "losses_gdp",
            Quantity::LossesWealth => "losses_wealth",
            Quantity::ExtremePrecipitation => "extreme_precipitation",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            Quantity::Events => "events",
            Quantity::Area => "km2",
            Quantity::Fatalities | Quantity::Affected => "persons",
            Quantity::Losses | Quantity::LossesGdp | Quantity::LossesWealth => "EUR 2011",
            Quantity::ExtremePrecipitation => "exceedances",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = TrendError;
    fn from_str(s: &str) -> Result<Self, TrendError> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| TrendError::UnknownVariable(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Reported,
    Normalized,
    GapFilled,
    UnderreportingCorrected,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Reported,
        Stage::Normalized,
        Stage::GapFilled,
        Stage::UnderreportingCorrected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Reported => "reported",
            Stage::Normalized => "normalized",
            Stage::GapFilled => "gap_filled",
            Stage::UnderreportingCorrected => "underreporting_corrected",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = TrendError;
    fn from_str(s: &str) -> Result<Self, TrendError> {
        Stage::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| TrendError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    pub start_year: i32,
    pub end_year: i32,
    pub values: Vec<f64>,
    pub quantity: Quantity,
    pub stage: Stage,
}

impl AnnualSeries {
    pub fn zeros(start_year: i32, end_year: i32, quantity: Quantity, stage: Stage) -> Self {
        AnnualSeries {
            start_year,
            end_year,
            values: vec![0.0; (end_year - start_year + 1).max(0) as usize],
            quantity,
            stage,
        }
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.start_year..=self.end_year
    }

    pub fn add(&mut self, year: i32, value: f64) {
        if (self.start_year..=self.end_year).contains(&year) {
            self.values[(year - self.start_year) as usize] += value;
        }
    }

    /// Restrict to a sub-period.
    pub fn slice(&self, start: i32, end: i32) -> AnnualSeries {
        let lo = (start.max(self.start_year) - self.start_year) as usize;
        let hi = (end.min(self.end_year) - self.start_year) as usize;
        AnnualSeries {
            start_year: start.max(self.start_year),
            end_year: end.min(self.end_year),
            values: self.values[lo..=hi].to_vec(),
            quantity: self.quantity,
            stage: self.stage,
        }
    }

    /// Sums over consecutive blocks of `width` years, labelled by the first
    /// year of each block.
    pub fn block_sums(&self, first: i32, width: i32) -> Vec<(i32, f64)> {
        let mut out = Vec::new();
        let mut start = first;
        while start <= self.end_year {
            let end = start + width - 1;
            let s = self
                .years()
                .zip(&self.values)
                .filter(|(y, _)| (start..=end).contains(y))
                .map(|(_, v)| v)
                .sum();
            out.push((start, s));
            start += width;
        }
        out
    }

    /// `year,value` CSV preceded by `#` comment lines naming the variable,
    /// stage and units.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# variable: {}", self.quantity)?;
        writeln!(w, "# stage: {}", self.stage)?;
        writeln!(w, "# units: {} per year", self.quantity.units())?;
        writeln!(w, "year,value")?;
        for (y, v) in self.years().zip(&self.values) {
            writeln!(w, "{y},{v}")?;
        }
        Ok(())
    }
}

/// One contribution to an annual series. `value` is ignored for event
/// counts; `weight` multiplies the contribution (underreporting factors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualItem {
    pub year: i32,
    pub value: Option<f64>,
    pub weight: f64,
}

/// Yearly event counts or sums; missing values contribute nothing.
pub fn aggregate_annual(
    items: &[AnnualItem],
    quantity: Quantity,
    stage: Stage,
    period: (i32, i32),
) -> Result<AnnualSeries, TrendError> {
    if period.0 > period.1 || period.0 < crate::events::FIRST_YEAR || period.1 > crate::events::LAST_YEAR {
        return Err(TrendError::Period(period.0, period.1));
    }
    let mut s = AnnualSeries::zeros(period.0, period.1, quantity, stage);
    for it in items {
        let v = if quantity == Quantity::Events { Some(1.0) } else { it.value };
        if let Some(v) = v {
            s.add(it.year, v * it.weight);
        }
    }
    Ok(s)
}

/// Annual percentage change from the log-link slope.
pub fn rate_percent(b: f64) -> f64 {
    100.0 * b.exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub rate_percent_per_year: f64,
    pub b: f64,
    pub significant: bool,
    pub mc_p: f64,
    pub mc_replicates: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(year: i32, v: f64) -> AnnualItem {
        AnnualItem {
            year,
            value: Some(v),
            weight: 1.0,
        }
    }

    #[test]
    fn sums_per_year() {
        let items = [item(1953, 1835.0), item(1953, 10.0), item(1953, 5.0), item(1960, 1.0)];
        let s = aggregate_annual(&items, Quantity::Fatalities, Stage::Reported, (1950, 1960)).unwrap();
        assert_eq!(s.values[3], 1850.0);
        assert_eq!(s.values.len(), 11);
        let c = aggregate_annual(&items, Quantity::Events, Stage::Reported, (1950, 1960)).unwrap();
        assert_eq!(c.values[3], 3.0);
    }

    #[test]
    fn empty_is_zero() {
        let s = aggregate_annual(&[], Quantity::Events, Stage::Reported, (1870, 2016)).unwrap();
        assert_eq!(s.values.len(), 147);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parse_names() {
        assert_eq!("gap_filled".parse::<Stage>().unwrap(), Stage::GapFilled);
        assert!("bogus".parse::<Quantity>().is_err());
    }

    #[test]
    fn thirty_year_blocks() {
        let mut s = AnnualSeries::zeros(1870, 2016, Quantity::Events, Stage::Reported);
        s.add(1870, 1.0);
        s.add(1899, 1.0);
        s.add(1900, 5.0);
        s.add(2016, 2.0);
        let b = s.block_sums(1870, 30);
        assert_eq!(b[0], (1870, 2.0));
        assert_eq!(b[1], (1900, 5.0));
        assert_eq!(b.last().unwrap(), &(1990, 2.0));
    }
}
