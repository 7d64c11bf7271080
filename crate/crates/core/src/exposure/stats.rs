//! Regional historical statistics keyed by (region, year).

use super::RegionId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("region {region}, year {year}: {msg}")]
    Invalid {
        region: RegionId,
        year: i32,
        msg: String,
    },
    #[error("duplicate statistics for region {region}, year {year}")]
    Duplicate { region: RegionId, year: i32 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SectorGdp {
    pub agriculture: f64,
    pub forestry: f64,
    pub industry: f64,
    pub services: f64,
}

impl SectorGdp {
    pub fn total(&self) -> f64 {
        self.agriculture + self.forestry + self.industry + self.services
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SectorWealth {
    pub agriculture: f64,
    pub forestry: f64,
    pub industry: f64,
    pub services: f64,
    pub dwellings: f64,
    pub infrastructure: f64,
}

impl SectorWealth {
    pub fn total(&self) -> f64 {
        self.agriculture
            + self.forestry
            + self.industry
            + self.services
            + self.dwellings
            + self.infrastructure
    }
}

/// Statistics of one region in one year.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegionYear {
    pub total_population: f64,
    pub urban_share: f64,
    pub persons_per_household: f64,
    /// Industrial production per capita, constant prices, baseline year = 1.
    pub industrial_index: f64,
    pub cropland_share: f64,
    pub pasture_share: f64,
    /// Cells covered by transport infrastructure.
    pub infrastructure_cells: f64,
    pub gdp: SectorGdp,
    pub wealth: SectorWealth,
}

impl RegionYear {
    fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("urban_share", self.urban_share),
            ("cropland_share", self.cropland_share),
            ("pasture_share", self.pasture_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.cropland_share + self.pasture_share > 1.0 + 1e-12 {
            return Err("cropland and pasture shares exceed 1".into());
        }
        let money = [
            self.gdp.agriculture,
            self.gdp.forestry,
            self.gdp.industry,
            self.gdp.services,
            self.wealth.agriculture,
            self.wealth.forestry,
            self.wealth.industry,
            self.wealth.services,
            self.wealth.dwellings,
            self.wealth.infrastructure,
        ];
        if money.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("monetary values must be finite and nonnegative".into());
        }
        for (name, v) in [
            ("total_population", self.total_population),
            ("infrastructure_cells", self.infrastructure_cells),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be nonnegative"));
            }
        }
        for (name, v) in [
            ("persons_per_household", self.persons_per_household),
            ("industrial_index", self.industrial_index),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsRow {
    region: RegionId,
    year: i32,
    total_population: f64,
    urban_share: f64,
    persons_per_household: f64,
    industrial_index: f64,
    cropland_share: f64,
    pasture_share: f64,
    infrastructure_cells: f64,
    gdp_agriculture: f64,
    gdp_forestry: f64,
    gdp_industry: f64,
    gdp_services: f64,
    wealth_agriculture: f64,
    wealth_forestry: f64,
    wealth_industry: f64,
    wealth_services: f64,
    wealth_dwellings: f64,
    wealth_infrastructure: f64,
}

/// Statistics table for all regions and years.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionStats {
    table: BTreeMap<(RegionId, i32), RegionYear>,
}

impl RegionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, region: RegionId, year: i32, stats: RegionYear) -> Result<(), StatsError> {
        stats.check().map_err(|msg| StatsError::Invalid { region, year, msg })?;
        if self.table.insert((region, year), stats).is_some() {
            return Err(StatsError::Duplicate { region, year });
        }
        Ok(())
    }

    pub fn get(&self, region: RegionId, year: i32) -> Option<&RegionYear> {
        self.table.get(&(region, year))
    }

    pub fn iter(&self) -> impl Iterator<Item = (RegionId, i32, &RegionYear)> {
        self.table.iter().map(|(&(r, y), s)| (r, y, s))
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.table.keys().map(|k| k.1).collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    pub fn read<R: Read>(source: R) -> Result<Self, StatsError> {
        let mut reader = csv::Reader::from_reader(source);
        let mut out = RegionStats::new();
        for row in reader.deserialize::<StatsRow>() {
            let r = row?;
            out.insert(
                r.region,
                r.year,
                RegionYear {
                    total_population: r.total_population,
                    urban_share: r.urban_share,
                    persons_per_household: r.persons_per_household,
                    industrial_index: r.industrial_index,
                    cropland_share: r.cropland_share,
                    pasture_share: r.pasture_share,
                    infrastructure_cells: r.infrastructure_cells,
                    gdp: SectorGdp {
                        agriculture: r.gdp_agriculture,
                        forestry: r.gdp_forestry,
                        industry: r.gdp_industry,
                        services: r.gdp_services,
                    },
                    wealth: SectorWealth {
                        agriculture: r.wealth_agriculture,
                        forestry: r.wealth_forestry,
                        industry: r.wealth_industry,
                        services: r.wealth_services,
                        dwellings: r.wealth_dwellings,
                        infrastructure: r.wealth_infrastructure,
                    },
                },
            )?;
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(writer);
        for (&(region, year), s) in &self.table {
            w.serialize(StatsRow {
                region,
                year,
                total_population: s.total_population,
                urban_share: s.urban_share,
                persons_per_household: s.persons_per_household,
                industrial_index: s.industrial_index,
                cropland_share: s.cropland_share,
                pasture_share: s.pasture_share,
                infrastructure_cells: s.infrastructure_cells,
                gdp_agriculture: s.gdp.agriculture,
                gdp_forestry: s.gdp.forestry,
                gdp_industry: s.gdp.industry,
                gdp_services: s.gdp.services,
                wealth_agriculture: s.wealth.agriculture,
                wealth_forestry: s.wealth.forestry,
                wealth_industry: s.wealth.industry,
                wealth_services: s.wealth.services,
                wealth_dwellings: s.wealth.dwellings,
                wealth_infrastructure: s.wealth.infrastructure,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
