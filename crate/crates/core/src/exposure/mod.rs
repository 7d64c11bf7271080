//! Gridded exposure: land use, population, GDP and wealth per cell.
//!
//! A baseline grid is backcast to earlier years by redistributing land use
//! and population inside each region until the regional statistics for the
//! target year are matched. GDP and wealth are then spread over the cells of
//! each region from sectoral totals.

mod backcast;
mod baseline;
mod economy;
mod io;
mod stats;

pub use backcast::{backcast, backcast_with_report, BackcastConfig, BackcastError, RegionLog};
pub use baseline::{disaggregate_baseline, BaselineError, DensityCaps};
pub use economy::{disaggregate_economy, EconomyError, Sector};
pub use io::{load_grid_dir, write_exposure_grids, GridFiles, LoadError};
pub use stats::{RegionStats, RegionYear, SectorGdp, SectorWealth, StatsError};

use crate::footprint::Footprint;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Region identifier as stored in the region grid.
pub type RegionId = u32;

/// Land-use class of a cell. The discriminant is the integer code used in
/// land-use grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum LandUseClass {
    Urban = 1,
    Industry = 2,
    Infrastructure = 3,
    Airport = 4,
    Port = 5,
    Construction = 6,
    Reservoir = 7,
    Cropland = 8,
    Pasture = 9,
    Forest = 10,
    NaturalOther = 11,
    Burnt = 12,
    Water = 13,
    Unoccupied = 14,
}

impl LandUseClass {
    pub const ALL: [LandUseClass; 14] = [
        LandUseClass::Urban,
        LandUseClass::Industry,
        LandUseClass::Infrastructure,
        LandUseClass::Airport,
        LandUseClass::Port,
        LandUseClass::Construction,
        LandUseClass::Reservoir,
        LandUseClass::Cropland,
        LandUseClass::Pasture,
        LandUseClass::Forest,
        LandUseClass::NaturalOther,
        LandUseClass::Burnt,
        LandUseClass::Water,
        LandUseClass::Unoccupied,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Option<Self> {
        LandUseClass::ALL.into_iter().find(|c| i64::from(c.code()) == code)
    }

    /// Classes that may hold population.
    pub fn is_habitable(self) -> bool {
        !matches!(
            self,
            LandUseClass::Water
                | LandUseClass::Reservoir
                | LandUseClass::Burnt
                | LandUseClass::Unoccupied
        )
    }

    /// Natural cover used to refill vacated land.
    pub fn is_natural(self) -> bool {
        matches!(self, LandUseClass::Forest | LandUseClass::NaturalOther)
    }

    pub fn is_agricultural(self) -> bool {
        matches!(self, LandUseClass::Cropland | LandUseClass::Pasture)
    }
}

/// One grid cell. Row and column are implied by the cell's position.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// `None` for cells outside every region (nodata in the region grid).
    pub region: Option<RegionId>,
    pub class: LandUseClass,
    pub population: f64,
    /// Degrees.
    pub slope: f64,
    pub suitability_cereal: f64,
    pub suitability_alfalfa: f64,
    /// Distance to the region's urban centre, in cells.
    pub dist_urban_centre: f64,
    pub soil_sealing: f64,
    /// Year of construction for reservoirs and airports.
    pub built_year: Option<i32>,
}

impl Cell {
    pub fn new(region: RegionId, class: LandUseClass) -> Self {
        Cell {
            region: Some(region),
            class,
            population: 0.0,
            slope: 0.0,
            suitability_cereal: 0.0,
            suitability_alfalfa: 0.0,
            dist_urban_centre: 0.0,
            soil_sealing: 0.0,
            built_year: None,
        }
    }
}

/// Exposure for one year on a dense grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureGrid {
    pub year: i32,
    pub nrows: usize,
    pub ncols: usize,
    /// Metres.
    pub cellsize: f64,
    pub cells: Vec<Cell>,
    /// 2011 euros per cell.
    pub gdp: Vec<f64>,
    pub wealth: Vec<f64>,
}

/// Population, GDP and wealth totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub population: f64,
    pub gdp: f64,
    pub wealth: f64,
}

/// Exposure summed over a footprint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExposureAggregates {
    pub population: f64,
    pub gdp: f64,
    pub wealth: f64,
    pub cell_count: usize,
    pub empty: bool,
}

impl ExposureGrid {
    pub fn new(year: i32, nrows: usize, ncols: usize, cellsize: f64, cells: Vec<Cell>) -> Self {
        assert_eq!(cells.len(), nrows * ncols, "cell count");
        let n = cells.len();
        ExposureGrid {
            year,
            nrows,
            ncols,
            cellsize,
            cells,
            gdp: vec![0.0; n],
            wealth: vec![0.0; n],
        }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[self.index(row, col)]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut Cell {
        let i = self.index(row, col);
        &mut self.cells[i]
    }

    /// Cell area in km².
    pub fn cell_area_km2(&self) -> f64 {
        self.cellsize * self.cellsize / 1e6
    }

    /// Row-major cell indices of every region.
    pub fn region_cells(&self) -> BTreeMap<RegionId, Vec<usize>> {
        let mut map: BTreeMap<RegionId, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.cells.iter().enumerate() {
            if let Some(r) = c.region {
                map.entry(r).or_default().push(i);
            }
        }
        map
    }

    pub fn region_totals(&self) -> BTreeMap<RegionId, Totals> {
        let mut map: BTreeMap<RegionId, Totals> = BTreeMap::new();
        for (i, c) in self.cells.iter().enumerate() {
            if let Some(r) = c.region {
                let t = map.entry(r).or_default();
                t.population += c.population;
                t.gdp += self.gdp[i];
                t.wealth += self.wealth[i];
            }
        }
        map
    }

    /// Recompute `dist_urban_centre` for every cell from the current urban
    /// cells: the centre of a region is the population-weighted centroid of
    /// its urban cells, falling back to the population-weighted and then the
    /// plain centroid of all its cells.
    pub fn compute_urban_centre_distances(&mut self) {
        let centres = self.urban_centres();
        let ncols = self.ncols;
        for (i, c) in self.cells.iter_mut().enumerate() {
            if let Some(r) = c.region {
                let (cr, cc) = centres[&r];
                let dr = (i / ncols) as f64 - cr;
                let dc = (i % ncols) as f64 - cc;
                c.dist_urban_centre = (dr * dr + dc * dc).sqrt();
            }
        }
    }

    pub fn urban_centres(&self) -> BTreeMap<RegionId, (f64, f64)> {
        #[derive(Default)]
        struct Acc {
            urban: (f64, f64, f64),
            pop: (f64, f64, f64),
            all: (f64, f64, f64),
        }
        let mut acc: BTreeMap<RegionId, Acc> = BTreeMap::new();
        for (i, c) in self.cells.iter().enumerate() {
            let Some(r) = c.region else { continue };
            let (row, col) = ((i / self.ncols) as f64, (i % self.ncols) as f64);
            let a = acc.entry(r).or_default();
            let p = c.population;
            if c.class == LandUseClass::Urban {
                a.urban.0 += p * row;
                a.urban.1 += p * col;
                a.urban.2 += p;
            }
            a.pop.0 += p * row;
            a.pop.1 += p * col;
            a.pop.2 += p;
            a.all.0 += row;
            a.all.1 += col;
            a.all.2 += 1.0;
        }
        acc.into_iter()
            .map(|(r, a)| {
                let w = [a.urban, a.pop, a.all]
                    .into_iter()
                    .find(|w| w.2 > 0.0)
                    .unwrap_or((0.0, 0.0, 1.0));
                (r, (w.0 / w.2, w.1 / w.2))
            })
            .collect()
    }
}

/// Sum population, GDP and wealth over the footprint's cells.
pub fn exposure_in(footprint: &Footprint, grid: &ExposureGrid) -> ExposureAggregates {
    let mut agg = ExposureAggregates {
        cell_count: footprint.cells.len(),
        empty: footprint.cells.is_empty(),
        ..Default::default()
    };
    for &(r, c) in &footprint.cells {
        let i = grid.index(r, c);
        agg.population += grid.cells[i].population;
        agg.gdp += grid.gdp[i];
        agg.wealth += grid.wealth[i];
    }
    agg
}
