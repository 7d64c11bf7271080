//! Spreading regional GDP and wealth over the cells of each region.

use super::{ExposureGrid, LandUseClass, RegionId, RegionStats};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Agriculture,
    Forestry,
    Industry,
    Services,
    /// Wealth only.
    Dwellings,
    /// Wealth only.
    Infrastructure,
}

#[derive(Debug, Error, PartialEq)]
pub enum EconomyError {
    #[error("no statistics for region {region} in {year}")]
    MissingStats { region: RegionId, year: i32 },
    #[error("region {region}: {sector:?} total {total} has no eligible cell")]
    NoEligibleCell {
        region: RegionId,
        sector: Sector,
        total: f64,
    },
}

/// Which cells take a sector's value: `by_population` of it proportional to
/// population over the first pool, the rest uniformly over the second.
struct Scheme {
    by_population: f64,
    population_pool: fn(LandUseClass) -> bool,
    uniform_pool: fn(LandUseClass) -> bool,
}

fn scheme(sector: Sector) -> Scheme {
    use LandUseClass::*;
    match sector {
        Sector::Agriculture => Scheme {
            by_population: 0.5,
            population_pool: LandUseClass::is_agricultural,
            uniform_pool: LandUseClass::is_agricultural,
        },
        Sector::Forestry => Scheme {
            by_population: 0.5,
            population_pool: |c| c == Forest,
            uniform_pool: |c| c == Forest,
        },
        Sector::Industry => Scheme {
            by_population: 0.5,
            population_pool: |_| true,
            uniform_pool: |c| matches!(c, Industry | Construction),
        },
        Sector::Services => Scheme {
            by_population: 0.5,
            population_pool: |_| true,
            uniform_pool: |c| matches!(c, Urban | Airport | Port),
        },
        Sector::Dwellings => Scheme {
            by_population: 1.0,
            population_pool: |_| true,
            uniform_pool: |_| false,
        },
        Sector::Infrastructure => Scheme {
            by_population: 0.0,
            population_pool: |_| false,
            uniform_pool: |c| matches!(c, Urban | Airport | Port | Infrastructure),
        },
    }
}

/// Add `total` of `sector` over the region's cells into `out`.
fn spread(
    grid: &ExposureGrid,
    region: RegionId,
    cells: &[usize],
    sector: Sector,
    total: f64,
    out: &mut [f64],
) -> Result<(), EconomyError> {
    if total == 0.0 {
        return Ok(());
    }
    let s = scheme(sector);
    let pop_cells: Vec<usize> = cells
        .iter()
        .copied()
        .filter(|&i| (s.population_pool)(grid.cells[i].class))
        .collect();
    let pop_sum: f64 = pop_cells.iter().map(|&i| grid.cells[i].population).sum();
    let uni_cells: Vec<usize> = cells
        .iter()
        .copied()
        .filter(|&i| (s.uniform_pool)(grid.cells[i].class))
        .collect();
    let mut share_pop = s.by_population;
    if pop_sum <= 0.0 {
        share_pop = 0.0;
    } else if uni_cells.is_empty() {
        share_pop = 1.0;
    }
    if share_pop == 0.0 && uni_cells.is_empty() {
        return Err(EconomyError::NoEligibleCell {
            region,
            sector,
            total,
        });
    }
    if share_pop > 0.0 {
        let part = total * share_pop;
        for &i in &pop_cells {
            out[i] += part * grid.cells[i].population / pop_sum;
        }
    }
    if share_pop < 1.0 {
        let each = total * (1.0 - share_pop) / uni_cells.len() as f64;
        for &i in &uni_cells {
            out[i] += each;
        }
    }
    Ok(())
}

/// Fill `gdp` and `wealth` of `grid` from the sectoral totals of its year.
/// Population must already be in place.
pub fn disaggregate_economy(grid: &ExposureGrid, stats: &RegionStats) -> Result<ExposureGrid, EconomyError> {
    let mut out = grid.clone();
    out.gdp.iter_mut().for_each(|v| *v = 0.0);
    out.wealth.iter_mut().for_each(|v| *v = 0.0);
    for (region, cells) in grid.region_cells() {
        let st = stats.get(region, grid.year).ok_or(EconomyError::MissingStats {
            region,
            year: grid.year,
        })?;
        let g = st.gdp;
        for (sector, total) in [
            (Sector::Agriculture, g.agriculture),
            (Sector::Forestry, g.forestry),
            (Sector::Industry, g.industry),
            (Sector::Services, g.services),
        ] {
            spread(grid, region, &cells, sector, total, &mut out.gdp)?;
        }
        let w = st.wealth;
        for (sector, total) in [
            (Sector::Agriculture, w.agriculture),
            (Sector::Forestry, w.forestry),
            (Sector::Industry, w.industry),
            (Sector::Services, w.services),
            (Sector::Dwellings, w.dwellings),
            (Sector::Infrastructure, w.infrastructure),
        ] {
            spread(grid, region, &cells, sector, total, &mut out.wealth)?;
        }
    }
    Ok(out)
}
