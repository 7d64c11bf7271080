//! Refining a coarse population grid onto the fine land-use grid.
//!
//! Stage 1 splits each coarse cell's population between the land-use classes
//! present inside it with the iterative limiting-variable method: population
//! is spread at a uniform density over the habitable area, every class whose
//! density cap is exceeded is fixed at its cap, and the remainder is spread
//! again over the classes still open, until no open class exceeds its cap.
//! Stage 2 splits each class's share over its fine cells in proportion to
//! soil sealing.

use super::LandUseClass;
use crate::grid::Raster;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("fine grid {fine_rows}x{fine_cols} does not tile coarse grid {coarse_rows}x{coarse_cols}")]
    Tiling {
        coarse_rows: usize,
        coarse_cols: usize,
        fine_rows: usize,
        fine_cols: usize,
    },
    #[error("sealing grid shape differs from the land-use grid")]
    SealingShape,
    #[error("coarse cell ({row}, {col}) has population {population} but no habitable fine cell")]
    NoHabitableCell { row: usize, col: usize, population: f64 },
    #[error("coarse cell ({row}, {col}) has invalid population {population}")]
    InvalidPopulation { row: usize, col: usize, population: f64 },
}

/// Maximum persons per fine cell for each class; classes without an entry
/// are uncapped.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCaps(pub BTreeMap<LandUseClass, f64>);

impl Default for DensityCaps {
    fn default() -> Self {
        use LandUseClass::*;
        DensityCaps(
            [
                (Industry, 50.0),
                (Infrastructure, 20.0),
                (Airport, 5.0),
                (Port, 20.0),
                (Construction, 20.0),
                (Cropland, 20.0),
                (Pasture, 10.0),
                (Forest, 5.0),
                (NaturalOther, 5.0),
            ]
            .into_iter()
            .collect(),
        )
    }
}

impl DensityCaps {
    pub fn cap(&self, class: LandUseClass) -> f64 {
        self.0.get(&class).copied().unwrap_or(f64::INFINITY)
    }
}

/// Split one coarse cell's population between classes.
///
/// `areas` holds the number of fine cells of each habitable class present.
pub(crate) fn limiting_variable(
    population: f64,
    areas: &BTreeMap<LandUseClass, usize>,
    caps: &DensityCaps,
) -> BTreeMap<LandUseClass, f64> {
    let mut alloc: BTreeMap<LandUseClass, f64> = areas.keys().map(|&c| (c, 0.0)).collect();
    let mut open: Vec<LandUseClass> = areas.keys().copied().collect();
    let mut remaining = population;
    loop {
        let area: usize = open.iter().map(|c| areas[c]).sum();
        if area == 0 || remaining <= 0.0 {
            break;
        }
        let density = remaining / area as f64;
        let capped: Vec<LandUseClass> = open
            .iter()
            .copied()
            .filter(|&c| caps.cap(c) < density)
            .collect();
        if capped.is_empty() {
            for &c in &open {
                *alloc.get_mut(&c).unwrap() += density * areas[&c] as f64;
            }
            remaining = 0.0;
            break;
        }
        for c in capped {
            let amount = caps.cap(c) * areas[&c] as f64;
            *alloc.get_mut(&c).unwrap() += amount;
            remaining -= amount;
            open.retain(|&o| o != c);
        }
    }
    if remaining > 0.0 {
        // every class saturated: spread the rest by area so the total holds
        let area: usize = areas.values().sum();
        for (c, a) in areas {
            *alloc.get_mut(c).unwrap() += remaining * *a as f64 / area as f64;
        }
    }
    alloc
}

/// Disaggregate `coarse` population onto the fine `land_use` grid.
///
/// Each coarse cell must cover exactly k×k fine cells. Coarse totals are
/// conserved.
pub fn disaggregate_baseline(
    coarse: &Raster<f64>,
    land_use: &Raster<LandUseClass>,
    soil_sealing: &Raster<f64>,
    caps: &DensityCaps,
) -> Result<Raster<f64>, BaselineError> {
    let tiling = BaselineError::Tiling {
        coarse_rows: coarse.nrows,
        coarse_cols: coarse.ncols,
        fine_rows: land_use.nrows,
        fine_cols: land_use.ncols,
    };
    if coarse.nrows == 0 || land_use.nrows % coarse.nrows != 0 || coarse.ncols == 0 {
        return Err(tiling);
    }
    let k = land_use.nrows / coarse.nrows;
    if k == 0 || land_use.ncols != k * coarse.ncols {
        return Err(tiling);
    }
    if !soil_sealing.same_shape(land_use) {
        return Err(BaselineError::SealingShape);
    }
    let mut fine = Raster::filled(land_use.nrows, land_use.ncols, 0.0);
    for cr in 0..coarse.nrows {
        for cc in 0..coarse.ncols {
            let population = *coarse.get(cr, cc);
            if !(population.is_finite() && population >= 0.0) {
                return Err(BaselineError::InvalidPopulation {
                    row: cr,
                    col: cc,
                    population,
                });
            }
            if population == 0.0 {
                continue;
            }
            let mut by_class: BTreeMap<LandUseClass, Vec<usize>> = BTreeMap::new();
            for r in cr * k..(cr + 1) * k {
                for c in cc * k..(cc + 1) * k {
                    let class = *land_use.get(r, c);
                    if class.is_habitable() {
                        by_class.entry(class).or_default().push(land_use.index(r, c));
                    }
                }
            }
            if by_class.is_empty() {
                return Err(BaselineError::NoHabitableCell {
                    row: cr,
                    col: cc,
                    population,
                });
            }
            let areas = by_class.iter().map(|(c, v)| (*c, v.len())).collect();
            let alloc = limiting_variable(population, &areas, caps);
            for (class, cells) in &by_class {
                let amount = alloc[class];
                let sealing: f64 = cells.iter().map(|&i| soil_sealing.data[i].max(0.0)).sum();
                for &i in cells {
                    fine.data[i] = if sealing > 0.0 {
                        amount * soil_sealing.data[i].max(0.0) / sealing
                    } else {
                        amount / cells.len() as f64
                    };
                }
            }
        }
    }
    Ok(fine)
}
