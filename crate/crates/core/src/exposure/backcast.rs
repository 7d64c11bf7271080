//! Backcasting a baseline exposure grid to an earlier year.
//!
//! Each region is processed on its own, so regions run in parallel and the
//! results are merged by cell index. Inside a region the rules are applied
//! in a fixed order; every greedy removal or addition breaks ties on the
//! row-major cell index.

use super::{Cell, ExposureGrid, LandUseClass, RegionId, RegionStats, RegionYear};
use crate::exec::Execution;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BackcastError {
    #[error("target year {target} is after the baseline year {baseline}")]
    TargetAfterBaseline { target: i32, baseline: i32 },
    #[error("no statistics for region {region} in {year}")]
    MissingStats { region: RegionId, year: i32 },
    #[error("region {region}: negative target for {what}")]
    NegativeTarget { region: RegionId, what: &'static str },
    #[error("region {region}: {class:?} needs {shortfall} more cells than are available")]
    Shortfall {
        region: RegionId,
        class: LandUseClass,
        shortfall: usize,
    },
    #[error("region {region}: {population} rural persons but no habitable cell")]
    NoHabitableCell { region: RegionId, population: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackcastConfig {
    /// Persons per cell given to cells whose class changed, by new class.
    /// Classes not listed get zero.
    pub rural_density: BTreeMap<LandUseClass, f64>,
    /// Largest Chebyshev radius searched for natural cover when refilling.
    pub refill_radius: usize,
    /// Slope in degrees at which agricultural suitability drops to zero.
    pub slope_limit: f64,
    /// Construction sites are removed for target years up to this one.
    pub construction_until: i32,
    /// Burnt areas are removed for target years up to this one.
    pub burnt_until: i32,
}

impl Default for BackcastConfig {
    fn default() -> Self {
        use LandUseClass::*;
        BackcastConfig {
            rural_density: [
                (Cropland, 8.0),
                (Pasture, 4.0),
                (Forest, 1.0),
                (NaturalOther, 1.0),
                (Industry, 10.0),
                (Infrastructure, 2.0),
            ]
            .into_iter()
            .collect(),
            refill_radius: 8,
            slope_limit: 30.0,
            construction_until: 2005,
            burnt_until: 2000,
        }
    }
}

impl BackcastConfig {
    fn density(&self, class: LandUseClass) -> f64 {
        if !class.is_habitable() {
            return 0.0;
        }
        self.rural_density.get(&class).copied().unwrap_or(0.0)
    }
}

/// What happened to one region. Cell indices are row-major into the grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionLog {
    pub region: RegionId,
    /// Urban cells cleared completely, in removal order.
    pub urban_removed: Vec<usize>,
    /// Urban cell that lost part of its population, if any.
    pub urban_partial: Option<usize>,
    pub industry_removed: Vec<usize>,
    pub reservoirs_removed: Vec<usize>,
    pub infrastructure_removed: Vec<usize>,
    pub airports_removed: Vec<usize>,
    pub construction_removed: Vec<usize>,
    pub cropland_removed: Vec<usize>,
    pub cropland_added: Vec<usize>,
    pub pasture_removed: Vec<usize>,
    pub pasture_added: Vec<usize>,
    pub burnt_removed: Vec<usize>,
    /// Vacated cells and the natural class they were given.
    pub refilled: Vec<(usize, LandUseClass)>,
}

/// Backcast `baseline` to `target_year`.
///
/// `stats` must hold every region for both the baseline year and the target
/// year. GDP and wealth of the result are zero; see
/// [`super::disaggregate_economy`].
pub fn backcast(
    baseline: &ExposureGrid,
    stats: &RegionStats,
    target_year: i32,
    config: &BackcastConfig,
    exec: Execution,
) -> Result<ExposureGrid, BackcastError> {
    backcast_with_report(baseline, stats, target_year, config, exec).map(|(g, _)| g)
}

pub fn backcast_with_report(
    baseline: &ExposureGrid,
    stats: &RegionStats,
    target_year: i32,
    config: &BackcastConfig,
    exec: Execution,
) -> Result<(ExposureGrid, Vec<RegionLog>), BackcastError> {
    if target_year > baseline.year {
        return Err(BackcastError::TargetAfterBaseline {
            target: target_year,
            baseline: baseline.year,
        });
    }
    let regions: Vec<(RegionId, Vec<usize>)> = baseline.region_cells().into_iter().collect();
    let mut inputs = Vec::with_capacity(regions.len());
    for (region, _) in &regions {
        let base = stats.get(*region, baseline.year).ok_or(BackcastError::MissingStats {
            region: *region,
            year: baseline.year,
        })?;
        let target = stats.get(*region, target_year).ok_or(BackcastError::MissingStats {
            region: *region,
            year: target_year,
        })?;
        inputs.push((*base, *target));
    }
    if target_year == baseline.year {
        let logs = regions
            .iter()
            .map(|(r, _)| RegionLog {
                region: *r,
                ..Default::default()
            })
            .collect();
        return Ok((baseline.clone(), logs));
    }

    let results = exec.try_map(regions.len(), |k| {
        let (region, ref idx) = regions[k];
        let (base, target) = inputs[k];
        RegionState::new(baseline, region, idx).run(&base, &target, target_year, config)
    })?;

    let mut out = baseline.clone();
    out.year = target_year;
    out.gdp.iter_mut().for_each(|v| *v = 0.0);
    out.wealth.iter_mut().for_each(|v| *v = 0.0);
    let mut logs = Vec::with_capacity(results.len());
    for ((_, idx), (classes, population, log)) in regions.iter().zip(results) {
        for (j, &i) in idx.iter().enumerate() {
            out.cells[i].class = classes[j];
            out.cells[i].population = population[j];
        }
        logs.push(log);
    }
    Ok((out, logs))
}

struct RegionState<'a> {
    region: RegionId,
    grid: &'a ExposureGrid,
    /// Sorted global indices of the region's cells.
    idx: &'a [usize],
    base_class: Vec<LandUseClass>,
    class: Vec<LandUseClass>,
    pop: Vec<f64>,
    vacated: Vec<bool>,
    log: RegionLog,
}

fn by_dist_desc(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl<'a> RegionState<'a> {
    fn new(grid: &'a ExposureGrid, region: RegionId, idx: &'a [usize]) -> Self {
        let base_class: Vec<_> = idx.iter().map(|&i| grid.cells[i].class).collect();
        RegionState {
            region,
            grid,
            idx,
            class: base_class.clone(),
            base_class,
            pop: idx.iter().map(|&i| grid.cells[i].population).collect(),
            vacated: vec![false; idx.len()],
            log: RegionLog {
                region,
                ..Default::default()
            },
        }
    }

    fn cell(&self, j: usize) -> &Cell {
        &self.grid.cells[self.idx[j]]
    }

    fn dist(&self, j: usize) -> f64 {
        self.cell(j).dist_urban_centre
    }

    fn members(&self, class: LandUseClass) -> Vec<usize> {
        (0..self.idx.len()).filter(|&j| self.class[j] == class).collect()
    }

    fn vacate(&mut self, j: usize) -> usize {
        self.class[j] = LandUseClass::Unoccupied;
        self.pop[j] = 0.0;
        self.vacated[j] = true;
        self.idx[j]
    }

    /// Cells of `class` in removal order: furthest from the centre first.
    fn furthest_first(&self, class: LandUseClass) -> Vec<usize> {
        let mut m = self.members(class);
        m.sort_by(|&a, &b| by_dist_desc((self.dist(a), a), (self.dist(b), b)));
        m
    }

    /// Remove cells of `class` furthest-first until `target` remain.
    fn reduce_to(&mut self, class: LandUseClass, target: usize) -> Vec<usize> {
        let order = self.furthest_first(class);
        let excess = order.len().saturating_sub(target);
        order[..excess].iter().map(|&j| self.vacate(j)).collect()
    }

    fn remove_built_after(&mut self, class: LandUseClass, year: i32) -> Vec<usize> {
        let hit: Vec<usize> = self
            .members(class)
            .into_iter()
            .filter(|&j| self.cell(j).built_year.is_some_and(|b| b > year))
            .collect();
        hit.into_iter().map(|j| self.vacate(j)).collect()
    }

    fn remove_all(&mut self, class: LandUseClass) -> Vec<usize> {
        self.members(class).into_iter().map(|j| self.vacate(j)).collect()
    }

    fn suitability(&self, j: usize, class: LandUseClass, config: &BackcastConfig) -> f64 {
        let c = self.cell(j);
        let s = if class == LandUseClass::Cropland {
            c.suitability_cereal
        } else {
            c.suitability_alfalfa
        };
        s * (1.0 - c.slope / config.slope_limit).max(0.0)
    }

    /// Bring the cell count of an agricultural class to `target`: least
    /// suitable cells go first, the most suitable free cells are added first.
    fn adjust_agricultural(
        &mut self,
        class: LandUseClass,
        target: usize,
        config: &BackcastConfig,
    ) -> Result<(Vec<usize>, Vec<usize>), BackcastError> {
        let mut current = self.members(class);
        let key = |s: &Self, j: usize| s.suitability(j, class, config);
        let mut removed = Vec::new();
        let mut added = Vec::new();
        if current.len() > target {
            current.sort_by(|&a, &b| {
                key(self, a)
                    .total_cmp(&key(self, b))
                    .then(self.dist(b).total_cmp(&self.dist(a)))
                    .then(a.cmp(&b))
            });
            let excess = current.len() - target;
            for &j in &current[..excess] {
                removed.push(self.vacate(j));
            }
        } else if current.len() < target {
            let mut pool: Vec<usize> = (0..self.idx.len())
                .filter(|&j| {
                    matches!(
                        self.class[j],
                        LandUseClass::Unoccupied | LandUseClass::Forest | LandUseClass::NaturalOther
                    )
                })
                .collect();
            let need = target - current.len();
            if pool.len() < need {
                return Err(BackcastError::Shortfall {
                    region: self.region,
                    class,
                    shortfall: need - pool.len(),
                });
            }
            pool.sort_by(|&a, &b| {
                key(self, b)
                    .total_cmp(&key(self, a))
                    .then(self.dist(a).total_cmp(&self.dist(b)))
                    .then(a.cmp(&b))
            });
            for &j in &pool[..need] {
                self.class[j] = class;
                self.vacated[j] = false;
                added.push(self.idx[j]);
            }
        }
        Ok((removed, added))
    }

    /// Majority natural class in the smallest ring around cell `j` that
    /// holds any natural cover of the same region; forest by default.
    fn neighbourhood_cover(&self, j: usize, snapshot: &[LandUseClass], radius: usize) -> LandUseClass {
        let g = self.grid;
        let (r0, c0) = ((self.idx[j] / g.ncols) as i64, (self.idx[j] % g.ncols) as i64);
        for d in 1..=radius as i64 {
            let (mut forest, mut other) = (0usize, 0usize);
            for r in r0 - d..=r0 + d {
                for c in c0 - d..=c0 + d {
                    if (r - r0).abs() != d && (c - c0).abs() != d {
                        continue;
                    }
                    if r < 0 || c < 0 || r >= g.nrows as i64 || c >= g.ncols as i64 {
                        continue;
                    }
                    let gi = r as usize * g.ncols + c as usize;
                    let Ok(k) = self.idx.binary_search(&gi) else {
                        continue;
                    };
                    match snapshot[k] {
                        LandUseClass::Forest => forest += 1,
                        LandUseClass::NaturalOther => other += 1,
                        _ => {}
                    }
                }
            }
            if forest + other > 0 {
                return if other > forest {
                    LandUseClass::NaturalOther
                } else {
                    LandUseClass::Forest
                };
            }
        }
        LandUseClass::Forest
    }

    fn run(
        mut self,
        base: &RegionYear,
        target: &RegionYear,
        year: i32,
        config: &BackcastConfig,
    ) -> Result<(Vec<LandUseClass>, Vec<f64>, RegionLog), BackcastError> {
        use LandUseClass::*;
        let region = self.region;
        let urban_target = target.urban_share * target.total_population;
        if !(urban_target >= 0.0 && target.total_population >= 0.0) {
            return Err(BackcastError::NegativeTarget {
                region,
                what: "population",
            });
        }
        let household_ratio = target.persons_per_household / base.persons_per_household;

        // 1. urban population follows household size
        for j in self.members(Urban) {
            self.pop[j] *= household_ratio;
        }

        // 2. urban population and fabric, furthest cells first
        let urban_pop: f64 = self.members(Urban).iter().map(|&j| self.pop[j]).sum();
        if urban_pop > urban_target {
            let mut surplus = urban_pop - urban_target;
            for j in self.furthest_first(Urban) {
                if surplus <= 0.0 {
                    break;
                }
                if self.pop[j] <= surplus {
                    surplus -= self.pop[j];
                    let gi = self.vacate(j);
                    self.log.urban_removed.push(gi);
                } else {
                    self.pop[j] -= surplus;
                    surplus = 0.0;
                    self.log.urban_partial = Some(self.idx[j]);
                }
            }
        } else if urban_pop > 0.0 {
            let scale = urban_target / urban_pop;
            for j in self.members(Urban) {
                self.pop[j] *= scale;
            }
        }

        // 3. industry follows industrial production per capita
        let n_industry = self.members(Industry).len() as f64;
        let industry_target =
            (n_industry * target.industrial_index / base.industrial_index).round().max(0.0) as usize;
        self.log.industry_removed = self.reduce_to(Industry, industry_target);

        // 4. reservoirs not yet built
        self.log.reservoirs_removed = self.remove_built_after(Reservoir, year);

        // 5. transport infrastructure
        let infra_target = target.infrastructure_cells.round().max(0.0) as usize;
        self.log.infrastructure_removed = self.reduce_to(Infrastructure, infra_target);

        // 6. airports not yet built
        self.log.airports_removed = self.remove_built_after(Airport, year);

        // 7. construction sites
        if year <= config.construction_until {
            self.log.construction_removed = self.remove_all(Construction);
        }

        // 8-9. agricultural land
        let land = self.class.iter().filter(|&&c| c != Water).count() as f64;
        let crop_target = (target.cropland_share * land).round() as usize;
        let (r, a) = self.adjust_agricultural(Cropland, crop_target, config)?;
        self.log.cropland_removed = r;
        self.log.cropland_added = a;
        let pasture_target = (target.pasture_share * land).round() as usize;
        let (r, a) = self.adjust_agricultural(Pasture, pasture_target, config)?;
        self.log.pasture_removed = r;
        self.log.pasture_added = a;

        // 10. burnt areas
        if year <= config.burnt_until {
            self.log.burnt_removed = self.remove_all(Burnt);
        }

        // 11. vacated cells take the surrounding natural cover
        let snapshot = self.class.clone();
        for j in 0..self.idx.len() {
            if self.vacated[j] && self.class[j] == Unoccupied {
                let cover = self.neighbourhood_cover(j, &snapshot, config.refill_radius);
                self.class[j] = cover;
                self.log.refilled.push((self.idx[j], cover));
            }
        }

        // 12. rural population
        let mut rural = Vec::new();
        for j in 0..self.idx.len() {
            let class = self.class[j];
            if class == Urban {
                continue;
            }
            if class != self.base_class[j] {
                self.pop[j] = config.density(class);
            } else if class.is_habitable() {
                self.pop[j] *= household_ratio;
            } else {
                self.pop[j] = 0.0;
            }
            if class.is_habitable() {
                rural.push(j);
            }
        }
        let urban_now: f64 = self.members(Urban).iter().map(|&j| self.pop[j]).sum();
        let rural_target = (target.total_population - urban_now).max(0.0);
        let rural_now: f64 = rural.iter().map(|&j| self.pop[j]).sum();
        if rural_now > rural_target {
            let mut surplus = rural_now - rural_target;
            rural.sort_by(|&a, &b| by_dist_desc((self.dist(a), a), (self.dist(b), b)));
            for &j in &rural {
                if surplus <= 0.0 {
                    break;
                }
                let take = self.pop[j].min(surplus);
                self.pop[j] -= take;
                surplus -= take;
            }
        } else if rural_now < rural_target {
            let deficit = rural_target - rural_now;
            let targets = if rural.is_empty() {
                self.members(Urban)
            } else {
                rural
            };
            if targets.is_empty() {
                return Err(BackcastError::NoHabitableCell {
                    region,
                    population: deficit,
                });
            }
            let weights: Vec<f64> = targets.iter().map(|&j| 1.0 / (1.0 + self.dist(j))).collect();
            let total: f64 = weights.iter().sum();
            for (&j, w) in targets.iter().zip(weights) {
                self.pop[j] += deficit * w / total;
            }
        }

        Ok((self.class, self.pop, self.log))
    }
}
