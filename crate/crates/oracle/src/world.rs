//! A small synthetic world: regions, land use, hazard masks, annual
//! regional statistics 1870-2016 and a flood catalog whose damages follow a
//! [`SyntheticSpec`].

use crate::synth::{generate_catalog, SyntheticCatalog, SyntheticSpec, Thinning};
use crate::OracleError;
use floodrisk::events::{write_catalog, FloodEvent, FloodType};
use floodrisk::exposure::{LandUseClass, RegionId, RegionStats, RegionYear, SectorGdp, SectorWealth};
use floodrisk::grid::{AsciiGrid, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub nrows: usize,
    pub ncols: usize,
    /// Regions are a `regions_y` × `regions_x` block layout; each block row
    /// is one country.
    pub regions_x: usize,
    pub regions_y: usize,
    /// Metres.
    pub cellsize: f64,
    pub baseline_year: i32,
    pub first_year: i32,
    pub last_year: i32,
    pub catalog: SyntheticSpec,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            nrows: 48,
            ncols: 64,
            regions_x: 4,
            regions_y: 3,
            cellsize: 1000.0,
            baseline_year: 2011,
            first_year: 1870,
            last_year: 2016,
            catalog: SyntheticSpec {
                n_events: 500,
                b_true: 0.012,
                missing: [0.85, 0.02, 0.5, 0.6],
                thinning: [1u8, 2, 3, 4]
                    .iter()
                    .flat_map(|&q| {
                        [(1870, 1929, 0.4), (1930, 1989, 0.7)].map(|(s, e, k)| Thinning {
                            start: s,
                            end: e,
                            quintile: q,
                            keep: k + 0.05 * q as f64,
                        })
                    })
                    .collect(),
                ..SyntheticSpec::default()
            },
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    pub region: Raster<Option<RegionId>>,
    pub land_use: Raster<LandUseClass>,
    pub population: Raster<f64>,
    pub slope: Raster<f64>,
    pub suitability_cereal: Raster<f64>,
    pub suitability_alfalfa: Raster<f64>,
    pub sealing: Raster<f64>,
    pub built_year: Raster<Option<i32>>,
    pub river_mask: Raster<bool>,
    pub coastal_mask: Raster<bool>,
    pub region_codes: BTreeMap<RegionId, String>,
    pub stats: RegionStats,
    pub events: Vec<FloodEvent>,
    pub truth: SyntheticCatalog,
}

const COUNTRIES: [&str; 6] = ["AA", "BB", "CC", "DD", "EE", "FF"];

struct Noise {
    terms: Vec<(f64, f64, f64, f64)>,
}

impl Noise {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..4)
            .map(|k| {
                let scale = 1.0 / (k + 1) as f64;
                (
                    rng.random_range(0.05..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(0.0..6.3),
                    scale,
                )
            })
            .collect();
        Noise { terms }
    }

    /// Smooth field in [0, 1].
    fn at(&self, r: usize, c: usize) -> f64 {
        let (mut s, mut w) = (0.0, 0.0);
        for &(a, b, phase, scale) in &self.terms {
            s += scale * (a * r as f64 + b * c as f64 + phase).sin();
            w += scale;
        }
        0.5 + 0.5 * s / w
    }
}

fn smooth_step(year: i32, first: i32, baseline: i32) -> f64 {
    ((year - first) as f64 / (baseline - first) as f64).clamp(0.0, 1.0)
}

impl World {
    pub fn generate(spec: &WorldSpec) -> Result<World, OracleError> {
        if spec.regions_y > COUNTRIES.len() || spec.regions_x == 0 || spec.regions_y == 0 {
            return Err(OracleError::Spec("unsupported region layout".into()));
        }
        let (nr, nc) = (spec.nrows, spec.ncols);
        let bh = nr / spec.regions_y;
        let bw = nc / spec.regions_x;
        if bh < 8 || bw < 8 {
            return Err(OracleError::Spec("region blocks must be at least 8x8 cells".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let relief = Noise::new(&mut rng);
        let cereal = Noise::new(&mut rng);
        let alfalfa = Noise::new(&mut rng);
        let cover = Noise::new(&mut rng);

        let region_of = |r: usize, c: usize| -> RegionId {
            let by = (r / bh).min(spec.regions_y - 1);
            let bx = (c / bw).min(spec.regions_x - 1);
            (by * spec.regions_x + bx + 1) as RegionId
        };
        let n_regions = spec.regions_x * spec.regions_y;
        let mut region_codes = BTreeMap::new();
        for id in 1..=n_regions as RegionId {
            let by = (id as usize - 1) / spec.regions_x;
            region_codes.insert(id, format!("{}{:03}", COUNTRIES[by], id));
        }
        let rivers: Vec<usize> = (0..spec.regions_x)
            .filter(|bx| bx % 3 != 2)
            .map(|bx| bx * bw + bw / 2)
            .collect();
        let sea_row = nr - 1;

        let mut centres = BTreeMap::new();
        for id in 1..=n_regions as RegionId {
            let by = (id as usize - 1) / spec.regions_x;
            let bx = (id as usize - 1) % spec.regions_x;
            let cr = by * bh + bh / 2 + rng.random_range(0..3) - 1;
            let cc = bx * bw + bw / 2 + rng.random_range(0..3) - 1;
            centres.insert(id, (cr, cc, rng.random_range(1.6..2.6)));
        }

        let n = nr * nc;
        let mut region = Raster::filled(nr, nc, None);
        let mut land_use = Raster::filled(nr, nc, LandUseClass::NaturalOther);
        let mut population = Raster::filled(nr, nc, 0.0);
        let mut slope = Raster::filled(nr, nc, 0.0);
        let mut suit_c = Raster::filled(nr, nc, 0.0);
        let mut suit_a = Raster::filled(nr, nc, 0.0);
        let mut sealing = Raster::filled(nr, nc, 0.0);
        let mut built = Raster::filled(nr, nc, None);
        let mut river_mask = Raster::filled(nr, nc, false);
        let mut coastal_mask = Raster::filled(nr, nc, false);

        for r in 0..nr {
            for c in 0..nc {
                let i = r * nc + c;
                let id = region_of(r, c);
                region.data[i] = Some(id);
                let (cr, cc, ru) = centres[&id];
                let d = ((r as f64 - cr as f64).powi(2) + (c as f64 - cc as f64).powi(2)).sqrt();
                let s = 40.0 * relief.at(r, c).powi(2);
                slope.data[i] = s;
                suit_c.data[i] = cereal.at(r, c);
                suit_a.data[i] = alfalfa.at(r, c);
                let river_d = rivers.iter().map(|&x| x.abs_diff(c)).min().unwrap_or(usize::MAX);
                river_mask.data[i] = river_d <= 3;
                coastal_mask.data[i] = r + 4 >= nr;
                let class = if r == sea_row || river_d == 0 {
                    LandUseClass::Water
                } else if d < ru {
                    LandUseClass::Urban
                } else if d < ru + 1.5 {
                    match rng.random_range(0..10) {
                        0..=3 => LandUseClass::Industry,
                        4 => LandUseClass::Construction,
                        _ => LandUseClass::Urban,
                    }
                } else if r == cr && d < ru + 6.0 {
                    LandUseClass::Infrastructure
                } else if s >= 30.0 {
                    LandUseClass::Forest
                } else if rng.random::<f64>() < 0.004 {
                    LandUseClass::Burnt
                } else if suit_c.data[i] * (1.0 - s / 30.0) > 0.45 {
                    LandUseClass::Cropland
                } else if suit_a.data[i] > 0.6 {
                    LandUseClass::Pasture
                } else if cover.at(r, c) > 0.45 {
                    LandUseClass::Forest
                } else if rng.random::<f64>() < 0.1 {
                    LandUseClass::Unoccupied
                } else {
                    LandUseClass::NaturalOther
                };
                land_use.data[i] = class;
                sealing.data[i] = match class {
                    LandUseClass::Urban => rng.random_range(0.6..0.95),
                    LandUseClass::Industry | LandUseClass::Infrastructure => rng.random_range(0.4..0.8),
                    _ => rng.random_range(0.0..0.1),
                };
                population.data[i] = match class {
                    LandUseClass::Urban => 400.0 + 2500.0 * (-d / 2.5).exp() * rng.random_range(0.8..1.2),
                    LandUseClass::Industry => 20.0,
                    LandUseClass::Infrastructure => 4.0,
                    LandUseClass::Construction => 5.0,
                    LandUseClass::Cropland => rng.random_range(8.0..25.0),
                    LandUseClass::Pasture => rng.random_range(4.0..12.0),
                    LandUseClass::Forest => rng.random_range(0.0..3.0),
                    LandUseClass::NaturalOther => rng.random_range(0.0..2.0),
                    _ => 0.0,
                };
            }
        }
        // one airport per region, one reservoir in every other region, one
        // port per coastal region
        for id in 1..=n_regions as RegionId {
            let (cr, cc, ru) = centres[&id];
            let ar = (cr + ru as usize + 3).min(nr - 2);
            let i = ar * nc + cc;
            if land_use.data[i] != LandUseClass::Water {
                land_use.data[i] = LandUseClass::Airport;
                population.data[i] = 2.0;
                built.data[i] = Some(rng.random_range(1925..1990));
            }
            if id % 2 == 0 {
                let rr = cr.saturating_sub(ru as usize + 3).max(1);
                for dc in 0..2 {
                    let i = rr * nc + (cc + 2 + dc).min(nc - 1);
                    if region.data[i] == Some(id) && land_use.data[i] != LandUseClass::Water {
                        land_use.data[i] = LandUseClass::Reservoir;
                        population.data[i] = 0.0;
                        built.data[i] = Some(rng.random_range(1940..1995));
                    }
                }
            }
            let by = (id as usize - 1) / spec.regions_x;
            if by == spec.regions_y - 1 {
                let i = (sea_row - 1) * nc + cc;
                if land_use.data[i] != LandUseClass::Water {
                    land_use.data[i] = LandUseClass::Port;
                    population.data[i] = 10.0;
                }
            }
        }

        let stats = regional_stats(spec, &region, &land_use, &population, &mut rng, n_regions)?;

        let truth = generate_catalog(&spec.catalog)?;
        let events = place_events(
            spec,
            &truth,
            &region,
            &population,
            &river_mask,
            &coastal_mask,
            &stats,
            &region_codes,
            &mut rng,
        );
        debug_assert_eq!(n, region.len());

        Ok(World {
            spec: spec.clone(),
            region,
            land_use,
            population,
            slope,
            suitability_cereal: suit_c,
            suitability_alfalfa: suit_a,
            sealing,
            built_year: built,
            river_mask,
            coastal_mask,
            region_codes,
            stats,
            events,
            truth,
        })
    }

    /// Write the world as an input directory with a pipeline config.
    /// Returns the config path.
    pub fn write_dir(&self, dir: &Path, mc_replicates: usize, conditional_samples: usize) -> std::io::Result<PathBuf> {
        let grids = dir.join("grids");
        std::fs::create_dir_all(&grids)?;
        let cs = self.spec.cellsize;
        let asc = |name: &str, data: Vec<f64>| -> std::io::Result<()> {
            AsciiGrid::new(Raster::from_vec(self.spec.nrows, self.spec.ncols, data), cs, -9999.0)
                .write_path(&grids.join(name))
                .map_err(std::io::Error::other)
        };
        asc("region.asc", self.region.data.iter().map(|r| r.map_or(-9999.0, f64::from)).collect())?;
        asc("landuse.asc", self.land_use.data.iter().map(|c| f64::from(c.code())).collect())?;
        asc("population.asc", self.population.data.clone())?;
        asc("slope.asc", self.slope.data.clone())?;
        asc("suit_cereal.asc", self.suitability_cereal.data.clone())?;
        asc("suit_alfalfa.asc", self.suitability_alfalfa.data.clone())?;
        asc("sealing.asc", self.sealing.data.clone())?;
        asc(
            "built_year.asc",
            self.built_year.data.iter().map(|y| y.map_or(-9999.0, f64::from)).collect(),
        )?;
        let bools = |m: &Raster<bool>| m.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        asc("mask_river.asc", bools(&self.river_mask))?;
        asc("mask_coastal.asc", bools(&self.coastal_mask))?;

        let mut codes = String::from("grid_value,code\n");
        for (id, code) in &self.region_codes {
            let _ = writeln!(codes, "{id},{code}");
        }
        std::fs::write(dir.join("regions.csv"), codes)?;
        let stats = std::fs::File::create(dir.join("region_stats.csv"))?;
        self.stats.write(stats).map_err(std::io::Error::other)?;
        let events = std::fs::File::create(dir.join("events.csv"))?;
        write_catalog(events, &self.events).map_err(std::io::Error::other)?;

        let config = format!(
            "events = \"events.csv\"\n\
             grid_dir = \"grids\"\n\
             river_mask = \"grids/mask_river.asc\"\n\
             coastal_mask = \"grids/mask_coastal.asc\"\n\
             region_stats = \"region_stats.csv\"\n\
             region_codes = \"regions.csv\"\n\
             output_dir = \"out\"\n\
             baseline_year = {}\n\
             mc_replicates = {mc_replicates}\n\
             conditional_samples = {conditional_samples}\n\
             seed = {}\n",
            self.spec.baseline_year, self.spec.seed
        );
        let path = dir.join("config.toml");
        std::fs::write(&path, config)?;
        Ok(path)
    }
}

#[allow(clippy::too_many_arguments)]
fn regional_stats(
    spec: &WorldSpec,
    region: &Raster<Option<RegionId>>,
    land_use: &Raster<LandUseClass>,
    population: &Raster<f64>,
    rng: &mut ChaCha8Rng,
    n_regions: usize,
) -> Result<RegionStats, OracleError> {
    use LandUseClass::*;
    let mut stats = RegionStats::new();
    for id in 1..=n_regions as RegionId {
        let cells: Vec<usize> = (0..region.len()).filter(|&i| region.data[i] == Some(id)).collect();
        let count = |class: LandUseClass| cells.iter().filter(|&&i| land_use.data[i] == class).count() as f64;
        let pop: f64 = cells.iter().map(|&i| population.data[i]).sum();
        let urban: f64 = cells
            .iter()
            .filter(|&&i| land_use.data[i] == Urban)
            .map(|&i| population.data[i])
            .sum();
        let land = cells.iter().filter(|&&i| land_use.data[i] != Water).count() as f64;
        let natural = count(Forest) + count(NaturalOther) + count(Unoccupied);
        let (crop0, past0) = (count(Cropland), count(Pasture));
        let crop_extra = (0.3 * crop0).min(0.35 * natural);
        let past_extra = (0.2 * past0).min(0.2 * natural);
        let infra0 = count(Infrastructure);
        let growth = rng.random_range(0.004..0.009);
        let gdp_growth = rng.random_range(0.022..0.028);
        let wealth_growth = gdp_growth + 0.003;
        let gdp_pc = rng.random_range(20_000.0..40_000.0);
        let wealth_pc = 7.0 * gdp_pc;
        for year in spec.first_year..=spec.last_year.max(spec.baseline_year) {
            let s = smooth_step(year, spec.first_year, spec.baseline_year);
            let dt = (year - spec.baseline_year) as f64;
            let g = (gdp_growth * dt).exp() * pop * gdp_pc;
            let w = (wealth_growth * dt).exp() * pop * wealth_pc;
            let ry = RegionYear {
                total_population: pop * (growth * dt).exp(),
                urban_share: urban / pop * (0.35 + 0.65 * s),
                persons_per_household: 2.4 + 2.1 * (1.0 - s),
                industrial_index: (0.025 * dt).exp(),
                cropland_share: (crop0 + crop_extra * (1.0 - s)).round() / land,
                pasture_share: (past0 + past_extra * (1.0 - s)).round() / land,
                infrastructure_cells: infra0 * (0.3 + 0.7 * s),
                gdp: SectorGdp {
                    agriculture: 0.02 * g,
                    forestry: 0.005 * g,
                    industry: 0.25 * g,
                    services: 0.725 * g,
                },
                wealth: SectorWealth {
                    agriculture: 0.02 * w,
                    forestry: 0.01 * w,
                    industry: 0.15 * w,
                    services: 0.2 * w,
                    dwellings: 0.5 * w,
                    infrastructure: 0.12 * w,
                },
            };
            // baseline-year shares must reproduce the grid exactly
            let ry = if year == spec.baseline_year {
                RegionYear {
                    total_population: pop,
                    urban_share: urban / pop,
                    cropland_share: crop0 / land,
                    pasture_share: past0 / land,
                    infrastructure_cells: infra0,
                    ..ry
                }
            } else {
                ry
            };
            stats
                .insert(id, year, ry)
                .map_err(|e| OracleError::Spec(e.to_string()))?;
        }
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn place_events(
    spec: &WorldSpec,
    truth: &SyntheticCatalog,
    region: &Raster<Option<RegionId>>,
    population: &Raster<f64>,
    river: &Raster<bool>,
    coastal: &Raster<bool>,
    stats: &RegionStats,
    codes: &BTreeMap<RegionId, String>,
    rng: &mut ChaCha8Rng,
) -> Vec<FloodEvent> {
    let cell_km2 = spec.cellsize * spec.cellsize / 1e6;
    let mut out = Vec::with_capacity(truth.events.len());
    for e in &truth.events {
        let by = rng.random_range(0..spec.regions_y);
        let k = [1usize, 2, 2, 3, 3, 3, 4, 4][rng.random_range(0..8)].min(spec.regions_x);
        let x0 = rng.random_range(0..=spec.regions_x - k);
        let ids: Vec<RegionId> = (x0..x0 + k).map(|bx| (by * spec.regions_x + bx + 1) as RegionId).collect();
        let p: f64 = rng.random();
        let coastal_ok = by == spec.regions_y - 1;
        let flood_type = if p < 0.56 {
            FloodType::Flash
        } else if p < 0.95 || !coastal_ok {
            FloodType::River
        } else if p < 0.985 {
            FloodType::Coastal
        } else {
            FloodType::Compound
        };
        let in_mask = |i: usize| match flood_type {
            FloodType::Flash | FloodType::River => river.data[i],
            FloodType::Coastal => coastal.data[i],
            FloodType::Compound => river.data[i] || coastal.data[i],
        };
        let (mut fp_cells, mut fp_pop) = (0usize, 0.0);
        let (mut pop_year, mut wealth_year) = (0.0, 0.0);
        for &id in &ids {
            let base = stats.get(id, spec.baseline_year).expect("baseline stats");
            let then = stats.get(id, e.year).expect("event-year stats");
            let (mut cells, mut p) = (0usize, 0.0);
            for i in 0..region.len() {
                if region.data[i] == Some(id) && in_mask(i) {
                    cells += 1;
                    p += population.data[i];
                }
            }
            if cells == 0 {
                // no hazard zone here: fall back to a tenth of the region
                p = base.total_population * 0.1;
            }
            fp_cells += cells;
            fp_pop += p;
            pop_year += p * then.total_population / base.total_population;
            wealth_year += p / base.total_population * then.wealth.total();
        }
        let area_km2 = if fp_cells > 0 { fp_cells as f64 } else { 10.0 } * cell_km2;
        let _ = fp_pop;
        let obs = e.observed;
        let mut fatalities = obs[1].map(|r| (r * pop_year).round() as u64);
        let mut unknown = false;
        if fatalities.is_some_and(|f| f > 0) && rng.random::<f64>() < 0.01 {
            fatalities = None;
            unknown = true;
        }
        out.push(FloodEvent {
            id: e.id.clone(),
            country: COUNTRIES[by].to_string(),
            year: e.year,
            month: rng.random_range(1..=12),
            flood_type,
            regions: ids.iter().map(|id| codes[id].clone()).collect(),
            area_km2: obs[0].map(|r| r * area_km2),
            fatalities,
            fatalities_positive_unknown: unknown,
            persons_affected: obs[2].map(|r| (r * pop_year).round() as u64),
            losses_eur2011: obs[4].map(|r| r * wealth_year),
        });
    }
    out
}
