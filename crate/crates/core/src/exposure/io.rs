//! Loading an exposure grid from a directory of ASCII grids and writing
//! per-year outputs.

use super::{disaggregate_baseline, BaselineError, Cell, DensityCaps, ExposureGrid, LandUseClass};
use crate::grid::{AsciiGrid, GridError, Raster};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Grid { path: PathBuf, source: GridError },
    #[error("missing required grid {0}")]
    Missing(PathBuf),
    #[error("{path}: {rows}x{cols} does not match the region grid")]
    Shape { path: PathBuf, rows: usize, cols: usize },
    #[error("{path}: invalid value {value} at ({row}, {col})")]
    Value {
        path: PathBuf,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("population disaggregation: {0}")]
    Baseline(#[from] BaselineError),
}

/// File names inside a grid directory.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFiles {
    pub region: &'static str,
    pub land_use: &'static str,
    /// Fine population; when absent `population_coarse` is disaggregated.
    pub population: &'static str,
    pub population_coarse: &'static str,
    pub slope: &'static str,
    pub suitability_cereal: &'static str,
    pub suitability_alfalfa: &'static str,
    pub soil_sealing: &'static str,
    pub built_year: &'static str,
    pub dist_centre: &'static str,
}

impl Default for GridFiles {
    fn default() -> Self {
        GridFiles {
            region: "region.asc",
            land_use: "landuse.asc",
            population: "population.asc",
            population_coarse: "population_coarse.asc",
            slope: "slope.asc",
            suitability_cereal: "suit_cereal.asc",
            suitability_alfalfa: "suit_alfalfa.asc",
            soil_sealing: "sealing.asc",
            built_year: "built_year.asc",
            dist_centre: "dist_centre.asc",
        }
    }
}

fn read(path: &Path) -> Result<AsciiGrid, LoadError> {
    AsciiGrid::read_path(path).map_err(|source| LoadError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

/// Read an optional companion grid; must match the region grid's shape.
fn companion(dir: &Path, name: &str, shape: (usize, usize)) -> Result<Option<Raster<Option<f64>>>, LoadError> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let g = read(&path)?;
    if (g.nrows(), g.ncols()) != shape {
        return Err(LoadError::Shape {
            path,
            rows: g.nrows(),
            cols: g.ncols(),
        });
    }
    Ok(Some(g.to_options()))
}

fn bad(dir: &Path, name: &str, i: usize, ncols: usize, value: f64) -> LoadError {
    LoadError::Value {
        path: dir.join(name),
        row: i / ncols,
        col: i % ncols,
        value,
    }
}

/// Load the baseline exposure of `year` from `dir`.
///
/// Cells where the region grid holds nodata belong to no region and are
/// ignored by every regional computation.
pub fn load_grid_dir(dir: &Path, year: i32, caps: &DensityCaps) -> Result<ExposureGrid, LoadError> {
    let files = GridFiles::default();
    let region_path = dir.join(files.region);
    if !region_path.exists() {
        return Err(LoadError::Missing(region_path));
    }
    let region = read(&region_path)?;
    let (nrows, ncols) = (region.nrows(), region.ncols());
    let shape = (nrows, ncols);
    let land_use = companion(dir, files.land_use, shape)?
        .ok_or_else(|| LoadError::Missing(dir.join(files.land_use)))?;

    let mut cells = Vec::with_capacity(nrows * ncols);
    for (i, (r, lu)) in region.to_options().data.iter().zip(&land_use.data).enumerate() {
        let region_id = match r {
            Some(v) if *v >= 0.0 && v.fract() == 0.0 && *v <= u32::MAX as f64 => Some(*v as u32),
            Some(v) => return Err(bad(dir, files.region, i, ncols, *v)),
            None => None,
        };
        let class = match lu {
            Some(v) => LandUseClass::from_code(*v as i64)
                .filter(|_| v.fract() == 0.0)
                .ok_or_else(|| bad(dir, files.land_use, i, ncols, *v))?,
            None if region_id.is_none() => LandUseClass::Water,
            None => return Err(bad(dir, files.land_use, i, ncols, f64::NAN)),
        };
        let mut cell = Cell::new(0, class);
        cell.region = region_id;
        cells.push(cell);
    }

    let fine_pop = companion(dir, files.population, shape)?;
    let population: Vec<f64> = match fine_pop {
        Some(p) => p.data.iter().map(|v| v.unwrap_or(0.0)).collect(),
        None => {
            let coarse_path = dir.join(files.population_coarse);
            if !coarse_path.exists() {
                return Err(LoadError::Missing(dir.join(files.population)));
            }
            let coarse = read(&coarse_path)?;
            let coarse = coarse.to_options().map(|v| v.unwrap_or(0.0));
            let classes = Raster::from_vec(nrows, ncols, cells.iter().map(|c| c.class).collect());
            let sealing = companion(dir, files.soil_sealing, shape)?
                .map(|s| s.map(|v| v.unwrap_or(0.0)))
                .unwrap_or_else(|| Raster::filled(nrows, ncols, 0.0));
            disaggregate_baseline(&coarse, &classes, &sealing, caps)?.data
        }
    };
    for (i, (c, p)) in cells.iter_mut().zip(population).enumerate() {
        if !(p.is_finite() && p >= 0.0) || (p > 0.0 && !c.class.is_habitable()) {
            return Err(bad(dir, files.population, i, ncols, p));
        }
        c.population = p;
    }

    type Setter = fn(&mut Cell, f64);
    let optional: [(&str, Setter); 4] = [
        (files.slope, |c, v| c.slope = v),
        (files.suitability_cereal, |c, v| c.suitability_cereal = v),
        (files.suitability_alfalfa, |c, v| c.suitability_alfalfa = v),
        (files.soil_sealing, |c, v| c.soil_sealing = v),
    ];
    for (name, set) in optional {
        if let Some(g) = companion(dir, name, shape)? {
            for (c, v) in cells.iter_mut().zip(&g.data) {
                set(c, v.unwrap_or(0.0));
            }
        }
    }
    if let Some(g) = companion(dir, files.built_year, shape)? {
        for (c, v) in cells.iter_mut().zip(&g.data) {
            c.built_year = v.map(|y| y as i32);
        }
    }

    let mut grid = ExposureGrid::new(year, nrows, ncols, region.cellsize, cells);
    match companion(dir, files.dist_centre, shape)? {
        Some(g) => {
            for (c, v) in grid.cells.iter_mut().zip(&g.data) {
                c.dist_urban_centre = v.unwrap_or(0.0);
            }
        }
        None => grid.compute_urban_centre_distances(),
    }
    Ok(grid)
}

/// Write land use, population, GDP and wealth of `grid` as
/// `<name>_<year>.asc` files into `dir`.
pub fn write_exposure_grids(grid: &ExposureGrid, dir: &Path) -> Result<Vec<PathBuf>, GridError> {
    std::fs::create_dir_all(dir)?;
    let layers: [(&str, Vec<f64>); 4] = [
        ("landuse", grid.cells.iter().map(|c| f64::from(c.class.code())).collect()),
        ("population", grid.cells.iter().map(|c| c.population).collect()),
        ("gdp", grid.gdp.clone()),
        ("wealth", grid.wealth.clone()),
    ];
    let mut paths = Vec::new();
    for (name, data) in layers {
        let path = dir.join(format!("{name}_{}.asc", grid.year));
        AsciiGrid::new(Raster::from_vec(grid.nrows, grid.ncols, data), grid.cellsize, -9999.0)
            .write_path(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        AsciiGrid::new(Raster::from_vec(rows, cols, data), 100.0, -9999.0)
            .write_path(&dir.join(name))
            .unwrap();
    }

    #[test]
    fn loads_fine_population() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write(d, "region.asc", 1, 3, vec![1.0, 1.0, -9999.0]);
        write(d, "landuse.asc", 1, 3, vec![1.0, 8.0, 13.0]);
        write(d, "population.asc", 1, 3, vec![50.0, 5.0, 0.0]);
        write(d, "built_year.asc", 1, 3, vec![-9999.0, -9999.0, 1960.0]);
        let g = load_grid_dir(d, 2011, &DensityCaps::default()).unwrap();
        assert_eq!(g.cells[0].class, LandUseClass::Urban);
        assert_eq!(g.cells[2].region, None);
        assert_eq!(g.cells[2].built_year, Some(1960));
        assert_eq!(g.cells[1].population, 5.0);
        assert!((g.cells[1].dist_urban_centre - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disaggregates_coarse_population() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write(d, "region.asc", 2, 2, vec![1.0; 4]);
        write(d, "landuse.asc", 2, 2, vec![1.0, 8.0, 8.0, 8.0]);
        write(d, "population_coarse.asc", 1, 1, vec![100.0]);
        write(d, "sealing.asc", 2, 2, vec![0.9, 0.1, 0.3, 0.0]);
        let caps = DensityCaps([(LandUseClass::Cropland, 10.0)].into_iter().collect());
        let g = load_grid_dir(d, 2011, &caps).unwrap();
        let pops: Vec<f64> = g.cells.iter().map(|c| c.population).collect();
        assert_eq!(pops, vec![70.0, 7.5, 22.5, 0.0]);
    }

    #[test]
    fn population_on_water_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write(d, "region.asc", 1, 1, vec![1.0]);
        write(d, "landuse.asc", 1, 1, vec![13.0]);
        write(d, "population.asc", 1, 1, vec![3.0]);
        assert!(matches!(
            load_grid_dir(d, 2011, &DensityCaps::default()),
            Err(LoadError::Value { .. })
        ));
    }

    #[test]
    fn writes_one_file_per_layer() {
        let tmp = tempfile::tempdir().unwrap();
        let g = ExposureGrid::new(1950, 1, 1, 100.0, vec![Cell::new(1, LandUseClass::Urban)]);
        let paths = write_exposure_grids(&g, tmp.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let back = AsciiGrid::read_path(&tmp.path().join("landuse_1950.asc")).unwrap();
        assert_eq!(back.values.data, vec![1.0]);
    }
}
