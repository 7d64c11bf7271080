//! Event footprints: hazard-zone cells inside the regions an event affected.

use crate::events::{FloodEvent, FloodType};
use crate::exec::Execution;
use crate::exposure::RegionId;
use crate::grid::Raster;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FootprintError {
    #[error("event {event}: region `{code}` is not in the region grid")]
    UnknownRegion { event: String, code: String },
    #[error("hazard mask is {mask_rows}x{mask_cols}, region grid is {rows}x{cols}")]
    Misaligned {
        mask_rows: usize,
        mask_cols: usize,
        rows: usize,
        cols: usize,
    },
}

#[derive(Debug, Error)]
pub enum FootprintIoError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Grid cells of one event's footprint in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    pub event_id: String,
    pub cells: Vec<(usize, usize)>,
    pub empty: bool,
}

impl Footprint {
    pub fn new(event_id: impl Into<String>, mut cells: Vec<(usize, usize)>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        Footprint {
            event_id: event_id.into(),
            empty: cells.is_empty(),
            cells,
        }
    }

    /// Area in km² for square cells of `cellsize` metres.
    pub fn area_km2(&self, cellsize: f64) -> f64 {
        self.cells.len() as f64 * cellsize * cellsize / 1e6
    }
}

/// River and coastal 100-year flood zones.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardMasks {
    pub river: Raster<bool>,
    pub coastal: Raster<bool>,
}

impl HazardMasks {
    /// The mask an event of `flood_type` is intersected with: river and
    /// flash floods use the river zone, coastal floods the coastal zone,
    /// compound floods their union.
    pub fn for_type(&self, flood_type: FloodType) -> Raster<bool> {
        match flood_type {
            FloodType::River | FloodType::Flash => self.river.clone(),
            FloodType::Coastal => self.coastal.clone(),
            FloodType::Compound => Raster::from_vec(
                self.river.nrows,
                self.river.ncols,
                self.river
                    .data
                    .iter()
                    .zip(&self.coastal.data)
                    .map(|(a, b)| *a || *b)
                    .collect(),
            ),
        }
    }
}

/// Cells of every region in the region grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionIndex {
    pub nrows: usize,
    pub ncols: usize,
    pub cells: BTreeMap<RegionId, Vec<usize>>,
}

impl RegionIndex {
    pub fn new(regions: &Raster<Option<RegionId>>) -> Self {
        let mut cells: BTreeMap<RegionId, Vec<usize>> = BTreeMap::new();
        for (i, r) in regions.data.iter().enumerate() {
            if let Some(r) = r {
                cells.entry(*r).or_default().push(i);
            }
        }
        RegionIndex {
            nrows: regions.nrows,
            ncols: regions.ncols,
            cells,
        }
    }
}

/// Maps region codes used in the event catalog to region grid values.
/// Codes without an entry are read as the decimal grid value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionTable {
    pub codes: BTreeMap<String, RegionId>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RegionRow {
    grid_value: RegionId,
    code: String,
}

impl RegionTable {
    pub fn lookup(&self, code: &str) -> Option<RegionId> {
        self.codes.get(code).copied().or_else(|| code.parse().ok())
    }

    /// Read `grid_value,code` rows.
    pub fn read<R: Read>(source: R) -> Result<Self, FootprintIoError> {
        let mut codes = BTreeMap::new();
        for row in csv::Reader::from_reader(source).deserialize() {
            let row: RegionRow = row?;
            codes.insert(row.code, row.grid_value);
        }
        Ok(RegionTable { codes })
    }
}

/// Intersect the event's regions with `mask`.
pub fn build_footprint(
    event: &FloodEvent,
    mask: &Raster<bool>,
    regions: &RegionIndex,
    table: &RegionTable,
) -> Result<Footprint, FootprintError> {
    if (mask.nrows, mask.ncols) != (regions.nrows, regions.ncols) {
        return Err(FootprintError::Misaligned {
            mask_rows: mask.nrows,
            mask_cols: mask.ncols,
            rows: regions.nrows,
            cols: regions.ncols,
        });
    }
    let mut cells = Vec::new();
    for code in &event.regions {
        let region_cells = table
            .lookup(code)
            .and_then(|id| regions.cells.get(&id))
            .ok_or_else(|| FootprintError::UnknownRegion {
                event: event.id.clone(),
                code: code.clone(),
            })?;
        cells.extend(
            region_cells
                .iter()
                .filter(|&&i| mask.data[i])
                .map(|&i| (i / regions.ncols, i % regions.ncols)),
        );
    }
    Ok(Footprint::new(event.id.clone(), cells))
}

/// Footprints of every event, routed to the mask matching its flood type.
pub fn build_footprints(
    events: &[FloodEvent],
    masks: &HazardMasks,
    regions: &RegionIndex,
    table: &RegionTable,
    exec: Execution,
) -> Result<Vec<Footprint>, FootprintError> {
    let by_type: BTreeMap<FloodType, Raster<bool>> =
        FloodType::ALL.into_iter().map(|t| (t, masks.for_type(t))).collect();
    exec.try_map(events.len(), |i| {
        let e = &events[i];
        build_footprint(e, &by_type[&e.flood_type], regions, table)
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct FootprintRow {
    event_id: String,
    row: usize,
    col: usize,
}

/// Write footprints as `event_id,row,col` rows. Empty footprints have no
/// rows.
pub fn write_footprints<W: Write>(writer: W, footprints: &[Footprint]) -> Result<(), FootprintIoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["event_id", "row", "col"])?;
    for f in footprints {
        for &(row, col) in &f.cells {
            w.serialize(FootprintRow {
                event_id: f.event_id.clone(),
                row,
                col,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read footprints for `event_ids`; events without rows get an empty
/// footprint.
pub fn read_footprints<R: Read>(source: R, event_ids: &[String]) -> Result<Vec<Footprint>, FootprintIoError> {
    let mut cells: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for row in csv::Reader::from_reader(source).deserialize() {
        let row: FootprintRow = row?;
        cells.entry(row.event_id).or_default().push((row.row, row.col));
    }
    Ok(event_ids
        .iter()
        .map(|id| Footprint::new(id.clone(), cells.remove(id).unwrap_or_default()))
        .collect())
}
