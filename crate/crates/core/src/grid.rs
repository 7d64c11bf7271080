//! Dense rasters and the ASCII grid exchange format.
//!
//! The text format is a four-line header followed by `nrows` rows of
//! whitespace-separated values:
//!
//! ```text
//! ncols 4
//! nrows 2
//! cellsize 100
//! nodata -9999
//! 1 2 3 4
//! 5 6 7 -9999
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("grid {name} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    Shape {
        name: String,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("{name}: value {value} at ({row}, {col}) is invalid: {msg}")]
    Value {
        name: String,
        row: usize,
        col: usize,
        value: f64,
        msg: String,
    },
}

/// A row-major dense raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(nrows: usize, ncols: usize, value: T) -> Self {
        Raster {
            nrows,
            ncols,
            data: vec![value; nrows * ncols],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(nrows: usize, ncols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "raster data length");
        Raster { nrows, ncols, data }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.ncols + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        let i = row * self.ncols + col;
        &mut self.data[i]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.nrows == other.nrows && self.ncols == other.ncols
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// A grid as read from or written to the ASCII format.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Raster<f64>,
}

impl AsciiGrid {
    pub fn new(values: Raster<f64>, cellsize: f64, nodata: f64) -> Self {
        AsciiGrid {
            cellsize,
            nodata,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Values with nodata mapped to `None`.
    pub fn to_options(&self) -> Raster<Option<f64>> {
        self.values
            .map(|&v| if self.is_nodata(v) { None } else { Some(v) })
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, GridError> {
        let reader = BufReader::new(reader);
        let mut lines = reader.lines().enumerate();
        let mut header = |key: &str| -> Result<f64, GridError> {
            let (no, line) = lines.next().ok_or(GridError::Parse {
                line: 0,
                msg: format!("missing header `{key}`"),
            })?;
            let line = line?;
            let mut parts = line.split_whitespace();
            let name = parts.next().unwrap_or("");
            if !name.eq_ignore_ascii_case(key) {
                return Err(GridError::Parse {
                    line: no + 1,
                    msg: format!("expected header `{key}`, found `{name}`"),
                });
            }
            parts
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or(GridError::Parse {
                    line: no + 1,
                    msg: format!("header `{key}` needs a numeric value"),
                })
        };
        let ncols = header("ncols")?;
        let nrows = header("nrows")?;
        let cellsize = header("cellsize")?;
        let nodata = header("nodata")?;
        if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
            return Err(GridError::Parse {
                line: 1,
                msg: "ncols/nrows must be positive integers".into(),
            });
        }
        let (ncols, nrows) = (ncols as usize, nrows as usize);
        let mut data = Vec::with_capacity(ncols * nrows);
        let mut row_count = 0;
        for (no, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|_| GridError::Parse {
                    line: no + 1,
                    msg: format!("non-numeric value `{tok}`"),
                })?;
                data.push(v);
            }
            if data.len() - before != ncols {
                return Err(GridError::Parse {
                    line: no + 1,
                    msg: format!("expected {ncols} values, found {}", data.len() - before),
                });
            }
            row_count += 1;
        }
        if row_count != nrows {
            return Err(GridError::Parse {
                line: 5 + row_count,
                msg: format!("expected {nrows} rows, found {row_count}"),
            });
        }
        Ok(AsciiGrid {
            cellsize,
            nodata,
            values: Raster::from_vec(nrows, ncols, data),
        })
    }

    pub fn read_path(path: &Path) -> Result<Self, GridError> {
        let f = std::fs::File::open(path)?;
        Self::read(f)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), GridError> {
        writeln!(w, "ncols {}", self.ncols())?;
        writeln!(w, "nrows {}", self.nrows())?;
        writeln!(w, "cellsize {}", self.cellsize)?;
        writeln!(w, "nodata {}", self.nodata)?;
        let mut line = String::new();
        for r in 0..self.nrows() {
            line.clear();
            for c in 0..self.ncols() {
                if c > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{}", self.values.get(r, c));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<(), GridError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "ncols 3\nnrows 2\ncellsize 100\nnodata -9999\n1 2 3\n4.5 -9999 0\n";

    #[test]
    fn read_write_round_trip() {
        let g = AsciiGrid::read(SAMPLE.as_bytes()).unwrap();
        assert_eq!(g.nrows(), 2);
        assert_eq!(g.ncols(), 3);
        assert_eq!(*g.values.get(1, 0), 4.5);
        assert_eq!(g.to_options().get(1, 1), &None);
        let mut out = Vec::new();
        g.write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), SAMPLE);
    }

    #[test]
    fn rejects_ragged_rows() {
        let bad = "ncols 3\nnrows 2\ncellsize 100\nnodata -9999\n1 2 3\n4 5\n";
        assert!(matches!(
            AsciiGrid::read(bad.as_bytes()),
            Err(GridError::Parse { line: 6, .. })
        ));
    }

    #[test]
    fn rejects_wrong_header_order() {
        let bad = "nrows 2\nncols 3\ncellsize 100\nnodata -9999\n";
        assert!(AsciiGrid::read(bad.as_bytes()).is_err());
    }
}
