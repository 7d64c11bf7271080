use super::{AnnualSeries, Quantity, Stage};
use crate::exec::Execution;
use chrono::{Datelike, Days, NaiveDate};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PrecipError {
    #[error("cell {cell}: missing days {gaps:?}")]
    MissingDays { cell: String, gaps: Vec<(NaiveDate, NaiveDate)> },
    #[error("cell {cell}: {years} years of data, need at least {need}")]
    TooShort { cell: String, years: usize, need: usize },
    #[error("cell {cell}: dates out of order at {date}")]
    Order { cell: String, date: NaiveDate },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
}

/// Daily precipitation of one grid cell from `start`; NaN marks a missing
/// day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub cell: String,
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl DailySeries {
    /// Build from dated records. Absent dates become missing days.
    pub fn from_records(cell: &str, mut records: Vec<(NaiveDate, f64)>) -> Result<Self, PrecipError> {
        records.sort_by_key(|r| r.0);
        let Some(&(start, _)) = records.first() else {
            return Ok(DailySeries {
                cell: cell.to_string(),
                start: NaiveDate::MIN,
                values: Vec::new(),
            });
        };
        let end = records.last().unwrap().0;
        let len = (end - start).num_days() as usize + 1;
        let mut values = vec![f64::NAN; len];
        for (d, v) in records {
            let i = (d - start).num_days() as usize;
            if !values[i].is_nan() {
                return Err(PrecipError::Order { cell: cell.into(), date: d });
            }
            values[i] = v;
        }
        Ok(DailySeries {
            cell: cell.to_string(),
            start,
            values,
        })
    }

    fn date(&self, i: usize) -> NaiveDate {
        self.start + Days::new(i as u64)
    }

    /// Runs of missing days as inclusive date ranges.
    pub fn gaps(&self) -> Vec<(NaiveDate, NaiveDate)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.values.len() {
            if self.values[i].is_finite() {
                i += 1;
                continue;
            }
            let s = i;
            while i < self.values.len() && !self.values[i].is_finite() {
                i += 1;
            }
            out.push((self.date(s), self.date(i - 1)));
        }
        out
    }

    fn n_years(&self) -> usize {
        if self.values.is_empty() {
            return 0;
        }
        (self.date(self.values.len() - 1).year() - self.start.year() + 1) as usize
    }
}

/// Read `cell,date,precip_mm` rows (ISO dates) into per-cell series.
pub fn read_precip_csv<R: Read>(source: R) -> Result<Vec<DailySeries>, PrecipError> {
    let mut by_cell: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(source);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PrecipError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: &str| PrecipError::Parse { line, msg: msg.into() };
        if rec.len() != 3 {
            return Err(bad("expected cell,date,precip_mm"));
        }
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("bad date"))?;
        let value = if rec[2].is_empty() {
            f64::NAN
        } else {
            rec[2].parse::<f64>().map_err(|_| bad("bad value"))?
        };
        by_cell.entry(rec[0].to_string()).or_default().push((date, value));
    }
    by_cell
        .into_iter()
        .map(|(cell, recs)| DailySeries::from_records(&cell, recs))
        .collect()
}

/// Declustered exceedance events of one cell for duration `d`: returns the
/// threshold (if any) and the year of each event's peak. Also returns the
/// raw number of exceeding windows.
pub fn cell_events(series: &DailySeries, d: usize, return_period: usize) -> (Option<f64>, Vec<i32>, usize) {
    let n_years = series.n_years();
    let m = n_years / return_period;
    if d == 0 || series.values.len() < d || m == 0 {
        return (None, Vec::new(), 0);
    }
    // summed per window rather than as a running sum, which drifts over
    // decades of daily values
    let rolling: Vec<f64> = series.values.windows(d).map(|w| w.iter().sum()).collect();
    let mut order: Vec<usize> = (0..rolling.len()).collect();
    order.sort_by(|&a, &b| rolling[b].total_cmp(&rolling[a]).then(a.cmp(&b)));

    // Add windows from the largest down; windows at most d apart belong to
    // the same event. Stop at the first level with at least m events.
    let gap = |a: usize, b: usize| b - a > d;
    let mut active = BTreeSet::new();
    let mut clusters = 0usize;
    let mut threshold = None;
    let mut k = 0;
    while k < order.len() {
        let level = rolling[order[k]];
        while k < order.len() && rolling[order[k]] == level {
            let i = order[k];
            let prev = active.range(..i).next_back().copied();
            let next = active.range(i + 1..).next().copied();
            clusters += 1;
            if let Some(p) = prev {
                if !gap(p, i) {
                    clusters -= 1;
                }
            }
            if let Some(nx) = next {
                if !gap(i, nx) {
                    clusters -= 1;
                }
            }
            if let (Some(p), Some(nx)) = (prev, next) {
                if !gap(p, nx) {
                    clusters += 1;
                }
            }
            active.insert(i);
            k += 1;
        }
        if clusters >= m {
            threshold = Some(level);
            break;
        }
    }
    let Some(u) = threshold else {
        return (None, Vec::new(), 0);
    };
    let mut years = Vec::new();
    let mut iter = active.iter().copied().peekable();
    while let Some(first) = iter.next() {
        let (mut peak, mut last) = (first, first);
        while let Some(&nx) = iter.peek() {
            if gap(last, nx) {
                break;
            }
            if rolling[nx] > rolling[peak] {
                peak = nx;
            }
            last = nx;
            iter.next();
        }
        // window k covers days k..k+d-1 and is dated by its last day
        years.push(series.date(peak + d - 1).year());
    }
    (Some(u), years, active.len())
}

/// Annual counts of declustered extreme events summed over cells, one series
/// per duration. The threshold per cell is the level at which the
/// declustered event count first reaches floor(years / return period).
pub fn extreme_precip_counts(
    cells: &[DailySeries],
    durations: &[usize],
    return_period: usize,
    exec: Execution,
) -> Result<Vec<(usize, AnnualSeries)>, PrecipError> {
    for c in cells {
        let gaps = c.gaps();
        if !gaps.is_empty() {
            return Err(PrecipError::MissingDays {
                cell: c.cell.clone(),
                gaps,
            });
        }
        let need = 2 * return_period;
        if c.n_years() < need {
            return Err(PrecipError::TooShort {
                cell: c.cell.clone(),
                years: c.n_years(),
                need,
            });
        }
    }
    let first = cells.iter().map(|c| c.start.year()).min().unwrap_or(0);
    let last = cells
        .iter()
        .map(|c| c.date(c.values.len() - 1).year())
        .max()
        .unwrap_or(-1);
    let mut out = Vec::new();
    for &d in durations {
        let per_cell = exec.map(cells.len(), |i| cell_events(&cells[i], d, return_period).1);
        let mut s = AnnualSeries::zeros(first, last, Quantity::ExtremePrecipitation, Stage::Reported);
        for years in per_cell {
            for y in years {
                s.add(y, 1.0);
            }
        }
        out.push((d, s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(years: i32, f: impl Fn(usize) -> f64) -> DailySeries {
        let start = NaiveDate::from_ymd_opt(1900, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(1900 + years, 1, 1).unwrap();
        let n = (end - start).num_days() as usize;
        DailySeries {
            cell: "c".into(),
            start,
            values: (0..n).map(f).collect(),
        }
    }

    #[test]
    fn constant_has_no_extremes() {
        let s = series(20, |_| 3.0);
        for d in [1, 2, 3, 5, 7] {
            assert!(cell_events(&s, d, 5).1.is_empty());
        }
    }

    #[test]
    fn isolated_spikes() {
        // four spikes over 20 years, m = 4
        let spikes = [(100, 50.0), (2000, 40.0), (4000, 45.0), (7000, 30.0)];
        let s = series(20, |i| spikes.iter().find(|p| p.0 == i).map_or(0.0, |p| p.1));
        for d in [1, 3, 7] {
            let (u, years, raw) = cell_events(&s, d, 5);
            assert_eq!(years.len(), 4);
            assert_eq!(u, Some(30.0));
            assert!(raw >= years.len());
        }
    }

    #[test]
    fn episode_is_one_event() {
        let s = series(10, |i| match i {
            500..=502 => 80.0,
            1000 => 10.0,
            2000 => 9.0,
            _ => 0.5,
        });
        // m = 2: the episode and the 10 mm day
        let (_, years, raw) = cell_events(&s, 1, 5);
        assert_eq!(years.len(), 2);
        assert_eq!(raw, 4);
    }

    #[test]
    fn gaps_are_listed() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let recs = vec![(start, 1.0), (start + Days::new(3), 1.0)];
        let s = DailySeries::from_records("x", recs).unwrap();
        let err = extreme_precip_counts(&[s], &[1], 5, Execution::Sequential).unwrap_err();
        match err {
            PrecipError::MissingDays { gaps, .. } => {
                assert_eq!(gaps, vec![(start + Days::new(1), start + Days::new(2))])
            }
            e => panic!("{e:?}"),
        }
    }
}
