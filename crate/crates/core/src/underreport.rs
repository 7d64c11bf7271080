//! Correction for historical underreporting of less severe floods.
//!
//! Events are ranked on four consequence variables and split into severity
//! quintiles over the whole catalog. The top quintile is taken as complete
//! throughout; in each earlier 30-year period the lower quintiles are scaled
//! up until their ratio to the top quintile matches the reference period.

use crate::stats::descending_ranks;
use std::io::Write;
use thiserror::Error;

/// Variables used for the severity ranking.
pub const SEVERITY_VARIABLES: [&str; 4] = ["area", "fatalities", "affected", "losses_wealth"];

pub const ADJUSTED_PERIODS: [(i32, i32); 4] = [(1870, 1899), (1900, 1929), (1930, 1959), (1960, 1989)];
pub const REFERENCE_PERIOD: (i32, i32) = (1990, 2016);

#[derive(Debug, Error, PartialEq)]
pub enum UnderreportError {
    #[error("event {event}: {variable} is missing")]
    Missing { event: String, variable: &'static str },
    #[error("no top-quintile events in {start}-{end}")]
    NoTopEvents { start: i32, end: i32 },
    #[error("quintile label {0} is outside 1-5")]
    Label(u8),
    #[error("length mismatch")]
    Length,
}

/// One event entering the severity ranking: area, fatalities, affected and
/// wealth-normalized losses, all gap-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityInput {
    pub event_id: String,
    pub year: i32,
    pub values: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeverityClassification {
    pub event_ids: Vec<String>,
    pub years: Vec<i32>,
    /// Mean of the four descending ranks; 1 = most severe.
    pub average_rank: Vec<f64>,
    /// 1..=5, 5 = most severe.
    pub quintile: Vec<u8>,
}

impl SeverityClassification {
    /// Build from known labels (used when the quintiles come from elsewhere).
    pub fn from_labels(event_ids: Vec<String>, years: Vec<i32>, quintile: Vec<u8>) -> Result<Self, UnderreportError> {
        if event_ids.len() != years.len() || years.len() != quintile.len() {
            return Err(UnderreportError::Length);
        }
        if let Some(&q) = quintile.iter().find(|&&q| !(1..=5).contains(&q)) {
            return Err(UnderreportError::Label(q));
        }
        Ok(SeverityClassification {
            average_rank: vec![f64::NAN; years.len()],
            event_ids,
            years,
            quintile,
        })
    }

    /// Event counts per quintile (index q-1) among events with year in
    /// `period`.
    pub fn counts(&self, period: (i32, i32)) -> [usize; 5] {
        let mut c = [0; 5];
        for (&y, &q) in self.years.iter().zip(&self.quintile) {
            if (period.0..=period.1).contains(&y) {
                c[q as usize - 1] += 1;
            }
        }
        c
    }
}

/// Rank, average and split into quintiles. Ties in the average rank are
/// broken by input order, so group sizes differ by at most one.
pub fn classify_severity(events: &[SeverityInput]) -> Result<SeverityClassification, UnderreportError> {
    let n = events.len();
    let mut average = vec![0.0; n];
    for (k, name) in SEVERITY_VARIABLES.iter().enumerate() {
        let mut column = Vec::with_capacity(n);
        for e in events {
            column.push(e.values[k].ok_or_else(|| UnderreportError::Missing {
                event: e.event_id.clone(),
                variable: name,
            })?);
        }
        for (a, r) in average.iter_mut().zip(descending_ranks(&column)) {
            *a += r / 4.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| average[i].total_cmp(&average[j]).then(i.cmp(&j)));
    let mut quintile = vec![0u8; n];
    for (pos, &i) in order.iter().enumerate() {
        // pos 0 is the most severe event
        quintile[i] = 5 - (pos * 5 / n.max(1)) as u8;
    }
    Ok(SeverityClassification {
        event_ids: events.iter().map(|e| e.event_id.clone()).collect(),
        years: events.iter().map(|e| e.year).collect(),
        average_rank: average,
        quintile,
    })
}

/// Ratios of quintile 4, 3, 2 and 1 counts to the top-quintile count.
pub fn reference_ratios(c: &SeverityClassification, period: (i32, i32)) -> Result<[f64; 4], UnderreportError> {
    let counts = c.counts(period);
    let top = counts[4];
    if top == 0 {
        return Err(UnderreportError::NoTopEvents {
            start: period.0,
            end: period.1,
        });
    }
    Ok([3, 2, 1, 0].map(|q| counts[q] as f64 / top as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorCell {
    /// `None` when the period has no events in the quintile.
    pub factor: Option<f64>,
    pub observed: usize,
    pub corrected_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionFactors {
    pub periods: Vec<(i32, i32)>,
    /// Per period, per quintile (index q-1).
    pub cells: Vec<[FactorCell; 5]>,
}

impl CorrectionFactors {
    /// Multiplier for an event of quintile `q` in `year`; 1 outside the
    /// adjusted periods, for the top quintile and for flagged cells.
    pub fn factor(&self, year: i32, q: u8) -> f64 {
        self.periods
            .iter()
            .position(|p| (p.0..=p.1).contains(&year))
            .and_then(|i| self.cells[i][q as usize - 1].factor)
            .unwrap_or(1.0)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["period", "quintile", "factor", "flag"])?;
        for (p, cells) in self.periods.iter().zip(&self.cells) {
            for (q, cell) in cells.iter().enumerate() {
                let (factor, flag) = match cell.factor {
                    Some(f) => (f.to_string(), ""),
                    None => (String::new(), "no_events"),
                };
                w.write_record([format!("{}-{}", p.0, p.1), (q + 1).to_string(), factor, flag.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// f(p, q) = max(1, r_ref(q) · N_top(p) / N_q(p)). A quintile with no events
/// in a period is flagged and its corrected count set to r_ref · N_top.
pub fn correction_factors(
    c: &SeverityClassification,
    reference: &[f64; 4],
    periods: &[(i32, i32)],
) -> Result<CorrectionFactors, UnderreportError> {
    let mut cells = Vec::with_capacity(periods.len());
    for &p in periods {
        let counts = c.counts(p);
        let top = counts[4];
        if top == 0 {
            return Err(UnderreportError::NoTopEvents { start: p.0, end: p.1 });
        }
        let mut row = [FactorCell {
            factor: Some(1.0),
            observed: top,
            corrected_count: top as f64,
        }; 5];
        for q in 0..4 {
            let r = reference[3 - q];
            let target = r * top as f64;
            row[q] = if counts[q] == 0 {
                if r > 0.0 {
                    log::warn!("{}-{}: quintile {} has no events, factor undefined", p.0, p.1, q + 1);
                }
                FactorCell {
                    factor: None,
                    observed: 0,
                    corrected_count: target,
                }
            } else {
                let f = (target / counts[q] as f64).max(1.0);
                FactorCell {
                    factor: Some(f),
                    observed: counts[q],
                    corrected_count: f * counts[q] as f64,
                }
            };
        }
        cells.push(row);
    }
    Ok(CorrectionFactors {
        periods: periods.to_vec(),
        cells,
    })
}

/// Annual values split by quintile (index q-1).
#[derive(Debug, Clone, PartialEq)]
pub struct QuintileSeries {
    pub start_year: i32,
    pub values: [Vec<f64>; 5],
}

impl QuintileSeries {
    pub fn zeros(start_year: i32, end_year: i32) -> Self {
        let n = (end_year - start_year + 1).max(0) as usize;
        QuintileSeries {
            start_year,
            values: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values[0].len() as i32 - 1
    }

    pub fn add(&mut self, year: i32, q: u8, value: f64) {
        if year >= self.start_year && year <= self.end_year() {
            self.values[q as usize - 1][(year - self.start_year) as usize] += value;
        }
    }

    /// Sum over quintiles.
    pub fn total(&self) -> Vec<f64> {
        (0..self.values[0].len())
            .map(|i| self.values.iter().map(|v| v[i]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Event counts: flagged cells receive their corrected count spread
    /// evenly over the period's years.
    Count,
    Consequence,
}

pub fn apply_correction(series: &QuintileSeries, factors: &CorrectionFactors, kind: SeriesKind) -> QuintileSeries {
    let mut out = series.clone();
    for (p, cells) in factors.periods.iter().zip(&factors.cells) {
        let lo = p.0.max(series.start_year);
        let hi = p.1.min(series.end_year());
        if lo > hi {
            continue;
        }
        for (q, cell) in cells.iter().enumerate().take(4) {
            for year in lo..=hi {
                let i = (year - series.start_year) as usize;
                match cell.factor {
                    Some(f) => out.values[q][i] = series.values[q][i] * f,
                    None if kind == SeriesKind::Count => {
                        out.values[q][i] = cell.corrected_count / (p.1 - p.0 + 1) as f64;
                    }
                    None => {}
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(id: &str, year: i32, v: [f64; 4]) -> SeverityInput {
        SeverityInput {
            event_id: id.into(),
            year,
            values: v.map(Some),
        }
    }

    #[test]
    fn dominant_event_is_top() {
        let mut ev: Vec<_> = (0..10).map(|i| input(&i.to_string(), 2000, [i as f64; 4])).collect();
        ev.push(input("big", 2000, [100.0; 4]));
        let c = classify_severity(&ev).unwrap();
        assert_eq!(c.average_rank[10], 1.0);
        assert_eq!(c.quintile[10], 5);
    }

    #[test]
    fn missing_value_named() {
        let mut e = input("x", 2000, [1.0; 4]);
        e.values[2] = None;
        assert_eq!(
            classify_severity(&[e]).unwrap_err(),
            UnderreportError::Missing {
                event: "x".into(),
                variable: "affected"
            }
        );
    }

    #[test]
    fn factor_from_counts() {
        let mut q = vec![5u8; 10];
        q.extend(vec![4u8; 8]);
        let years = vec![1950; 18];
        let c = SeverityClassification::from_labels(vec![String::new(); 18], years, q).unwrap();
        let f = correction_factors(&c, &[1.6, 1.0, 1.0, 1.0], &[(1930, 1959)]).unwrap();
        assert_eq!(f.cells[0][3].factor, Some(2.0));
        assert_eq!(f.cells[0][0].factor, None);
        assert_eq!(f.cells[0][0].corrected_count, 10.0);
        assert_eq!(f.factor(1950, 5), 1.0);
    }

    #[test]
    fn correction_multiplies() {
        let c = CorrectionFactors {
            periods: vec![(1930, 1959)],
            cells: vec![[FactorCell {
                factor: Some(2.0),
                observed: 1,
                corrected_count: 2.0,
            }; 5]],
        };
        let mut s = QuintileSeries::zeros(1950, 1995);
        s.add(1950, 1, 3.0);
        s.add(1950, 5, 3.0);
        s.add(1990, 1, 3.0);
        let out = apply_correction(&s, &c, SeriesKind::Count);
        assert_eq!(out.values[0][0], 6.0);
        assert_eq!(out.values[4][0], 3.0);
        assert_eq!(out.values[0][40], 3.0);
    }
}
