//! The damaging-flood event catalog: parsing, validation and summaries.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use thiserror::Error;

pub const FIRST_YEAR: i32 = 1870;
pub const LAST_YEAR: i32 = 2016;

/// Header of the event CSV dialect, in order.
pub const EVENT_HEADER: [&str; 11] = [
    "id",
    "country",
    "year",
    "month",
    "type",
    "regions",
    "area_km2",
    "fatalities",
    "fatalities_positive_unknown",
    "persons_affected",
    "losses_eur2011",
];

/// Persons assumed per household when only houses were reported.
pub const PERSONS_PER_HOUSEHOLD: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloodType {
    Flash,
    River,
    Coastal,
    Compound,
}

impl FloodType {
    pub const ALL: [FloodType; 4] = [
        FloodType::Flash,
        FloodType::River,
        FloodType::Coastal,
        FloodType::Compound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FloodType::Flash => "flash",
            FloodType::River => "river",
            FloodType::Coastal => "coastal",
            FloodType::Compound => "compound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FloodType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for FloodType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One damaging flood in one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodEvent {
    pub id: String,
    pub country: String,
    pub year: i32,
    pub month: u8,
    pub flood_type: FloodType,
    pub regions: Vec<String>,
    pub area_km2: Option<f64>,
    pub fatalities: Option<u64>,
    /// Deaths occurred but their number is unknown.
    pub fatalities_positive_unknown: bool,
    pub persons_affected: Option<u64>,
    pub losses_eur2011: Option<f64>,
}

impl FloodEvent {
    /// Check the inclusion rules; returns the first violated rule.
    pub fn validate(&self) -> Result<(), Rule> {
        if self.id.is_empty() {
            return Err(Rule::MissingField("id"));
        }
        if self.country.len() != 2 || !self.country.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(Rule::BadCountry(self.country.clone()));
        }
        if !(FIRST_YEAR..=LAST_YEAR).contains(&self.year) {
            return Err(Rule::YearOutOfRange(self.year));
        }
        if !(1..=12).contains(&self.month) {
            return Err(Rule::MonthOutOfRange(self.month as i64));
        }
        if self.regions.is_empty() || self.regions.iter().any(|r| r.is_empty()) {
            return Err(Rule::EmptyRegions);
        }
        for (name, v) in [("area_km2", self.area_km2), ("losses_eur2011", self.losses_eur2011)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Rule::Negative(name));
                }
            }
        }
        let others = self.area_km2.is_some()
            || self.persons_affected.is_some()
            || self.losses_eur2011.is_some();
        if !others && !self.fatalities_positive_unknown {
            match self.fatalities {
                None => return Err(Rule::NoStatistic),
                Some(0) => return Err(Rule::ZeroFatalitiesAlone),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Fatalities usable in sums (unknown-positive counts as missing).
    pub fn known_fatalities(&self) -> Option<u64> {
        if self.fatalities_positive_unknown {
            None
        } else {
            self.fatalities
        }
    }
}

/// Convert a reported number of affected houses to persons.
pub fn households_to_persons(houses: u64) -> u64 {
    houses.saturating_mul(PERSONS_PER_HOUSEHOLD)
}

/// Inclusion or format rule violated by a catalog row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    FieldCount(usize),
    MissingField(&'static str),
    BadEnum { field: &'static str, value: String },
    NotNumeric { field: &'static str, value: String },
    Negative(&'static str),
    BadBoolean(String),
    BadCountry(String),
    YearOutOfRange(i32),
    MonthOutOfRange(i64),
    EmptyRegions,
    NoStatistic,
    ZeroFatalitiesAlone,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::FieldCount(n) => write!(f, "expected 11 fields, found {n}"),
            Rule::MissingField(name) => write!(f, "required field `{name}` is empty"),
            Rule::BadEnum { field, value } => write!(f, "`{value}` is not a valid {field}"),
            Rule::NotNumeric { field, value } => {
                write!(f, "`{value}` is not a valid number for {field}")
            }
            Rule::Negative(field) => write!(f, "{field} must be a finite nonnegative number"),
            Rule::BadBoolean(v) => write!(f, "`{v}` is not a boolean (0/1)"),
            Rule::BadCountry(c) => write!(f, "`{c}` is not a 2-letter country code"),
            Rule::YearOutOfRange(y) => {
                write!(f, "year {y} outside [{FIRST_YEAR}, {LAST_YEAR}]")
            }
            Rule::MonthOutOfRange(m) => write!(f, "month {m} outside 1-12"),
            Rule::EmptyRegions => write!(f, "region list is empty"),
            Rule::NoStatistic => write!(f, "at least one damage statistic required"),
            Rule::ZeroFatalitiesAlone => write!(f, "zero fatalities require another statistic"),
        }
    }
}

/// A rejected catalog row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostic {
    /// 1-based line number in the source (the header is line 1).
    pub line: u64,
    pub id: String,
    pub rule: Rule,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} (id `{}`): {}", self.line, self.id, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCatalog {
    pub events: Vec<FloodEvent>,
    pub rejected: Vec<RowDiagnostic>,
}

/// Parse an event CSV. Bad rows are collected as diagnostics; only a header
/// mismatch fails the whole file.
pub fn parse_catalog<R: Read>(source: R) -> Result<ParsedCatalog, CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != EVENT_HEADER {
        return Err(CatalogError::Header {
            expected: EVENT_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut out = ParsedCatalog::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(0).unwrap_or("").to_string();
        match parse_row(&record).and_then(|e| e.validate().map(|_| e)) {
            Ok(e) => out.events.push(e),
            Err(rule) => out.rejected.push(RowDiagnostic { line, id, rule }),
        }
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord) -> Result<FloodEvent, Rule> {
    if rec.len() != EVENT_HEADER.len() {
        return Err(Rule::FieldCount(rec.len()));
    }
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let required = |i: usize| {
        let v = field(i);
        if v.is_empty() {
            Err(Rule::MissingField(EVENT_HEADER[i]))
        } else {
            Ok(v)
        }
    };
    let year = parse_int(required(2)?, "year")?;
    let month = parse_int(required(3)?, "month")?;
    let ty = required(4)?;
    let flood_type = FloodType::parse(ty).ok_or_else(|| Rule::BadEnum {
        field: "type",
        value: ty.to_string(),
    })?;
    let mut regions: Vec<String> = Vec::new();
    for r in field(5).split(';').map(str::trim).filter(|r| !r.is_empty()) {
        if !regions.iter().any(|x| x == r) {
            regions.push(r.to_string());
        }
    }
    if regions.is_empty() {
        return Err(Rule::EmptyRegions);
    }
    if !(i64::from(i32::MIN)..=i64::from(i32::MAX)).contains(&year) {
        return Err(Rule::YearOutOfRange(i32::MAX));
    }
    if !(1..=12).contains(&month) {
        return Err(Rule::MonthOutOfRange(month));
    }
    let fpu = match field(8) {
        "" | "0" => false,
        "1" => true,
        other => return Err(Rule::BadBoolean(other.to_string())),
    };
    Ok(FloodEvent {
        id: required(0)?.to_string(),
        country: required(1)?.to_string(),
        year: year as i32,
        month: month as u8,
        flood_type,
        regions,
        area_km2: opt_real(field(6), "area_km2")?,
        fatalities: opt_count(field(7), "fatalities")?,
        fatalities_positive_unknown: fpu,
        persons_affected: opt_count(field(9), "persons_affected")?,
        losses_eur2011: opt_real(field(10), "losses_eur2011")?,
    })
}

fn parse_int(s: &str, field: &'static str) -> Result<i64, Rule> {
    s.parse::<i64>().map_err(|_| Rule::NotNumeric {
        field,
        value: s.to_string(),
    })
}

fn opt_real(s: &str, field: &'static str) -> Result<Option<f64>, Rule> {
    if s.is_empty() {
        return Ok(None);
    }
    let v = s.parse::<f64>().map_err(|_| Rule::NotNumeric {
        field,
        value: s.to_string(),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Rule::Negative(field));
    }
    Ok(Some(v))
}

fn opt_count(s: &str, field: &'static str) -> Result<Option<u64>, Rule> {
    if s.is_empty() {
        return Ok(None);
    }
    if s.starts_with('-') {
        return Err(Rule::Negative(field));
    }
    s.parse::<u64>().map(Some).map_err(|_| Rule::NotNumeric {
        field,
        value: s.to_string(),
    })
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The 11 dialect fields of one event, in header order.
pub fn event_fields(e: &FloodEvent) -> [String; 11] {
    [
        e.id.clone(),
        e.country.clone(),
        e.year.to_string(),
        e.month.to_string(),
        e.flood_type.to_string(),
        e.regions.join(";"),
        opt_str(e.area_km2),
        opt_str(e.fatalities),
        if e.fatalities_positive_unknown { "1" } else { "0" }.to_string(),
        opt_str(e.persons_affected),
        opt_str(e.losses_eur2011),
    ]
}

/// Write events in the catalog dialect.
pub fn write_catalog<W: Write>(writer: W, events: &[FloodEvent]) -> Result<(), CatalogError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENT_HEADER)?;
    for e in events {
        w.write_record(event_fields(e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub flash: usize,
    pub river: usize,
    pub coastal: usize,
    pub compound: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Availability {
    pub area: usize,
    pub fatalities: usize,
    pub affected: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogSummary {
    pub total: usize,
    pub by_type: TypeCounts,
    pub available: Availability,
    pub zero_fatality: usize,
    pub fatalities_positive_unknown: usize,
    /// `None` for an empty catalog.
    pub mean_regions: Option<f64>,
}

pub fn summarize(events: &[FloodEvent]) -> CatalogSummary {
    let mut s = CatalogSummary {
        total: events.len(),
        ..Default::default()
    };
    let mut regions = 0usize;
    for e in events {
        match e.flood_type {
            FloodType::Flash => s.by_type.flash += 1,
            FloodType::River => s.by_type.river += 1,
            FloodType::Coastal => s.by_type.coastal += 1,
            FloodType::Compound => s.by_type.compound += 1,
        }
        s.available.area += e.area_km2.is_some() as usize;
        s.available.fatalities += e.known_fatalities().is_some() as usize;
        s.available.affected += e.persons_affected.is_some() as usize;
        s.available.losses += e.losses_eur2011.is_some() as usize;
        s.zero_fatality += (e.known_fatalities() == Some(0)) as usize;
        s.fatalities_positive_unknown += e.fatalities_positive_unknown as usize;
        regions += e.regions.len();
    }
    if !events.is_empty() {
        s.mean_regions = Some(regions as f64 / events.len() as f64);
    }
    s
}
