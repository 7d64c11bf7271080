//! Filling missing loss variables by the conditional mean of a fitted
//! copula.
//!
//! Five relative-damage variables are modelled pairwise. For each missing
//! value the available variable with the strongest rank correlation is used
//! as the condition; conditional samples are mapped back through the
//! empirical marginal of the missing variable and multiplied by the
//! footprint's potential exposure.

use crate::copula::{
    conditional_sample, pseudo_observations, select_model, CopulaError, CopulaModel, Family, SamplingScheme,
};
use crate::events::{event_fields, FloodEvent, EVENT_HEADER};
use crate::exec::Execution;
use crate::rng::StreamKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use thiserror::Error;

pub const N_VARS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Area,
    Fatalities,
    Affected,
    LossesGdp,
    LossesWealth,
}

impl Variable {
    pub const ALL: [Variable; N_VARS] = [
        Variable::Area,
        Variable::Fatalities,
        Variable::Affected,
        Variable::LossesGdp,
        Variable::LossesWealth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Area => "area",
            Variable::Fatalities => "fatalities",
            Variable::Affected => "affected",
            Variable::LossesGdp => "losses_gdp",
            Variable::LossesWealth => "losses_wealth",
        }
    }

    pub fn parse(s: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The modelled pairs: all pairs except the two loss variants with each
/// other.
pub fn variable_pairs() -> Vec<(Variable, Variable)> {
    let mut out = Vec::new();
    for (i, &a) in Variable::ALL.iter().enumerate() {
        for &b in &Variable::ALL[i + 1..] {
            if (a, b) != (Variable::LossesGdp, Variable::LossesWealth) {
                out.push((a, b));
            }
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum GapFillError {
    #[error("copula: {0}")]
    Copula(#[from] CopulaError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad file: {0}")]
    Format(String),
}

/// Selected copula per variable pair. Pairs with too few complete
/// observations are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DependenceTable {
    pub models: BTreeMap<(Variable, Variable), CopulaModel>,
}

impl DependenceTable {
    pub fn get(&self, a: Variable, b: Variable) -> Option<&CopulaModel> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.models.get(&key)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), GapFillError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pair", "family", "theta", "spearman_rho", "cvm_statistic", "n"])?;
        for ((a, b), m) in &self.models {
            w.write_record([
                format!("{a}:{b}"),
                m.family.to_string(),
                m.theta.to_string(),
                m.spearman_rho.to_string(),
                m.cvm_statistic.to_string(),
                m.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, GapFillError> {
        let mut models = BTreeMap::new();
        let bad = |m: &str| GapFillError::Format(m.to_string());
        for rec in csv::Reader::from_reader(reader).records() {
            let rec = rec?;
            let (a, b) = rec[0].split_once(':').ok_or_else(|| bad("pair"))?;
            let pair = (
                Variable::parse(a).ok_or_else(|| bad("variable"))?,
                Variable::parse(b).ok_or_else(|| bad("variable"))?,
            );
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad("number"));
            models.insert(
                pair,
                CopulaModel {
                    family: Family::parse(&rec[1]).ok_or_else(|| bad("family"))?,
                    theta: num(2)?,
                    spearman_rho: num(3)?,
                    cvm_statistic: num(4)?,
                    n: rec[5].parse().map_err(|_| bad("n"))?,
                    at_boundary: false,
                },
            );
        }
        Ok(DependenceTable { models })
    }
}

/// Fit and select a copula for every pair with enough complete
/// observations. `relative` holds one row of relative damages per event.
pub fn fit_dependence(relative: &[[Option<f64>; N_VARS]], exec: Execution) -> Result<DependenceTable, GapFillError> {
    let pairs = variable_pairs();
    let fits = exec.map(pairs.len(), |k| {
        let (a, b) = pairs[k];
        let (x, y): (Vec<f64>, Vec<f64>) = relative
            .iter()
            .filter_map(|r| Some((r[a.index()]?, r[b.index()]?)))
            .unzip();
        if x.len() < crate::copula::fit::MIN_PAIRS {
            log::warn!("pair {a}:{b} has {} complete observations, not modelled", x.len());
            return Ok(None);
        }
        let u = pseudo_observations(&x)?;
        let v = pseudo_observations(&y)?;
        select_model(&u, &v).map(Some)
    });
    let mut models = BTreeMap::new();
    for (pair, fit) in pairs.into_iter().zip(fits) {
        if let Some(m) = fit? {
            models.insert(pair, m);
        }
    }
    Ok(DependenceTable { models })
}

/// Empirical marginal of one variable (its observed values, sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginal {
    sorted: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let mut sorted: Vec<f64> = values.into_iter().collect();
        sorted.sort_by(f64::total_cmp);
        EmpiricalMarginal { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Pseudo-observation of `x` against the sample, as if `x` were one more
    /// member: (count below + (ties + 1)/2) / (n + 1).
    pub fn pseudo_observation(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&s| s < x);
        let upto = self.sorted.partition_point(|&s| s <= x);
        let ties = upto - below;
        (below as f64 + (ties as f64 + 1.0) / 2.0) / (self.sorted.len() + 1) as f64
    }

    /// Inverse: the i-th order statistic sits at i/(n + 1); linear in
    /// between, flat beyond the extremes.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let pos = p * (n + 1) as f64;
        if pos <= 1.0 {
            return self.sorted[0];
        }
        if pos >= n as f64 {
            return self.sorted[n - 1];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.sorted[i - 1] + frac * (self.sorted[i] - self.sorted[i - 1])
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

/// One event as seen by the gap filler.
#[derive(Debug, Clone, PartialEq)]
pub struct GapFillInput {
    pub event_id: String,
    /// Normalized absolute values; `None` = missing.
    pub values: [Option<f64>; N_VARS],
    /// Relative damages; `None` where the value is missing or its
    /// denominator is zero.
    pub relative: [Option<f64>; N_VARS],
    /// Potential exposure per variable: footprint area, population,
    /// population, GDP, wealth.
    pub potential: [f64; N_VARS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilledRecord {
    pub event_id: String,
    pub values: [Option<f64>; N_VARS],
    pub filled: [bool; N_VARS],
    /// Conditioning variable used for each filled value.
    pub conditioned_on: [Option<Variable>; N_VARS],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapFillOutput {
    pub records: Vec<FilledRecord>,
    /// Absolute-value samples per (event id, variable).
    pub samples: BTreeMap<(String, Variable), Vec<f32>>,
    /// Events left unfilled, with the reason.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapFillConfig {
    pub samples: usize,
    pub seed: u64,
    pub scheme: SamplingScheme,
}

impl Default for GapFillConfig {
    fn default() -> Self {
        GapFillConfig {
            samples: 10_000,
            seed: 0,
            scheme: SamplingScheme::Stratified,
        }
    }
}

/// Pick the available variable most strongly rank-correlated with `target`.
pub fn conditioning_variable(
    table: &DependenceTable,
    target: Variable,
    available: &[Variable],
) -> Option<(Variable, CopulaModel)> {
    let mut best: Option<(Variable, CopulaModel)> = None;
    for &c in available {
        if let Some(m) = table.get(target, c) {
            let better = best
                .as_ref()
                .is_none_or(|(_, b)| m.spearman_rho.abs() > b.spearman_rho.abs());
            if better {
                best = Some((c, m.clone()));
            }
        }
    }
    best
}

/// Fill every missing value that has a usable conditioning variable.
pub fn gap_fill(
    inputs: &[GapFillInput],
    table: &DependenceTable,
    config: &GapFillConfig,
    exec: Execution,
) -> Result<GapFillOutput, GapFillError> {
    let marginals: Vec<EmpiricalMarginal> = Variable::ALL
        .iter()
        .map(|v| EmpiricalMarginal::new(inputs.iter().filter_map(|e| e.relative[v.index()])))
        .collect();

    type EventResult = (FilledRecord, Vec<(Variable, Vec<f32>)>, Option<String>);
    let results: Vec<EventResult> = exec.try_map(inputs.len(), |k| {
        let e = &inputs[k];
        let mut rec = FilledRecord {
            event_id: e.event_id.clone(),
            values: e.values,
            filled: [false; N_VARS],
            conditioned_on: [None; N_VARS],
        };
        let mut samples = Vec::new();
        let available: Vec<Variable> = Variable::ALL
            .into_iter()
            .filter(|v| e.relative[v.index()].is_some())
            .collect();
        if available.is_empty() {
            return Ok((rec, samples, Some("no available variable".to_string())));
        }
        let mut note = None;
        for target in Variable::ALL {
            let t = target.index();
            if e.values[t].is_some() || marginals[t].is_empty() {
                continue;
            }
            let Some((cond, model)) = conditioning_variable(table, target, &available) else {
                note = Some(format!("no dependence model for {target}"));
                continue;
            };
            let u = marginals[cond.index()].pseudo_observation(e.relative[cond.index()].unwrap());
            let mut rng = StreamKey::new(config.seed, "gap-fill")
                .with_str(&e.event_id)
                .with_str(target.as_str())
                .rng();
            let draws = conditional_sample(&model, u, config.samples, config.scheme, &mut rng)?;
            let scale = e.potential[t];
            let mut sum = 0.0;
            let mut abs = Vec::with_capacity(draws.len());
            for v in draws {
                let x = marginals[t].quantile(v) * scale;
                sum += x;
                abs.push(x as f32);
            }
            rec.values[t] = Some(sum / abs.len() as f64);
            rec.filled[t] = true;
            rec.conditioned_on[t] = Some(cond);
            samples.push((target, abs));
        }
        Ok::<_, GapFillError>((rec, samples, note))
    })?;

    let mut out = GapFillOutput::default();
    for (rec, samples, note) in results {
        for (var, s) in samples {
            out.samples.insert((rec.event_id.clone(), var), s);
        }
        if let Some(n) = note {
            out.skipped.push((rec.event_id.clone(), n));
        }
        out.records.push(rec);
    }
    Ok(out)
}

/// Write the catalog with normalized and filled values in the event dialect.
/// `losses_eur2011` holds the wealth-normalized loss; two columns follow:
/// `losses_by_gdp` and `filled_flags` (filled variables joined by `;`).
/// Records are matched to events by id; events without a record are
/// skipped.
pub fn write_filled_catalog<W: Write>(
    writer: W,
    events: &[FloodEvent],
    records: &[FilledRecord],
) -> Result<(), GapFillError> {
    let by_id: BTreeMap<&str, &FilledRecord> = records.iter().map(|r| (r.event_id.as_str(), r)).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = EVENT_HEADER.to_vec();
    header.extend(["losses_by_gdp", "filled_flags"]);
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in events {
        let Some(r) = by_id.get(e.id.as_str()) else {
            continue;
        };
        let mut row = event_fields(e).to_vec();
        row[6] = opt(r.values[Variable::Area.index()]);
        row[7] = opt(r.values[Variable::Fatalities.index()]);
        row[8] = "0".to_string();
        row[9] = opt(r.values[Variable::Affected.index()]);
        row[10] = opt(r.values[Variable::LossesWealth.index()]);
        row.push(opt(r.values[Variable::LossesGdp.index()]));
        let flags: Vec<&str> = Variable::ALL
            .iter()
            .filter(|v| r.filled[v.index()])
            .map(|v| v.as_str())
            .collect();
        row.push(flags.join(";"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a filled catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledEvent {
    pub id: String,
    pub year: i32,
    pub values: [Option<f64>; N_VARS],
    pub filled: [bool; N_VARS],
}

/// Read a file written by [`write_filled_catalog`].
pub fn read_filled_catalog<R: Read>(reader: R) -> Result<Vec<FilledEvent>, GapFillError> {
    let mut r = csv::Reader::from_reader(reader);
    let num = |s: &str, what: &str| -> Result<Option<f64>, GapFillError> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| GapFillError::Format(format!("{what}: `{s}`")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != EVENT_HEADER.len() + 2 {
            return Err(GapFillError::Format(format!("{} fields", rec.len())));
        }
        let mut filled = [false; N_VARS];
        for name in rec[12].split(';').filter(|s| !s.is_empty()) {
            let v = Variable::parse(name).ok_or_else(|| GapFillError::Format(format!("variable `{name}`")))?;
            filled[v.index()] = true;
        }
        out.push(FilledEvent {
            id: rec[0].to_string(),
            year: rec[2]
                .parse()
                .map_err(|_| GapFillError::Format(format!("year `{}`", &rec[2])))?,
            values: [
                num(&rec[6], "area")?,
                num(&rec[7], "fatalities")?,
                num(&rec[9], "affected")?,
                num(&rec[11], "losses_by_gdp")?,
                num(&rec[10], "losses")?,
            ],
            filled,
        });
    }
    Ok(out)
}

const MAGIC: &[u8; 8] = b"FRGSAMP1";

/// Binary sample file: magic, entry count (u64), then per entry the event
/// id (u32 length + UTF-8), variable index (u8), sample count (u32) and
/// little-endian f32 samples.
pub fn write_samples<W: Write>(mut w: W, samples: &BTreeMap<(String, Variable), Vec<f32>>) -> Result<(), GapFillError> {
    w.write_all(MAGIC)?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for ((id, var), s) in samples {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        w.write_all(&[var.index() as u8])?;
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        for x in s {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples<R: Read>(mut r: R) -> Result<BTreeMap<(String, Variable), Vec<f32>>, GapFillError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GapFillError::Format("bad magic".into()));
    }
    let mut b8 = [0u8; 8];
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8);
    let mut out = BTreeMap::new();
    for _ in 0..count {
        r.read_exact(&mut b4)?;
        let mut id = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|_| GapFillError::Format("event id".into()))?;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let var = *Variable::ALL
            .get(b1[0] as usize)
            .ok_or_else(|| GapFillError::Format("variable index".into()))?;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let s = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.insert((id, var), s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_pairs() {
        let p = variable_pairs();
        assert_eq!(p.len(), 9);
        assert!(!p.contains(&(Variable::LossesGdp, Variable::LossesWealth)));
    }

    #[test]
    fn marginal_inversion() {
        let m = EmpiricalMarginal::new([3.0, 1.0, 2.0]);
        assert_eq!(m.quantile(0.1), 1.0);
        assert_eq!(m.quantile(0.5), 2.0);
        assert!((m.quantile(0.625) - 2.5).abs() < 1e-12);
        assert_eq!(m.quantile(0.99), 3.0);
        assert_eq!(m.pseudo_observation(2.0), 0.5);
        assert_eq!(m.pseudo_observation(10.0), 0.875);
    }

    fn table_with(family: Family, theta: f64, rho: f64) -> DependenceTable {
        let mut t = DependenceTable::default();
        for pair in variable_pairs() {
            let mut m = CopulaModel::with_parameter(family, theta);
            m.spearman_rho = rho;
            t.models.insert(pair, m);
        }
        t
    }

    #[test]
    fn complete_events_unchanged() {
        let input = GapFillInput {
            event_id: "a".into(),
            values: [Some(1.0); 5],
            relative: [Some(0.1); 5],
            potential: [10.0; 5],
        };
        let out = gap_fill(&[input.clone()], &table_with(Family::Frank, 2.0, 0.3), &GapFillConfig::default(), Execution::Sequential).unwrap();
        assert_eq!(out.records[0].values, input.values);
        assert!(out.samples.is_empty());
    }

    #[test]
    fn picks_strongest_correlation() {
        let mut t = table_with(Family::Frank, 2.0, 0.3);
        t.models.get_mut(&(Variable::Affected, Variable::LossesWealth)).unwrap().spearman_rho = 0.677;
        t.models.get_mut(&(Variable::Area, Variable::LossesWealth)).unwrap().spearman_rho = 0.376;
        let (c, _) = conditioning_variable(&t, Variable::LossesWealth, &[Variable::Area, Variable::Affected]).unwrap();
        assert_eq!(c, Variable::Affected);
    }

    #[test]
    fn sample_file_round_trip() {
        let mut s = BTreeMap::new();
        s.insert(("e1".to_string(), Variable::Fatalities), vec![1.5f32, 2.25]);
        s.insert(("e2".to_string(), Variable::LossesWealth), vec![]);
        let mut buf = Vec::new();
        write_samples(&mut buf, &s).unwrap();
        assert_eq!(read_samples(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn filled_catalog_round_trip() {
        use crate::events::FloodType;
        let e = FloodEvent {
            id: "e1".into(),
            country: "PL".into(),
            year: 1997,
            month: 7,
            flood_type: FloodType::River,
            regions: vec!["1".into(), "2".into()],
            area_km2: None,
            fatalities: Some(54),
            fatalities_positive_unknown: false,
            persons_affected: None,
            losses_eur2011: Some(3.0e9),
        };
        let rec = FilledRecord {
            event_id: "e1".into(),
            values: [Some(120.5), Some(60.0), Some(1.0e4), Some(4.0e9), Some(5.0e9)],
            filled: [true, false, true, false, false],
            conditioned_on: [Some(Variable::LossesWealth), None, Some(Variable::Fatalities), None, None],
        };
        let mut buf = Vec::new();
        write_filled_catalog(&mut buf, &[e], &[rec.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",area;affected"));
        let back = read_filled_catalog(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].year, 1997);
        assert_eq!(back[0].values, rec.values);
        assert_eq!(back[0].filled, rec.filled);
    }
}
