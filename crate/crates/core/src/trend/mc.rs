use super::poisson::fit_values;
use super::{rate_percent, AnnualSeries, Quantity, Stage, TrendError, TrendFit, TrendResult};
use crate::exec::Execution;
use crate::rng::StreamKey;
use crate::stats::{mean, quantile_sorted, sample_sd, sorted_copy};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// How an observed rate is compared with the randomized ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sidedness {
    /// Compare |rate| with the replicate |rate|s.
    #[default]
    Magnitude,
    /// Compare in the observed direction only.
    Directional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: u64,
    pub sidedness: Sidedness,
    pub alpha: f64,
    /// Interval for the random years; `None` uses the analysis period.
    pub window: Option<(i32, i32)>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replicates: 10_000,
            seed: 0,
            sidedness: Sidedness::Magnitude,
            alpha: 0.05,
            window: None,
        }
    }
}

/// One event in a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct McEvent<'a> {
    pub id: &'a str,
    pub year: i32,
    /// Point value; `None` contributes nothing (ignored for event counts).
    pub value: Option<f64>,
    /// Underreporting multiplier; 1 otherwise.
    pub weight: f64,
    /// Log-scale spread of the exposure factor; 0 for none.
    pub exposure_sigma: f64,
    /// Gap-fill samples replacing `value` in each replicate.
    pub samples: Option<&'a [f32]>,
}

impl<'a> McEvent<'a> {
    pub fn new(id: &'a str, year: i32, value: Option<f64>) -> Self {
        McEvent {
            id,
            year,
            value,
            weight: 1.0,
            exposure_sigma: 0.0,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutcome {
    pub result: TrendResult,
    pub observed: TrendFit,
    /// Rate of every replicate in order; NaN where the fit failed.
    pub replicate_rates: Vec<f64>,
    /// Per year (2.5 %, 50 %, 97.5 %) of the perturbed series before year
    /// randomization; empty when the run has no value uncertainty.
    pub band: Vec<(f64, f64, f64)>,
}

impl McOutcome {
    pub fn write_rates<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "replicate,rate_percent")?;
        for (i, r) in self.replicate_rates.iter().enumerate() {
            writeln!(w, "{i},{r}")?;
        }
        Ok(())
    }
}

/// Significance of the observed trend against series whose event years are
/// redrawn uniformly. Values are used as given.
pub fn mc_significance(
    events: &[McEvent],
    quantity: Quantity,
    stage: Stage,
    period: (i32, i32),
    config: &McConfig,
    exec: Execution,
) -> Result<McOutcome, TrendError> {
    run(events, quantity, stage, period, config, false, exec)
}

/// As [`mc_significance`], but each replicate also redraws exposure factors
/// and gap-fill samples before the years are randomized.
pub fn mc_significance_normalized(
    events: &[McEvent],
    quantity: Quantity,
    stage: Stage,
    period: (i32, i32),
    config: &McConfig,
    exec: Execution,
) -> Result<McOutcome, TrendError> {
    run(events, quantity, stage, period, config, true, exec)
}

fn contribution(e: &McEvent, quantity: Quantity) -> Option<f64> {
    if quantity == Quantity::Events {
        Some(e.weight)
    } else {
        e.value.map(|v| v * e.weight)
    }
}

fn perturbed(e: &McEvent, quantity: Quantity, seed: u64, r: usize) -> Option<f64> {
    if quantity == Quantity::Events {
        return Some(e.weight);
    }
    if let Some(s) = e.samples.filter(|s| !s.is_empty()) {
        let mut rng = StreamKey::new(seed, "mc-gapfill").with_str(e.id).with_u64(r as u64).rng();
        return Some(s[rng.random_range(0..s.len())] as f64 * e.weight);
    }
    let v = e.value?;
    if e.exposure_sigma > 0.0 {
        let mut rng = StreamKey::new(seed, "mc-exposure").with_str(e.id).with_u64(r as u64).rng();
        let z: f64 = rng.sample(StandardNormal);
        Some(v * (e.exposure_sigma * z).exp() * e.weight)
    } else {
        Some(v * e.weight)
    }
}

fn run(
    events: &[McEvent],
    quantity: Quantity,
    stage: Stage,
    period: (i32, i32),
    config: &McConfig,
    uncertain: bool,
    exec: Execution,
) -> Result<McOutcome, TrendError> {
    let (start, end) = period;
    if start > end {
        return Err(TrendError::Period(start, end));
    }
    let window = config.window.unwrap_or(period);
    let members: Vec<&McEvent> = events
        .iter()
        .filter(|e| (window.0..=window.1).contains(&e.year))
        .collect();
    let n_years = (end - start + 1) as usize;

    let mut observed = AnnualSeries::zeros(start, end, quantity, stage);
    for e in &members {
        if let Some(v) = contribution(e, quantity) {
            observed.add(e.year, v);
        }
    }
    let fit = fit_values(&observed.values)?;
    let obs_rate = rate_percent(fit.b);

    let with_uncertainty = uncertain
        && quantity != Quantity::Events
        && members.iter().any(|e| e.exposure_sigma > 0.0 || e.samples.is_some());

    let reps = exec.map(config.replicates, |r| {
        let values: Vec<Option<f64>> = members
            .iter()
            .map(|e| {
                if with_uncertainty {
                    perturbed(e, quantity, config.seed, r)
                } else {
                    contribution(e, quantity)
                }
            })
            .collect();
        let band_series = with_uncertainty.then(|| {
            let mut s = vec![0.0; n_years];
            for (e, v) in members.iter().zip(&values) {
                if let (Some(v), true) = (v, (start..=end).contains(&e.year)) {
                    s[(e.year - start) as usize] += v;
                }
            }
            s
        });
        let mut rng = StreamKey::new(config.seed, "mc-years").with_u64(r as u64).rng();
        let mut series = vec![0.0; n_years];
        for v in &values {
            let year = rng.random_range(window.0..=window.1);
            if let (Some(v), true) = (v, (start..=end).contains(&year)) {
                series[(year - start) as usize] += v;
            }
        }
        let rate = fit_values(&series).map(|f| rate_percent(f.b)).unwrap_or(f64::NAN);
        (rate, band_series)
    });

    let replicate_rates: Vec<f64> = reps.iter().map(|(r, _)| *r).collect();
    let ok: Vec<f64> = replicate_rates.iter().copied().filter(|r| r.is_finite()).collect();
    let failed = replicate_rates.len() - ok.len();
    if failed * 100 > config.replicates || ok.is_empty() {
        return Err(TrendError::ReplicateFailures {
            failed,
            replicates: config.replicates,
        });
    }
    let extreme = match config.sidedness {
        Sidedness::Magnitude => ok.iter().filter(|r| r.abs() >= obs_rate.abs()).count(),
        Sidedness::Directional if obs_rate >= 0.0 => ok.iter().filter(|&&r| r >= obs_rate).count(),
        Sidedness::Directional => ok.iter().filter(|&&r| r <= obs_rate).count(),
    };
    let mc_p = extreme as f64 / ok.len() as f64;
    let sorted = sorted_copy(&ok);

    let mut band = Vec::new();
    if with_uncertainty {
        let mut column = vec![0.0; reps.len()];
        for y in 0..n_years {
            for (c, (_, s)) in column.iter_mut().zip(&reps) {
                *c = s.as_ref().map_or(0.0, |s| s[y]);
            }
            let col = sorted_copy(&column);
            band.push((
                quantile_sorted(&col, 0.025),
                quantile_sorted(&col, 0.5),
                quantile_sorted(&col, 0.975),
            ));
        }
    }

    Ok(McOutcome {
        result: TrendResult {
            rate_percent_per_year: obs_rate,
            b: fit.b,
            significant: mc_p < config.alpha,
            mc_p,
            mc_replicates: ok.len(),
            ci_low: quantile_sorted(&sorted, 0.025),
            ci_high: quantile_sorted(&sorted, 0.975),
        },
        observed: fit,
        replicate_rates,
        band,
    })
}

/// Log-normal fitted to exposure-change factors by the mean and standard
/// deviation of their logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

impl LogNormalFit {
    pub fn fit(factors: &[f64]) -> Result<Self, String> {
        if let Some(f) = factors.iter().find(|&&f| !(f > 0.0 && f.is_finite())) {
            return Err(format!("nonpositive factor {f}"));
        }
        let logs: Vec<f64> = factors.iter().map(|f| f.ln()).collect();
        Ok(LogNormalFit {
            mu: mean(&logs),
            sigma: sample_sd(&logs),
            n: factors.len(),
        })
    }
}

/// Per time point log-normal of the regional change in exposure between
/// that year and the baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExposureUncertainty {
    pub by_year: BTreeMap<i32, LogNormalFit>,
}

pub const MIN_REGIONAL_FACTORS: usize = 10;

impl ExposureUncertainty {
    pub fn fit(table: &BTreeMap<i32, Vec<f64>>) -> Result<Self, TrendError> {
        let mut by_year = BTreeMap::new();
        for (&year, factors) in table {
            if factors.len() < MIN_REGIONAL_FACTORS {
                return Err(TrendError::Exposure {
                    year,
                    msg: format!("{} regional factors, need {MIN_REGIONAL_FACTORS}", factors.len()),
                });
            }
            let fit = LogNormalFit::fit(factors).map_err(|msg| TrendError::Exposure { year, msg })?;
            by_year.insert(year, fit);
        }
        Ok(ExposureUncertainty { by_year })
    }

    /// Parameters at `year`, linear between tabulated years and constant
    /// beyond them.
    pub fn at(&self, year: i32) -> Option<LogNormalFit> {
        let below = self.by_year.range(..=year).next_back();
        let above = self.by_year.range(year..).next();
        match (below, above) {
            (Some((&y0, a)), Some((&y1, b))) if y1 > y0 => {
                let t = (year - y0) as f64 / (y1 - y0) as f64;
                Some(LogNormalFit {
                    mu: a.mu + t * (b.mu - a.mu),
                    sigma: a.sigma + t * (b.sigma - a.sigma),
                    n: a.n.min(b.n),
                })
            }
            (Some((_, a)), _) => Some(*a),
            (None, Some((_, b))) => Some(*b),
            (None, None) => None,
        }
    }

    /// One factor draw for (event, replicate).
    pub fn draw(&self, seed: u64, event_id: &str, year: i32, replicate: usize) -> Option<f64> {
        let p = self.at(year)?;
        let mut rng = StreamKey::new(seed, "mc-exposure")
            .with_str(event_id)
            .with_u64(replicate as u64)
            .rng();
        let z: f64 = rng.sample(StandardNormal);
        Some((p.mu + p.sigma * z).exp())
    }
}
