//! Synthetic catalogs of relative damages with known dependence, trend,
//! missingness and underreporting.

use crate::copulas::conditional_draw;
use crate::OracleError;
use floodrisk::copula::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF, LogNormal};

/// Number of relative-damage variables: area, fatalities, affected,
/// losses by GDP, losses by wealth.
pub const N_VARS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    LogNormal { mu: f64, sigma: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Marginal {
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Marginal::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).unwrap().inverse_cdf(p),
            Marginal::Beta { a, b } => Beta::new(a, b).unwrap().inverse_cdf(p),
            Marginal::Uniform { lo, hi } => lo + p * (hi - lo),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            Marginal::Beta { a, b } => a / (a + b),
            Marginal::Uniform { lo, hi } => (lo + hi) / 2.0,
        }
    }
}

/// `child` depends on `parent` through a copula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub parent: usize,
    pub child: usize,
    pub family: Family,
    pub theta: f64,
}

/// Keep events of quintile `quintile` (5 = most severe) dated in
/// `[start, end]` with probability `keep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thinning {
    pub start: i32,
    pub end: i32,
    pub quintile: u8,
    pub keep: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_events: usize,
    pub start_year: i32,
    pub end_year: i32,
    /// Log-rate slope of the event intensity per year.
    pub b_true: f64,
    /// Applied in order; a parent must be a root or an earlier child.
    pub links: Vec<Link>,
    pub marginals: [Marginal; N_VARS],
    /// Missingness probability of area, fatalities, affected and losses
    /// (both loss variants go missing together).
    pub missing: [f64; 4],
    pub thinning: Vec<Thinning>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_events: 1000,
            start_year: 1870,
            end_year: 2016,
            b_true: 0.0,
            links: vec![
                Link { parent: 2, child: 0, family: Family::Frank, theta: 3.0 },
                Link { parent: 2, child: 1, family: Family::Clayton, theta: 1.0 },
                Link { parent: 2, child: 4, family: Family::Frank, theta: 6.0 },
                Link { parent: 4, child: 3, family: Family::Gaussian, theta: 0.95 },
            ],
            marginals: [
                Marginal::Beta { a: 0.8, b: 4.0 },
                Marginal::LogNormal { mu: -11.0, sigma: 1.5 },
                Marginal::LogNormal { mu: -4.0, sigma: 1.2 },
                Marginal::LogNormal { mu: -3.0, sigma: 1.4 },
                Marginal::LogNormal { mu: -6.0, sigma: 1.4 },
            ],
            missing: [0.0; 4],
            thinning: Vec::new(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEvent {
    pub id: String,
    pub year: i32,
    pub truth: [f64; N_VARS],
    pub observed: [Option<f64>; N_VARS],
    /// Severity quintile of the full catalog, 5 = most severe.
    pub quintile: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCatalog {
    pub events: Vec<SyntheticEvent>,
    /// Events removed by thinning.
    pub thinned: Vec<SyntheticEvent>,
    pub b_true: f64,
}

fn validate(spec: &SyntheticSpec) -> Result<(), OracleError> {
    if spec.end_year < spec.start_year {
        return Err(OracleError::Spec("end year before start year".into()));
    }
    if !spec.b_true.is_finite() {
        return Err(OracleError::Spec("trend must be finite".into()));
    }
    if spec.missing.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(OracleError::Spec("missingness outside [0, 1]".into()));
    }
    if let Some(t) = spec.thinning.iter().find(|t| !(0.0..=1.0).contains(&t.keep)) {
        return Err(OracleError::Spec(format!("keep probability {} outside [0, 1]", t.keep)));
    }
    let mut assigned = [true; N_VARS];
    for l in &spec.links {
        assigned[l.child] = false;
    }
    for l in &spec.links {
        if !assigned[l.parent] {
            return Err(OracleError::Spec(format!("variable {} used before it is drawn", l.parent)));
        }
        assigned[l.child] = true;
    }
    Ok(())
}

/// Average of descending ranks over the given columns; rank 1 = largest.
pub fn average_descending_rank(columns: &[Vec<f64>]) -> Vec<f64> {
    let n = columns[0].len();
    let mut avg = vec![0.0; n];
    for col in columns {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[b].partial_cmp(&col[a]).unwrap());
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && col[order[j + 1]] == col[order[i]] {
                j += 1;
            }
            // positions i..=j share the mean of ranks i+1..=j+1
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &k in &order[i..=j] {
                avg[k] += rank;
            }
            i = j + 1;
        }
    }
    avg.iter().map(|s| s / columns.len() as f64).collect()
}

/// Quintile labels from average ranks: sort ascending (ties by index),
/// split at floor(k n / 5), most severe fifth labelled 5.
pub fn quintiles_from_ranks(avg: &[f64]) -> Vec<u8> {
    let n = avg.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| avg[a].partial_cmp(&avg[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0u8; n];
    for (pos, &i) in order.iter().enumerate() {
        let k = (0..5).find(|&k| pos < (k + 1) * n / 5).unwrap();
        out[i] = 5 - k as u8;
    }
    out
}

pub fn generate_catalog(spec: &SyntheticSpec) -> Result<SyntheticCatalog, OracleError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let years: Vec<i32> = (spec.start_year..=spec.end_year).collect();
    let weights: Vec<f64> = years
        .iter()
        .map(|y| (spec.b_true * (y - spec.start_year) as f64).exp())
        .collect();
    let total: f64 = weights.iter().sum();

    let mut events = Vec::with_capacity(spec.n_events);
    for k in 0..spec.n_events {
        let mut r = rng.random::<f64>() * total;
        let mut year = *years.last().unwrap();
        for (y, w) in years.iter().zip(&weights) {
            if r < *w {
                year = *y;
                break;
            }
            r -= w;
        }
        let mut u = [f64::NAN; N_VARS];
        let children: Vec<usize> = spec.links.iter().map(|l| l.child).collect();
        for (i, slot) in u.iter_mut().enumerate() {
            if !children.contains(&i) {
                *slot = rng.random_range(1e-9..1.0 - 1e-9);
            }
        }
        for l in &spec.links {
            let w: f64 = rng.random_range(1e-12..1.0 - 1e-12);
            u[l.child] = conditional_draw(l.family, l.theta, u[l.parent], w).clamp(1e-12, 1.0 - 1e-12);
        }
        let mut truth = [0.0; N_VARS];
        for i in 0..N_VARS {
            truth[i] = spec.marginals[i].quantile(u[i]);
        }
        let mut missing = [false; 4];
        for (m, p) in missing.iter_mut().zip(spec.missing) {
            *m = rng.random::<f64>() < p;
        }
        if missing.iter().all(|&m| m) {
            missing[rng.random_range(0..4)] = false;
        }
        let observed = [
            (!missing[0]).then_some(truth[0]),
            (!missing[1]).then_some(truth[1]),
            (!missing[2]).then_some(truth[2]),
            (!missing[3]).then_some(truth[3]),
            (!missing[3]).then_some(truth[4]),
        ];
        events.push(SyntheticEvent {
            id: format!("S{k:06}"),
            year,
            truth,
            observed,
            quintile: 0,
        });
    }

    let columns: Vec<Vec<f64>> = [0usize, 1, 2, 4]
        .iter()
        .map(|&v| events.iter().map(|e| e.truth[v]).collect())
        .collect();
    let q = quintiles_from_ranks(&average_descending_rank(&columns));
    for (e, q) in events.iter_mut().zip(q) {
        e.quintile = q;
    }

    let mut kept = Vec::new();
    let mut thinned = Vec::new();
    for e in events {
        let keep = spec
            .thinning
            .iter()
            .find(|t| t.quintile == e.quintile && (t.start..=t.end).contains(&e.year))
            .map_or(1.0, |t| t.keep);
        if keep >= 1.0 || rng.random::<f64>() < keep {
            kept.push(e);
        } else {
            thinned.push(e);
        }
    }
    Ok(SyntheticCatalog {
        events: kept,
        thinned,
        b_true: spec.b_true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::kendall_tau;

    #[test]
    fn flat_intensity_gives_uniform_years() {
        let spec = SyntheticSpec {
            n_events: 5000,
            links: vec![],
            ..Default::default()
        };
        let cat = generate_catalog(&spec).unwrap();
        let n_years = 147usize;
        let mut counts = vec![0usize; n_years];
        for e in &cat.events {
            counts[(e.year - 1870) as usize] += 1;
        }
        let expected = 5000.0 / n_years as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square 0.99 quantile with 146 degrees of freedom is about 190
        assert!(chi2 < 190.0, "{chi2}");
    }

    #[test]
    fn clayton_link_gives_kendall_tau() {
        let spec = SyntheticSpec {
            n_events: 2000,
            links: vec![Link { parent: 0, child: 1, family: Family::Clayton, theta: 2.0 }],
            seed: 3,
            ..Default::default()
        };
        let cat = generate_catalog(&spec).unwrap();
        let x: Vec<f64> = cat.events.iter().map(|e| e.truth[0]).collect();
        let y: Vec<f64> = cat.events.iter().map(|e| e.truth[1]).collect();
        assert!((kendall_tau(&x, &y) - 0.5).abs() < 0.03);
    }

    #[test]
    fn thinning_halves_lowest_quintile() {
        let spec = SyntheticSpec {
            n_events: 20000,
            thinning: vec![Thinning { start: 1870, end: 1989, quintile: 1, keep: 0.5 }],
            seed: 5,
            ..Default::default()
        };
        let cat = generate_catalog(&spec).unwrap();
        let in_scope = |e: &&SyntheticEvent| e.quintile == 1 && e.year < 1990;
        let kept = cat.events.iter().filter(in_scope).count() as f64;
        let lost = cat.thinned.iter().filter(in_scope).count() as f64;
        assert!((kept / (kept + lost) - 0.5).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_keep_probability() {
        let spec = SyntheticSpec {
            thinning: vec![Thinning { start: 1870, end: 1989, quintile: 1, keep: 1.5 }],
            ..Default::default()
        };
        assert!(matches!(generate_catalog(&spec), Err(OracleError::Spec(_))));
    }

    #[test]
    fn quintiles_hand_ranked() {
        // average ranks: e0 = 1, e1 = 2.5, e2 = 2.5, e3 = 4, e4 = 5
        let q = quintiles_from_ranks(&[1.0, 2.5, 2.5, 4.0, 5.0]);
        assert_eq!(q, vec![5, 4, 3, 2, 1]);
    }
}
