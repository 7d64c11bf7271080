use super::optim::scan_then_refine;
use super::sample::{conditional_sample, SamplingScheme};
use super::{cdf, log_density, norm_ppf, pseudo_observations, CopulaError, Family};
use crate::exec::Execution;
use crate::rng::StreamKey;
use crate::stats::spearman;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fitted bivariate copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub family: Family,
    pub theta: f64,
    pub spearman_rho: f64,
    pub cvm_statistic: f64,
    pub n: usize,
    /// The likelihood maximum sat on the edge of the search range.
    pub at_boundary: bool,
}

impl CopulaModel {
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        cdf(self.family, self.theta, u, v)
    }

    pub fn h(&self, u: f64, v: f64) -> f64 {
        super::h(self.family, self.theta, u, v)
    }

    pub fn density(&self, u: f64, v: f64) -> f64 {
        super::density(self.family, self.theta, u, v)
    }

    /// A model with no data behind it, for sampling.
    pub fn with_parameter(family: Family, theta: f64) -> Self {
        CopulaModel {
            family,
            theta,
            spearman_rho: f64::NAN,
            cvm_statistic: f64::NAN,
            n: 0,
            at_boundary: false,
        }
    }
}

pub const MIN_PAIRS: usize = 30;
const SCAN_POINTS: usize = 64;

/// Search coordinate for each family: (lower, upper, parameter from coordinate).
fn search_space(family: Family) -> (f64, f64, fn(f64) -> f64) {
    match family {
        Family::Gaussian => (-0.999, 0.999, |t| t),
        // Kendall's tau in [0, 0.98] maps to theta in [1, 50]
        Family::Gumbel => (0.0, 0.98, |t| 1.0 / (1.0 - t)),
        // tau in [tau(1e-4), tau(50)] with theta = 2 tau / (1 - tau)
        Family::Clayton => (1e-4 / 2.0001, 50.0 / 52.0, |t| 2.0 * t / (1.0 - t)),
        Family::Frank => (-50.0, 50.0, |t| t),
        Family::Plackett => (1e-4f64.ln(), 1e4f64.ln(), f64::exp),
    }
}

fn check_pairs(u: &[f64], v: &[f64]) -> Result<(), CopulaError> {
    if u.len() != v.len() {
        return Err(CopulaError::Length(u.len(), v.len()));
    }
    if u.len() < MIN_PAIRS {
        return Err(CopulaError::TooFew {
            need: MIN_PAIRS,
            got: u.len(),
        });
    }
    Ok(())
}

fn log_likelihood(family: Family, theta: f64, u: &[f64], v: &[f64], scores: Option<&(Vec<f64>, Vec<f64>)>) -> f64 {
    match (family, scores) {
        (Family::Gaussian, Some((x, y))) => {
            let r2 = theta * theta;
            let k = -0.5 * (1.0 - r2).ln();
            x.iter()
                .zip(y)
                .map(|(x, y)| k - (r2 * (x * x + y * y) - 2.0 * theta * x * y) / (2.0 * (1.0 - r2)))
                .sum()
        }
        _ => u.iter().zip(v).map(|(&a, &b)| log_density(family, theta, a, b)).sum(),
    }
}

/// Maximum pseudo-likelihood fit of one family to pseudo-observations.
/// The Cramér–von Mises statistic of the fit is filled in.
pub fn fit_family(u: &[f64], v: &[f64], family: Family) -> Result<CopulaModel, CopulaError> {
    check_pairs(u, v)?;
    let scores = (family == Family::Gaussian).then(|| {
        (
            u.iter().map(|&a| norm_ppf(a)).collect::<Vec<_>>(),
            v.iter().map(|&b| norm_ppf(b)).collect::<Vec<_>>(),
        )
    });
    let (lo, hi, to_theta) = search_space(family);
    let (t, nll) = scan_then_refine(
        |t| -log_likelihood(family, to_theta(t), u, v, scores.as_ref()),
        lo,
        hi,
        SCAN_POINTS,
    );
    let theta = to_theta(t);
    if !nll.is_finite() || !family.in_domain(theta) {
        return Err(CopulaError::NonFinite { family, theta });
    }
    let span = hi - lo;
    let at_boundary = (t - lo).abs() < 1e-6 * span || (hi - t).abs() < 1e-6 * span;
    if at_boundary {
        log::warn!("{family} fit reached the edge of its range (theta {theta})");
    }
    let mut model = CopulaModel {
        family,
        theta,
        spearman_rho: spearman(u, v),
        cvm_statistic: 0.0,
        n: u.len(),
        at_boundary,
    };
    model.cvm_statistic = cvm_fit_statistic(u, v, &model);
    Ok(model)
}

/// Empirical copula at the sample points:
/// C_n(u_i, v_i) = #{j : u_j ≤ u_i, v_j ≤ v_i} / n, in O(n log n).
pub fn empirical_copula(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len();
    // compress v to 1-based ranks, equal values share a rank
    let mut vs: Vec<f64> = v.to_vec();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let vrank: Vec<usize> = v
        .iter()
        .map(|x| vs.partition_point(|y| y.total_cmp(x).is_lt()) + 1)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let mut tree = vec![0usize; vs.len() + 1];
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && u[order[j]] == u[order[i]] {
            let mut k = vrank[order[j]];
            while k < tree.len() {
                tree[k] += 1;
                k += k & k.wrapping_neg();
            }
            j += 1;
        }
        for &p in &order[i..j] {
            let mut k = vrank[p];
            let mut count = 0;
            while k > 0 {
                count += tree[k];
                k -= k & k.wrapping_neg();
            }
            out[p] = count as f64 / n as f64;
        }
        i = j;
    }
    out
}

/// S_n = Σ (C_n(u_i, v_i) − C_θ(u_i, v_i))².
pub fn cvm_fit_statistic(u: &[f64], v: &[f64], model: &CopulaModel) -> f64 {
    empirical_copula(u, v)
        .iter()
        .zip(u.iter().zip(v))
        .map(|(cn, (&a, &b))| (cn - model.cdf(a, b)).powi(2))
        .sum()
}

/// Fit all five families and keep the one with the smallest S_n. Ties go to
/// the earlier family in [`Family::ALL`].
pub fn select_model(u: &[f64], v: &[f64]) -> Result<CopulaModel, CopulaError> {
    check_pairs(u, v)?;
    let mut best: Option<CopulaModel> = None;
    for family in Family::ALL {
        match fit_family(u, v, family) {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.cvm_statistic < b.cvm_statistic) {
                    best = Some(m);
                }
            }
            Err(e) => log::warn!("{family} fit failed: {e}"),
        }
    }
    best.ok_or(CopulaError::NoFit)
}

/// Parametric-bootstrap p-value of the fitted family's S_n: samples of the
/// same size are drawn from the fitted model, re-ranked and refitted.
pub fn blanket_test_pvalue(
    u: &[f64],
    v: &[f64],
    model: &CopulaModel,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64, CopulaError> {
    check_pairs(u, v)?;
    let n = u.len();
    let stats = exec.try_map(replicates, |b| {
        let mut rng = StreamKey::new(seed, "blanket-test")
            .with_str(model.family.as_str())
            .with_u64(b as u64)
            .rng();
        let mut su = Vec::with_capacity(n);
        let mut sv = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.random();
            let draw = conditional_sample(model, a, 1, SamplingScheme::Independent, &mut rng)?;
            su.push(a);
            sv.push(draw[0]);
        }
        let pu = pseudo_observations(&su)?;
        let pv = pseudo_observations(&sv)?;
        Ok(fit_family(&pu, &pv, model.family)?.cvm_statistic)
    })?;
    let exceed = stats.iter().filter(|&&s| s >= model.cvm_statistic).count();
    Ok((exceed + 1) as f64 / (replicates + 1) as f64)
}
