use super::{rate_percent, AnnualSeries, TrendError};
use statrs::distribution::{ContinuousCDF, StudentsT};

const GRAD_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;

/// Fit of log E[y_t] = a + b·(t − start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub a: f64,
    pub b: f64,
    /// Standard error of `b` from the observed information, scaled by the
    /// Pearson dispersion (quasi-Poisson).
    pub se_b: f64,
    pub dispersion: f64,
    pub iterations: usize,
    pub n_years: usize,
}

impl TrendFit {
    pub fn rate_percent(&self) -> f64 {
        rate_percent(self.b)
    }
}

fn loglik(y: &[f64], x: &[f64], alpha: f64, b: f64) -> f64 {
    y.iter()
        .zip(x)
        .map(|(&yi, &xi)| {
            let eta = alpha + b * xi;
            yi * eta - eta.exp()
        })
        .sum()
}

/// Poisson (quasi-)likelihood fit by Newton iteration.
///
/// Internally x is centred and y divided by its mean; neither changes `b`.
pub fn poisson_trend(series: &AnnualSeries) -> Result<TrendFit, TrendError> {
    fit_values(&series.values)
}

pub(crate) fn fit_values(values: &[f64]) -> Result<TrendFit, TrendError> {
    let n = values.len();
    if values.iter().filter(|&&v| v > 0.0).count() < 2 {
        return Err(TrendError::Degenerate);
    }
    let scale = values.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let xbar = (n - 1) as f64 / 2.0;
    let x: Vec<f64> = (0..n).map(|i| i as f64 - xbar).collect();

    let (mut alpha, mut b) = (0.0f64, 0.0f64);
    let mut trace = Vec::new();
    let mut ll = loglik(&y, &x, alpha, b);
    for iter in 0..=MAX_ITER {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&yi, &xi) in y.iter().zip(&x) {
            let mu = (alpha + b * xi).exp();
            g0 += yi - mu;
            g1 += (yi - mu) * xi;
            h00 += mu;
            h01 += mu * xi;
            h11 += mu * xi * xi;
        }
        let gnorm = g0.hypot(g1);
        trace.push(gnorm);
        let det = h00 * h11 - h01 * h01;
        if gnorm < GRAD_TOL {
            let mut pearson = 0.0;
            for (&yi, &xi) in y.iter().zip(&x) {
                let mu = (alpha + b * xi).exp();
                pearson += (yi - mu) * (yi - mu) / mu;
            }
            let dispersion = if n > 2 { pearson / (n - 2) as f64 } else { 1.0 };
            let var_b = h00 / det * dispersion;
            return Ok(TrendFit {
                a: alpha + scale.ln() - b * xbar,
                b,
                se_b: var_b.sqrt(),
                dispersion,
                iterations: iter,
                n_years: n,
            });
        }
        if iter == MAX_ITER || !(det > 0.0) {
            break;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        let mut step = 1.0;
        loop {
            let (na, nb) = (alpha + step * da, b + step * db);
            let nll = loglik(&y, &x, na, nb);
            // Near the optimum the change in log-likelihood drops below its
            // rounding error; accept such steps.
            if nll >= ll - 1e-12 * (1.0 + ll.abs()) || step < 1e-12 {
                alpha = na;
                b = nb;
                ll = nll;
                break;
            }
            step /= 2.0;
        }
    }
    Err(TrendError::NoConvergence { trace })
}

/// Two-sided Wald t-test of b = 0 at the given level.
pub fn wald_t_test(fit: &TrendFit, alpha: f64) -> bool {
    if fit.n_years <= 2 || !(fit.se_b > 0.0) {
        return fit.b != 0.0 && fit.se_b == 0.0;
    }
    let t = fit.b / fit.se_b;
    let dist = StudentsT::new(0.0, 1.0, (fit.n_years - 2) as f64).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs())) < alpha
}

/// Whether the t-test verdict at α = 0.05 agrees with a Monte Carlo verdict.
pub fn t_test_check(series: &AnnualSeries, mc_significant: bool) -> Result<bool, TrendError> {
    let fit = poisson_trend(series)?;
    Ok(wald_t_test(&fit, 0.05) == mc_significant)
}
