//! Bivariate copulas: five one-parameter families, pseudo-likelihood
//! fitting, Cramér–von Mises model selection and conditional sampling.

mod bvn;
pub(crate) mod fit;
pub mod optim;
mod sample;

pub use bvn::{bvn_cdf, norm_cdf, norm_ppf};
pub use fit::{
    blanket_test_pvalue, cvm_fit_statistic, empirical_copula, fit_family, select_model, CopulaModel,
};
pub use sample::{conditional_sample, h_inverse, SamplingScheme};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Gumbel,
    Clayton,
    Frank,
    Plackett,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Gaussian,
        Family::Gumbel,
        Family::Clayton,
        Family::Frank,
        Family::Plackett,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Gumbel => "gumbel",
            Family::Clayton => "clayton",
            Family::Frank => "frank",
            Family::Plackett => "plackett",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Parameter value at which the family reduces to independence.
    pub fn independence(self) -> f64 {
        match self {
            Family::Gaussian | Family::Frank => 0.0,
            Family::Gumbel | Family::Plackett => 1.0,
            Family::Clayton => 0.0,
        }
    }

    pub fn in_domain(self, theta: f64) -> bool {
        theta.is_finite()
            && match self {
                Family::Gaussian => theta.abs() < 1.0,
                Family::Gumbel => theta >= 1.0,
                Family::Clayton => theta > 0.0,
                Family::Frank => true,
                Family::Plackett => theta > 0.0,
            }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CopulaError {
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("paired samples differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("{family} log-likelihood is not finite at theta {theta}")]
    NonFinite { family: Family, theta: f64 },
    #[error("all copula fits failed")]
    NoFit,
    #[error("{family} (theta {theta}): inversion at u = {u} did not converge")]
    Inversion { family: Family, theta: f64, u: f64 },
}

/// Rank-based pseudo-observations rank/(n+1), ties averaged.
pub fn pseudo_observations(x: &[f64]) -> Result<Vec<f64>, CopulaError> {
    if x.len() < 2 {
        return Err(CopulaError::TooFew { need: 2, got: x.len() });
    }
    let n1 = (x.len() + 1) as f64;
    Ok(crate::stats::average_ranks(x).into_iter().map(|r| r / n1).collect())
}

const FRANK_EPS: f64 = 1e-8;

/// C(u, v) with `u, v` in [0, 1].
pub fn cdf(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return v.min(1.0);
    }
    if v >= 1.0 {
        return u;
    }
    match family {
        Family::Gaussian => {
            if theta == 0.0 {
                return u * v;
            }
            bvn_cdf(norm_ppf(u), norm_ppf(v), theta)
        }
        Family::Gumbel => {
            let a = -u.ln();
            let b = -v.ln();
            let s = a.powf(theta) + b.powf(theta);
            (-s.powf(1.0 / theta)).exp()
        }
        Family::Clayton => {
            let t = (theta * u.ln()).exp() * (-theta * v.ln()).exp_m1();
            (u.ln() - t.ln_1p() / theta).exp()
        }
        Family::Frank => {
            if theta.abs() < FRANK_EPS {
                return u * v;
            }
            let num = (-theta * u).exp_m1() * (-theta * v).exp_m1();
            -(num / (-theta).exp_m1()).ln_1p() / theta
        }
        Family::Plackett => {
            let eta = theta - 1.0;
            let s = 1.0 + eta * (u + v);
            let d = (s * s - 4.0 * theta * eta * u * v).max(0.0).sqrt();
            2.0 * theta * u * v / (s + d)
        }
    }
}

/// Conditional distribution h(v | u) = ∂C(u, v)/∂u.
pub fn h(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if v >= 1.0 {
        return 1.0;
    }
    let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    let r = match family {
        Family::Gaussian => {
            let x = norm_ppf(u);
            let y = norm_ppf(v);
            norm_cdf((y - theta * x) / (1.0 - theta * theta).sqrt())
        }
        Family::Gumbel => {
            let a = -u.ln();
            let b = -v.ln();
            let s = a.powf(theta) + b.powf(theta);
            let c = (-s.powf(1.0 / theta)).exp();
            c * s.powf(1.0 / theta - 1.0) * a.powf(theta - 1.0) / u
        }
        Family::Clayton => {
            let t = (theta * u.ln()).exp() * (-theta * v.ln()).exp_m1();
            (-(1.0 + 1.0 / theta) * t.ln_1p()).exp()
        }
        Family::Frank => {
            if theta.abs() < FRANK_EPS {
                return v;
            }
            // 1 / (1 + e^{θ(u−v)} (e^{−θ(1−v)} − 1) / (e^{−θv} − 1)), free of
            // the cancellation in the textbook denominator
            let ratio = (-theta * (1.0 - v)).exp_m1() / (-theta * v).exp_m1();
            1.0 / (1.0 + (theta * (u - v)).exp() * ratio)
        }
        Family::Plackett => {
            let eta = theta - 1.0;
            if eta.abs() < 1e-12 {
                return v;
            }
            let s = 1.0 + eta * (u + v);
            let d = (s * s - 4.0 * theta * eta * u * v).max(0.0).sqrt();
            0.5 - (s - 2.0 * theta * v) / (2.0 * d)
        }
    };
    r.clamp(0.0, 1.0)
}

/// Copula density c(u, v) on the open unit square.
pub fn density(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    log_density(family, theta, u, v).exp()
}

pub fn log_density(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    match family {
        Family::Gaussian => {
            let x = norm_ppf(u);
            let y = norm_ppf(v);
            let r2 = theta * theta;
            -0.5 * (1.0 - r2).ln() - (r2 * (x * x + y * y) - 2.0 * theta * x * y) / (2.0 * (1.0 - r2))
        }
        Family::Gumbel => {
            let lu = u.ln();
            let lv = v.ln();
            let (a, b) = (-lu, -lv);
            let s = a.powf(theta) + b.powf(theta);
            let s1 = s.powf(1.0 / theta);
            -s1 - lu - lv + (theta - 1.0) * (a.ln() + b.ln()) + (-2.0 + 2.0 / theta) * s.ln()
                + (1.0 + (theta - 1.0) / s1).ln()
        }
        Family::Clayton => {
            let lu = u.ln();
            let lv = v.ln();
            let t = (theta * lu).exp() * (-theta * lv).exp_m1();
            // ln(u^-θ + v^-θ - 1)
            let l = -theta * lu + t.ln_1p();
            theta.ln_1p() - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * l
        }
        Family::Frank => {
            if theta.abs() < FRANK_EPS {
                return 0.0;
            }
            let em = (-theta).exp_m1();
            let den = em + (-theta * u).exp_m1() * (-theta * v).exp_m1();
            (-theta * em).ln() - theta * (u + v) - 2.0 * den.abs().ln()
        }
        Family::Plackett => {
            let eta = theta - 1.0;
            let s = 1.0 + eta * (u + v);
            let d2 = s * s - 4.0 * theta * eta * u * v;
            theta.ln() + (1.0 + eta * (u + v - 2.0 * u * v)).ln() - 1.5 * d2.ln()
        }
    }
}
