//! Reference computations and synthetic data for testing `floodrisk`.
//!
//! Nothing here shares numerical code with the library: copula formulas,
//! quadrature and the regression search are separate implementations, so
//! agreement between the two is meaningful.

pub mod copulas;
pub mod glm;
pub mod quadrature;
pub mod synth;
pub mod world;

pub use glm::glm_grid_oracle;
pub use synth::{generate_catalog, Marginal, SyntheticCatalog, SyntheticEvent, SyntheticSpec};

use floodrisk::copula::{CopulaModel, Family};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("grid search optimum on the boundary at level {level}")]
    Boundary { level: usize },
    #[error("series has no positive values")]
    Degenerate,
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

/// E[V | U = u] = ∫ v c(u, v) dv by adaptive quadrature.
pub fn conditional_mean_oracle(model: &CopulaModel, u: f64) -> Result<f64, OracleError> {
    let (family, theta) = (model.family, model.theta);
    let independent = match family {
        Family::Gaussian | Family::Frank => theta == 0.0,
        Family::Gumbel | Family::Plackett => theta == 1.0,
        Family::Clayton => false,
    };
    if independent {
        return Ok(0.5);
    }
    quadrature::integrate(
        |v| {
            if v <= 0.0 || v >= 1.0 {
                0.0
            } else {
                v * copulas::density(family, theta, u, v)
            }
        },
        0.0,
        1.0,
        1e-9,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn gaussian_closed_form() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &rho in &[-0.6, 0.3, 0.8] {
            for &u in &[0.1, 0.5, 0.9] {
                let m = CopulaModel::with_parameter(Family::Gaussian, rho);
                let q = conditional_mean_oracle(&m, u).unwrap();
                let exact = n.cdf(rho * n.inverse_cdf(u) / (2.0 - rho * rho).sqrt());
                assert!((q - exact).abs() < 1e-7, "{rho} {u}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn independence_is_one_half() {
        let m = CopulaModel::with_parameter(Family::Frank, 0.0);
        assert_eq!(conditional_mean_oracle(&m, 0.3).unwrap(), 0.5);
        let m = CopulaModel::with_parameter(Family::Clayton, 1e-6);
        assert!((conditional_mean_oracle(&m, 0.3).unwrap() - 0.5).abs() < 1e-5);
    }
}
