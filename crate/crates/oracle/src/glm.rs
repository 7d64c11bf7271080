//! Poisson regression by exhaustive grid search.

use crate::OracleError;

/// Maximize Σ y_t (a + b x_t) − e^{a + b x_t} with x_t = 0, 1, 2, ...
///
/// The search runs over (b, c) with c = a + b x̄ (the log-mean at the
/// centre of the series), in five levels of 401 × 401 points, each level
/// centred on the previous optimum with a 10× finer step. The final step
/// in b is 2.5e-7. Returns (a, b).
pub fn glm_grid_oracle(y: &[f64]) -> Result<(f64, f64), OracleError> {
    let n = y.len();
    let total: f64 = y.iter().sum();
    if n < 2 || total <= 0.0 {
        return Err(OracleError::Degenerate);
    }
    let xbar = (n - 1) as f64 / 2.0;
    let sy_x: f64 = y.iter().enumerate().map(|(t, v)| v * (t as f64 - xbar)).sum();
    // ℓ(c, b) = Y c + b Σ y (x − x̄) − e^c Σ e^{b (x − x̄)}
    let s0 = |b: f64| (0..n).map(|t| (b * (t as f64 - xbar)).exp()).sum::<f64>();
    let loglik = |c: f64, b: f64, s0b: f64| total * c + b * sy_x - c.exp() * s0b;

    let half = 200i64;
    let mut centre = ((total / n as f64).ln(), 0.0);
    let levels = [(1e-2, 2.5e-3), (1e-3, 2.5e-4), (1e-4, 2.5e-5), (1e-5, 2.5e-6), (1e-6, 2.5e-7)];
    for (level, &(c_step, b_step)) in levels.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0i64, 0i64);
        for j in -half..=half {
            let b = centre.1 + j as f64 * b_step;
            let s0b = s0(b);
            for i in -half..=half {
                let c = centre.0 + i as f64 * c_step;
                let l = loglik(c, b, s0b);
                if l > best.0 {
                    best = (l, i, j);
                }
            }
        }
        if best.1.abs() == half || best.2.abs() == half {
            return Err(OracleError::Boundary { level });
        }
        centre = (
            centre.0 + best.1 as f64 * c_step,
            centre.1 + best.2 as f64 * b_step,
        );
    }
    let (c, b) = centre;
    Ok((c - b * xbar, b))
}
